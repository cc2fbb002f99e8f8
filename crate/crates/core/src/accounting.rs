//! Perplexity, throughput, model FLOPs utilization and energy/carbon
//! accounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{param_count, ModelConfig};

/// Grid carbon intensity in tCO2eq per MWh.
pub const DEFAULT_CARBON_INTENSITY: f64 = 0.385;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountingError {
    #[error("domain error: {0}")]
    Domain(String),
}

pub fn perplexity(mean_loss: f64) -> f64 {
    mean_loss.exp()
}

/// Tokens per second; zero tokens give zero.
pub fn throughput(token_count: u64, elapsed_seconds: f64) -> Result<f64, AccountingError> {
    if token_count == 0 {
        return Ok(0.0);
    }
    if !(elapsed_seconds > 0.0) {
        return Err(AccountingError::Domain(format!("elapsed time {elapsed_seconds} must be positive")));
    }
    Ok(token_count as f64 / elapsed_seconds)
}

/// Training FLOPs per token: `6·N` for the dense forward and backward
/// passes plus `12·n_layers·dim·seq_len` for attention scores.
pub fn flops_per_token(config: &ModelConfig, seq_len: usize) -> f64 {
    6.0 * param_count(config) as f64 + attention_flops_per_token(config, seq_len)
}

pub fn attention_flops_per_token(config: &ModelConfig, seq_len: usize) -> f64 {
    12.0 * (config.n_layers * config.dim * seq_len) as f64
}

/// Percentage of `peak_flops` achieved at `tokens_per_sec`.
pub fn mfu(tokens_per_sec: f64, flops_per_token: f64, peak_flops: f64) -> Result<f64, AccountingError> {
    if !(peak_flops > 0.0) {
        return Err(AccountingError::Domain(format!("peak flops {peak_flops} must be positive")));
    }
    Ok(100.0 * tokens_per_sec * flops_per_token / peak_flops)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carbon {
    pub kwh: f64,
    pub tco2eq: f64,
}

/// Energy `hours · watts · pue / 1000` kWh and its emissions at
/// `intensity` tCO2eq/MWh.
pub fn carbon(gpu_hours: f64, power_watts: f64, pue: f64, intensity: f64) -> Result<Carbon, AccountingError> {
    for (name, v) in [("gpu_hours", gpu_hours), ("power_watts", power_watts), ("pue", pue), ("intensity", intensity)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(AccountingError::Domain(format!("{name} must be a nonnegative number, got {v}")));
        }
    }
    let kwh = gpu_hours * (power_watts * pue) / 1000.0;
    Ok(Carbon { kwh, tco2eq: kwh / 1000.0 * intensity })
}

pub fn round_to(value: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (value * f).round() / f
}

/// Inputs for a whole-run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccounting {
    pub mean_loss: f64,
    pub tokens_per_sec: f64,
    pub flops_per_token: f64,
    pub peak_flops: f64,
    pub gpu_hours: f64,
    pub gpu_power_watts: f64,
    pub pue: f64,
    pub carbon_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub perplexity: f64,
    pub mfu: f64,
    pub kwh: f64,
    pub tco2eq: f64,
}

impl RunAccounting {
    pub fn summarize(&self) -> Result<RunSummary, AccountingError> {
        if self.pue < 1.0 {
            return Err(AccountingError::Domain(format!("pue {} below 1", self.pue)));
        }
        let c = carbon(self.gpu_hours, self.gpu_power_watts, self.pue, self.carbon_intensity)?;
        Ok(RunSummary {
            perplexity: perplexity(self.mean_loss),
            mfu: mfu(self.tokens_per_sec, self.flops_per_token, self.peak_flops)?,
            kwh: c.kwh,
            tco2eq: c.tco2eq,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perplexity_values() {
        assert_eq!(perplexity(0.0), 1.0);
        assert!((perplexity(4f64.ln()) - 4.0).abs() < 1e-12);
        assert!((perplexity(0.3772) - 1.4582).abs() < 1e-4);
    }

    #[test]
    fn carbon_values() {
        let c = carbon(185.0, 250.0, 1.1, DEFAULT_CARBON_INTENSITY).unwrap();
        assert_eq!(c.kwh, 50.875);
        assert_eq!(round_to(c.tco2eq, 4), 0.0196);
        assert_eq!(carbon(0.0, 250.0, 1.1, 0.385).unwrap(), Carbon { kwh: 0.0, tco2eq: 0.0 });
        let c = carbon(100.0, 400.0, 1.0, 0.385).unwrap();
        assert_eq!(c.kwh, 40.0);
        assert_eq!(round_to(c.tco2eq, 4), 0.0154);
        assert!(carbon(-1.0, 1.0, 1.0, 0.385).is_err());
    }

    #[test]
    fn mfu_values() {
        assert_eq!(mfu(10.0, 1e3, 1e4).unwrap(), 100.0);
        assert!((mfu(1000.0, 5.82e8, 1e12).unwrap() - 58.2).abs() < 1e-9);
        assert!(mfu(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn flops_formula() {
        let mut c = ModelConfig::tiny(300);
        let n = param_count(&c) as f64;
        assert_eq!(flops_per_token(&c, 64), 6.0 * n + 12.0 * 2.0 * 64.0 * 64.0);
        let a1 = flops_per_token(&c, 64) - 6.0 * n;
        let a2 = flops_per_token(&c, 128) - 6.0 * n;
        assert_eq!(a2, 2.0 * a1);
        c.n_layers = 0;
        assert_eq!(flops_per_token(&c, 64), 6.0 * param_count(&c) as f64);
        assert!((6.0f64 * 97e6 - 5.82e8).abs() < 1e-3);
    }

    #[test]
    fn throughput_values() {
        assert_eq!(throughput(1000, 10.0).unwrap(), 100.0);
        assert_eq!(throughput(0, 0.0).unwrap(), 0.0);
        assert!(throughput(5, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn perplexity_is_multiplicative(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let lhs = perplexity(a + b);
            prop_assert!((lhs - perplexity(a) * perplexity(b)).abs() <= 1e-12 * lhs);
            if a < b {
                prop_assert!(perplexity(a) < perplexity(b));
            }
        }

        #[test]
        fn carbon_is_linear(h in 0.0f64..1e3, w in 0.0f64..1e3, p in 1.0f64..2.0, i in 0.0f64..1.0, k in 0.1f64..10.0) {
            let base = carbon(h, w, p, i).unwrap();
            for scaled in [carbon(k * h, w, p, i), carbon(h, k * w, p, i), carbon(h, w, k * p, i)] {
                let s = scaled.unwrap();
                prop_assert!((s.kwh - k * base.kwh).abs() <= 1e-9 * (1.0 + s.kwh));
                prop_assert!((s.tco2eq - k * base.tco2eq).abs() <= 1e-9 * (1.0 + s.tco2eq));
            }
            let s = carbon(h, w, p, k * i).unwrap();
            prop_assert!((s.tco2eq - k * base.tco2eq).abs() <= 1e-12 * (1.0 + s.tco2eq));
        }

        #[test]
        fn mfu_scale_invariant(tps in 1.0f64..1e6, fpt in 1.0f64..1e10, peak in 1e9f64..1e15, c in 1e-3f64..1e3) {
            let a = mfu(tps, fpt, peak).unwrap();
            let b = mfu(c * tps, fpt, c * peak).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
