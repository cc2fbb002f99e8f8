use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ffn_norm: Tensor,
    pub w1: Tensor,
    pub w3: Tensor,
    pub w2: Tensor,
}

/// The full parameter set. There are no bias vectors, and the output
/// projection is `token_embedding` itself, so there is one matrix to update.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub token_embedding: Tensor,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Tensor,
}

/// How the optimizer treats a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Matrix,
    Norm,
    Embedding,
}

impl ParamRole {
    pub fn decays(self) -> bool {
        self == ParamRole::Matrix
    }
}

const INIT_STD: f64 = 0.02;

impl ModelWeights {
    /// Normal(0, 0.02) for matrices and the embedding, residual output
    /// projections (`wo`, `w2`) further scaled by `1/sqrt(2·n_layers)`,
    /// norm gains at one. Values are rounded to `f32`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let kv = config.kv_dim();
        let h = config.ffn_hidden;
        let resid_std = INIT_STD / ((2 * config.n_layers.max(1)) as f64).sqrt();
        let token_embedding = Tensor::randn([config.vocab_size, d], INIT_STD, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                attn_norm: Tensor::ones([d]),
                wq: Tensor::randn([d, d], INIT_STD, &mut rng),
                wk: Tensor::randn([d, kv], INIT_STD, &mut rng),
                wv: Tensor::randn([d, kv], INIT_STD, &mut rng),
                wo: Tensor::randn([d, d], resid_std, &mut rng),
                ffn_norm: Tensor::ones([d]),
                w1: Tensor::randn([d, h], INIT_STD, &mut rng),
                w3: Tensor::randn([d, h], INIT_STD, &mut rng),
                w2: Tensor::randn([h, d], resid_std, &mut rng),
            })
            .collect();
        let mut w = Self { token_embedding, layers, final_norm: Tensor::ones([d]) };
        w.visit_mut(|_, _, t| t.round_to_f32());
        Ok(w)
    }

    /// The weight used to project hidden states to logits.
    pub fn output_projection(&self) -> &Tensor {
        &self.token_embedding
    }

    /// Calls `f(name, role, tensor)` for every parameter in canonical order.
    pub fn visit(&self, mut f: impl FnMut(&str, ParamRole, &Tensor)) {
        use ParamRole::*;
        f("tok_embedding", Embedding, &self.token_embedding);
        for (i, l) in self.layers.iter().enumerate() {
            for (name, role, t) in [
                ("attn_norm", Norm, &l.attn_norm),
                ("wq", Matrix, &l.wq),
                ("wk", Matrix, &l.wk),
                ("wv", Matrix, &l.wv),
                ("wo", Matrix, &l.wo),
                ("ffn_norm", Norm, &l.ffn_norm),
                ("w1", Matrix, &l.w1),
                ("w3", Matrix, &l.w3),
                ("w2", Matrix, &l.w2),
            ] {
                f(&format!("layers.{i}.{name}"), role, t);
            }
        }
        f("final_norm", Norm, &self.final_norm);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, ParamRole, &mut Tensor)) {
        use ParamRole::*;
        f("tok_embedding", Embedding, &mut self.token_embedding);
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, role, t) in [
                ("attn_norm", Norm, &mut l.attn_norm),
                ("wq", Matrix, &mut l.wq),
                ("wk", Matrix, &mut l.wk),
                ("wv", Matrix, &mut l.wv),
                ("wo", Matrix, &mut l.wo),
                ("ffn_norm", Norm, &mut l.ffn_norm),
                ("w1", Matrix, &mut l.w1),
                ("w3", Matrix, &mut l.w3),
                ("w2", Matrix, &mut l.w2),
            ] {
                f(&format!("layers.{i}.{name}"), role, t);
            }
        }
        f("final_norm", Norm, &mut self.final_norm);
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(|n, _, _| names.push(n.to_owned()));
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = vec![&self.token_embedding];
        for l in &self.layers {
            v.extend([&l.attn_norm, &l.wq, &l.wk, &l.wv, &l.wo, &l.ffn_norm, &l.w1, &l.w3, &l.w2]);
        }
        v.push(&self.final_norm);
        v
    }

    pub fn numel(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Rebuilds weights from tensors listed in [`ModelWeights::visit`] order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        let template = Self::shape_template(config)?;
        if tensors.len() != template.tensors().len() {
            return Err(ModelError::Config(format!(
                "expected {} tensors, got {}",
                template.tensors().len(),
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mut out = template;
        let mut err = None;
        out.visit_mut(|name, _, slot| {
            let t = it.next().unwrap();
            if t.shape() != slot.shape() && err.is_none() {
                err = Some(ModelError::Config(format!("{name}: shape {:?}, expected {:?}", t.shape(), slot.shape())));
            }
            *slot = t;
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    pub(crate) fn shape_template(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.dim;
        let kv = config.kv_dim();
        let h = config.ffn_hidden;
        Ok(Self {
            token_embedding: Tensor::zeros([config.vocab_size, d]),
            layers: (0..config.n_layers)
                .map(|_| LayerWeights {
                    attn_norm: Tensor::zeros([d]),
                    wq: Tensor::zeros([d, d]),
                    wk: Tensor::zeros([d, kv]),
                    wv: Tensor::zeros([d, kv]),
                    wo: Tensor::zeros([d, d]),
                    ffn_norm: Tensor::zeros([d]),
                    w1: Tensor::zeros([d, h]),
                    w3: Tensor::zeros([d, h]),
                    w2: Tensor::zeros([h, d]),
                })
                .collect(),
            final_norm: Tensor::zeros([d]),
        })
    }
}
