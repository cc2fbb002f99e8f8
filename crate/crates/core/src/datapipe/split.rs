use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatapipeError;

/// Seeded shuffle, then the first `round(fraction·N)` items go to train.
pub fn split<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), DatapipeError> {
    if items.is_empty() {
        return Err(DatapipeError::Split("nothing to split".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatapipeError::Split(format!("fraction {fraction} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (fraction * items.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
