//! Document-vector clip-and-noise.

use rand::Rng;

use super::{DocVector, MechanismError, Result};

/// One draw from Laplace(0, scale), as a random sign times an Exp(1) draw.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let e = -(1.0 - rng.random::<f64>()).ln();
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

/// Laplace scale for value-clipped vectors: L1 sensitivity `2 * clip_c * dim`
/// divided by the budget.
pub fn laplace_scale(cfg: &DocVector) -> f64 {
    2.0 * cfg.clip_c * cfg.dim as f64 / cfg.epsilon_doc
}

/// Clamps every component to `[-clip_c, clip_c]` and adds independent
/// Laplace noise. The noisy output is not clamped again.
pub fn dp_vector_privatize<R: Rng + ?Sized>(v: &[f64], cfg: &DocVector, rng: &mut R) -> Result<Vec<f64>> {
    if v.len() != cfg.dim {
        return Err(MechanismError::DimensionMismatch { expected: cfg.dim, found: v.len() });
    }
    let b = laplace_scale(cfg);
    Ok(v.iter().map(|x| x.clamp(-cfg.clip_c, cfg.clip_c) + laplace_sample(b, rng)).collect())
}
