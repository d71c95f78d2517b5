//! Per-token temperature sampling over clipped, normalized logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MechanismError, Result, TokenTemperature};
use crate::corpus::Document;

/// Source of next-token logits over a fixed output vocabulary.
pub trait TokenGenerator: Sync {
    fn vocab_size(&self) -> usize;

    /// Surface form of an output token.
    fn token(&self, id: usize) -> &str;

    /// Maps prompt words onto generator ids.
    fn encode_prompt(&self, words: &[String]) -> Vec<usize>;

    /// Token that ends generation, if the generator has one.
    fn eos(&self) -> Option<usize>;

    /// Raw logits for the token following `context`; must have length
    /// [`vocab_size`](Self::vocab_size).
    fn logits(&self, context: &[usize]) -> std::result::Result<Vec<f64>, String>;
}

/// Per-token budget `2 * sensitivity / T` with the sensitivity of normalized
/// logits fixed at 1.
pub fn temperature_epsilon(t: f64) -> f64 {
    2.0 / t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRange {
    pub lo: f64,
    pub hi: f64,
    /// Zero spread in the sample; the range cannot be used for normalization.
    pub degenerate: bool,
}

/// `(mean, mean + 4 * sd)` over every logit in the sample, with the
/// population standard deviation.
pub fn estimate_clip_range(sample_logits: &[Vec<f64>]) -> Result<ClipRange> {
    let n: usize = sample_logits.iter().map(Vec::len).sum();
    if n < 2 {
        return Err(MechanismError::TooFewLogits(n));
    }
    let values = || sample_logits.iter().flatten();
    let mean = values().sum::<f64>() / n as f64;
    let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    Ok(ClipRange { lo: mean, hi: mean + 4.0 * sd, degenerate: sd == 0.0 })
}

pub fn clip_normalize_logits(logits: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(hi > lo) {
        return Err(MechanismError::InvalidClipRange { lo, hi });
    }
    let width = hi - lo;
    Ok(logits.iter().map(|x| (x.clamp(lo, hi) - lo) / width).collect())
}

/// `softmax(norm_logits / t)`.
pub fn temperature_probabilities(norm_logits: &[f64], t: f64) -> Vec<f64> {
    let max = norm_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = norm_logits.iter().map(|x| ((x - max) / t).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

pub fn temperature_sample<R: Rng + ?Sized>(norm_logits: &[f64], t: f64, rng: &mut R) -> Result<usize> {
    if norm_logits.is_empty() {
        return Err(MechanismError::EmptyLogits);
    }
    let probs = temperature_probabilities(norm_logits, t);
    let mut u: f64 = rng.random();
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
        }
        if u < *p {
            return Ok(i);
        }
        u -= p;
    }
    // rounding left a sliver of mass past the end
    Ok(last_positive)
}

/// Generates a replacement text token by token: logits from `gen` on the
/// prompt plus everything generated so far, clipped and normalized, then
/// sampled at temperature `T`. Stops at end-of-sequence or `max_new_tokens`.
pub fn dp_prompt_rewrite<G, R>(doc: &Document, gen: &G, cfg: &TokenTemperature, rng: &mut R) -> Result<Document>
where
    G: TokenGenerator + ?Sized,
    R: Rng + ?Sized,
{
    let mut context = gen.encode_prompt(&doc.tokens());
    let mut out: Vec<&str> = Vec::new();
    for position in 0..cfg.max_new_tokens {
        let generator_err = |message: String| MechanismError::Generator { id: doc.id.clone(), position, message };
        let logits = gen.logits(&context).map_err(generator_err)?;
        if logits.len() != gen.vocab_size() {
            return Err(generator_err(format!(
                "returned {} logits for a vocabulary of {}",
                logits.len(),
                gen.vocab_size()
            )));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(generator_err("non-finite logit".into()));
        }
        let norm = clip_normalize_logits(&logits, cfg.clip_lo, cfg.clip_hi)?;
        let next = temperature_sample(&norm, cfg.temperature, rng)?;
        if Some(next) == gen.eos() {
            break;
        }
        out.push(gen.token(next));
        context.push(next);
    }
    let mut rewritten = doc.clone();
    rewritten.text = out.join(" ");
    Ok(rewritten)
}
