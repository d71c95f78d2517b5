//! Word-level metric-LDP rewriting over embedding neighbor lists.
//!
//! Each in-vocabulary word is replaced by the entry of its own neighbor list
//! at index `min(|n|, list_size - 1)`, where `n` is two-sided geometric noise
//! with parameter `e^-epsilon`. Index 0 is the word itself.

use rand::Rng;

use super::{MechanismError, Result, WordMldp};
use crate::corpus::Document;
use crate::embeddings::NeighborIndex;

/// Integer noise with `P(X = k) = (1 - a) / (1 + a) * a^|k|`, `a = e^-epsilon`.
pub fn two_sided_geometric_sample<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> i64 {
    let a = (-epsilon).exp();
    if a == 0.0 {
        return 0;
    }
    let ln_a = a.ln();
    // one-sided geometric on {0, 1, ...}: P(G >= k) = a^k
    let mut geometric = || {
        let u: f64 = 1.0 - rng.random::<f64>();
        (u.ln() / ln_a).floor() as i64
    };
    let g1 = geometric();
    let g2 = geometric();
    g1.saturating_sub(g2)
}

/// Exact distribution of the replacement index `min(|n|, list_size - 1)`.
pub fn folded_geometric_pmf(epsilon: f64, list_size: usize) -> Vec<f64> {
    assert!(list_size > 0, "list_size must be positive");
    let a = (-epsilon).exp();
    let c = (1.0 - a) / (1.0 + a);
    let mut pmf = Vec::with_capacity(list_size);
    if list_size == 1 {
        pmf.push(1.0);
        return pmf;
    }
    pmf.push(c);
    for j in 1..list_size - 1 {
        pmf.push(2.0 * c * a.powi(j as i32));
    }
    // everything at |n| >= list_size - 1 lands on the last entry
    let last = list_size - 1;
    pmf.push(2.0 * c * a.powi(last as i32) / (1.0 - a));
    pmf
}

pub fn mldp_word_rewrite<R: Rng + ?Sized>(
    doc: &Document,
    idx: &NeighborIndex,
    cfg: &WordMldp,
    rng: &mut R,
) -> Result<Document> {
    if cfg.list_size == 0 || cfg.list_size > idx.k_list() {
        return Err(MechanismError::ListSizeTooLarge { list_size: cfg.list_size, available: idx.k_list() });
    }
    let out: Vec<String> = doc
        .tokens()
        .into_iter()
        .map(|tok| match idx.index_of(&tok) {
            Some(w) => {
                let n = two_sided_geometric_sample(cfg.epsilon_word, rng);
                let pos = (n.unsigned_abs() as usize).min(cfg.list_size - 1);
                idx.word(idx.neighbors(w)[pos].index).to_string()
            }
            None => tok,
        })
        .collect();
    let mut rewritten = doc.clone();
    rewritten.text = out.join(" ");
    Ok(rewritten)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{build_neighbor_index, EmbeddingTable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn huge_epsilon_is_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| two_sided_geometric_sample(1e9, &mut rng) == 0));
    }

    #[test]
    fn zero_probability_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let mut zeros = 0usize;
        let mut pos = [0usize; 4];
        let mut neg = [0usize; 4];
        for _ in 0..n {
            let k = two_sided_geometric_sample(1.0, &mut rng);
            if k == 0 {
                zeros += 1;
            }
            if (1..=3).contains(&k.abs()) {
                if k > 0 {
                    pos[k as usize] += 1;
                } else {
                    neg[(-k) as usize] += 1;
                }
            }
        }
        let expected = (1.0 - (-1.0f64).exp()) / (1.0 + (-1.0f64).exp());
        assert!((expected - 0.4621).abs() < 1e-4);
        assert!((zeros as f64 / n as f64 - expected).abs() < 0.01);
        for k in 1..=3 {
            let ratio = pos[k] as f64 / neg[k] as f64;
            // a few standard errors of the ratio at these counts
            assert!((ratio - 1.0).abs() < 0.05, "k={k} ratio {ratio}");
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        for eps in [0.1, 0.5, 1.0, 3.0] {
            for l in [1, 2, 5, 10] {
                let s: f64 = folded_geometric_pmf(eps, l).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "eps {eps} l {l}: {s}");
            }
        }
    }

    #[test]
    fn rewrite_keeps_oov_and_identity_at_huge_epsilon() {
        let t = EmbeddingTable::from_rows((0..6).map(|i| (format!("w{i}"), vec![i as f64]))).unwrap();
        let idx = build_neighbor_index(&t, 4).unwrap();
        let doc = Document::new("d", "w1, W3 unknown w5!", "pos");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let same = mldp_word_rewrite(&doc, &idx, &WordMldp { epsilon_word: 1e9, list_size: 4 }, &mut rng).unwrap();
        assert_eq!(same.text, "w1 w3 unknown w5");
        assert_eq!(same.id, "d");
        let noisy = mldp_word_rewrite(&doc, &idx, &WordMldp { epsilon_word: 0.01, list_size: 4 }, &mut rng).unwrap();
        assert_eq!(noisy.tokens()[2], "unknown");
        assert!(matches!(
            mldp_word_rewrite(&doc, &idx, &WordMldp { epsilon_word: 1.0, list_size: 5 }, &mut rng),
            Err(MechanismError::ListSizeTooLarge { .. })
        ));
    }
}
