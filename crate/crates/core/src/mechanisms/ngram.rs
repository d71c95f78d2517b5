//! Default [`TokenGenerator`]: an add-one smoothed word bigram model,
//! interpolated with bigram statistics of the current context so that the
//! prompt document steers generation.

use std::collections::HashMap;

use super::temperature::TokenGenerator;
use crate::corpus::Corpus;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";
const UNK_ID: usize = 0;
const EOS_ID: usize = 1;

#[derive(Debug, Clone)]
pub struct NgramGenerator {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    successors: Vec<HashMap<usize, u32>>,
    totals: Vec<u64>,
    prompt_weight: f64,
}

impl NgramGenerator {
    pub const DEFAULT_VOCAB_CAP: usize = 20_000;

    /// Trains on every document of `corpus`. The vocabulary keeps the
    /// `vocab_cap` most frequent words (ties by word order) plus `<unk>` and
    /// `</s>`; `</s>` both ends a document and precedes its first word.
    ///
    /// `prompt_weight` in `[0, 1]` is the mixture weight of the context's own
    /// bigram frequencies.
    pub fn train(corpus: &Corpus, vocab_cap: usize, prompt_weight: f64) -> Self {
        let docs: Vec<Vec<String>> = corpus.documents().iter().map(|d| d.tokens()).collect();
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for toks in &docs {
            for t in toks {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().filter(|(w, _)| *w != UNK && *w != EOS).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(vocab_cap);

        let mut tokens = vec![UNK.to_string(), EOS.to_string()];
        tokens.extend(ranked.into_iter().map(|(w, _)| w.to_string()));
        let ids: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut gen = NgramGenerator {
            successors: vec![HashMap::new(); tokens.len()],
            totals: vec![0; tokens.len()],
            tokens,
            ids,
            prompt_weight: prompt_weight.clamp(0.0, 1.0),
        };
        for toks in &docs {
            let mut prev = EOS_ID;
            for t in toks {
                let id = gen.id_of(t);
                gen.observe(prev, id);
                prev = id;
            }
            gen.observe(prev, EOS_ID);
        }
        gen
    }

    fn observe(&mut self, prev: usize, next: usize) {
        *self.successors[prev].entry(next).or_default() += 1;
        self.totals[prev] += 1;
    }

    fn id_of(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or(UNK_ID)
    }

    /// Smoothed corpus probability `P(next | prev)`.
    pub fn corpus_probability(&self, prev: usize, next: usize) -> f64 {
        let count = self.successors[prev].get(&next).copied().unwrap_or(0) as f64;
        (count + 1.0) / (self.totals[prev] as f64 + self.tokens.len() as f64)
    }
}

impl TokenGenerator for NgramGenerator {
    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    fn encode_prompt(&self, words: &[String]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(EOS_ID);
        ids.extend(words.iter().map(|w| self.id_of(w)));
        ids.push(EOS_ID);
        ids
    }

    fn eos(&self) -> Option<usize> {
        Some(EOS_ID)
    }

    fn logits(&self, context: &[usize]) -> Result<Vec<f64>, String> {
        let v = self.tokens.len();
        let Some(&prev) = context.last() else {
            return Err("empty context".into());
        };
        if let Some(bad) = context.iter().find(|&&id| id >= v) {
            return Err(format!("context token {bad} outside vocabulary of {v}"));
        }
        let denom = self.totals[prev] as f64 + v as f64;
        let mut probs = vec![1.0 / denom; v];
        for (&next, &count) in &self.successors[prev] {
            probs[next] = (count as f64 + 1.0) / denom;
        }

        let mut local: HashMap<usize, u32> = HashMap::new();
        let mut local_total = 0u32;
        for w in context.windows(2) {
            if w[0] == prev {
                *local.entry(w[1]).or_default() += 1;
                local_total += 1;
            }
        }
        if local_total > 0 && self.prompt_weight > 0.0 {
            let lambda = self.prompt_weight;
            for p in probs.iter_mut() {
                *p *= 1.0 - lambda;
            }
            for (next, count) in local {
                probs[next] += lambda * count as f64 / local_total as f64;
            }
        }
        Ok(probs.into_iter().map(f64::ln).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn tiny() -> Corpus {
        Corpus::from_documents(
            "t",
            vec![Document::new("1", "the cat sat", "a"), Document::new("2", "the dog sat", "a")],
        )
        .unwrap()
    }

    #[test]
    fn vocabulary_and_probabilities() {
        let g = NgramGenerator::train(&tiny(), 20_000, 0.0);
        assert_eq!(g.vocab_size(), 6);
        assert_eq!(g.token(2), "sat");
        assert_eq!(g.token(3), "the");
        let the = 3;
        let cat = g.id_of("cat");
        // P(cat | the) = (1 + 1) / (2 + 6)
        assert!((g.corpus_probability(the, cat) - 0.25).abs() < 1e-12);
        let logits = g.logits(&[EOS_ID, the]).unwrap();
        let total: f64 = logits.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vocab_cap_maps_rare_words_to_unk() {
        let g = NgramGenerator::train(&tiny(), 2, 0.0);
        assert_eq!(g.vocab_size(), 4);
        assert_eq!(g.encode_prompt(&["cat".into()]), vec![EOS_ID, UNK_ID, EOS_ID]);
    }

    #[test]
    fn prompt_mixture_stays_normalized() {
        let g = NgramGenerator::train(&tiny(), 20_000, 0.5);
        let ctx = g.encode_prompt(&["the".into(), "cat".into()]);
        let logits = g.logits(&ctx).unwrap();
        let total: f64 = logits.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // after </s>, the prompt's first word gets the local mass
        let the = g.id_of("the");
        assert!(logits[the].exp() > 0.5);
        assert!(g.logits(&[]).is_err());
        assert!(g.logits(&[99]).is_err());
    }
}
