use std::collections::HashMap;
use std::path::Path;

use log::info;
use rand::seq::IteratorRandom;

use super::config::{Level, MechanismSweep};
use crate::corpus::Corpus;
use crate::embeddings::{EmbeddingTable, NeighborIndex};
use crate::mechanisms::{
    estimate_clip_range, privatize_corpus, DocVector, MechanismConfig, NgramGenerator, Resources, TokenGenerator,
    TokenTemperature, WordMldp,
};
use crate::seeding::rng_for;

/// Turns configured sweeps into concrete mechanisms over one corpus,
/// caching neighbor indexes by list size and n-gram generators (with their
/// clip ranges) by sweep position.
pub struct Privatizer<'a> {
    original: &'a Corpus,
    table: &'a EmbeddingTable,
    seed: u64,
    neighbor_cache: Option<&'a Path>,
    indexes: HashMap<usize, NeighborIndex>,
    generators: HashMap<usize, (NgramGenerator, [f64; 2])>,
}

impl<'a> Privatizer<'a> {
    pub fn new(original: &'a Corpus, table: &'a EmbeddingTable, seed: u64, neighbor_cache: Option<&'a Path>) -> Self {
        Privatizer { original, table, seed, neighbor_cache, indexes: HashMap::new(), generators: HashMap::new() }
    }

    /// Resolves `level` of `sweep`; `sweep_id` keys the generator cache.
    pub fn config(&mut self, sweep_id: usize, sweep: &MechanismSweep, level: &Level) -> Result<MechanismConfig, String> {
        Ok(match sweep {
            MechanismSweep::WordMldp { list_size, .. } => {
                if !self.indexes.contains_key(list_size) {
                    let idx = NeighborIndex::load_or_build(self.table, *list_size, self.neighbor_cache)
                        .map_err(|e| e.to_string())?;
                    self.indexes.insert(*list_size, idx);
                }
                MechanismConfig::WordMldp(WordMldp { epsilon_word: level.parameter, list_size: *list_size })
            }
            MechanismSweep::TokenTemp { max_new_tokens, clip, clip_sample, vocab_cap, prompt_weight, .. } => {
                if !self.generators.contains_key(&sweep_id) {
                    let gen = NgramGenerator::train(self.original, *vocab_cap, *prompt_weight);
                    let range = match clip {
                        Some(r) => *r,
                        None => self.estimate_clip(&gen, *clip_sample)?,
                    };
                    self.generators.insert(sweep_id, (gen, range));
                }
                let [clip_lo, clip_hi] = self.generators[&sweep_id].1;
                MechanismConfig::TokenTemperature(TokenTemperature {
                    temperature: level.parameter,
                    clip_lo,
                    clip_hi,
                    max_new_tokens: *max_new_tokens,
                })
            }
            MechanismSweep::DocVector { clip_c, .. } => {
                MechanismConfig::DocVector(DocVector { epsilon_doc: level.parameter, clip_c: *clip_c, dim: self.table.dim() })
            }
        })
    }

    /// First-step logits of up to `n` seeded random documents.
    fn estimate_clip(&self, gen: &NgramGenerator, n: usize) -> Result<[f64; 2], String> {
        let mut rng = rng_for(self.seed, &["clip-sample".into()]);
        let docs = self.original.documents();
        let picked = (0..docs.len()).choose_multiple(&mut rng, n.min(docs.len()));
        let sample = picked
            .iter()
            .map(|&i| gen.logits(&gen.encode_prompt(&docs[i].tokens())))
            .collect::<Result<Vec<_>, String>>()?;
        let r = estimate_clip_range(&sample).map_err(|e| e.to_string())?;
        if r.degenerate {
            return Err("estimated logit clip range is degenerate".into());
        }
        info!("estimated logit clip range ({:.3}, {:.3})", r.lo, r.hi);
        Ok([r.lo, r.hi])
    }

    pub fn privatize(&mut self, sweep_id: usize, sweep: &MechanismSweep, level: &Level) -> Result<(Corpus, MechanismConfig), String> {
        let config = self.config(sweep_id, sweep, level)?;
        let res = Resources {
            table: Some(self.table),
            index: match &config {
                MechanismConfig::WordMldp(c) => self.indexes.get(&c.list_size),
                _ => None,
            },
            generator: match &config {
                MechanismConfig::TokenTemperature(_) => self.generators.get(&sweep_id).map(|(g, _)| g as &dyn TokenGenerator),
                _ => None,
            },
        };
        let private = privatize_corpus(self.original, &config, &res, self.seed).map_err(|e| e.to_string())?;
        Ok((private, config))
    }
}
