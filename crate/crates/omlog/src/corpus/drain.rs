//! Fixed-depth-tree template miner.
//!
//! Tokens are first masked: maximal digit runs not adjacent to a letter are
//! abstracted to `<*>` (so `core.55239` becomes `core.<*>` while `ev17` stays
//! literal). The tree then routes by token count and the first `depth - 2`
//! tokens, and the leaf group with the highest token similarity above the
//! threshold absorbs the line, wildcarding any positions that differ.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EventId, EventVocabulary};

pub const PLACEHOLDER: &str = "<*>";

/// Tree parameters. Depth counts the root (token-count) level and the leaf
/// level, so the default of 4 routes on the first two tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrainConfig {
    pub depth: usize,
    pub sim_threshold: f64,
    pub max_children: usize,
}

impl Default for DrainConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            sim_threshold: 0.5,
            max_children: 100,
        }
    }
}

#[derive(Default)]
struct Node {
    children: HashMap<String, Node>,
    /// Event IDs of the template groups stored at this leaf.
    groups: Vec<EventId>,
}

struct MaskedToken {
    text: String,
    /// Digit runs replaced by `<*>`, in order.
    runs: Vec<String>,
}

fn mask_token(raw: &str) -> MaskedToken {
    let bytes = raw.as_bytes();
    let mut text = String::with_capacity(raw.len());
    let mut runs = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let before_letter = start > 0 && bytes[start - 1].is_ascii_alphabetic();
            let after_letter = i < bytes.len() && bytes[i].is_ascii_alphabetic();
            if before_letter || after_letter {
                text.push_str(&raw[start..i]);
            } else {
                text.push_str(PLACEHOLDER);
                runs.push(raw[start..i].to_string());
            }
        } else {
            text.push(bytes[i] as char);
            i += 1;
        }
    }
    MaskedToken { text, runs }
}

/// Parameters of a raw line under a template: a full-placeholder position
/// yields the whole original token; an embedded-placeholder position yields
/// the token's masked-out digit runs. Because templates only ever refine
/// toward `<*>`, extracting against the final template after a merge is
/// well defined for every record in the group — this backs the invariant
/// that a record's parameter count equals its template's placeholder count.
pub(crate) fn extract_params(template: &[String], raw_tokens: &[&str]) -> Vec<String> {
    let mut params = Vec::new();
    for (slot, raw) in template.iter().zip(raw_tokens) {
        if slot == PLACEHOLDER {
            params.push((*raw).to_string());
        } else if slot.contains(PLACEHOLDER) {
            let masked = mask_token(raw);
            debug_assert_eq!(
                &masked.text, slot,
                "embedded template token must match the mask"
            );
            params.extend(masked.runs);
        }
    }
    params
}

/// Similarity of a template against masked line tokens: fraction of literal
/// template positions that match exactly. Placeholder positions are skipped
/// but still counted in the denominator; their count breaks ties.
fn seq_dist(template: &[String], masked: &[MaskedToken]) -> (f64, usize) {
    let mut sim = 0usize;
    let mut n_par = 0usize;
    for (t, m) in template.iter().zip(masked) {
        if t == PLACEHOLDER {
            n_par += 1;
        } else if *t == m.text {
            sim += 1;
        }
    }
    (sim as f64 / template.len() as f64, n_par)
}

/// Streaming template miner. Owns the growing vocabulary; parsing the same
/// stream twice from a fresh parser yields identical IDs and templates.
pub struct DrainParser {
    cfg: DrainConfig,
    root: HashMap<usize, Node>,
    vocab: EventVocabulary,
}

impl DrainParser {
    pub fn new(cfg: DrainConfig) -> Self {
        Self {
            cfg,
            root: HashMap::new(),
            vocab: EventVocabulary::new(),
        }
    }

    pub fn vocab(&self) -> &EventVocabulary {
        &self.vocab
    }

    pub fn into_vocab(self) -> EventVocabulary {
        self.vocab
    }

    /// Parse one pre-tokenized message body. Returns the event ID and the
    /// extracted parameters, one per template placeholder.
    pub fn parse_tokens(&mut self, raw_tokens: &[&str]) -> (EventId, Vec<String>) {
        debug_assert!(!raw_tokens.is_empty());
        let masked: Vec<MaskedToken> = raw_tokens.iter().map(|t| mask_token(t)).collect();

        let leaf = Self::descend(&self.cfg, &mut self.root, &masked);
        let mut best: Option<(EventId, f64, usize)> = None;
        for &id in &leaf.groups {
            let template = &self.vocab.get(id).expect("group id in vocab").template;
            let (sim, n_par) = seq_dist(template, &masked);
            if sim < self.cfg.sim_threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bs, bp)) => sim > bs || (sim == bs && n_par > bp),
            };
            if better {
                best = Some((id, sim, n_par));
            }
        }

        let event_id = match best {
            Some((id, _, _)) => {
                let template = self.vocab.template_mut(id);
                for (slot, m) in template.iter_mut().zip(&masked) {
                    if *slot != m.text && slot != PLACEHOLDER {
                        *slot = PLACEHOLDER.to_string();
                    }
                }
                id
            }
            None => {
                let id = self
                    .vocab
                    .push(masked.iter().map(|m| m.text.clone()).collect());
                leaf.groups.push(id);
                id
            }
        };

        let template = &self.vocab.get(event_id).unwrap().template;
        (event_id, extract_params(template, raw_tokens))
    }

    fn descend<'a>(
        cfg: &DrainConfig,
        root: &'a mut HashMap<usize, Node>,
        masked: &[MaskedToken],
    ) -> &'a mut Node {
        let mut node = root.entry(masked.len()).or_default();
        let levels = cfg.depth.saturating_sub(2).min(masked.len());
        for m in &masked[..levels] {
            let key: &str = if m.text.contains(PLACEHOLDER) {
                PLACEHOLDER
            } else {
                &m.text
            };
            let full = !node.children.contains_key(key) && node.children.len() >= cfg.max_children;
            let key = if full { PLACEHOLDER } else { key };
            node = node.children.entry(key.to_string()).or_default();
        }
        node
    }
}
