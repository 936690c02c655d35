//! Fixed-depth prefix-tree template mining.
//!
//! Lines are routed by token count, then by their leading `depth - 2`
//! tokens. Each leaf holds a list of templates of identical length; a line
//! joins the most similar template in its leaf when the fraction of
//! identical token positions reaches the similarity threshold, otherwise it
//! seeds a new template.
//!
//! ```text
//!            root
//!              |
//!          len = 4
//!              |
//!         "generated"
//!              |
//!            "<*>"          (tokens with digits route to the wildcard child)
//!              |
//!   [generated <*> core files]
//! ```

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PreprocessError;

pub const WILDCARD: &str = "<*>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrainConfig {
    pub depth: usize,
    pub similarity_threshold: f64,
    pub max_children: usize,
}

impl Default for DrainConfig {
    fn default() -> Self {
        DrainConfig {
            depth: 4,
            similarity_threshold: 0.4,
            max_children: 100,
        }
    }
}

impl DrainConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.depth < 2 {
            return Err(PreprocessError::InvalidDrain(format!(
                "depth must be at least 2, got {}",
                self.depth
            )));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(PreprocessError::InvalidDrain(format!(
                "similarity threshold must lie in (0, 1], got {}",
                self.similarity_threshold
            )));
        }
        if self.max_children < 2 {
            return Err(PreprocessError::InvalidDrain(
                "max_children must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Content hash of a template's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateId(pub u64);

impl TemplateId {
    pub fn of_tokens(tokens: &[String]) -> TemplateId {
        let mut hasher = Sha256::new();
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                hasher.update(b" ");
            }
            hasher.update(t.as_bytes());
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        TemplateId(u64::from_be_bytes(head))
    }

    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<TemplateId> {
        u64::from_str_radix(s, 16).ok().map(TemplateId)
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A mined template. `cluster` is the creation ordinal inside its tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogTemplate {
    pub cluster: usize,
    pub tokens: Vec<String>,
    pub match_count: u64,
}

impl LogTemplate {
    pub fn template_id(&self) -> TemplateId {
        TemplateId::of_tokens(&self.tokens)
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn wildcard_count(&self) -> usize {
        self.tokens.iter().filter(|t| *t == WILDCARD).count()
    }

    fn similarity(&self, tokens: &[String]) -> f64 {
        debug_assert_eq!(self.tokens.len(), tokens.len());
        let same = self
            .tokens
            .iter()
            .zip(tokens)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / tokens.len() as f64
    }

    fn merge(&mut self, tokens: &[String]) {
        for (slot, tok) in self.tokens.iter_mut().zip(tokens) {
            if slot != tok {
                *slot = WILDCARD.to_string();
            }
        }
        self.match_count += 1;
    }
}

impl fmt::Display for LogTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

#[derive(Debug, Default, Clone)]
struct Node {
    children: HashMap<String, Node>,
    clusters: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DrainTree {
    config: DrainConfig,
    by_length: HashMap<usize, Node>,
    templates: Vec<LogTemplate>,
}

pub fn tokenize(content: &str) -> Vec<String> {
    content.split_whitespace().map(str::to_string).collect()
}

fn has_digit(token: &str) -> bool {
    token.bytes().any(|b| b.is_ascii_digit())
}

impl DrainTree {
    pub fn new(config: DrainConfig) -> Result<DrainTree, PreprocessError> {
        config.validate()?;
        Ok(DrainTree {
            config,
            by_length: HashMap::new(),
            templates: Vec::new(),
        })
    }

    pub fn config(&self) -> &DrainConfig {
        &self.config
    }

    /// Templates in creation order.
    pub fn templates(&self) -> &[LogTemplate] {
        &self.templates
    }

    fn prefix_len(&self, token_count: usize) -> usize {
        (self.config.depth - 2).min(token_count)
    }

    fn child_key_for_insert(node: &mut Node, token: &str, max_children: usize) -> String {
        if node.children.contains_key(token) {
            return token.to_string();
        }
        if has_digit(token) {
            return WILDCARD.to_string();
        }
        let n = node.children.len();
        if node.children.contains_key(WILDCARD) {
            if n < max_children {
                token.to_string()
            } else {
                WILDCARD.to_string()
            }
        } else if n + 1 < max_children {
            token.to_string()
        } else {
            WILDCARD.to_string()
        }
    }

    /// Mine one message; returns the template it now belongs to.
    pub fn insert(&mut self, content: &str) -> &LogTemplate {
        let tokens = tokenize(content);
        let idx = self.insert_tokens(tokens);
        &self.templates[idx]
    }

    /// Mine one message and return the creation ordinal of its template.
    pub fn insert_tokens(&mut self, tokens: Vec<String>) -> usize {
        let prefix = self.prefix_len(tokens.len());
        let max_children = self.config.max_children;
        let mut node = self.by_length.entry(tokens.len()).or_default();
        for tok in &tokens[..prefix] {
            let key = Self::child_key_for_insert(node, tok, max_children);
            node = node.children.entry(key).or_default();
        }

        let best = best_match(&self.templates, &node.clusters, &tokens);
        match best {
            Some((idx, sim)) if sim >= self.config.similarity_threshold => {
                self.templates[idx].merge(&tokens);
                idx
            }
            _ => {
                let idx = self.templates.len();
                self.templates.push(LogTemplate {
                    cluster: idx,
                    tokens,
                    match_count: 1,
                });
                node.clusters.push(idx);
                idx
            }
        }
    }

    /// Read-only lookup of the template a message would join, without
    /// modifying the tree.
    pub fn match_line(&self, content: &str) -> Option<&LogTemplate> {
        let tokens = tokenize(content);
        let mut node = self.by_length.get(&tokens.len())?;
        for tok in &tokens[..self.prefix_len(tokens.len())] {
            node = node
                .children
                .get(tok.as_str())
                .or_else(|| node.children.get(WILDCARD))?;
        }
        let (idx, sim) = best_match(&self.templates, &node.clusters, &tokens)?;
        (sim >= self.config.similarity_threshold).then(|| &self.templates[idx])
    }
}

fn best_match(templates: &[LogTemplate], leaf: &[usize], tokens: &[String]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &idx in leaf {
        let sim = templates[idx].similarity(tokens);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((idx, sim));
        }
    }
    best
}
