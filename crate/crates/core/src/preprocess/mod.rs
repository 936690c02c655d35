//! Raw log lines to labeled log-key sequences.
//!
//! The pipeline is: [`parse_log_line`] strips the dataset header, the
//! [`DrainTree`] mines templates, the [`KeyRegistry`] assigns dense key
//! indices, and [`group_sequences`] forms window or session sequences.

mod drain;
mod format;
mod io;
mod registry;
mod sequence;

use thiserror::Error;

pub use drain::{tokenize, DrainConfig, DrainTree, LogTemplate, TemplateId, WILDCARD};
pub use format::{
    parse_log_line, read_records, FormatDef, FormatSpec, MalformedLine, MalformedReason, ParsedLog,
    RawLogRecord, TimestampRule,
};
pub use io::{read_catalog, read_corpus, write_catalog, write_corpus, CATALOG_FORMAT, CORPUS_FORMAT};
pub use registry::{CatalogEntry, KeyRegistry, LogKey};
pub use sequence::{group_sequences, Grouping, LogKeySequence};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no records survived parsing")]
    EmptyInput,
    #[error("format `{name}`: {reason}")]
    InvalidFormat { name: String, reason: String },
    #[error("invalid drain parameters: {0}")]
    InvalidDrain(String),
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("line {line}: {reason}")]
    CorruptFile { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Templates mined from a record set, with each record's key.
#[derive(Debug, Clone)]
pub struct MinedCorpus {
    pub tree: DrainTree,
    pub registry: KeyRegistry,
    /// `record_keys[i]` is the key index of the i-th record.
    pub record_keys: Vec<usize>,
}

/// Mine every record, then register the final templates in creation order.
///
/// Registration happens after mining so that a key always refers to the
/// template's final text; clusters that converge on identical text share
/// one key.
pub fn mine_corpus(
    records: &[RawLogRecord],
    spec: &FormatSpec,
    config: DrainConfig,
) -> Result<MinedCorpus, PreprocessError> {
    if records.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    let mut tree = DrainTree::new(config)?;
    let clusters: Vec<usize> = records
        .iter()
        .map(|r| tree.insert_tokens(tokenize(&spec.mask(&r.content))))
        .collect();
    let mut registry = KeyRegistry::new();
    let cluster_keys: Vec<usize> = tree
        .templates()
        .iter()
        .map(|t| {
            let key = registry.register(t);
            registry.add_matches(key.key_index, t.match_count);
            key.key_index
        })
        .collect();
    let record_keys = clusters.iter().map(|&c| cluster_keys[c]).collect();
    Ok(MinedCorpus {
        tree,
        registry,
        record_keys,
    })
}
