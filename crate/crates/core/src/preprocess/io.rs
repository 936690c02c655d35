//! Parsed-corpus and template-catalog files.
//!
//! Both are line-delimited JSON. The first line is a header naming the
//! format and its version; every further line is one row.
//!
//! ```text
//! {"format":"logkey-corpus","version":1,"sequences":2}
//! {"sequence_id":"blk_1","keys":[0,1,0],"labels":[false,false,false],"sequence_label":false}
//! ...
//! {"format":"logkey-templates","version":1,"templates":2}
//! {"key_index":0,"template_id":"9f2c...","template":"Receiving block <*>","match_count":12}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::drain::TemplateId;
use super::registry::CatalogEntry;
use super::sequence::LogKeySequence;
use super::PreprocessError;

pub const CORPUS_FORMAT: &str = "logkey-corpus";
pub const CATALOG_FORMAT: &str = "logkey-templates";
pub const FILE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequences: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    templates: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct CatalogRow {
    key_index: usize,
    template_id: String,
    template: String,
    match_count: u64,
}

fn corrupt(line: usize, reason: impl ToString) -> PreprocessError {
    PreprocessError::CorruptFile {
        line,
        reason: reason.to_string(),
    }
}

fn read_header<R: BufRead>(lines: &mut std::io::Lines<R>, format: &str) -> Result<Header, PreprocessError> {
    let first = lines.next().ok_or_else(|| corrupt(1, "missing header"))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| corrupt(1, e))?;
    if header.format != format {
        return Err(corrupt(1, format!("expected format `{format}`, found `{}`", header.format)));
    }
    if header.version != FILE_VERSION {
        return Err(corrupt(1, format!("unsupported version {}", header.version)));
    }
    Ok(header)
}

pub fn write_corpus<W: Write>(mut w: W, sequences: &[LogKeySequence]) -> Result<(), PreprocessError> {
    let header = Header {
        format: CORPUS_FORMAT.into(),
        version: FILE_VERSION,
        sequences: Some(sequences.len()),
        templates: None,
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for seq in sequences {
        serde_json::to_writer(&mut w, seq).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<LogKeySequence>, PreprocessError> {
    let mut lines = r.lines();
    let header = read_header(&mut lines, CORPUS_FORMAT)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| corrupt(i + 2, e))?);
    }
    if let Some(n) = header.sequences {
        if n != out.len() {
            return Err(corrupt(1, format!("header announces {n} sequences, found {}", out.len())));
        }
    }
    Ok(out)
}

pub fn write_catalog<W: Write>(mut w: W, entries: &[CatalogEntry]) -> Result<(), PreprocessError> {
    let header = Header {
        format: CATALOG_FORMAT.into(),
        version: FILE_VERSION,
        sequences: None,
        templates: Some(entries.len()),
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for e in entries {
        let row = CatalogRow {
            key_index: e.key_index,
            template_id: e.template_id.to_hex(),
            template: e.template.clone(),
            match_count: e.match_count,
        };
        serde_json::to_writer(&mut w, &row).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_catalog<R: BufRead>(r: R) -> Result<Vec<CatalogEntry>, PreprocessError> {
    let mut lines = r.lines();
    read_header(&mut lines, CATALOG_FORMAT)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: CatalogRow = serde_json::from_str(&line).map_err(|e| corrupt(i + 2, e))?;
        if row.key_index != out.len() {
            return Err(corrupt(i + 2, "key indices must be dense and ordered"));
        }
        let template_id = TemplateId::from_hex(&row.template_id)
            .ok_or_else(|| corrupt(i + 2, "bad template id"))?;
        out.push(CatalogEntry {
            key_index: row.key_index,
            template_id,
            template: row.template,
            match_count: row.match_count,
        });
    }
    Ok(out)
}
