//! Line grammars for the supported log datasets.
//!
//! A [`FormatSpec`] splits one raw line into a label field, a timestamp and
//! the free-text message content. Built-in grammars cover the public BGL,
//! Thunderbird and HDFS layouts plus the layout written by the synthetic
//! corpus generator.

use std::fmt;
use std::io::BufRead;

use chrono::NaiveDateTime;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PreprocessError;

/// How the timestamp is recovered from the header captures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimestampRule {
    /// Named group `ts` holds integer epoch seconds.
    Epoch,
    /// Named groups `date` and `time` are concatenated and parsed with `format`.
    DateTime { format: String },
}

/// Serializable description of a line grammar.
///
/// `header_pattern` must define a named group `content`; the optional group
/// `label` feeds the anomaly rule. A line whose label is missing or equal to
/// `normal_label` is normal; with `normal_label = None` every line is normal
/// and labels must come from elsewhere (e.g. an HDFS block label file).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatDef {
    pub name: String,
    pub header_pattern: String,
    pub timestamp: TimestampRule,
    #[serde(default)]
    pub session_pattern: Option<String>,
    #[serde(default)]
    pub normal_label: Option<String>,
    /// Patterns replaced by `<*>` before template mining.
    #[serde(default)]
    pub masks: Vec<String>,
}

impl FormatDef {
    pub fn builtin(name: &str) -> Option<FormatDef> {
        let def = match name {
            "bgl" => FormatDef {
                name: "bgl".into(),
                // label? epoch date node time node-repeat type component level content
                header_pattern: concat!(
                    r"^(?:(?P<label>\S+)\s+)?(?P<ts>\d+)\s+\d{4}\.\d{2}\.\d{2}\s+\S+\s+",
                    r"\d{4}-\d{2}-\d{2}-\d{2}\.\d{2}\.\d{2}\.\d+\s+\S+\s+\S+\s+\S+\s+\S+",
                    r"(?:\s+(?P<content>.*))?$"
                )
                .into(),
                timestamp: TimestampRule::Epoch,
                session_pattern: None,
                normal_label: Some("-".into()),
                masks: vec![],
            },
            "thunderbird" => FormatDef {
                name: "thunderbird".into(),
                // label epoch date user month day time location content
                header_pattern: concat!(
                    r"^(?P<label>\S+)\s+(?P<ts>\d+)\s+\d{4}\.\d{2}\.\d{2}\s+\S+\s+\w{3}\s+",
                    r"\d{1,2}\s+\d{2}:\d{2}:\d{2}\s+\S+(?:\s+(?P<content>.*))?$"
                )
                .into(),
                timestamp: TimestampRule::Epoch,
                session_pattern: None,
                normal_label: Some("-".into()),
                masks: vec![],
            },
            "hdfs" => FormatDef {
                name: "hdfs".into(),
                // date time pid level component: content
                header_pattern: r"^(?P<date>\d{6})\s+(?P<time>\d{6})\s+\d+\s+\w+\s+\S+?:(?:\s+(?P<content>.*))?$"
                    .into(),
                timestamp: TimestampRule::DateTime {
                    format: "%y%m%d%H%M%S".into(),
                },
                session_pattern: Some(r"(blk_-?\d+)".into()),
                normal_label: None,
                masks: vec![
                    r"blk_-?\d+".into(),
                    r"(?:/)?\d+\.\d+\.\d+\.\d+(?::\d+)?".into(),
                ],
            },
            "synthetic" => FormatDef {
                name: "synthetic".into(),
                header_pattern: r"^(?P<label>\S+)\s+(?P<ts>\d+)(?:\s+(?P<content>.*))?$".into(),
                timestamp: TimestampRule::Epoch,
                session_pattern: Some(r"(ses_\d+)".into()),
                normal_label: Some("-".into()),
                masks: vec![r"ses_\d+".into()],
            },
            _ => return None,
        };
        Some(def)
    }

    pub fn compile(&self) -> Result<FormatSpec, PreprocessError> {
        let invalid = |reason: String| PreprocessError::InvalidFormat {
            name: self.name.clone(),
            reason,
        };
        let header = Regex::new(&self.header_pattern).map_err(|e| invalid(e.to_string()))?;
        if !header.capture_names().flatten().any(|n| n == "content") {
            return Err(invalid("header pattern has no `content` group".into()));
        }
        let needed: &[&str] = match self.timestamp {
            TimestampRule::Epoch => &["ts"],
            TimestampRule::DateTime { .. } => &["date", "time"],
        };
        for group in needed {
            if !header.capture_names().flatten().any(|n| n == *group) {
                return Err(invalid(format!("header pattern has no `{group}` group")));
            }
        }
        let session = self
            .session_pattern
            .as_deref()
            .map(Regex::new)
            .transpose()
            .map_err(|e| invalid(e.to_string()))?;
        let masks = self
            .masks
            .iter()
            .map(|m| Regex::new(m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(e.to_string()))?;
        Ok(FormatSpec {
            def: self.clone(),
            header,
            session,
            masks,
        })
    }
}

/// A compiled line grammar.
#[derive(Debug, Clone)]
pub struct FormatSpec {
    def: FormatDef,
    header: Regex,
    session: Option<Regex>,
    masks: Vec<Regex>,
}

/// One parsed log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLogRecord {
    pub timestamp: i64,
    pub session_id: Option<String>,
    pub content: String,
    pub is_anomalous: bool,
}

/// Why a line was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MalformedReason {
    HeaderMismatch,
    EmptyContent,
    BadTimestamp(String),
    EmbeddedNewline,
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MalformedReason::HeaderMismatch => write!(f, "header pattern did not match"),
            MalformedReason::EmptyContent => write!(f, "message content is empty"),
            MalformedReason::BadTimestamp(t) => write!(f, "unparseable timestamp `{t}`"),
            MalformedReason::EmbeddedNewline => write!(f, "line contains an embedded newline"),
        }
    }
}

/// A rejected line and its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub line_no: usize,
    pub reason: MalformedReason,
}

/// Result of reading a whole file: surviving records plus skipped lines.
#[derive(Debug, Default, Clone)]
pub struct ParsedLog {
    pub records: Vec<RawLogRecord>,
    pub malformed: Vec<MalformedLine>,
}

impl FormatSpec {
    pub fn builtin(name: &str) -> Option<FormatSpec> {
        FormatDef::builtin(name).map(|d| d.compile().expect("built-in grammars compile"))
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn def(&self) -> &FormatDef {
        &self.def
    }

    pub fn has_session_pattern(&self) -> bool {
        self.session.is_some()
    }

    /// Replace every mask match with `<*>`; this is what template mining sees.
    pub fn mask(&self, content: &str) -> String {
        let mut out = content.to_string();
        for re in &self.masks {
            if re.is_match(&out) {
                out = re.replace_all(&out, "<*>").into_owned();
            }
        }
        out
    }

    pub fn session_of(&self, content: &str) -> Option<String> {
        let re = self.session.as_ref()?;
        let caps = re.captures(content)?;
        let m = caps.get(1).or_else(|| caps.get(0))?;
        Some(m.as_str().to_string())
    }
}

/// Split a single raw line into a [`RawLogRecord`].
pub fn parse_log_line(line: &str, spec: &FormatSpec) -> Result<RawLogRecord, MalformedReason> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.contains('\n') {
        return Err(MalformedReason::EmbeddedNewline);
    }
    let caps = spec
        .header
        .captures(line)
        .ok_or(MalformedReason::HeaderMismatch)?;
    let content = caps.name("content").map(|m| m.as_str()).unwrap_or("");
    if content.trim().is_empty() {
        return Err(MalformedReason::EmptyContent);
    }
    let timestamp = match &spec.def.timestamp {
        TimestampRule::Epoch => {
            let raw = caps.name("ts").map(|m| m.as_str()).unwrap_or("");
            raw.parse::<i64>()
                .map_err(|_| MalformedReason::BadTimestamp(raw.to_string()))?
        }
        TimestampRule::DateTime { format } => {
            let date = caps.name("date").map(|m| m.as_str()).unwrap_or("");
            let time = caps.name("time").map(|m| m.as_str()).unwrap_or("");
            let joined = format!("{date}{time}");
            NaiveDateTime::parse_from_str(&joined, format)
                .map_err(|_| MalformedReason::BadTimestamp(joined.clone()))?
                .and_utc()
                .timestamp()
        }
    };
    let is_anomalous = match (&spec.def.normal_label, caps.name("label")) {
        (Some(normal), Some(label)) => label.as_str() != normal,
        _ => false,
    };
    Ok(RawLogRecord {
        timestamp,
        session_id: spec.session_of(content),
        content: content.to_string(),
        is_anomalous,
    })
}

/// Parse every line of `reader`, skipping and counting malformed lines.
pub fn read_records<R: BufRead>(reader: R, spec: &FormatSpec) -> Result<ParsedLog, PreprocessError> {
    let mut parsed = ParsedLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        match parse_log_line(&line, spec) {
            Ok(rec) => parsed.records.push(rec),
            Err(reason) => {
                log::debug!("skipping line {}: {}", idx + 1, reason);
                parsed.malformed.push(MalformedLine {
                    line_no: idx + 1,
                    reason,
                })
            }
        }
    }
    Ok(parsed)
}
