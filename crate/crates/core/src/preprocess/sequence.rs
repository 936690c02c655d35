use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::format::RawLogRecord;
use super::PreprocessError;

/// An ordered group of log keys with per-position ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SequenceRow", into = "SequenceRow")]
pub struct LogKeySequence {
    sequence_id: String,
    keys: Vec<usize>,
    labels: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct SequenceRow {
    sequence_id: String,
    keys: Vec<usize>,
    labels: Vec<bool>,
    sequence_label: bool,
}

impl From<LogKeySequence> for SequenceRow {
    fn from(s: LogKeySequence) -> Self {
        let sequence_label = s.sequence_label();
        SequenceRow {
            sequence_id: s.sequence_id,
            keys: s.keys,
            labels: s.labels,
            sequence_label,
        }
    }
}

impl TryFrom<SequenceRow> for LogKeySequence {
    type Error = PreprocessError;

    fn try_from(row: SequenceRow) -> Result<Self, Self::Error> {
        let seq = LogKeySequence::new(row.sequence_id, row.keys, row.labels)?;
        if seq.sequence_label() != row.sequence_label {
            return Err(PreprocessError::InvalidSequence(format!(
                "{}: sequence_label disagrees with per-position labels",
                seq.sequence_id
            )));
        }
        Ok(seq)
    }
}

impl LogKeySequence {
    pub fn new(
        sequence_id: impl Into<String>,
        keys: Vec<usize>,
        labels: Vec<bool>,
    ) -> Result<Self, PreprocessError> {
        let sequence_id = sequence_id.into();
        if keys.is_empty() {
            return Err(PreprocessError::InvalidSequence(format!(
                "{sequence_id}: empty sequence"
            )));
        }
        if keys.len() != labels.len() {
            return Err(PreprocessError::InvalidSequence(format!(
                "{sequence_id}: {} keys but {} labels",
                keys.len(),
                labels.len()
            )));
        }
        Ok(LogKeySequence {
            sequence_id,
            keys,
            labels,
        })
    }

    /// All-normal sequence, mostly for tests and synthetic corpora.
    pub fn normal(sequence_id: impl Into<String>, keys: Vec<usize>) -> Result<Self, PreprocessError> {
        let n = keys.len();
        Self::new(sequence_id, keys, vec![false; n])
    }

    pub fn sequence_id(&self) -> &str {
        &self.sequence_id
    }

    pub fn keys(&self) -> &[usize] {
        &self.keys
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Anomalous iff any member position is anomalous.
    pub fn sequence_label(&self) -> bool {
        self.labels.iter().any(|&l| l)
    }

    /// Rewrite key indices through `f`, keeping labels.
    pub fn map_keys(&self, f: impl Fn(usize) -> usize) -> LogKeySequence {
        LogKeySequence {
            sequence_id: self.sequence_id.clone(),
            keys: self.keys.iter().map(|&k| f(k)).collect(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grouping {
    /// Windows `[t0 + i*stride, t0 + i*stride + seconds)`, `t0` the earliest
    /// timestamp. `stride` defaults to `seconds` (tumbling windows).
    Window {
        seconds: i64,
        #[serde(default)]
        stride: Option<i64>,
    },
    Session,
}

impl Grouping {
    pub fn window(seconds: i64) -> Self {
        Grouping::Window {
            seconds,
            stride: None,
        }
    }
}

/// Group keyed records into sequences, splitting anything longer than
/// `max_context` into consecutive chunks named `<id>#<chunk>`.
///
/// `keys[i]` is the log key of `records[i]`. Under session grouping,
/// records without a session id are dropped.
pub fn group_sequences(
    records: &[RawLogRecord],
    keys: &[usize],
    grouping: &Grouping,
    max_context: usize,
) -> Result<Vec<LogKeySequence>, PreprocessError> {
    if records.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    assert_eq!(records.len(), keys.len(), "one key per record");
    if max_context == 0 {
        return Err(PreprocessError::InvalidGrouping("max_context must be positive".into()));
    }

    let groups: Vec<(String, Vec<usize>)> = match *grouping {
        Grouping::Session => {
            let mut order: Vec<(String, Vec<usize>)> = Vec::new();
            let mut index: HashMap<&str, usize> = HashMap::new();
            let mut missing = 0usize;
            for (i, rec) in records.iter().enumerate() {
                let Some(sid) = rec.session_id.as_deref() else {
                    missing += 1;
                    continue;
                };
                let slot = *index.entry(sid).or_insert_with(|| {
                    order.push((sid.to_string(), Vec::new()));
                    order.len() - 1
                });
                order[slot].1.push(i);
            }
            if missing > 0 {
                log::warn!("{missing} records carry no session id and were dropped");
            }
            order
        }
        Grouping::Window { seconds, stride } => {
            let stride = stride.unwrap_or(seconds);
            if seconds <= 0 || stride <= 0 {
                return Err(PreprocessError::InvalidGrouping(format!(
                    "window {seconds}s / stride {stride}s must both be positive"
                )));
            }
            let t0 = records.iter().map(|r| r.timestamp).min().unwrap_or(0);
            let mut windows: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (i, rec) in records.iter().enumerate() {
                let offset = rec.timestamp - t0;
                // every window start w*stride with w*stride <= offset < w*stride + seconds
                let last = offset.div_euclid(stride);
                let first = (offset - seconds).div_euclid(stride) + 1;
                for w in first.max(0)..=last {
                    windows.entry(w).or_default().push(i);
                }
            }
            windows
                .into_iter()
                .map(|(w, members)| (format!("w{w}"), members))
                .collect()
        }
    };

    let mut out = Vec::new();
    for (id, members) in groups {
        let chunks = members.len().div_ceil(max_context);
        for (c, chunk) in members.chunks(max_context).enumerate() {
            let seq_id = if chunks > 1 { format!("{id}#{c}") } else { id.clone() };
            out.push(LogKeySequence::new(
                seq_id,
                chunk.iter().map(|&i| keys[i]).collect(),
                chunk.iter().map(|&i| records[i].is_anomalous).collect(),
            )?);
        }
    }
    if out.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: i64, session: Option<&str>, anomalous: bool) -> RawLogRecord {
        RawLogRecord {
            timestamp: t,
            session_id: session.map(String::from),
            content: "x".into(),
            is_anomalous: anomalous,
        }
    }

    #[test]
    fn single_window() {
        let records: Vec<_> = (0..60).map(|t| rec(t, None, false)).collect();
        let keys = vec![0; 60];
        let seqs = group_sequences(&records, &keys, &Grouping::window(60), 128).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].len(), 60);
    }

    #[test]
    fn window_boundary() {
        let records = vec![rec(0, None, false), rec(61, None, false)];
        let seqs = group_sequences(&records, &[0, 1], &Grouping::window(60), 128).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].keys(), &[0]);
        assert_eq!(seqs[1].keys(), &[1]);
    }

    #[test]
    fn overlapping_windows() {
        let records = vec![rec(0, None, false), rec(30, None, false), rec(70, None, false)];
        let g = Grouping::Window {
            seconds: 60,
            stride: Some(30),
        };
        let seqs = group_sequences(&records, &[0, 1, 2], &g, 128).unwrap();
        let keys: Vec<&[usize]> = seqs.iter().map(|s| s.keys()).collect();
        assert_eq!(keys, vec![&[0, 1][..], &[1, 2][..], &[2][..]]);
    }

    #[test]
    fn session_label_is_or_of_members() {
        let records = vec![
            rec(0, Some("blk_1"), false),
            rec(1, Some("blk_2"), false),
            rec(2, Some("blk_1"), true),
            rec(3, Some("blk_1"), false),
        ];
        let seqs = group_sequences(&records, &[5, 6, 7, 8], &Grouping::Session, 128).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].sequence_id(), "blk_1");
        assert_eq!(seqs[0].keys(), &[5, 7, 8]);
        assert!(seqs[0].sequence_label());
        assert!(!seqs[1].sequence_label());
    }

    #[test]
    fn long_sessions_are_chunked() {
        let records: Vec<_> = (0..5).map(|t| rec(t, Some("s"), t == 4)).collect();
        let seqs = group_sequences(&records, &[0, 1, 2, 3, 4], &Grouping::Session, 2).unwrap();
        let ids: Vec<_> = seqs.iter().map(|s| s.sequence_id().to_string()).collect();
        assert_eq!(ids, ["s#0", "s#1", "s#2"]);
        assert!(seqs[2].sequence_label());
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            group_sequences(&[], &[], &Grouping::Session, 8),
            Err(PreprocessError::EmptyInput)
        ));
    }

    #[test]
    fn sequence_invariants() {
        assert!(LogKeySequence::new("x", vec![], vec![]).is_err());
        assert!(LogKeySequence::new("x", vec![1, 2], vec![false]).is_err());
        let s = LogKeySequence::new("x", vec![1, 2], vec![false, true]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"sequence_label\":true"));
        let back: LogKeySequence = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad = json.replace("\"sequence_label\":true", "\"sequence_label\":false");
        assert!(serde_json::from_str::<LogKeySequence>(&bad).is_err());
    }

    fn records_strategy() -> impl Strategy<Value = Vec<(i64, u8, bool)>> {
        prop::collection::vec((0i64..500, 0u8..6, prop::bool::weighted(0.2)), 1..80)
    }

    proptest! {
        #[test]
        fn labels_are_conserved(raw in records_strategy(), window in 1i64..120, max_ctx in 1usize..20) {
            let records: Vec<_> = raw.iter().map(|&(t, s, a)| {
                let sid = format!("s{s}");
                rec(t, Some(&sid), a)
            }).collect();
            let keys: Vec<usize> = (0..records.len()).collect();
            let anomalous = records.iter().filter(|r| r.is_anomalous).count();
            for g in [Grouping::Session, Grouping::window(window)] {
                let seqs = group_sequences(&records, &keys, &g, max_ctx).unwrap();
                let flagged: usize = seqs.iter().map(|s| s.labels().iter().filter(|&&l| l).count()).sum();
                prop_assert_eq!(flagged, anomalous);
                // every record lands in exactly one sequence
                let mut seen: Vec<usize> = seqs.iter().flat_map(|s| s.keys().to_vec()).collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, keys.clone());
                for s in &seqs {
                    prop_assert!(s.len() <= max_ctx);
                }
            }
        }
    }
}
