//! First-order Markov log generator with labeled anomaly injection.
//!
//! Key `i` renders as the line body `<w>daemon <w>event <w>unit <w>phase <n> ses_<s>`
//! where `<w>` is a letter code for `i`, so every key mines to its own template.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::{write_corpus, LogKeySequence};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// A template that never occurs in normal traffic.
    UnseenKey,
    /// A known key that the process can never emit after its predecessor.
    TransitionViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub key_count: usize,
    pub sequence_count: usize,
    pub sequence_length: usize,
    /// Fraction of all positions that receive an anomaly.
    pub anomaly_rate: f64,
    pub anomaly_kinds: Vec<AnomalyKind>,
    /// Number of successors with nonzero probability in each generated row.
    /// Defaults to half the keys.
    pub branching: Option<usize>,
    /// Distinct templates reserved for unseen-key anomalies.
    pub unseen_keys: usize,
    /// Explicit transition table; generated from the seed when absent.
    pub transitions: Option<Vec<Vec<f64>>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            key_count: 20,
            sequence_count: 1000,
            sequence_length: 50,
            // one anomaly per 20 sequences of length 50
            anomaly_rate: 0.001,
            anomaly_kinds: vec![AnomalyKind::UnseenKey, AnomalyKind::TransitionViolation],
            branching: None,
            unseen_keys: 3,
            transitions: None,
        }
    }
}

/// The transition table a corpus was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovProcess {
    pub transitions: Vec<Vec<f64>>,
}

impl MarkovProcess {
    pub fn key_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        match self.transitions.get(from) {
            Some(row) => row.get(to).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    /// Positions a perfect detector would flag: unseen keys, and keys the
    /// process cannot emit after their predecessor.
    pub fn oracle_flags(&self, keys: &[usize]) -> Vec<usize> {
        let n = self.key_count();
        (0..keys.len())
            .filter(|&t| {
                keys[t] >= n || (t > 0 && keys[t - 1] < n && self.probability(keys[t - 1], keys[t]) == 0.0)
            })
            .collect()
    }

    fn sample_next<R: Rng>(&self, from: usize, rng: &mut R) -> usize {
        let row = &self.transitions[from];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// A generated corpus: raw lines plus the ground-truth key sequences in
/// process key ids (unseen templates are numbered from `key_count`).
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub process: MarkovProcess,
    pub lines: Vec<String>,
    pub sequences: Vec<LogKeySequence>,
    /// `(sequence index, position, kind)` of every injected anomaly.
    pub anomalies: Vec<(usize, usize, AnomalyKind)>,
}

/// Bijective base-26 letter code: 0 -> "a", 25 -> "z", 26 -> "aa".
pub fn letter_code(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn template_body(key: usize) -> String {
    let w = letter_code(key);
    format!("{w}daemon {w}event {w}unit {w}phase")
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.key_count < 2 {
            return bad("key_count must be at least 2".into());
        }
        if self.sequence_count == 0 || self.sequence_length == 0 {
            return bad("sequence_count and sequence_length must be positive".into());
        }
        if !(0.0..1.0).contains(&self.anomaly_rate) {
            return bad(format!("anomaly_rate {} is outside [0, 1)", self.anomaly_rate));
        }
        if self.anomaly_rate > 0.0 && self.anomaly_kinds.is_empty() {
            return bad("anomaly_rate > 0 needs at least one anomaly kind".into());
        }
        if self.anomaly_kinds.contains(&AnomalyKind::UnseenKey) && self.unseen_keys == 0 {
            return bad("unseen_key anomalies need unseen_keys > 0".into());
        }
        if let Some(b) = self.branching {
            if b == 0 || b > self.key_count {
                return bad(format!("branching {b} is outside 1..={}", self.key_count));
            }
        }
        if let Some(rows) = &self.transitions {
            if rows.len() != self.key_count {
                return bad(format!("{} transition rows for {} keys", rows.len(), self.key_count));
            }
            for (i, row) in rows.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.len() != self.key_count || row.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("transition row {i} is not a probability vector"));
                }
            }
        }
        Ok(())
    }

    fn process<R: Rng>(&self, rng: &mut R) -> MarkovProcess {
        if let Some(rows) = &self.transitions {
            return MarkovProcess {
                transitions: rows.clone(),
            };
        }
        let n = self.key_count;
        let support = self.branching.unwrap_or((n / 2).max(1));
        let transitions = (0..n)
            .map(|a| {
                // the cyclic successor keeps every key reachable
                let succ = (a + 1) % n;
                let mut others: Vec<usize> = (0..n).filter(|&j| j != succ).collect();
                others.shuffle(rng);
                let mut row = vec![0.0; n];
                row[succ] = rng.random_range(0.5..1.5);
                for &j in others.iter().take(support - 1) {
                    row[j] = rng.random_range(0.5..1.5);
                }
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= total);
                row
            })
            .collect();
        MarkovProcess { transitions }
    }
}

/// Draw a labeled corpus. Exactly `round(anomaly_rate * positions)`
/// positions are replaced by anomalies; position 0 of a sequence is never
/// chosen so that every anomaly has a predecessor.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let process = spec.process(&mut rng);
    let (n, len) = (spec.key_count, spec.sequence_length);

    let mut keys: Vec<Vec<usize>> = (0..spec.sequence_count)
        .map(|_| {
            let mut seq = Vec::with_capacity(len);
            seq.push(rng.random_range(0..n));
            while seq.len() < len {
                let prev = *seq.last().expect("non-empty");
                seq.push(process.sample_next(prev, &mut rng));
            }
            seq
        })
        .collect();
    let mut labels: Vec<Vec<bool>> = keys.iter().map(|s| vec![false; s.len()]).collect();

    let total = spec.sequence_count * len;
    let wanted = (spec.anomaly_rate * total as f64).round() as usize;
    let eligible = spec.sequence_count * (len - 1);
    if wanted > eligible {
        return Err(HarnessError::InvalidSpec(format!(
            "{wanted} anomalies requested but only {eligible} positions have a predecessor"
        )));
    }
    let mut picks: Vec<(usize, usize)> = index::sample(&mut rng, eligible, wanted)
        .into_iter()
        .map(|i| (i / (len - 1), i % (len - 1) + 1))
        .collect();
    let mut kinds: Vec<AnomalyKind> = (0..wanted)
        .map(|i| spec.anomaly_kinds[i % spec.anomaly_kinds.len()])
        .collect();
    // apply in corpus order so a violation sees its final predecessor
    let mut order: Vec<usize> = (0..wanted).collect();
    order.sort_by_key(|&i| picks[i]);
    picks = order.iter().map(|&i| picks[i]).collect();
    kinds = order.iter().map(|&i| kinds[i]).collect();

    let mut anomalies = Vec::with_capacity(wanted);
    for (&(s, t), &kind) in picks.iter().zip(&kinds) {
        let prev = keys[s][t - 1];
        let forbidden: Vec<usize> = if prev < n {
            (0..n).filter(|&j| process.probability(prev, j) == 0.0).collect()
        } else {
            (0..n).collect()
        };
        let kind = match kind {
            AnomalyKind::TransitionViolation if forbidden.is_empty() => {
                if spec.unseen_keys == 0 {
                    return Err(HarnessError::InvalidSpec(format!(
                        "key {prev} can reach every key; no transition violation exists"
                    )));
                }
                AnomalyKind::UnseenKey
            }
            k => k,
        };
        keys[s][t] = match kind {
            AnomalyKind::UnseenKey => n + rng.random_range(0..spec.unseen_keys),
            AnomalyKind::TransitionViolation => forbidden[rng.random_range(0..forbidden.len())],
        };
        labels[s][t] = true;
        anomalies.push((s, t, kind));
    }

    let mut lines = Vec::with_capacity(total);
    let mut sequences = Vec::with_capacity(spec.sequence_count);
    for (s, (ks, ls)) in keys.into_iter().zip(labels).enumerate() {
        for (t, (&k, &anomalous)) in ks.iter().zip(&ls).enumerate() {
            let label = if anomalous { "ANOMALY" } else { "-" };
            let ts = 1_600_000_000 + (s * len + t) as i64;
            let num: u32 = rng.random_range(0..100_000);
            lines.push(format!("{label} {ts} {} {num} ses_{s}", template_body(k)));
        }
        sequences.push(LogKeySequence::new(format!("ses_{s}"), ks, ls)?);
    }
    Ok(SyntheticCorpus {
        process,
        lines,
        sequences,
        anomalies,
    })
}

pub const SYNTH_LOG: &str = "synthetic.log";
pub const SYNTH_TRUTH: &str = "synthetic_truth.jsonl";
pub const SYNTH_PROCESS: &str = "synthetic_process.json";

/// Generate a corpus and write the raw log, the ground-truth sequences and
/// the transition table into `dir`. Returns the raw log path.
pub fn cmd_synth(spec: &SyntheticSpec, seed: u64, dir: &Path) -> Result<(SyntheticCorpus, PathBuf), HarnessError> {
    let corpus = generate(spec, seed)?;
    std::fs::create_dir_all(dir)?;
    let log_path = dir.join(SYNTH_LOG);
    let mut w = BufWriter::new(File::create(&log_path)?);
    for line in &corpus.lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    write_corpus(BufWriter::new(File::create(dir.join(SYNTH_TRUTH))?), &corpus.sequences)?;
    let mut pw = BufWriter::new(File::create(dir.join(SYNTH_PROCESS))?);
    serde_json::to_writer_pretty(&mut pw, &corpus.process)?;
    pw.flush()?;
    Ok((corpus, log_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            key_count: 6,
            sequence_count: 40,
            sequence_length: 12,
            anomaly_rate: 0.05,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn letter_codes() {
        assert_eq!(letter_code(0), "a");
        assert_eq!(letter_code(25), "z");
        assert_eq!(letter_code(26), "aa");
        assert_eq!(letter_code(27), "ab");
        assert_eq!(letter_code(26 + 26 * 26), "aaa");
    }

    #[test]
    fn rows_are_distributions() {
        let c = generate(&small(), 1).unwrap();
        for row in &c.process.transitions {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 3);
        }
    }

    #[test]
    fn zero_rate_gives_all_normal() {
        let spec = SyntheticSpec {
            anomaly_rate: 0.0,
            ..small()
        };
        let c = generate(&spec, 2).unwrap();
        assert!(c.sequences.iter().all(|s| !s.sequence_label()));
        assert!(c.lines.iter().all(|l| l.starts_with("- ")));
    }

    #[test]
    fn one_hot_cycle_repeats() {
        let n = 4;
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if j == (i + 1) % n { 1.0 } else { 0.0 }).collect())
            .collect();
        let spec = SyntheticSpec {
            key_count: n,
            anomaly_rate: 0.0,
            transitions: Some(rows),
            ..small()
        };
        for s in &generate(&spec, 3).unwrap().sequences {
            for w in s.keys().windows(2) {
                assert_eq!(w[1], (w[0] + 1) % n);
            }
        }
    }

    #[test]
    fn anomaly_count_is_exact_and_oracle_finds_them() {
        let spec = small();
        let c = generate(&spec, 4).unwrap();
        let expected = (0.05f64 * 40.0 * 12.0).round() as usize;
        let labeled: usize = c
            .sequences
            .iter()
            .map(|s| s.labels().iter().filter(|&&l| l).count())
            .sum();
        assert_eq!(labeled, expected);
        assert_eq!(c.anomalies.len(), expected);
        for &(s, t, _) in &c.anomalies {
            assert!(c.process.oracle_flags(c.sequences[s].keys()).contains(&t));
        }
        for s in c.sequences.iter().filter(|s| !s.sequence_label()) {
            assert!(c.process.oracle_flags(s.keys()).is_empty());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(), 9).unwrap();
        let b = generate(&small(), 9).unwrap();
        assert_eq!(a.lines, b.lines);
        assert_ne!(a.lines, generate(&small(), 10).unwrap().lines);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SyntheticSpec { anomaly_rate: 1.0, ..small() },
            SyntheticSpec { key_count: 1, ..small() },
            SyntheticSpec { branching: Some(0), ..small() },
            SyntheticSpec { transitions: Some(vec![vec![0.5; 6]; 6]), ..small() },
            SyntheticSpec { anomaly_rate: 0.99, ..small() },
        ];
        for spec in bad {
            assert!(matches!(generate(&spec, 0), Err(HarnessError::InvalidSpec(_))), "{spec:?}");
        }
    }
}
