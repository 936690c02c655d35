use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::LogKeySequence;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Seeded shuffle.
    #[default]
    Random,
    /// Earliest sequences first, in corpus order.
    Chronological,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Fraction of the normal sequences used to train the language model.
    pub train_fraction: f64,
    /// Fraction of normal and of anomalous sequences held out, labeled, for
    /// RL fine-tuning.
    pub calibration_fraction: f64,
    pub selection: Selection,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.1,
            calibration_fraction: 0.1,
            selection: Selection::Random,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "train_fraction {} is outside (0, 1]",
                self.train_fraction
            )));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "calibration_fraction {} is outside (0, 1)",
                self.calibration_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<LogKeySequence>,
    pub calibration: Vec<LogKeySequence>,
    pub test: Vec<LogKeySequence>,
}

/// Sequence ids of each split, as stored next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub calibration: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn ids(&self) -> SplitIds {
        let ids = |v: &[LogKeySequence]| v.iter().map(|s| s.sequence_id().to_string()).collect();
        SplitIds {
            train: ids(&self.train),
            calibration: ids(&self.calibration),
            test: ids(&self.test),
        }
    }
}

/// Train on `round(train_fraction * normals)` normal sequences; calibrate on
/// `round(calibration_fraction * n)` of the remaining normals and of the
/// anomalies; test on everything else. Each split keeps corpus order.
pub fn split_corpus(
    sequences: &[LogKeySequence],
    cfg: &SplitConfig,
    seed: u64,
) -> Result<CorpusSplit, HarnessError> {
    cfg.validate()?;
    let (mut normal, mut anomalous): (Vec<usize>, Vec<usize>) =
        (0..sequences.len()).partition(|&i| !sequences[i].sequence_label());
    let n_train = (cfg.train_fraction * normal.len() as f64).round() as usize;
    let n_cal_normal = (cfg.calibration_fraction * normal.len() as f64).round() as usize;
    let n_cal_anomalous = (cfg.calibration_fraction * anomalous.len() as f64).round() as usize;
    if n_train == 0 || n_train + n_cal_normal > normal.len() {
        return Err(HarnessError::InsufficientData(format!(
            "{} normal sequences cannot supply {n_train} for training and {n_cal_normal} for calibration",
            normal.len()
        )));
    }
    if cfg.selection == Selection::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normal.shuffle(&mut rng);
        anomalous.shuffle(&mut rng);
    }
    let mut train: Vec<usize> = normal[..n_train].to_vec();
    let mut calibration: Vec<usize> = normal[n_train..n_train + n_cal_normal].to_vec();
    calibration.extend_from_slice(&anomalous[..n_cal_anomalous]);
    let mut test: Vec<usize> = normal[n_train + n_cal_normal..].to_vec();
    test.extend_from_slice(&anomalous[n_cal_anomalous..]);
    for (name, part) in [("calibration", &calibration), ("test", &test)] {
        if part.is_empty() {
            return Err(HarnessError::InsufficientData(format!("the {name} split is empty")));
        }
    }
    let take = |idx: &mut Vec<usize>| {
        idx.sort_unstable();
        idx.iter().map(|&i| sequences[i].clone()).collect::<Vec<_>>()
    };
    Ok(CorpusSplit {
        train: take(&mut train),
        calibration: take(&mut calibration),
        test: take(&mut test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn corpus(normals: usize, anomalies: usize) -> Vec<LogKeySequence> {
        (0..normals + anomalies)
            .map(|i| {
                let bad = i >= normals;
                LogKeySequence::new(format!("s{i}"), vec![i % 3, 1], vec![false, bad]).unwrap()
            })
            .collect()
    }

    #[test]
    fn counts_for_hundred_and_twenty() {
        let s = split_corpus(&corpus(100, 20), &SplitConfig::default(), 1).unwrap();
        assert_eq!(s.train.len(), 10);
        assert!(s.train.iter().all(|x| !x.sequence_label()));
        assert_eq!(s.calibration.len(), 12);
        assert_eq!(s.calibration.iter().filter(|x| x.sequence_label()).count(), 2);
        assert_eq!(s.test.len(), 98);
    }

    #[test]
    fn splits_partition_the_corpus() {
        let all = corpus(57, 13);
        let s = split_corpus(&all, &SplitConfig::default(), 3).unwrap();
        let ids = s.ids();
        let mut seen = HashSet::new();
        for id in ids.train.iter().chain(&ids.calibration).chain(&ids.test) {
            assert!(seen.insert(id.clone()), "{id} appears twice");
        }
        assert_eq!(seen.len(), all.len());
    }

    #[test]
    fn seeded_and_chronological_selection() {
        let all = corpus(50, 10);
        let cfg = SplitConfig::default();
        assert_eq!(split_corpus(&all, &cfg, 5).unwrap(), split_corpus(&all, &cfg, 5).unwrap());
        assert_ne!(
            split_corpus(&all, &cfg, 5).unwrap().ids().train,
            split_corpus(&all, &cfg, 6).unwrap().ids().train
        );
        let chrono = SplitConfig {
            selection: Selection::Chronological,
            ..cfg
        };
        let s = split_corpus(&all, &chrono, 0).unwrap();
        assert_eq!(s.ids().train, vec!["s0", "s1", "s2", "s3", "s4"]);
    }

    #[test]
    fn insufficient_data() {
        let all = corpus(20, 5);
        let cfg = SplitConfig {
            train_fraction: 1.0,
            ..SplitConfig::default()
        };
        assert!(matches!(split_corpus(&all, &cfg, 0), Err(HarnessError::InsufficientData(_))));
        assert!(matches!(
            split_corpus(&corpus(3, 0), &SplitConfig::default(), 0),
            Err(HarnessError::InsufficientData(_))
        ));
    }
}
