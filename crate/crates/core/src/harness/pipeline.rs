use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detect::{detect_all, evaluate, DetectionResult, MetricsReport};
use crate::lm::{checkpoint, train, LanguageModel, Precision, Scalar, TrainConfig, TrainReport, Vocabulary};
use crate::preprocess::{
    group_sequences, mine_corpus, read_catalog, read_corpus, read_records, write_catalog, write_corpus,
    FormatSpec, LogKeySequence, RawLogRecord,
};
use crate::rl::{finetune, StepReport};

use super::config::{Mode, RunConfig};
use super::manifest::{RunManifest, StageRecord, StageStatus};
use super::split::{split_corpus, CorpusSplit, SplitIds};
use super::synth::cmd_synth;
use super::HarnessError;

pub const CORPUS: &str = "corpus.jsonl";
pub const CATALOG: &str = "templates.jsonl";
pub const SPLITS: &str = "splits.json";
pub const KEYMAP: &str = "keymap.json";
pub const MODEL: &str = "model.ckpt";
pub const MODEL_RL: &str = "model_rl.ckpt";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const FINETUNE_REPORT: &str = "finetune_report.json";
pub const TRACE: &str = "rl_trace.jsonl";
pub const DETECTIONS: &str = "detections.jsonl";
pub const METRICS: &str = "metrics.json";
pub const MANIFEST: &str = "manifest.json";

/// Corpus keys known to the model, in model-token order. Keys outside the
/// map become UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMap {
    pub corpus_keys: Vec<usize>,
}

impl KeyMap {
    /// Every key that occurs in `sequences`, ascending.
    pub fn from_sequences(sequences: &[LogKeySequence]) -> KeyMap {
        let mut keys: Vec<usize> = sequences.iter().flat_map(|s| s.keys().iter().copied()).collect();
        keys.sort_unstable();
        keys.dedup();
        KeyMap { corpus_keys: keys }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.corpus_keys.len())
    }

    pub fn to_model(&self, seq: &LogKeySequence) -> LogKeySequence {
        let unk = self.vocabulary().unk();
        seq.map_keys(|k| self.corpus_keys.binary_search(&k).unwrap_or(unk))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub inputs: Vec<PathBuf>,
    pub records: usize,
    pub malformed_lines: usize,
    pub templates: usize,
    pub sequences: usize,
}

/// Read `session_id,Label` rows; `Anomaly` (case-insensitive) marks a session.
pub fn read_label_file(path: &Path) -> Result<HashMap<String, bool>, HarnessError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((id, label)) = line.split_once(',') else {
            return Err(HarnessError::Data(format!("{}:{}: expected `id,label`", path.display(), i + 1)));
        };
        if i == 0 && label.trim().eq_ignore_ascii_case("label") {
            continue;
        }
        out.insert(id.trim().to_string(), label.trim().eq_ignore_ascii_case("anomaly"));
    }
    Ok(out)
}

fn apply_labels(records: &mut [RawLogRecord], labels: &HashMap<String, bool>) {
    for r in records {
        if let Some(&bad) = r.session_id.as_deref().and_then(|s| labels.get(s)) {
            r.is_anomalous = bad;
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

/// Run `f` on a single-thread pool when `deterministic` is set.
pub fn with_thread_policy<T: Send>(deterministic: bool, f: impl FnOnce() -> T + Send) -> T {
    if deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("thread pool")
            .install(f)
    } else {
        f()
    }
}

/// Stage runner bound to one configuration and run directory.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub deterministic: bool,
    manifest: RunManifest,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, deterministic: bool) -> Result<Pipeline, HarnessError> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.output_dir)?;
        let manifest = RunManifest::load_or_new(&cfg.output_dir.join(MANIFEST), &cfg)?;
        Ok(Pipeline {
            cfg,
            deterministic,
            manifest,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.cfg.output_dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir().join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf, HarnessError> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(HarnessError::MissingArtifact(p))
        }
    }

    fn record(&mut self, stage: &str, status: StageStatus, started: Instant, artifacts: &[&str]) -> Result<(), HarnessError> {
        let seconds = (!self.deterministic && status == StageStatus::Done).then(|| started.elapsed().as_secs_f64());
        self.manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                status,
                seconds,
                artifacts: artifacts.iter().map(|a| a.to_string()).collect(),
            },
        );
        self.manifest.save(&self.path(MANIFEST))
    }

    /// Generate the synthetic corpus into the run directory and point the
    /// dataset at it.
    pub fn synth(&mut self) -> Result<PathBuf, HarnessError> {
        let started = Instant::now();
        let spec = self.cfg.synth.clone().unwrap_or_default();
        let (_, log_path) = cmd_synth(&spec, self.cfg.synth_seed(), self.dir())?;
        self.cfg.dataset.paths = vec![log_path.clone()];
        if self.cfg.dataset.format.is_empty() {
            self.cfg.dataset.format = "synthetic".into();
        }
        use super::synth::{SYNTH_LOG, SYNTH_PROCESS, SYNTH_TRUTH};
        self.record("synth", StageStatus::Done, started, &[SYNTH_LOG, SYNTH_TRUTH, SYNTH_PROCESS])?;
        Ok(log_path)
    }

    pub fn parse(&mut self) -> Result<ParseReport, HarnessError> {
        let started = Instant::now();
        let ds = &self.cfg.dataset;
        if ds.paths.is_empty() {
            return Err(HarnessError::Usage("no input log files configured".into()));
        }
        let spec = FormatSpec::builtin(&ds.format)
            .ok_or_else(|| HarnessError::Usage(format!("unknown log format `{}`", ds.format)))?;
        let mut records = Vec::new();
        let mut malformed = 0;
        for path in &ds.paths {
            let file = File::open(path).map_err(|_| HarnessError::MissingArtifact(path.clone()))?;
            let parsed = read_records(BufReader::new(file), &spec)?;
            if !parsed.malformed.is_empty() {
                log::warn!("{}: skipped {} malformed lines", path.display(), parsed.malformed.len());
            }
            malformed += parsed.malformed.len();
            records.extend(parsed.records);
        }
        if let Some(label_path) = &ds.label_file {
            apply_labels(&mut records, &read_label_file(label_path)?);
        }
        let mined = mine_corpus(&records, &spec, self.cfg.preprocess.drain)?;
        let sequences = group_sequences(
            &records,
            &mined.record_keys,
            &self.cfg.preprocess.grouping,
            self.cfg.preprocess.max_context,
        )?;
        write_corpus(BufWriter::new(File::create(self.path(CORPUS))?), &sequences)?;
        write_catalog(BufWriter::new(File::create(self.path(CATALOG))?), mined.registry.entries())?;

        let report = ParseReport {
            inputs: ds.paths.clone(),
            records: records.len(),
            malformed_lines: malformed,
            templates: mined.registry.len(),
            sequences: sequences.len(),
        };
        let stats = &mut self.manifest.corpus;
        stats.records = report.records;
        stats.malformed_lines = report.malformed_lines;
        stats.template_count = report.templates;
        stats.sequences = report.sequences;
        stats.anomalous_sequences = sequences.iter().filter(|s| s.sequence_label()).count();
        self.record("parse", StageStatus::Done, started, &[CORPUS, CATALOG])?;
        Ok(report)
    }

    fn corpus(&self) -> Result<Vec<LogKeySequence>, HarnessError> {
        let path = self.require(CORPUS)?;
        Ok(read_corpus(BufReader::new(File::open(path)?))?)
    }

    /// The stored split, rebuilt from the corpus and the recorded ids.
    pub fn load_split(&self) -> Result<(CorpusSplit, KeyMap), HarnessError> {
        let ids: SplitIds = read_json(&self.require(SPLITS)?)?;
        let keymap: KeyMap = read_json(&self.require(KEYMAP)?)?;
        let corpus = self.corpus()?;
        let by_id: HashMap<&str, &LogKeySequence> = corpus.iter().map(|s| (s.sequence_id(), s)).collect();
        let pick = |names: &[String]| -> Result<Vec<LogKeySequence>, HarnessError> {
            names
                .iter()
                .map(|n| {
                    by_id
                        .get(n.as_str())
                        .map(|s| (*s).clone())
                        .ok_or_else(|| HarnessError::Data(format!("split names unknown sequence `{n}`")))
                })
                .collect()
        };
        let split = CorpusSplit {
            train: pick(&ids.train)?,
            calibration: pick(&ids.calibration)?,
            test: pick(&ids.test)?,
        };
        Ok((split, keymap))
    }

    pub fn train(&mut self) -> Result<TrainReport, HarnessError> {
        match self.cfg.model.precision {
            Precision::F32 => self.train_as::<f32>(),
            Precision::F64 => self.train_as::<f64>(),
        }
    }

    fn train_as<F: Scalar>(&mut self) -> Result<TrainReport, HarnessError> {
        let started = Instant::now();
        let corpus = self.corpus()?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = corpus.iter().find(|s| !seen.insert(s.sequence_id())) {
            return Err(HarnessError::Data(format!("duplicate sequence id `{}`", dup.sequence_id())));
        }
        let split = split_corpus(&corpus, &self.cfg.split, self.cfg.split_seed())?;
        let keymap = KeyMap::from_sequences(&split.train);
        write_json(&self.path(SPLITS), &split.ids())?;
        write_json(&self.path(KEYMAP), &keymap)?;

        let config = self
            .cfg
            .model
            .model_config(keymap.corpus_keys.len(), self.cfg.preprocess.max_context);
        let mut model = LanguageModel::<F>::new(config, self.cfg.model_seed())?;
        let train_set: Vec<LogKeySequence> = split.train.iter().map(|s| keymap.to_model(s)).collect();
        let train_cfg = TrainConfig {
            seed: self.cfg.train_seed(),
            ..self.cfg.train.clone()
        };
        let report = train(&mut model, &train_set, &train_cfg)?;
        checkpoint::save(&model, BufWriter::new(File::create(self.path(MODEL))?))?;
        write_json(&self.path(TRAIN_REPORT), &report)?;

        let stats = &mut self.manifest.corpus;
        stats.model_key_count = keymap.corpus_keys.len();
        stats.train_sequences = split.train.len();
        stats.calibration_sequences = split.calibration.len();
        stats.test_sequences = split.test.len();
        self.record("train", StageStatus::Done, started, &[SPLITS, KEYMAP, MODEL, TRAIN_REPORT])?;
        Ok(report)
    }

    fn load_model<F: Scalar>(&self, name: &str) -> Result<LanguageModel<F>, HarnessError> {
        let path = self.require(name)?;
        Ok(checkpoint::load::<F, _>(BufReader::new(File::open(path)?))?)
    }

    /// RL fine-tuning on the calibration split; a no-op without RL.
    pub fn finetune(&mut self) -> Result<Option<Vec<StepReport>>, HarnessError> {
        if self.cfg.mode == Mode::WithoutRl {
            self.record("finetune", StageStatus::Skipped, Instant::now(), &[])?;
            return Ok(None);
        }
        match self.cfg.model.precision {
            Precision::F32 => self.finetune_as::<f32>().map(Some),
            Precision::F64 => self.finetune_as::<f64>().map(Some),
        }
    }

    fn finetune_as<F: Scalar>(&mut self) -> Result<Vec<StepReport>, HarnessError> {
        let started = Instant::now();
        let mut model = self.load_model::<F>(MODEL)?;
        let (split, keymap) = self.load_split()?;
        let calibration: Vec<LogKeySequence> = split.calibration.iter().map(|s| keymap.to_model(s)).collect();
        let mut dump = if self.cfg.dump_traces {
            Some(BufWriter::new(File::create(self.path(TRACE))?))
        } else {
            None
        };
        let reports = finetune(
            &mut model,
            &calibration,
            &self.cfg.reward,
            self.cfg.finetune_seed(),
            dump.as_mut().map(|w| w as &mut dyn Write),
        )?;
        if let Some(mut w) = dump {
            w.flush()?;
        }
        checkpoint::save(&model, BufWriter::new(File::create(self.path(MODEL_RL))?))?;
        write_json(&self.path(FINETUNE_REPORT), &reports)?;
        let mut artifacts = vec![MODEL_RL, FINETUNE_REPORT];
        if self.cfg.dump_traces {
            artifacts.push(TRACE);
        }
        self.record("finetune", StageStatus::Done, started, &artifacts)?;
        Ok(reports)
    }

    pub fn detect(&mut self) -> Result<Vec<DetectionResult>, HarnessError> {
        match self.cfg.model.precision {
            Precision::F32 => self.detect_as::<f32>(),
            Precision::F64 => self.detect_as::<f64>(),
        }
    }

    fn detect_as<F: Scalar>(&mut self) -> Result<Vec<DetectionResult>, HarnessError> {
        let started = Instant::now();
        let name = match self.cfg.mode {
            Mode::WithRl => MODEL_RL,
            Mode::WithoutRl => MODEL,
        };
        let model = self.load_model::<F>(name)?;
        let (split, keymap) = self.load_split()?;
        let test: Vec<LogKeySequence> = split.test.iter().map(|s| keymap.to_model(s)).collect();
        let results = detect_all(&model, &test, &self.cfg.detect)?;
        let mut w = BufWriter::new(File::create(self.path(DETECTIONS))?);
        for r in &results {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        self.record("detect", StageStatus::Done, started, &[DETECTIONS])?;
        Ok(results)
    }

    pub fn eval(&mut self) -> Result<MetricsReport, HarnessError> {
        let started = Instant::now();
        let path = self.require(DETECTIONS)?;
        let mut results = Vec::new();
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            results.push(
                serde_json::from_str::<DetectionResult>(&line)
                    .map_err(|e| HarnessError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
            );
        }
        let metrics = evaluate(&results)?;
        write_json(&self.path(METRICS), &metrics)?;
        self.record("eval", StageStatus::Done, started, &[METRICS])?;
        Ok(metrics)
    }

    /// Every stage in order, starting from a fresh manifest.
    pub fn run(&mut self) -> Result<MetricsReport, HarnessError> {
        self.manifest = RunManifest::new(&self.cfg);
        if self.cfg.dataset.paths.is_empty() && self.cfg.synth.is_some() {
            self.synth()?;
        }
        self.parse()?;
        self.train()?;
        self.finetune()?;
        self.detect()?;
        self.eval()
    }

    /// Template catalog written by the parse stage.
    pub fn catalog(&self) -> Result<Vec<crate::preprocess::CatalogEntry>, HarnessError> {
        let path = self.require(CATALOG)?;
        Ok(read_catalog(BufReader::new(File::open(path)?))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keymap_is_dense_and_sends_unknowns_to_unk() {
        let train = vec![
            LogKeySequence::normal("a", vec![7, 3, 3]).unwrap(),
            LogKeySequence::normal("b", vec![9]).unwrap(),
        ];
        let map = KeyMap::from_sequences(&train);
        assert_eq!(map.corpus_keys, vec![3, 7, 9]);
        let seq = LogKeySequence::new("t", vec![9, 4, 3], vec![false, true, false]).unwrap();
        assert_eq!(map.to_model(&seq).keys(), &[2, map.vocabulary().unk(), 0]);
    }

    #[test]
    fn label_file_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(&path, "BlockId,Label\nblk_1,Anomaly\nblk_-2,Normal\n").unwrap();
        let labels = read_label_file(&path).unwrap();
        assert_eq!(labels.get("blk_1"), Some(&true));
        assert_eq!(labels.get("blk_-2"), Some(&false));
        assert_eq!(labels.len(), 2);
    }
}
