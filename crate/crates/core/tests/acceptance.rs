//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

mod common;

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use common::{finite_difference_check, run_bandit, toy_f64};
use logkey::detect::{detect_sequence, evaluate, DetectionConfig, DetectionResult, KSpec, MetricsReport};
use logkey::harness::{KeyMap, MarkovProcess, Mode, Pipeline, RunConfig, SplitConfig, SyntheticSpec};
use logkey::lm::{checkpoint, train, LanguageModel, ModelConfig, Precision, TrainConfig, SPECIAL_COUNT};
use logkey::preprocess::{read_corpus, LogKeySequence};
use logkey::rl::{compute_reward, run_episode, surrogate_and_grad, RewardConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

/// The synthetic experiment: 20 keys, 1000 sequences of 50 keys, anomalies
/// at one position per 20 sequences, alternating unseen keys and
/// transition violations.
fn synthetic_config(seed: u64, dir: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        output_dir: dir.to_path_buf(),
        synth: Some(SyntheticSpec {
            key_count: 20,
            sequence_count: 1000,
            sequence_length: 50,
            anomaly_rate: 0.001,
            branching: Some(8),
            ..SyntheticSpec::default()
        }),
        split: SplitConfig {
            train_fraction: 0.5,
            ..SplitConfig::default()
        },
        ..RunConfig::default()
    };
    cfg.model.d_model = 8;
    cfg.model.d_ff = 16;
    cfg.detect.k = KSpec::Fraction(0.5);
    cfg
}

struct SyntheticRun {
    _dir: tempfile::TempDir,
    path: PathBuf,
    metrics: MetricsReport,
    seconds: f64,
}

fn synthetic_run() -> &'static SyntheticRun {
    static RUN: OnceLock<SyntheticRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let mut p = Pipeline::new(synthetic_config(1, dir.path()), false).unwrap();
        let metrics = p.run().unwrap();
        SyntheticRun {
            path: dir.path().to_path_buf(),
            _dir: dir,
            metrics,
            seconds: started.elapsed().as_secs_f64(),
        }
    })
}

fn read_detections(path: &Path) -> Vec<DetectionResult> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    // 13 keys + 3 specials = vocabulary 16; 2 layers, 2 heads, width 32
    let mut cfg = toy_f64(13, 32);
    assert_eq!((cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.vocab_size), (2, 2, 32, 16));
    cfg.init_std = 0.2;
    let model: LanguageModel<f64> = LanguageModel::new(cfg, 21).unwrap();
    let seq = [3usize, 0, 12, 7, 7, 1, 9, 4, 11, 2];
    let (_, grads, _) = model.loss_and_grad(&[&seq]).unwrap();
    let checks = finite_difference_check(&model, &grads, 1e-5, |m| m.nll_loss(&seq).unwrap());
    let worst = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    report(
        1,
        "gradient correctness",
        worst < 1e-4 && checks.len() == model.params().tensors.len() && secs < 60.0,
        format!("{} tensors, max rel err {worst:.2e}, {secs:.1}s", checks.len()),
    );
}

#[test]
fn criterion_2_loss_floor() {
    let started = Instant::now();
    let cyclic: Vec<LogKeySequence> = (0..200)
        .map(|i| LogKeySequence::normal(format!("c{i}"), (0..20).map(|t| (t + i) % 5).collect()).unwrap())
        .collect();
    let cfg = ModelConfig::toy(5 + SPECIAL_COUNT);
    let mut model: LanguageModel<f32> = LanguageModel::new(cfg.clone(), 2).unwrap();
    let train_report = train(
        &mut model,
        &cyclic,
        &TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let final_loss = train_report.final_loss().unwrap();

    let mut uniform: LanguageModel<f64> = LanguageModel::new(cfg.with_precision(Precision::F64), 2).unwrap();
    uniform
        .params_mut()
        .get_mut("head")
        .unwrap()
        .data
        .iter_mut()
        .for_each(|x| *x = 0.0);
    let baseline = uniform.nll_loss(cyclic[0].keys()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    report(
        2,
        "loss floor",
        final_loss < 0.05 && (baseline - 5f64.ln()).abs() <= 1e-9 && secs < 120.0,
        format!(
            "final NLL {final_loss:.5} after 200 epochs, uniform {baseline:.12} vs ln 5 {:.12}, {secs:.1}s",
            5f64.ln()
        ),
    );
}

#[test]
fn criterion_3_synthetic_detection() {
    let run = synthetic_run();
    let truth: HashMap<String, LogKeySequence> =
        read_corpus(BufReader::new(File::open(run.path.join("synthetic_truth.jsonl")).unwrap()))
            .unwrap()
            .into_iter()
            .map(|s| (s.sequence_id().to_string(), s))
            .collect();
    let process: MarkovProcess =
        serde_json::from_reader(File::open(run.path.join("synthetic_process.json")).unwrap()).unwrap();
    let detections = read_detections(&run.path.join("detections.jsonl"));

    // brute-force oracle on the same test sequences
    let oracle: Vec<DetectionResult> = detections
        .iter()
        .map(|d| {
            let s = &truth[&d.sequence_id];
            let flags = process.oracle_flags(s.keys());
            DetectionResult {
                sequence_id: d.sequence_id.clone(),
                predicted_label: !flags.is_empty(),
                flagged_positions: flags,
                true_label: s.sequence_label(),
            }
        })
        .collect();
    let oracle_f1 = evaluate(&oracle).unwrap().f1;

    let (mut unseen, mut unseen_hit) = (0, 0);
    for d in &detections {
        let s = &truth[&d.sequence_id];
        for (t, &k) in s.keys().iter().enumerate() {
            if k >= process.key_count() {
                unseen += 1;
                unseen_hit += d.flagged_positions.contains(&t) as usize;
            }
        }
    }
    let m = &run.metrics;
    report(
        3,
        "synthetic detection",
        m.f1 >= 0.90 && oracle_f1 >= 0.90 && unseen > 0 && unseen_hit == unseen && run.seconds < 600.0,
        format!(
            "F1 {:.4} (P {:.4}, R {:.4}; oracle F1 {oracle_f1:.4}), unseen-key positions flagged {unseen_hit}/{unseen}, {:.1}s",
            m.f1, m.precision, m.recall, run.seconds
        ),
    );
}

#[test]
fn criterion_4_reward_table() {
    let plain = RewardConfig {
        entropy_coef: 0.0,
        ..RewardConfig::default()
    };
    let table = [
        (true, false, 1.0),
        (false, true, 1.0),
        (false, false, -1.0),
    ];
    let mut table_ok = true;
    for &(hit, anomalous, expected) in &table {
        let key = if hit { 2 } else { 5 };
        table_ok &= compute_reward(&[1, 2, 3], key, anomalous, 1.3, &plain) == expected;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut clamp_ok = true;
    let cases = 100_000;
    for _ in 0..cases {
        let lo = rng.random_range(-4.0..1.0);
        let cfg = RewardConfig {
            entropy_coef: rng.random_range(0.0..5.0),
            clip_min: lo,
            clip_max: lo + rng.random_range(1e-3..5.0),
            match_anomalous_reward: rng.random_range(-3.0..3.0),
            ..RewardConfig::default()
        };
        let key = rng.random_range(0..6);
        let r = compute_reward(&[0, 1, 2], key, rng.random(), rng.random_range(0.0..10.0), &cfg);
        clamp_ok &= r >= cfg.clip_min && r <= cfg.clip_max;
    }
    report(
        4,
        "reward table",
        table_ok && clamp_ok,
        format!("rule table exact: {table_ok}; clipped in {cases} random cases: {clamp_ok}"),
    );
}

#[test]
fn criterion_5_reinforce_convergence() {
    let mut reached = Vec::new();
    for seed in 0..10 {
        let run = run_bandit(seed, 200, 8, 0.05);
        reached.push(run.pi_rewarded.iter().position(|&p| p > 0.9));
    }
    let converged = reached.iter().filter(|r| r.is_some()).count();

    let mut cfg = toy_f64(5, 8);
    cfg.init_std = 0.4;
    let model: LanguageModel<f64> = LanguageModel::new(cfg, 13).unwrap();
    let seqs = vec![
        LogKeySequence::normal("a", vec![0, 1, 2, 3, 4, 0, 1, 2]).unwrap(),
        LogKeySequence::new("b", vec![3, 2, 4, 1, 0], vec![false, false, true, false, false]).unwrap(),
    ];
    let reward = RewardConfig {
        k: KSpec::Count(3),
        entropy_coef: 0.2,
        ..RewardConfig::default()
    };
    let traces = run_episode(&model, &seqs, &reward, 8).unwrap();
    let (_, grads) = surrogate_and_grad(&model, &traces, &reward).unwrap();
    let checks = finite_difference_check(&model, &grads, 1e-5, |m| surrogate_and_grad(m, &traces, &reward).unwrap().0);
    let worst = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    report(
        5,
        "REINFORCE convergence",
        converged == 10 && worst < 1e-4,
        format!("pi(rewarded) > 0.9 for {converged}/10 seeds (first update: {reached:?}); surrogate FD max rel err {worst:.2e}"),
    );
}

#[test]
fn criterion_6_ablation_direction() {
    let mut rows = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_config(100 + seed, dir.path());
        cfg.train.epochs /= 2;
        let with_rl = Pipeline::new(cfg.clone(), false).unwrap().run().unwrap().f1;
        let mut without = Pipeline::new(
            RunConfig {
                mode: Mode::WithoutRl,
                ..cfg
            },
            false,
        )
        .unwrap();
        without.detect().unwrap();
        let without_rl = without.eval().unwrap().f1;
        ok &= with_rl >= without_rl - 0.01;
        rows.push(format!("seed {}: {with_rl:.4} vs {without_rl:.4}", 100 + seed));
    }
    report(6, "ablation direction", ok, format!("F1 with / without RL, {}", rows.join("; ")));
}

#[test]
fn criterion_7_metric_identities() {
    let m = MetricsReport::from_counts(2, 1, 1, 0);
    let third = (m.precision - 2.0 / 3.0).abs().max((m.recall - 2.0 / 3.0).abs()).max((m.f1 - 2.0 / 3.0).abs());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (tp, fp, fn_) = (rng.random_range(1..500), rng.random_range(0..500), rng.random_range(0..500));
        let m = MetricsReport::from_counts(tp, fp, fn_, rng.random_range(0..500));
        let harmonic = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
        worst = worst.max((m.f1 - harmonic).abs());
    }
    report(
        7,
        "metric identities",
        third < 1e-15 && worst <= 1e-12,
        format!("(2,1,1) deviation from 2/3: {third:.1e}; harmonic-mean max deviation {worst:.1e} over 1000 triples"),
    );
}

#[test]
fn criterion_8_monotonicity_in_k() {
    let run = synthetic_run();
    let model: LanguageModel<f32> =
        checkpoint::load(BufReader::new(File::open(run.path.join("model.ckpt")).unwrap())).unwrap();
    let keymap: KeyMap = serde_json::from_reader(File::open(run.path.join("keymap.json")).unwrap()).unwrap();
    let mut cfg = synthetic_config(1, &run.path);
    cfg.mode = Mode::WithoutRl;
    let p = Pipeline::new(cfg, false).unwrap();
    let (split, _) = p.load_split().unwrap();
    let ks = [KSpec::Count(1), KSpec::Fraction(0.25), KSpec::Fraction(0.5), KSpec::Fraction(1.0)];
    let mut nested = true;
    let mut violations = 0;
    let mut totals = vec![0usize; ks.len()];
    for seq in &split.test {
        let seq = keymap.to_model(seq);
        let flags: Vec<Vec<usize>> = ks
            .iter()
            .map(|&k| detect_sequence(&model, &seq, &DetectionConfig { k }).unwrap().flagged_positions)
            .collect();
        for (i, f) in flags.iter().enumerate() {
            totals[i] += f.len();
        }
        for w in flags.windows(2) {
            if !w[1].iter().all(|t| w[0].contains(t)) {
                nested = false;
                violations += 1;
            }
        }
    }
    report(
        8,
        "monotonicity in K",
        nested,
        format!(
            "flagged positions for K = 1, 25%, 50%, 100%: {totals:?}; non-nested pairs: {violations} over {} sequences",
            split.test.len()
        ),
    );
}

#[test]
fn criterion_9_determinism() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("run");
    let config = root.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "seed = 5\noutput_dir = {:?}\ndump_traces = true\n\
             [model]\nd_model = 8\nd_ff = 16\n[train]\nepochs = 10\n[split]\ntrain_fraction = 0.5\n\
             [reward]\nepisodes = 3\n\
             [synth]\nkey_count = 12\nsequence_count = 200\nsequence_length = 30\nanomaly_rate = 0.002\n",
            out.display().to_string()
        ),
    )
    .unwrap();
    let artifacts = [
        "manifest.json",
        "model.ckpt",
        "model_rl.ckpt",
        "metrics.json",
        "detections.jsonl",
        "corpus.jsonl",
        "templates.jsonl",
        "splits.json",
        "rl_trace.jsonl",
    ];
    let bin = env!("CARGO_BIN_EXE_logkey");
    let mut runs: Vec<Vec<Vec<u8>>> = Vec::new();
    for _ in 0..2 {
        let status = Command::new(bin)
            .args(["run", "--deterministic", "--config"])
            .arg(&config)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        runs.push(artifacts.iter().map(|a| std::fs::read(out.join(a)).unwrap()).collect());
    }
    let differing: Vec<&str> = artifacts
        .iter()
        .zip(runs[0].iter().zip(&runs[1]))
        .filter(|(_, (a, b))| a != b)
        .map(|(name, _)| *name)
        .collect();
    report(
        9,
        "determinism",
        differing.is_empty(),
        format!("{} artifacts compared byte-for-byte, differing: {differing:?}", artifacts.len()),
    );
}
