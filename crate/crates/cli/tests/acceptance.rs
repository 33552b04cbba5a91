//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always shown; exits non-zero when any
//! criterion fails.
//!
//! Set `GLASS_FULL_GRADCHECK=1` to finite-difference every coordinate in
//! criterion 1 instead of a fixed sample per tensor (several minutes).
//! Set `GLASS_ACCEPTANCE=1,2,6` to run a subset of the criteria.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use glass::autodiff::Graph;
use glass::data::{
    label_windows, normalize, synth_corpus, tail_indices, upsample_tail, Behavior, GazeSequence, Split, SynthConfig,
    SynthRecording, VadLabel, WindowSpec,
};
use glass::emotion::{macro_f1, run_finetune, vad_metrics, FinetuneConfig};
use glass::gradcheck::{grad_check, Evaluation, GradCheckOptions};
use glass::kernels::huber;
use glass::model::{patchify, unpatchify, Glass, GlassConfig};
use glass::pretrain::{
    joint_loss_graph, kink_signature, lr_at, prepare_windows, run_pretraining, tf_probability, LossConfig, OptimConfig,
    PretrainConfig, PretrainData, PretrainOutcome, SamplingSchedule,
};
use glass::report::svg::scatter_plot;
use glass::report::{correlate_report, Metric, MetricsReport};
use glass::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeds averaged by the ordering criteria.
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Finite-difference coordinates per tensor in criterion 1.
const SAMPLE: usize = 256;
/// Corpus seed of the standard synthetic corpus.
const CORPUS_SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

/// The standard corpus: 16 training and 3 validation subjects.
fn standard_corpus() -> Vec<(SynthRecording, Split)> {
    synth_corpus(&SynthConfig::default(), 16, 3, CORPUS_SEED).unwrap()
}

fn split(corpus: &[(SynthRecording, Split)], which: Split) -> Vec<GazeSequence> {
    corpus
        .iter()
        .filter(|(_, s)| *s == which)
        .map(|(r, _)| r.sequence.clone())
        .collect()
}

fn windows(corpus: &[(SynthRecording, Split)], output_frames: usize) -> PretrainData {
    let spec = WindowSpec {
        input_frames: 150,
        output_frames,
        stride: 151,
    };
    prepare_windows(&split(corpus, Split::Train), &split(corpus, Split::Val), &spec).unwrap()
}

fn c1_gradients() -> Outcome {
    let full = std::env::var_os("GLASS_FULL_GRADCHECK").is_some();
    let corpus = synth_corpus(&SynthConfig::default(), 1, 1, CORPUS_SEED).unwrap();
    let data = windows(&corpus, 150);
    let w = &data.train[0];
    let target = w.target.as_ref().unwrap();
    let loss_cfg = LossConfig::default();
    let model = RefCell::new(Glass::new(GlassConfig::small(), 5).unwrap());
    let tf_prob = 0.5;

    // Every evaluation replays the same teacher-forcing draws.
    let loss_of = |m: &Glass| -> glass::Result<(f64, Tensor)> {
        let mut g = Graph::with_params(m.store());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pred = m.forward_graph(&mut g, &w.input, Some(target), tf_prob, &mut rng)?;
        let loss = joint_loss_graph(&mut g, pred, target, &loss_cfg)?;
        Ok((g.value(loss).item(), g.value(pred).clone()))
    };
    let grads = {
        let m = model.borrow();
        let mut g = Graph::with_params(m.store());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pred = m
            .forward_graph(&mut g, &w.input, Some(target), tf_prob, &mut rng)
            .unwrap();
        let loss = joint_loss_graph(&mut g, pred, target, &loss_cfg).unwrap();
        g.backward(loss).unwrap()
    };
    let ids: Vec<_> = model.borrow().store().ids().collect();
    let opts = GradCheckOptions {
        step: 1e-4,
        tol: 1e-4,
        ..GradCheckOptions::default()
    };
    let (mut checked, mut excluded, mut worst) = (0usize, 0usize, (0.0f64, String::new()));
    for id in ids {
        let name = model.borrow().store().get(id).name.clone();
        let x = model.borrow().store().value(id).data().to_vec();
        let analytic = match grads.param(id) {
            Some(t) => t.data().to_vec(),
            None => return outcome(false, format!("no gradient for `{name}`")),
        };
        let coords: Vec<usize> = if full || x.len() <= SAMPLE {
            (0..x.len()).collect()
        } else {
            let argmax = (0..x.len())
                .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
                .unwrap();
            let mut c: Vec<usize> = (0..SAMPLE - 1).map(|k| k * x.len() / (SAMPLE - 1)).collect();
            c.push(argmax);
            c
        };
        let f = |v: &[f64]| -> glass::Result<Evaluation> {
            let mut m = model.borrow_mut();
            m.store_mut().get_mut(id).value.data_mut().copy_from_slice(v);
            let (value, pred) = loss_of(&m)?;
            Ok(Evaluation {
                value,
                kink_signature: kink_signature(&pred, target, &loss_cfg),
            })
        };
        let report = grad_check(f, &x, &analytic, &coords, opts).unwrap();
        model
            .borrow_mut()
            .store_mut()
            .get_mut(id)
            .value
            .data_mut()
            .copy_from_slice(&x);
        checked += report.checked.len();
        excluded += report.excluded.len();
        if report.max_rel_error >= worst.0 {
            worst = (report.max_rel_error, name);
        }
    }
    let n = model.borrow().store().len();
    outcome(
        worst.0 < 1e-4,
        format!(
            "{n} tensors, {checked} coordinates{} ({excluded} on Huber kinks), max rel error {:.2e} in `{}`",
            if full { "" } else { " sampled" },
            worst.0,
            worst.1
        ),
    )
}

fn rotate(x: &[f64], pos: usize) -> Vec<f64> {
    let mut g = Graph::new();
    let v = g.constant(Tensor::matrix(1, x.len(), x.to_vec()).unwrap());
    let r = g.rope(v, x.len(), &[pos], 10_000.0).unwrap();
    g.value(r).data().to_vec()
}

fn c2_algebra() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    check(huber(0.5, 1.0) == 0.125, "huber(0.5)");
    check(huber(2.0, 1.0) == 1.5, "huber(2)");
    let s = SamplingSchedule::default();
    check(tf_probability(0.0, &s) == 1.0, "tf(0)");
    check((tf_probability(0.3, &s) - 0.5).abs() < 1e-15, "tf(0.3)");
    check(tf_probability(0.6, &s) == 0.0, "tf(0.6)");
    let o = OptimConfig::default();
    check(lr_at(o.warmup_steps, &o) == 3e-4, "lr at warmup");
    check(lr_at(o.total_steps, &o) == 0.0, "lr at total");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for _ in 0..50 {
        let q: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (m, n, shift) = (rng.gen_range(0..40), rng.gen_range(0..40), rng.gen_range(0..40));
        let a = dot(&rotate(&q, m), &rotate(&k, n));
        let b = dot(&rotate(&q, m + shift), &rotate(&k, n + shift));
        check((a - b).abs() < 1e-6, "rope relative position");
        check(
            (dot(&rotate(&q, m), &rotate(&q, m)) - dot(&q, &q)).abs() < 1e-6,
            "rope norm",
        );
    }
    let x = Tensor::matrix(150, 6, (0..900).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    check(
        unpatchify(&patchify(&x, 15).unwrap(), 6).unwrap() == x,
        "patch round trip",
    );
    check((2..=150).filter(|p| 150 % p == 0).all(|p| 151 % p == 1), "151 mod P");
    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "all identities hold".to_string()
        } else {
            failures.join(", ")
        },
    )
}

fn c3_overfit() -> Outcome {
    let corpus = synth_corpus(&SynthConfig::default(), 1, 1, CORPUS_SEED).unwrap();
    let full = windows(&corpus, 150);
    let data = PretrainData {
        train: full.train[..10].to_vec(),
        val: full.val[..2].to_vec(),
        norm: full.norm,
    };
    let cfg = PretrainConfig {
        optim: OptimConfig {
            base_lr: 3e-3,
            warmup_steps: 20,
            weight_decay: 0.0,
            total_steps: 200,
            ..OptimConfig::default()
        },
        batch_size: 10,
        eval_every: 200,
        ..PretrainConfig::default()
    };
    let run = || run_pretraining(&GlassConfig::small(), &data, &cfg, 3).unwrap();
    let (a, b) = (run(), run());
    let first = a.log.step_losses[0];
    let best = a.log.step_losses.iter().copied().fold(f64::INFINITY, f64::min);
    let same = a.log.step_losses == b.log.step_losses
        && a.model
            .store()
            .iter()
            .zip(b.model.store().iter())
            .all(|(x, y)| x.1.value == y.1.value);
    outcome(
        best < 0.1 * first && same,
        format!(
            "loss {first:.4} -> {best:.4} (ratio {:.3}), repeat run {}",
            best / first,
            if same { "identical" } else { "differs" }
        ),
    )
}

/// Pretraining protocol shared by criteria 4 and 5.
fn pretrain_config() -> PretrainConfig {
    PretrainConfig {
        optim: OptimConfig {
            base_lr: 1e-3,
            warmup_steps: 100,
            total_steps: 1000,
            ..OptimConfig::default()
        },
        eval_every: 100,
        ..PretrainConfig::default()
    }
}

fn pretrain(data: &PretrainData, output_frames: usize, seed: u64) -> PretrainOutcome {
    run_pretraining(
        &GlassConfig::small().with_frames(150, output_frames),
        data,
        &pretrain_config(),
        seed,
    )
    .unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn c4_baseline(data: &PretrainData, runs: &[PretrainOutcome], elapsed: Duration) -> Outcome {
    let glass: Vec<f64> = runs
        .iter()
        .map(|r| r.best_val_corr.unwrap_or(f64::NEG_INFINITY))
        .collect();
    let base: Vec<f64> = runs
        .iter()
        .map(|r| r.baseline_corr.unwrap_or(f64::NEG_INFINITY))
        .collect();
    let (g, b) = (mean(&glass), mean(&base));
    outcome(
        g > b && data.train.len() >= 200 && data.val.len() >= 50 && within(elapsed, 1800),
        format!(
            "{} train / {} val windows; GLASS r {g:.4} vs predict-previous {b:.4} (per seed {}) in {:.0}s",
            data.train.len(),
            data.val.len(),
            glass.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn downstream_r(
    corpus: &[(SynthRecording, Split)],
    run: &PretrainOutcome,
    norm: &glass::data::NormStats,
    seed: u64,
) -> f64 {
    let mut dataset = Vec::new();
    for (rec, _) in corpus {
        let seq = normalize(&rec.sequence, norm);
        dataset.extend(label_windows(&seq, &rec.annotations(), 5.0, 1.0).unwrap());
    }
    let out = run_finetune(&run.model, &dataset, &FinetuneConfig::default(), seed).unwrap();
    out.result.pearson_r.unwrap_or(f64::NEG_INFINITY)
}

fn c5_horizon(corpus: &[(SynthRecording, Split)], long: &[PretrainOutcome], long_data: &PretrainData) -> Outcome {
    let short_data = windows(corpus, 60);
    let mut diffs = Vec::new();
    for (&seed, long_run) in SEEDS.iter().zip(long) {
        let short_run = pretrain(&short_data, 60, seed);
        let r2 = downstream_r(corpus, &short_run, &short_data.norm, seed);
        let r5 = downstream_r(corpus, long_run, &long_data.norm, seed);
        diffs.push(r5 - r2);
    }
    let d = mean(&diffs);
    outcome(
        d >= 0.0,
        format!(
            "mean VAD r(5 s) - r(2 s) = {d:+.4} (per seed {})",
            diffs.iter().map(|x| format!("{x:+.3}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn brute_vad(preds: &[[f64; 3]], labels: &[[f64; 3]]) -> (f64, Option<f64>) {
    let n = preds.len() as f64;
    let mut mae = 0.0;
    for (p, l) in preds.iter().zip(labels) {
        mae += ((p[0] - l[0]).abs() + (p[1] - l[1]).abs() + (p[2] - l[2]).abs()) / 3.0;
    }
    let xs: Vec<f64> = preds.iter().flatten().copied().collect();
    let ys: Vec<f64> = labels.iter().flatten().copied().collect();
    let m = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let den = ((m * sxx - sx * sx) * (m * syy - sy * sy)).sqrt();
    let r = (den > 1e-12).then(|| (m * sxy - sx * sy) / den);
    (mae / n, r)
}

fn brute_f1(preds: &[usize], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for c in 0..3 {
        let tp = preds.iter().zip(labels).filter(|(p, l)| **p == c && **l == c).count() as f64;
        let predicted = preds.iter().filter(|p| **p == c).count() as f64;
        let actual = labels.iter().filter(|l| **l == c).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    total / 3.0
}

fn c6_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let preds: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let labels: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let to_vad = |v: &[[f64; 3]]| v.iter().map(|x| VadLabel::from_array(*x).unwrap()).collect::<Vec<_>>();
        let got = vad_metrics(&to_vad(&preds), &to_vad(&labels)).unwrap();
        let (mae, r) = brute_vad(&preds, &labels);
        worst = worst.max((got.mae - mae).abs());
        match (got.pearson_r, r) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => mismatches += 1,
        }

        let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let l: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let to_b = |v: &[usize]| v.iter().map(|&i| Behavior::from_index(i).unwrap()).collect::<Vec<_>>();
        worst = worst.max((macro_f1(&to_b(&p), &to_b(&l)).unwrap() - brute_f1(&p, &l)).abs());
    }
    let reference = vad_metrics(
        &[VadLabel::new(0.5, 0.5, 0.5).unwrap()],
        &[VadLabel::new(0.328, 0.410, 0.388).unwrap()],
    )
    .unwrap();
    let mae_ok = (reference.mae - 0.374 / 3.0).abs() < 1e-12 && format!("{:.5}", reference.mae) == "0.12467";
    let balanced: Vec<Behavior> = (0..30).map(|i| Behavior::ALL[i % 3]).collect();
    let f1 = macro_f1(&[Behavior::Laugh; 30], &balanced).unwrap();
    let f1_ok = (f1 - 1.0 / 6.0).abs() < 1e-15;
    outcome(
        worst < 1e-10 && mismatches == 0 && mae_ok && f1_ok,
        format!(
            "100 instances, max deviation {worst:.1e}, {mismatches} definedness mismatches; MAE {:.5}, macro-F1 {f1:.4}",
            reference.mae
        ),
    )
}

fn c7_upsampling() -> Outcome {
    let center = VadLabel::new(0.5, 0.5, 0.5).unwrap();
    let high = VadLabel::new(0.9, 0.9, 0.9).unwrap();
    let low = VadLabel::new(0.1, 0.1, 0.1).unwrap();
    let samples: Vec<(usize, VadLabel)> = (0..100)
        .map(|i| {
            let label = match i {
                0..=4 => high,
                5..=9 => low,
                _ => center,
            };
            (i, label)
        })
        .collect();
    let labels: Vec<VadLabel> = samples.iter().map(|s| s.1).collect();
    let tail = tail_indices(&labels, 2.0);
    let up = upsample_tail(samples, 2.0, 1.0 / 3.0, 7).unwrap();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, _) in &up.samples {
        *counts.entry(*i).or_default() += 1;
    }
    let tail_out = up.samples.iter().filter(|(i, _)| *i < 10).count();
    let all_kept = (0..100).all(|i| counts.get(&i).is_some_and(|&c| c >= 1));
    let body_once = (10..100).all(|i| counts[&i] == 1);
    let labels_kept = up.samples.iter().all(|(i, l)| *l == labels[*i]);
    outcome(
        tail == (0..10).collect::<Vec<_>>()
            && tail_out == 45
            && up.tail_count == 45
            && all_kept
            && body_once
            && labels_kept,
        format!(
            "{} tail detected, {tail_out} tail of {} after upsampling, every sample kept: {}",
            tail.len(),
            up.samples.len(),
            all_kept && body_once && labels_kept
        ),
    )
}

const TINY_CONFIG: &str = r#"
seed = 3
[data]
manifest = "MANIFEST"
[synth]
train_subjects = 3
val_subjects = 1
[synth.generator]
duration_s = 60.0
[model]
input_seconds = 2.0
output_seconds = 2.0
[pretrain]
batch_size = 8
[pretrain.optim]
total_steps = 12
warmup_steps = 2
[finetune]
input_seconds = 2.0
seeds = [0, 1]
[finetune.train]
batch_size = 8
[finetune.train.optim]
total_steps = 10
warmup_steps = 2
[baseline]
hidden = 8
[baseline.cnn]
channels = 4
hidden = 8
dilations = [1, 2]
"#;

fn cli(args: &[&str]) -> Result<(), String> {
    let mut argv = vec!["glass"];
    argv.extend_from_slice(args);
    match glass_cli::run(argv) {
        0 => Ok(()),
        code => Err(format!("`glass {}` exited with {code}", args.join(" "))),
    }
}

fn pipeline(root: &Path, config: &Path) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let c = config.to_string_lossy().into_owned();
    cli(&["synth", "--config", &c, "--out", &p("synth")])?;
    cli(&["pretrain", "--config", &c, "--out", &p("pretrain")])?;
    cli(&[
        "pretrain",
        "--config",
        &c,
        "--out",
        &p("sweep"),
        "--sweep",
        "output_seconds",
    ])?;
    let mut downstream = Vec::new();
    for v in ["2", "5", "10"] {
        let ckpt = p(&format!("sweep/output_seconds-{v}/model.glass"));
        let out = p(&format!("finetune-{v}"));
        cli(&["finetune", "--config", &c, "--checkpoint", &ckpt, "--out", &out])?;
        downstream.push(format!("{out}/metrics.csv"));
    }
    cli(&["baseline", "--config", &c, "--out", &p("baseline")])?;
    cli(&[
        "eval",
        "--config",
        &c,
        "--checkpoint",
        &p("pretrain/model.glass"),
        "--out",
        &p("eval"),
    ])?;
    let mut report = vec!["report", "--out"];
    let out = p("report");
    report.push(&out);
    let pre = p("sweep/metrics.csv");
    report.extend(["--pretrain", pre.as_str(), "--downstream"]);
    report.extend(downstream.iter().map(String::as_str));
    cli(&report)
}

fn collect(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect(&path, base, out);
        } else {
            out.insert(path.strip_prefix(base).unwrap().to_path_buf(), fs::read(&path).unwrap());
        }
    }
}

fn c8_reproducible() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    // the manifest inputs come from a separate synth run
    let seed_cfg = tmp.path().join("seed.toml");
    fs::write(&seed_cfg, TINY_CONFIG.replace("manifest = \"MANIFEST\"\n", "")).unwrap();
    if let Err(e) = cli(&[
        "synth",
        "--config",
        &seed_cfg.to_string_lossy(),
        "--out",
        &corpus.to_string_lossy(),
    ]) {
        return outcome(false, e);
    }
    let config = tmp.path().join("run.toml");
    let manifest = corpus.join("manifest.csv");
    fs::write(&config, TINY_CONFIG.replace("MANIFEST", &manifest.to_string_lossy())).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for root in [&a, &b] {
        if let Err(e) = pipeline(root, &config) {
            return outcome(false, e);
        }
    }
    let (mut fa, mut fb) = (BTreeMap::new(), BTreeMap::new());
    collect(&a, &a, &mut fa);
    collect(&b, &b, &mut fb);
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let kinds = |ext: &str| fa.keys().filter(|k| k.extension().is_some_and(|e| e == ext)).count();
    outcome(
        differing.is_empty(),
        format!(
            "{} files ({} checkpoints, {} CSVs, {} SVGs) from synth, pretrain, sweep, finetune, baseline, eval, report; {}",
            fa.len(),
            kinds("glass"),
            kinds("csv"),
            kinds("svg"),
            if differing.is_empty() { "all byte-identical".to_string() } else { format!("differ: {}", differing.join(", ")) }
        ),
    )
}

fn c9_report() -> Outcome {
    let mut pre = MetricsReport::default();
    let mut down = MetricsReport::default();
    for k in 0..6u64 {
        let hash = format!("cfg{k}");
        let x = k as f64;
        pre.push(&hash, "pretrain", &hash, Metric::ValGazeCorr, 0.3 + 0.05 * x, 0);
        for seed in 0..2u64 {
            let wobble = 0.002 * seed as f64;
            down.push(&hash, "finetune", &hash, Metric::Mae, 0.3 - 0.02 * x + wobble, seed);
            down.push(
                &hash,
                "finetune",
                &hash,
                Metric::PearsonR,
                0.2 + 0.05 * x * x / 5.0 + wobble,
                seed,
            );
            down.push(
                &hash,
                "finetune",
                &hash,
                Metric::MacroF1,
                0.35 + 0.03 * x.sqrt() - wobble,
                seed,
            );
        }
    }
    let report = correlate_report(&pre.rows, &down.rows).unwrap();
    let svgs: Vec<String> = (0..3)
        .map(|k| {
            scatter_plot(
                "planted",
                "val gaze correlation",
                "metric",
                &report.axis_points(k),
                None,
            )
            .unwrap()
        })
        .collect();
    let all_positive = report.correlations.iter().all(|c| c.is_some_and(|r| r > 0.0));
    let svg_ok = svgs
        .iter()
        .all(|s| s.starts_with("<svg") && s.matches("<circle").count() == 6);
    outcome(
        report.points.len() == 6 && all_positive && svg_ok,
        format!(
            "{} points, correlations {}",
            report.points.len(),
            report
                .correlations
                .iter()
                .map(|c| c.map_or("undefined".into(), |r| format!("{r:.3}")))
                .collect::<Vec<_>>()
                .join(" / ")
        ),
    )
}

fn selected() -> Option<Vec<usize>> {
    let list = std::env::var("GLASS_ACCEPTANCE").ok()?;
    Some(list.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() {
    let only = selected();
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, budget: Option<u64>, f: &dyn Fn() -> Outcome| {
        if !wanted(n) {
            println!("criterion {n} SKIP: {name}");
            return;
        }
        let start = Instant::now();
        let mut o = f();
        let t = start.elapsed();
        if let Some(b) = budget {
            if !within(t, b) {
                o.pass = false;
            }
            o.detail = format!("{}; {:.1}s of {b}s", o.detail, t.as_secs_f64());
        }
        println!(
            "criterion {n} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };
    timed(1, "gradient correctness", Some(300), &c1_gradients);
    timed(2, "exact algebra", Some(10), &c2_algebra);
    timed(3, "overfit", Some(180), &c3_overfit);

    let corpus = standard_corpus();
    let long_data = windows(&corpus, 150);
    let start = Instant::now();
    let long: Vec<PretrainOutcome> = if wanted(4) || wanted(5) {
        SEEDS.iter().map(|&s| pretrain(&long_data, 150, s)).collect()
    } else {
        Vec::new()
    };
    let elapsed = start.elapsed();
    timed(4, "pretraining beats predict-previous", None, &|| {
        c4_baseline(&long_data, &long, elapsed)
    });
    timed(5, "5 s horizon encoder at least as useful as 2 s", None, &|| {
        c5_horizon(&corpus, &long, &long_data)
    });

    timed(6, "metric oracles", None, &c6_metrics);
    timed(7, "upsampling contract", None, &c7_upsampling);
    timed(8, "CLI reproducibility", None, &c8_reproducible);
    timed(9, "correlation report", None, &c9_report);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
