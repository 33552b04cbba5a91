//! Subcommand implementations. Each writes its resolved configuration
//! beside its outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use glass::baselines::fit_baseline;
use glass::data::{
    compute_norm_stats, label_windows, load_manifest, normalize, synth_corpus, write_annotations, write_manifest,
    write_openface_csv, GazeSequence, LabeledWindow, ManifestEntry, NormStats, Recording, Split,
};
use glass::emotion::{run_finetune, summarize, write_downstream_csv, DownstreamResult, Summary};
use glass::model::{load_checkpoint, predict_previous, save_checkpoint, Glass};
use glass::pretrain::{baseline_correlation, evaluate_forecast, prepare_windows, run_pretraining, PretrainOutcome};
use glass::report::svg::{line_plot, scatter_plot, Series};
use glass::report::{correlate_report, Metric, MetricRow, MetricsReport, DOWNSTREAM_AXES};
use glass::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SweepAxis};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const CHECKPOINT: &str = "model.glass";
pub const BASELINE_RUN: &str = "predict-previous";

/// Metadata stored next to a checkpoint as `<checkpoint>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub config_hash: String,
    pub seed: u64,
    pub fps: f64,
    pub norm: NormStats,
    pub best_val_corr: Option<f64>,
    pub best_step: usize,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn echo_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    write_text(&out.join(RESOLVED_CONFIG), &cfg.resolved()?)
}

/// Recordings from the manifest, or a synthetic corpus when none is set.
pub fn load_recordings(cfg: &RunConfig) -> Result<Vec<Recording>> {
    match &cfg.data.manifest {
        Some(path) => load_manifest(path, &cfg.columns(), cfg.data.fps),
        None => Ok(synth_corpus(
            &cfg.synth.generator,
            cfg.synth.train_subjects,
            cfg.synth.val_subjects,
            cfg.synth.corpus_seed,
        )?
        .into_iter()
        .map(|(rec, split)| Recording {
            annotations: rec.annotations(),
            sequence: rec.sequence,
            split,
        })
        .collect()),
    }
}

fn split_sequences(recordings: &[Recording], split: Split) -> Vec<GazeSequence> {
    recordings
        .iter()
        .filter(|r| r.split == split)
        .map(|r| r.sequence.clone())
        .collect()
}

fn train_norm(recordings: &[Recording]) -> Result<NormStats> {
    compute_norm_stats(
        recordings
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| &r.sequence),
    )
}

/// Labelled windows over every annotated recording, normalized with `norm`.
fn labeled_dataset(cfg: &RunConfig, recordings: &[Recording], norm: &NormStats) -> Result<Vec<LabeledWindow>> {
    let mut out = Vec::new();
    for r in recordings.iter().filter(|r| !r.annotations.is_empty()) {
        let seq = normalize(&r.sequence, norm);
        out.extend(label_windows(
            &seq,
            &r.annotations,
            cfg.finetune.input_seconds,
            cfg.finetune.stride_seconds,
        )?);
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("no labelled windows in the corpus".into()));
    }
    Ok(out)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = synth_corpus(
        &cfg.synth.generator,
        cfg.synth.train_subjects,
        cfg.synth.val_subjects,
        cfg.synth.corpus_seed,
    )?;
    let mut entries = Vec::new();
    for (rec, split) in &corpus {
        let id = &rec.sequence.subject_id;
        let csv = PathBuf::from(format!("{id}.csv"));
        let ann = PathBuf::from(format!("{id}.annotations.jsonl"));
        write_with(&out.join(&csv), |w| write_openface_csv(&rec.sequence, w))?;
        write_with(&out.join(&ann), |w| write_annotations(&rec.annotations(), w))?;
        entries.push(ManifestEntry {
            csv_path: csv,
            annotation_path: Some(ann),
            subject_id: id.clone(),
            split: *split,
        });
    }
    write_with(&out.join("manifest.csv"), |w| write_manifest(&entries, w))?;
    echo_config(cfg, out)?;
    println!("wrote {} recordings to {}", corpus.len(), out.display());
    Ok(())
}

struct PretrainRun {
    run_id: String,
    hash: String,
    seed: u64,
    outcome: PretrainOutcome,
}

fn pretrain_one(cfg: &RunConfig, recordings: &[Recording], run_id: &str, out: &Path) -> Result<PretrainRun> {
    let spec = cfg.window_spec()?;
    let data = prepare_windows(
        &split_sequences(recordings, Split::Train),
        &split_sequences(recordings, Split::Val),
        &spec,
    )?;
    let outcome = run_pretraining(&cfg.glass_config()?, &data, &cfg.pretrain, cfg.seed)?;
    let hash = cfg.pretrain_hash()?;

    let ckpt = out.join(CHECKPOINT);
    fs::create_dir_all(out)?;
    save_checkpoint(&outcome.model, &ckpt)?;
    let sidecar = Sidecar {
        config_hash: hash.clone(),
        seed: cfg.seed,
        fps: cfg.data.fps,
        norm: data.norm.clone(),
        best_val_corr: outcome.best_val_corr,
        best_step: outcome.best_step,
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Io(e.into()))?;
    write_text(&sidecar_path(&ckpt), &json)?;
    write_with(&out.join("train_log.csv"), |w| outcome.log.write_csv(w))?;

    let run = PretrainRun {
        run_id: run_id.to_string(),
        hash,
        seed: cfg.seed,
        outcome,
    };
    let mut report = run_metrics(&run);
    push_baseline(&mut report, &run);
    write_with(&out.join("metrics.csv"), |w| report.write_csv(w))?;
    let mut series = vec![curve(&run.run_id, &run.outcome)];
    series.extend(baseline_series(&run));
    write_text(
        &out.join("learning_curve.svg"),
        &line_plot("Validation gaze correlation", "step", "pearson r", &series)?,
    )?;
    echo_config(cfg, out)?;
    Ok(run)
}

fn run_metrics(run: &PretrainRun) -> MetricsReport {
    let mut report = MetricsReport::default();
    if let Some(last) = run.outcome.log.rows.last() {
        report.push(
            &run.run_id,
            "pretrain",
            &run.hash,
            Metric::TrainLoss,
            last.train_loss,
            run.seed,
        );
    }
    if let Some(r) = run.outcome.best_val_corr {
        report.push(&run.run_id, "pretrain", &run.hash, Metric::ValGazeCorr, r, run.seed);
    }
    report
}

fn push_baseline(report: &mut MetricsReport, run: &PretrainRun) {
    if let Some(r) = run.outcome.baseline_corr {
        report.push(BASELINE_RUN, "baseline", &run.hash, Metric::ValGazeCorr, r, run.seed);
    }
}

fn curve(name: &str, outcome: &PretrainOutcome) -> Series {
    Series::new(
        name,
        outcome
            .log
            .rows
            .iter()
            .filter_map(|r| r.val_corr.map(|c| (r.step as f64, c)))
            .collect(),
    )
}

fn baseline_series(run: &PretrainRun) -> Option<Series> {
    let r = run.outcome.baseline_corr?;
    let last = run.outcome.log.rows.last()?.step as f64;
    Some(Series::new(BASELINE_RUN, vec![(0.0, r), (last, r)]))
}

pub fn pretrain(cfg: &RunConfig, out: &Path, sweep: Option<SweepAxis>) -> Result<()> {
    let recordings = load_recordings(cfg)?;
    let Some(axis) = sweep else {
        let run = pretrain_one(cfg, &recordings, "pretrain", out)?;
        print_pretrain(&run);
        return Ok(());
    };
    let values = if cfg.sweep.values.is_empty() {
        axis.default_values()
    } else {
        cfg.sweep.values.clone()
    };
    let configs = values
        .iter()
        .map(|v| cfg.with_axis(axis, v))
        .collect::<Result<Vec<_>>>()?;
    let mut combined = MetricsReport::default();
    let mut series = Vec::new();
    let mut reference = None;
    for (value, vcfg) in values.iter().zip(&configs) {
        let run_id = format!("{}-{value}", axis.name());
        let run = pretrain_one(vcfg, &recordings, &run_id, &out.join(&run_id))?;
        print_pretrain(&run);
        combined.extend(run_metrics(&run));
        series.push(curve(&run_id, &run.outcome));
        if vcfg.window_spec()? == cfg.window_spec()? || reference.is_none() {
            reference = Some(run);
        }
    }
    // One predict-previous reference, on the windows of the base setting
    // when it is part of the sweep.
    if let Some(run) = &reference {
        push_baseline(&mut combined, run);
        series.extend(baseline_series(run));
    }
    write_with(&out.join("metrics.csv"), |w| combined.write_csv(w))?;
    write_text(
        &out.join("sweep.svg"),
        &line_plot(&format!("Sweep over {}", axis.name()), "step", "pearson r", &series)?,
    )?;
    echo_config(cfg, out)
}

fn print_pretrain(run: &PretrainRun) {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "{}: val gaze r {} at step {} (predict-previous {}), config {}",
        run.run_id,
        fmt(run.outcome.best_val_corr),
        run.outcome.best_step,
        fmt(run.outcome.baseline_corr),
        run.hash
    );
}

fn load_with_sidecar(checkpoint: &Path) -> Result<(Glass, Sidecar)> {
    let model = load_checkpoint(checkpoint)?;
    let text = fs::read_to_string(sidecar_path(checkpoint))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "checkpoint sidecar {}: {e}",
            sidecar_path(checkpoint).display()
        ))
    })?;
    Ok((model, sidecar))
}

fn downstream_metrics(results: &[DownstreamResult], run_prefix: &str, stage: &str, hash: &str) -> MetricsReport {
    let mut report = MetricsReport::default();
    for r in results {
        let run_id = format!("{run_prefix}-{}-seed{}", r.head, r.seed);
        for (metric, value) in [
            (Metric::Mae, r.mae),
            (Metric::PearsonR, r.pearson_r),
            (Metric::MacroF1, r.macro_f1),
        ] {
            if let Some(v) = value {
                report.push(&run_id, stage, hash, metric, v, r.seed);
            }
        }
    }
    report
}

/// Mean ± std per head and metric, as CSV rows and stdout lines.
fn summaries(results: &[DownstreamResult], out: &Path) -> Result<()> {
    let mut heads: Vec<&str> = results.iter().map(|r| r.head.as_str()).collect();
    heads.dedup();
    let mut csv = String::from("head,metric,mean,std,runs\n");
    for head in heads {
        let rows: Vec<&DownstreamResult> = results.iter().filter(|r| r.head == head).collect();
        let metrics: [(&str, fn(&DownstreamResult) -> Option<f64>); 3] = [
            ("mae", |r| r.mae),
            ("pearson_r", |r| r.pearson_r),
            ("macro_f1", |r| r.macro_f1),
        ];
        for (name, get) in metrics {
            let values: Vec<f64> = rows.iter().filter_map(|r| get(r)).collect();
            if values.is_empty() {
                continue;
            }
            let Summary { mean, std, runs } = summarize(&values)?;
            csv.push_str(&format!("{head},{name},{mean},{std},{runs}\n"));
            println!("{head} {name}: {} over {runs} runs", summarize(&values)?);
        }
    }
    write_text(&out.join("summary.csv"), &csv)
}

pub fn finetune(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let (model, sidecar) = load_with_sidecar(checkpoint)?;
    if sidecar.fps != cfg.data.fps {
        return Err(Error::Config(format!(
            "checkpoint was trained at {} fps, configuration uses {}",
            sidecar.fps, cfg.data.fps
        )));
    }
    let frames = cfg.frames(cfg.finetune.input_seconds);
    if frames != model.config().input_frames {
        return Err(Error::Config(format!(
            "finetune.input_seconds gives {frames} frames; the checkpoint encodes {}",
            model.config().input_frames
        )));
    }
    let recordings = load_recordings(cfg)?;
    let dataset = labeled_dataset(cfg, &recordings, &sidecar.norm)?;
    let ft = cfg.finetune_config();
    let results = cfg
        .finetune
        .seeds
        .iter()
        .map(|&seed| Ok(run_finetune(&model, &dataset, &ft, seed)?.result))
        .collect::<Result<Vec<_>>>()?;
    write_with(&out.join("downstream.csv"), |w| write_downstream_csv(&results, w))?;
    let report = downstream_metrics(&results, cfg.finetune.task.name(), "finetune", &sidecar.config_hash);
    write_with(&out.join("metrics.csv"), |w| report.write_csv(w))?;
    summaries(&results, out)?;
    echo_config(cfg, out)
}

pub fn baseline(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recordings = load_recordings(cfg)?;
    let dataset = labeled_dataset(cfg, &recordings, &train_norm(&recordings)?)?;
    let bcfg = cfg.baseline_config();
    let mut results = Vec::new();
    for &kind in &cfg.baseline.kinds {
        for &seed in &cfg.finetune.seeds {
            results.push(fit_baseline(&dataset, kind, &bcfg, seed)?.result);
        }
    }
    write_with(&out.join("downstream.csv"), |w| write_downstream_csv(&results, w))?;
    let report = downstream_metrics(&results, cfg.finetune.task.name(), "baseline", &cfg.baseline_hash()?);
    write_with(&out.join("metrics.csv"), |w| report.write_csv(w))?;
    summaries(&results, out)?;
    echo_config(cfg, out)
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let (model, sidecar) = load_with_sidecar(checkpoint)?;
    let mc = model.config();
    let spec = glass::data::WindowSpec {
        input_frames: mc.input_frames,
        output_frames: mc.output_frames,
        stride: cfg.model.stride_frames,
    };
    let recordings = load_recordings(cfg)?;
    let val: Vec<GazeSequence> = split_sequences(&recordings, Split::Val)
        .iter()
        .map(|s| normalize(s, &sidecar.norm))
        .collect();
    let mut windows = Vec::new();
    for s in &val {
        windows.extend(glass::data::extract_windows(s, &spec)?);
    }
    if windows.is_empty() {
        return Err(Error::InsufficientData("no validation windows".into()));
    }
    let model_r = evaluate_forecast(&model, &windows)?;
    let base_r = baseline_correlation(&windows)?;
    let mut report = MetricsReport::default();
    if let Some(r) = model_r {
        report.push(
            "glass",
            "eval",
            &sidecar.config_hash,
            Metric::ValGazeCorr,
            r,
            sidecar.seed,
        );
    }
    if let Some(r) = base_r {
        report.push(
            BASELINE_RUN,
            "eval",
            &sidecar.config_hash,
            Metric::ValGazeCorr,
            r,
            sidecar.seed,
        );
    }
    write_with(&out.join("metrics.csv"), |w| report.write_csv(w))?;

    // First validation window, first gaze dimension.
    let w = &windows[0];
    let target = w.target.as_ref().expect("extracted windows carry targets");
    let pred = model.forecast(&w.input)?;
    let prev = predict_previous(&w.input, mc.output_frames)?;
    let col = |t: &glass::tensor::Tensor, offset: usize| -> Vec<(f64, f64)> {
        (0..t.rows()).map(|i| ((offset + i) as f64, t.get(i, 0))).collect()
    };
    let t_in = mc.input_frames;
    let series = [
        Series::new("input", col(&w.input, 0)),
        Series::new("target", col(target, t_in)),
        Series::new("glass", col(&pred, t_in)),
        Series::new(BASELINE_RUN, col(&prev, t_in)),
    ];
    write_text(
        &out.join("forecast.svg"),
        &line_plot(
            &format!("Forecast, {}", w.subject_id),
            "frame",
            "normalized gaze x",
            &series,
        )?,
    )?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "{} windows: glass r {}, predict-previous r {}",
        windows.len(),
        fmt(model_r),
        fmt(base_r)
    );
    echo_config(cfg, out)
}

fn read_metrics(paths: &[PathBuf]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(MetricsReport::parse_csv(File::open(p)?)?.rows);
    }
    Ok(rows)
}

pub fn report(pretrain: &[PathBuf], downstream: &[PathBuf], out: &Path) -> Result<()> {
    let pre: Vec<MetricRow> = read_metrics(pretrain)?
        .into_iter()
        .filter(|r| r.stage == "pretrain")
        .collect();
    let down: Vec<MetricRow> = read_metrics(downstream)?
        .into_iter()
        .filter(|r| r.stage == "finetune")
        .collect();
    let corr = correlate_report(&pre, &down)?;
    write_with(&out.join("correlation_points.csv"), |w| corr.write_points_csv(w))?;
    write_with(&out.join("correlations.csv"), |w| corr.write_correlations_csv(w))?;
    for (k, (_, name)) in DOWNSTREAM_AXES.iter().enumerate() {
        let points = corr.axis_points(k);
        if points.is_empty() {
            continue;
        }
        let note = corr.correlations[k].map(|r| format!("r = {r:.3}, n = {}", points.len()));
        write_text(
            &out.join(format!("scatter_{name}.svg")),
            &scatter_plot(
                &format!("Gaze forecasting vs {name}"),
                "val gaze correlation",
                name,
                &points,
                note.as_deref(),
            )?,
        )?;
        match corr.correlations[k] {
            Some(r) => println!("{name}: r = {r:.4} over {} configurations", points.len()),
            None => println!("{name}: undefined over {} configurations", points.len()),
        }
    }
    Ok(())
}
