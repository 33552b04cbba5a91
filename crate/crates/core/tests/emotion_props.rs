//! Derivative features, chunking, metrics, frozen fine-tuning and the
//! statistical baseline features.

use glass::baselines::{stat_feature_len, stat_features_matrix};
use glass::data::{compute_norm_stats, label_windows, normalize, synth_corpus, Behavior, SynthConfig, VadLabel};
use glass::emotion::{chunk, encoder_features, macro_f1, run_finetune, vad_metrics, ChunkConfig, FinetuneConfig};
use glass::model::{Glass, GlassConfig};
use glass::pretrain::OptimConfig;
use glass::Tensor;
use proptest::prelude::*;

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = Tensor> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| Tensor::matrix(r, c, v).unwrap())
    })
}

fn reversed(x: &Tensor) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..x.rows()).rev().map(|r| x.row(r).to_vec()).collect();
    Tensor::from_rows(&rows).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn chunking_preserves_mass(x in matrix(1..40, 1..5), per_chunk in 1usize..9) {
        let cfg = ChunkConfig { chunk_seconds: per_chunk as f64, patch_rate: 1.0 };
        let c = chunk(&x, &cfg).unwrap();
        let ranges = cfg.ranges(x.rows());
        prop_assert_eq!(c.rows(), ranges.len());
        for col in 0..x.cols() {
            let total: f64 = (0..x.rows()).map(|r| x.get(r, col)).sum();
            let pooled: f64 = ranges.iter().enumerate().map(|(i, r)| c.get(i, col) * r.len() as f64).sum();
            prop_assert!(close(total, pooled, 1e-12));
        }
    }

    #[test]
    fn derivatives_under_time_reversal(x in matrix(3..20, 1..4)) {
        let d = x.cols();
        let f = encoder_features(&x).unwrap();
        let b = encoder_features(&reversed(&x)).unwrap();
        let n = x.rows();
        for r in 0..n {
            for c in 0..d {
                let (fr, br) = (f.row(r), b.row(n - 1 - r));
                prop_assert_eq!(fr[c], br[c]);
                prop_assert!(close(fr[d + c], -br[d + c], 1e-12), "d1 row {}", r);
                prop_assert!(close(fr[2 * d + c], br[2 * d + c], 1e-12), "d2 row {}", r);
            }
        }
    }

    #[test]
    fn metrics_ignore_sample_order(
        pairs in prop::collection::vec((prop::array::uniform3(0.0f64..1.0), prop::array::uniform3(0.0f64..1.0)), 2..30),
        classes in prop::collection::vec((0usize..3, 0usize..3), 1..30),
        rot in 0usize..30,
    ) {
        let preds: Vec<VadLabel> = pairs.iter().map(|p| VadLabel::from_array(p.0).unwrap()).collect();
        let labels: Vec<VadLabel> = pairs.iter().map(|p| VadLabel::from_array(p.1).unwrap()).collect();
        let k = rot % preds.len();
        let (mut p2, mut l2) = (preds.clone(), labels.clone());
        p2.rotate_left(k);
        l2.rotate_left(k);
        p2.reverse();
        l2.reverse();
        let a = vad_metrics(&preds, &labels).unwrap();
        let b = vad_metrics(&p2, &l2).unwrap();
        prop_assert!(close(a.mae, b.mae, 1e-12));
        match (a.pearson_r, b.pearson_r) {
            (Some(x), Some(y)) => prop_assert!(close(x, y, 1e-9)),
            (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
        }

        let bp: Vec<Behavior> = classes.iter().map(|c| Behavior::from_index(c.0).unwrap()).collect();
        let bl: Vec<Behavior> = classes.iter().map(|c| Behavior::from_index(c.1).unwrap()).collect();
        let k = rot % bp.len();
        let (mut bp2, mut bl2) = (bp.clone(), bl.clone());
        bp2.rotate_left(k);
        bl2.rotate_left(k);
        prop_assert_eq!(macro_f1(&bp, &bl).unwrap(), macro_f1(&bp2, &bl2).unwrap());
    }

    #[test]
    fn stat_features_under_time_reversal(x in matrix(3..30, 2..6)) {
        let a = stat_features_matrix(&x).unwrap();
        let b = stat_features_matrix(&reversed(&x)).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-9, "{} vs {}", u, v);
        }
    }

    #[test]
    fn stat_feature_length(rows in 3usize..10, k in 2usize..12) {
        let x = Tensor::matrix(rows, k, (0..rows * k).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let f = stat_features_matrix(&x).unwrap();
        prop_assert_eq!(f.len(), stat_feature_len(k));
        prop_assert_eq!(f.len(), 4 * k + k * (k - 1) / 2);
    }
}

#[test]
fn frozen_finetune_leaves_encoder_bits_and_learns_vad() {
    let synth = SynthConfig {
        duration_s: 120.0,
        regimes: 6,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&synth, 4, 0, 3).unwrap();
    let norm = compute_norm_stats(corpus.iter().map(|(r, _)| &r.sequence)).unwrap();
    let mut dataset = Vec::new();
    for (rec, _) in &corpus {
        dataset.extend(label_windows(&normalize(&rec.sequence, &norm), &rec.annotations(), 5.0, 1.0).unwrap());
    }
    let encoder = Glass::new(GlassConfig::small(), 11).unwrap();
    let mut cfg = FinetuneConfig::default();
    cfg.train.optim = OptimConfig {
        total_steps: 150,
        warmup_steps: 15,
        base_lr: 3e-3,
        ..cfg.train.optim
    };
    let out = run_finetune(&encoder, &dataset, &cfg, 0).unwrap();
    for id in encoder.store().ids() {
        assert_eq!(out.model.glass().store().value(id), encoder.store().value(id));
    }
    let r = out.result.pearson_r.expect("defined correlation");
    assert!(r > 0.0, "held-out VAD correlation {r}");
}
