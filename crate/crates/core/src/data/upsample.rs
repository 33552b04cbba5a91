use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::gaze::VadLabel;
use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Upsampled<T> {
    pub samples: Vec<(T, VadLabel)>,
    /// Set when no sample reached the threshold and the input was returned
    /// unchanged.
    pub empty_tail: bool,
    /// Number of tail samples in the output.
    pub tail_count: usize,
}

/// Component-wise mean of a label set (zeros when empty).
pub fn label_mean(labels: &[VadLabel]) -> [f64; 3] {
    let mut mean = [0.0; 3];
    for l in labels {
        for (m, v) in mean.iter_mut().zip(l.to_array()) {
            *m += v;
        }
    }
    mean.map(|m| {
        if labels.is_empty() {
            0.0
        } else {
            m / labels.len() as f64
        }
    })
}

/// Indices of labels whose Euclidean distance from the mean label has a
/// z-score (over the distance distribution, population std) of at least
/// `sd_threshold`.
pub fn tail_indices(labels: &[VadLabel], sd_threshold: f64) -> Vec<usize> {
    if labels.is_empty() {
        return Vec::new();
    }
    let n = labels.len() as f64;
    let mean = label_mean(labels);
    let dist: Vec<f64> = labels
        .iter()
        .map(|l| {
            l.to_array()
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mu = dist.iter().sum::<f64>() / n;
    let sd = (dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    if sd <= 0.0 {
        return Vec::new();
    }
    dist.iter()
        .enumerate()
        .filter(|(_, d)| (*d - mu) / sd >= sd_threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Duplicates tail samples (drawn with replacement) until they make up at
/// least `target_ratio` of the set, then shuffles. Every input sample is
/// kept.
pub fn upsample_tail<T: Clone>(
    samples: Vec<(T, VadLabel)>,
    sd_threshold: f64,
    target_ratio: f64,
    seed: u64,
) -> Result<Upsampled<T>> {
    if samples.len() < 2 {
        return config_err(format!("upsampling needs at least 2 labels, got {}", samples.len()));
    }
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return config_err(format!("target ratio {target_ratio} outside (0, 1)"));
    }
    let labels: Vec<VadLabel> = samples.iter().map(|(_, l)| *l).collect();
    let tail = tail_indices(&labels, sd_threshold);
    if tail.is_empty() {
        return Ok(Upsampled {
            samples,
            empty_tail: true,
            tail_count: 0,
        });
    }
    let body = samples.len() - tail.len();
    // smallest t with t / (t + body) ≥ r
    let needed = (target_ratio * body as f64 / (1.0 - target_ratio) - 1e-9)
        .ceil()
        .max(0.0) as usize;
    let extra = needed.saturating_sub(tail.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples;
    for _ in 0..extra {
        let pick = tail[rng.gen_range(0..tail.len())];
        out.push(out[pick].clone());
    }
    out.shuffle(&mut rng);
    Ok(Upsampled {
        samples: out,
        empty_tail: false,
        tail_count: tail.len() + extra,
    })
}
