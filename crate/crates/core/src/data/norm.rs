use crate::data::gaze::{GazeSequence, NormStats, GAZE_DIMS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-dimension mean and population standard deviation over the valid
/// frames of `seqs`.
pub fn compute_norm_stats<'a>(seqs: impl IntoIterator<Item = &'a GazeSequence>) -> Result<NormStats> {
    let mut n = 0usize;
    let mut sum = [0.0; GAZE_DIMS];
    let mut frames = Vec::new();
    for seq in seqs {
        for f in seq.frames.iter().filter(|f| f.valid) {
            n += 1;
            for (s, g) in sum.iter_mut().zip(f.gaze) {
                *s += g;
            }
            frames.push(f.gaze);
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData("no valid frames for normalization".into()));
    }
    let mean = sum.map(|s| s / n as f64);
    let mut var = [0.0; GAZE_DIMS];
    for g in &frames {
        for d in 0..GAZE_DIMS {
            var[d] += (g[d] - mean[d]).powi(2);
        }
    }
    let mut std = [0.0; GAZE_DIMS];
    let mut clamped = [false; GAZE_DIMS];
    for d in 0..GAZE_DIMS {
        let s = (var[d] / n as f64).sqrt();
        clamped[d] = s < NormStats::EPS;
        std[d] = if clamped[d] { NormStats::EPS } else { s };
    }
    Ok(NormStats { mean, std, clamped })
}

impl NormStats {
    pub fn apply(&self, g: &[f64; GAZE_DIMS]) -> [f64; GAZE_DIMS] {
        std::array::from_fn(|d| (g[d] - self.mean[d]) / self.std[d])
    }

    pub fn invert(&self, g: &[f64; GAZE_DIMS]) -> [f64; GAZE_DIMS] {
        std::array::from_fn(|d| g[d] * self.std[d] + self.mean[d])
    }

    /// Maps a normalized `n × 6` matrix back to raw gaze units.
    pub fn invert_matrix(&self, m: &Tensor) -> Tensor {
        let mut out = m.as_matrix();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let d = i % GAZE_DIMS;
            *v = *v * self.std[d] + self.mean[d];
        }
        out
    }
}

/// Z-scores the valid frames of `seq`; invalid frames are left untouched.
pub fn normalize(seq: &GazeSequence, stats: &NormStats) -> GazeSequence {
    let mut out = seq.clone();
    for f in out.frames.iter_mut().filter(|f| f.valid) {
        f.gaze = stats.apply(&f.gaze);
    }
    out.norm_stats = Some(stats.clone());
    out
}

/// Inverse of [`normalize`] using the statistics stored on the sequence.
pub fn denormalize(seq: &GazeSequence) -> GazeSequence {
    let mut out = seq.clone();
    if let Some(stats) = out.norm_stats.take() {
        for f in out.frames.iter_mut().filter(|f| f.valid) {
            f.gaze = stats.invert(&f.gaze);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[[f64; 6]]) -> GazeSequence {
        GazeSequence::from_samples("s", 30.0, values.iter().map(|g| (*g, true, None))).unwrap()
    }

    #[test]
    fn constant_sequence_clamps() {
        let s = seq(&[[0.3; 6]; 5]);
        let stats = compute_norm_stats([&s]).unwrap();
        assert!(stats.mean.iter().all(|m| (m - 0.3).abs() < 1e-15));
        assert_eq!(stats.clamped, [true; 6]);
        let n = normalize(&s, &stats);
        assert!(n.frames.iter().all(|f| f.gaze.iter().all(|v| v.abs() < 1e-6)));
    }

    #[test]
    fn plus_minus_one_is_unit() {
        let s = seq(&[[-1.0; 6], [1.0; 6]]);
        let stats = compute_norm_stats([&s]).unwrap();
        assert_eq!(stats.mean, [0.0; 6]);
        assert_eq!(stats.std, [1.0; 6]);
        assert_eq!(normalize(&s, &stats).frames[1].gaze, [1.0; 6]);
    }

    #[test]
    fn invalid_frames_untouched_and_excluded() {
        let mut s = seq(&[[-1.0; 6], [1.0; 6], [7.0; 6]]);
        s.frames[2].valid = false;
        let stats = compute_norm_stats([&s]).unwrap();
        assert_eq!(stats.mean, [0.0; 6]);
        assert_eq!(normalize(&s, &stats).frames[2].gaze, [7.0; 6]);
    }

    #[test]
    fn round_trip() {
        let s = seq(&[
            [0.1, 0.2, -0.9, 0.15, 0.22, -0.95],
            [0.05, -0.1, -0.99, 0.07, -0.12, -0.98],
        ]);
        let stats = compute_norm_stats([&s]).unwrap();
        let back = denormalize(&normalize(&s, &stats));
        for (a, b) in back.frames.iter().zip(&s.frames) {
            for d in 0..6 {
                assert!((a.gaze[d] - b.gaze[d]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn no_valid_frames_is_error() {
        let mut s = seq(&[[0.0; 6]]);
        s.frames[0].valid = false;
        assert!(matches!(compute_norm_stats([&s]), Err(Error::InsufficientData(_))));
    }
}
