use crate::data::GazeWindow;
use crate::error::{shape_err, Error, Result};
use crate::stats::{mean, pearson, std_pop};
use crate::tensor::Tensor;

/// Number of statistical features for `k` input columns.
pub fn stat_feature_len(k: usize) -> usize {
    4 * k + k * (k - 1) / 2
}

/// Per column: mean, population std, mean |first difference| and mean
/// |second difference|; then the Pearson correlation of every column pair
/// (0 when either column is constant).
pub fn stat_features_matrix(x: &Tensor) -> Result<Vec<f64>> {
    let (t, k) = (x.rows(), x.cols());
    if t < 3 {
        return shape_err(format!(
            "statistical features need at least 3 frames, got {}",
            x.shape_str()
        ));
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|c| (0..t).map(|r| x.get(r, c)).collect()).collect();
    let mut out = Vec::with_capacity(stat_feature_len(k));
    for col in &cols {
        let vel: Vec<f64> = col.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let acc: Vec<f64> = col.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).collect();
        out.extend([mean(col), std_pop(col), mean(&vel), mean(&acc)]);
    }
    for i in 0..k {
        for j in i + 1..k {
            out.push(pearson(&cols[i], &cols[j]).unwrap_or(0.0));
        }
    }
    Ok(out)
}

/// Gaze-only features (39 for six gaze columns), or gaze plus facial
/// activations when `include_face` is set.
pub fn stat_features(window: &GazeWindow, include_face: bool) -> Result<Vec<f64>> {
    if !include_face {
        return stat_features_matrix(&window.input);
    }
    let aux = window
        .aux
        .as_ref()
        .ok_or_else(|| Error::Contract("eyes+face features need facial activations".into()))?;
    if aux.rows() != window.input.rows() {
        return shape_err(format!("face {} vs gaze {}", aux.shape_str(), window.input.shape_str()));
    }
    let (t, kg, kf) = (aux.rows(), window.input.cols(), aux.cols());
    let mut joined = Tensor::zeros(&[t, kg + kf]);
    for r in 0..t {
        joined.row_mut(r)[..kg].copy_from_slice(window.input.row(r));
        joined.row_mut(r)[kg..].copy_from_slice(aux.row(r));
    }
    stat_features_matrix(&joined)
}
