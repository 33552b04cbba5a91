//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

/// One evaluation of the checked function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Identifies which piece of a piecewise function is active (for example
    /// which Huber residuals are on the linear branch). A coordinate whose
    /// perturbation changes the signature straddles a kink and is excluded.
    pub kink_signature: u64,
}

impl Evaluation {
    pub fn smooth(value: f64) -> Self {
        Self {
            value,
            kink_signature: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Lower bound on the relative-error denominator so coordinates whose
    /// true gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateResult {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: Vec<CoordinateResult>,
    /// Coordinates skipped because `x ± step` crosses a kink.
    pub excluded: Vec<usize>,
    pub max_rel_error: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }

    pub fn worst(&self) -> Option<&CoordinateResult> {
        self.checked.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked.extend(other.checked);
        self.excluded.extend(other.excluded);
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic[i]` against `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for each
/// `i` in `coords`.
pub fn grad_check(
    f: impl Fn(&[f64]) -> Result<Evaluation>,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    if analytic.len() != x.len() {
        return Err(Error::Shape(format!(
            "{} analytic gradients for {} inputs",
            analytic.len(),
            x.len()
        )));
    }
    let eval = |x: &[f64]| -> Result<Evaluation> {
        let e = f(x)?;
        if !e.value.is_finite() {
            return Err(Error::Numeric(format!("function value {}", e.value)));
        }
        Ok(e)
    };
    let base = eval(x)?;
    let mut point = x.to_vec();
    let mut report = GradCheckReport {
        checked: Vec::with_capacity(coords.len()),
        excluded: Vec::new(),
        max_rel_error: 0.0,
        tol: opts.tol,
    };
    for &i in coords {
        let a = analytic[i];
        if !a.is_finite() {
            return Err(Error::Numeric(format!("analytic gradient {a} at coordinate {i}")));
        }
        point[i] = x[i] + opts.step;
        let plus = eval(&point)?;
        point[i] = x[i] - opts.step;
        let minus = eval(&point)?;
        point[i] = x[i];
        if plus.kink_signature != base.kink_signature || minus.kink_signature != base.kink_signature {
            report.excluded.push(i);
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * opts.step);
        let rel = relative_error(a, numeric, opts.floor);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked.push(CoordinateResult {
            index: i,
            analytic: a,
            numeric,
            rel_error: rel,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::huber;

    #[test]
    fn quadratic_is_exact() {
        // f(x) = Σ (i+1)·x_i² + x_0·x_1
        let f = |x: &[f64]| {
            let v = x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum::<f64>() + x[0] * x[1];
            Ok(Evaluation::smooth(v))
        };
        let x = [0.3, -1.2, 2.0, 0.7];
        let grad = [2.0 * 0.3 - 1.2, 4.0 * -1.2 + 0.3, 6.0 * 2.0, 8.0 * 0.7];
        let report = grad_check(f, &x, &grad, &[0, 1, 2, 3], GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
        assert!(report.passed());
    }

    #[test]
    fn huber_kink_is_excluded() {
        let delta = 1.0;
        let f = |x: &[f64]| {
            Ok(Evaluation {
                value: huber(x[0], delta),
                kink_signature: (x[0].abs() > delta) as u64,
            })
        };
        let report = grad_check(f, &[delta], &[1.0], &[0], GradCheckOptions::default()).unwrap();
        assert_eq!(report.excluded, vec![0]);
        assert!(report.checked.is_empty());
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let f = |x: &[f64]| Ok(Evaluation::smooth(1.0 / x[0]));
        assert!(matches!(
            grad_check(f, &[0.0], &[0.0], &[0], GradCheckOptions::default()),
            Err(Error::Numeric(_))
        ));
    }
}
