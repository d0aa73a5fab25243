//! Central finite-difference oracle for analytic gradients.

use crate::error::{Error, Result};

/// Outcome of a gradient check: the worst coordinate and its values.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Relative error with a 1e-12 floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `grad(params)` against central differences of `eval` with
/// step `h`. Every perturbed evaluation must stay finite.
pub fn grad_check(
    eval: impl Fn(&[f64]) -> Result<f64>,
    grad: impl Fn(&[f64]) -> Result<Vec<f64>>,
    params: &[f64],
    h: f64,
) -> Result<GradCheckReport> {
    if h <= 0.0 {
        return Err(Error::Config(format!("finite-difference step {h} not > 0")));
    }
    let analytic = grad(params)?;
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradient length {} for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: if params.is_empty() { 0.0 } else { analytic[0] },
        numeric_at_worst: 0.0,
    };
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let up = eval(&p)?;
        p[i] = params[i] - h;
        let down = eval(&p)?;
        p[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss while perturbing coordinate {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    Ok(report)
}
