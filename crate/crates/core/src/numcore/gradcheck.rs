use serde::Serialize;

use super::Tensor;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Flat index of the worst entry with its analytic and numeric values.
    pub worst: (usize, f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamError>,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn summary(&self) -> String {
        let detail = self
            .per_param
            .iter()
            .find(|p| p.name == self.worst_param)
            .map(|p| format!(" at [{}]: analytic {:.6e} vs numeric {:.6e}", p.worst.0, p.worst.1, p.worst.2))
            .unwrap_or_default();
        format!(
            "{}: max relative error {:.3e} (worst `{}`{detail}, tolerance {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_rel_error,
            self.worst_param,
            self.tolerance
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` gradients against central differences of `loss`.
///
/// `loss` is called with a perturbed copy of `params`; every scalar of
/// every parameter is perturbed once in each direction.
pub fn gradient_check<F>(
    params: &[(String, Tensor)],
    analytic: &[Tensor],
    mut loss: F,
    epsilon: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[(String, Tensor)]) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    if analytic.len() != params.len() {
        return Err(invalid(format!(
            "{} analytic gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut work: Vec<(String, Tensor)> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    for (p, grad) in analytic.iter().enumerate() {
        let name = params[p].0.clone();
        if grad.shape() != params[p].1.shape() {
            return Err(Error::ShapeMismatch {
                op: "gradient_check",
                left: params[p].1.shape().to_vec(),
                right: grad.shape().to_vec(),
            });
        }
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut worst = (0, 0.0, 0.0);
        for i in 0..grad.len() {
            let orig = work[p].1.data()[i];
            work[p].1.data_mut()[i] = orig + epsilon;
            let plus = loss(&work)?;
            work[p].1.data_mut()[i] = orig - epsilon;
            let minus = loss(&work)?;
            work[p].1.data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing `{name}`[{i}]")));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[i];
            let rel = relative_error(a, numeric);
            if rel > max_rel {
                max_rel = rel;
                worst = (i, a, numeric);
            }
            max_abs = max_abs.max((a - numeric).abs());
        }
        per_param.push(ParamError {
            name,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            checked: grad.len(),
            worst,
        });
    }
    let (worst_param, max_rel_error) = per_param
        .iter()
        .fold((String::new(), 0.0_f64), |(n, m), e| {
            if e.max_rel_error > m || n.is_empty() {
                (e.name.clone(), e.max_rel_error.max(m))
            } else {
                (n, m)
            }
        });
    Ok(GradCheckReport {
        per_param,
        max_rel_error,
        worst_param,
        tolerance: tol,
        pass: max_rel_error < tol,
    })
}
