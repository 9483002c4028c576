//! Central finite-difference gradient checking.

use crate::params::{Grads, ParamStore};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged by absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |analytic_i − numeric_i| / max(|analytic_i|, |numeric_i|, floor)`.
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares `analytic` against `(f(p+εe) − f(p−εe)) / 2ε` for every scalar
/// parameter. Parameters are restored before returning.
pub fn grad_check<F>(params: &mut ParamStore, analytic: &Grads, eps: f64, f: F) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    grad_check_strided(params, analytic, eps, 1, f)
}

/// Like [`grad_check`] but only probes every `stride`-th coordinate of each
/// tensor (always including the first).
pub fn grad_check_strided<F>(
    params: &mut ParamStore,
    analytic: &Grads,
    eps: f64,
    stride: usize,
    f: F,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    grad_check_with_floor(params, analytic, eps, stride, GRAD_CHECK_FLOOR, f)
}

/// Like [`grad_check_strided`] with an explicit denominator floor. Large
/// losses put roundoff of order `|f|·u/ε` on every difference quotient, so
/// gradients below that scale need a larger floor to be judged fairly.
pub fn grad_check_with_floor<F>(
    params: &mut ParamStore,
    analytic: &Grads,
    eps: f64,
    stride: usize,
    floor: f64,
    mut f: F,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let stride = stride.max(1);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let n = params.get(id).len();
        for j in (0..n).step_by(stride) {
            let orig = params.get(id).values()[j];
            params.get_mut(id).values_mut()[j] = orig + eps;
            let plus = f(params);
            params.get_mut(id).values_mut()[j] = orig - eps;
            let minus = f(params);
            params.get_mut(id).values_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id)[j];
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_err || rel.is_nan() {
                report.max_rel_err = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some((params.name(id).to_string(), j));
            }
        }
    }
    report
}
