//! Central finite-difference checking of tape gradients.

use super::{Gradients, ParamId, ParamStore};
use crate::error::Result;

/// Default perturbation.
pub const FD_STEP: f64 = 1e-6;

/// Denominator floor for [`rel_error`]; below it the comparison is
/// effectively absolute.
pub const REL_FLOOR: f64 = 1e-3;

/// `(f(x+h) - f(x-h)) / 2h`.
pub fn finite_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Worst coordinate found by [`check_params`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares `grads` with central differences of `loss` for every
/// coordinate of every parameter accepted by `select`. A parameter that
/// received no analytic gradient is treated as having a zero gradient.
///
/// `loss` must be a deterministic function of the store.
pub fn check_params(
    store: &mut ParamStore,
    grads: &Gradients,
    mut loss: impl FnMut(&ParamStore) -> Result<f64>,
    select: impl Fn(&str) -> bool,
    max_coords_per_param: Option<usize>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        checked: 0,
        params_checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        if !select(&name) {
            continue;
        }
        report.params_checked += 1;
        let n = store.get(id).len();
        let coords: Vec<usize> = match max_coords_per_param {
            Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = store.get(id).data()[c];
            store.get_mut(id).data_mut()[c] = orig + FD_STEP;
            let plus = loss(store)?;
            store.get_mut(id).data_mut()[c] = orig - FD_STEP;
            let minus = loss(store)?;
            store.get_mut(id).data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.param(id).map(|g| g.data()[c]).unwrap_or(0.0);
            let err = rel_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((name.clone(), c, analytic, numeric));
                }
            }
        }
    }
    Ok(report)
}
