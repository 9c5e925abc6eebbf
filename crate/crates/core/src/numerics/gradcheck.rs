use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Graph, ParamSet, Var};

/// Denominator floor for relative errors, so entries whose true gradient is
/// essentially zero are judged by absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub entries_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences `(f(θ+h) − f(θ−h)) / 2h`, over every entry of every
/// parameter.
pub fn finite_difference_check<T, F>(
    params: &ParamSet<T>,
    step: f64,
    tolerance: f64,
    f: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamSet<T>) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::param("step", format!("step {step} outside [1e-7, 1e-3]")));
    }
    let mut work = params.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, &work)?;
    g.backward(loss, &mut work)?;
    let analytic: Vec<Vec<f64>> = work
        .iter()
        .map(|p| p.grad.data().iter().map(|x| x.as_f64()).collect())
        .collect();

    let eval = |ps: &ParamSet<T>| -> Result<f64> {
        let mut g = Graph::new();
        let loss = f(&mut g, ps)?;
        Ok(g.value(loss).item().as_f64())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        entries_checked: 0,
        tolerance,
    };
    let ids: Vec<_> = work.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for k in 0..work.value(id).len() {
            let orig = work.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = T::lit(orig.as_f64() + step);
            let plus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = T::lit(orig.as_f64() - step);
            let minus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[pi][k], numeric);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.entries_checked == 1 {
                report.max_rel_error = err;
                report.worst_param = work.get(id).name.clone();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}
