//! Central finite-difference gradient checks. Uses only forward passes, so
//! it is an oracle independent of the tape's backward rules.

use super::store::{ParamId, ParamStore};
use super::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative error with a small absolute floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn eval<F>(store: &ParamStore, f: &F) -> f64
where
    F: Fn(&mut Tape) -> Var,
{
    let mut tape = Tape::new(store);
    let out = f(&mut tape);
    tape.scalar(out)
}

/// Compares tape gradients of the scalar `f` with central differences for
/// every parameter entry in `store`.
pub fn check_params<F>(store: &ParamStore, f: F, eps: f64) -> GradCheckReport
where
    F: Fn(&mut Tape) -> Var,
{
    let ids: Vec<ParamId> = store.ids().collect();
    check_param_subset(store, &ids, f, eps)
}

pub fn check_param_subset<F>(store: &ParamStore, ids: &[ParamId], f: F, eps: f64) -> GradCheckReport
where
    F: Fn(&mut Tape) -> Var,
{
    let analytic: Vec<_> = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        let grads = tape.backward(out);
        ids.iter()
            .map(|&id| {
                grads
                    .param(id)
                    .cloned()
                    .unwrap_or_else(|| store.value(id).map(|_| 0.0))
            })
            .collect()
    };
    let mut work = store.clone();
    let mut report = GradCheckReport { max_rel_err: 0.0, checked: 0, worst: None };
    for (slot, &id) in ids.iter().enumerate() {
        for (k, &a) in analytic[slot].iter().enumerate() {
            let orig = work.value(id)[k];
            work.value_mut(id)[k] = orig + eps;
            let up = eval(&work, &f);
            work.value_mut(id)[k] = orig - eps;
            let down = eval(&work, &f);
            work.value_mut(id)[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let e = rel_err(a, numeric);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = Some((store.name(id).to_string(), k, a, numeric));
            }
        }
    }
    report
}
