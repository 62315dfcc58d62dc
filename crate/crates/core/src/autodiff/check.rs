//! Central finite-difference gradient checks.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Denominator floor for [`relative_error`]. Below this magnitude the
/// comparison is effectively absolute, so roundoff in the finite difference
/// (about `eps * |loss| / step`) cannot dominate near-zero gradients.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
    pub passed: bool,
}

fn validate_step(step: f64) -> Result<()> {
    if !(1e-6..=1e-4).contains(&step) {
        return Err(Error::Invalid(format!("finite-difference step {step} outside [1e-6, 1e-4]")));
    }
    Ok(())
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    tape.value(v).item()
}

/// Compares tape gradients of `op` with respect to every element of every
/// input against central differences.
pub fn grad_check<F>(op: F, inputs: &[Tensor], step: f64, tolerance: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    validate_step(step)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = op(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone())).collect();
        let l = op(&mut t, &vs)?;
        scalar_of(&t, l)
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
        passed: true,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[i].shape());
        let analytic = grads.wrt(*v).unwrap_or(&zeros).clone();
        for j in 0..inputs[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic.data()[j], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, j);
            }
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    Ok(report)
}

/// Same check for parameters held in a store. `build` records a forward
/// pass reading its parameters from the store and returns the scalar loss.
/// Only the listed parameters are probed; `stride` > 1 probes every
/// `stride`-th element of each.
pub fn grad_check_params<F>(
    store: &mut ParamStore,
    which: &[ParamId],
    step: f64,
    tolerance: f64,
    stride: usize,
    build: F,
) -> Result<GradCheck>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    validate_step(step)?;
    let mut tape = Tape::new();
    let loss = build(store, &mut tape)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = which
        .iter()
        .map(|&id| {
            grads
                .params()
                .into_iter()
                .find(|(pid, _)| *pid == id)
                .map(|(_, g)| g.clone())
                .unwrap_or_else(|| Tensor::zeros(store.value(id).shape()))
        })
        .collect();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = build(store, &mut t)?;
        scalar_of(&t, l)
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
        passed: true,
    };
    for (i, &id) in which.iter().enumerate() {
        let n = store.value(id).numel();
        for j in (0..n).step_by(stride.max(1)) {
            let orig = store.value(id).data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + step;
            let up = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig - step;
            let down = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic[i].data()[j], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, j);
            }
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    Ok(report)
}
