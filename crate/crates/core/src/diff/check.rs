//! Finite-difference gradient verification.

use alloc::string::String;
use alloc::vec::Vec;

use super::{DiffError, ParamStore, Tape, Value};
use crate::math;
use crate::matrix::Matrix;

/// Outcome of a gradient check: the largest relative error seen and where.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_entry: (usize, usize),
    pub coords_checked: usize,
}

impl GradCheckReport {
    fn observe(&mut self, name: &str, entry: (usize, usize), rel: f64) {
        self.coords_checked += 1;
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst_param = String::from(name);
            self.worst_entry = entry;
        }
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = math::fabs(analytic).max(math::fabs(numeric)).max(1.0);
    math::fabs(analytic - numeric) / denom
}

/// Compare reverse-mode gradients of `f` against central finite differences
/// over every coordinate of every parameter in `store`.
///
/// `f` must be a deterministic scalar function of the store (draw any noise
/// from fixed seeds, or precompute it outside the closure). The relative
/// error uses an absolute floor of 1 in the denominator, so tiny gradients
/// are compared absolutely.
pub fn check_gradients<F>(store: &mut ParamStore, eps: f64, mut f: F) -> Result<GradCheckReport, DiffError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Value, DiffError>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.scalar(loss)?;
    tape.backward(loss)?;
    store.zero_grads();
    tape.apply_grads(store)?;

    let analytic: Vec<(String, Matrix)> = store
        .iter()
        .map(|(name, _)| (String::from(name), store.grad(name).unwrap().clone()))
        .collect();

    let eval = |store: &mut ParamStore, f: &mut F| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store)?;
        tape.scalar(loss)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_entry: (0, 0),
        coords_checked: 0,
    };
    for (name, grads) in &analytic {
        let (rows, cols) = grads.shape();
        for r in 0..rows {
            for c in 0..cols {
                let orig = store.get(name).unwrap().get(r, c);
                store.value_mut(name).unwrap().set(r, c, orig + eps);
                let fp = eval(store, &mut f)?;
                store.value_mut(name).unwrap().set(r, c, orig - eps);
                let fm = eval(store, &mut f)?;
                store.value_mut(name).unwrap().set(r, c, orig);
                let numeric = (fp - fm) / (2.0 * eps);
                report.observe(name, (r, c), relative_error(grads.get(r, c), numeric));
            }
        }
    }
    Ok(report)
}

/// Like [`check_gradients`] but for a single differentiable input matrix
/// rather than named parameters.
pub fn check_input_gradients<F>(input: &Matrix, eps: f64, mut f: F) -> Result<GradCheckReport, DiffError>
where
    F: FnMut(&mut Tape, Value) -> Result<Value, DiffError>,
{
    let mut tape = Tape::new();
    let x = tape.input(input.clone())?;
    let loss = f(&mut tape, x)?;
    tape.scalar(loss)?;
    tape.backward(loss)?;
    let analytic = tape
        .grad(x)
        .cloned()
        .unwrap_or_else(|| Matrix::zeros(input.rows(), input.cols()));

    let eval = |m: &Matrix, f: &mut F| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let x = tape.constant(m.clone())?;
        let loss = f(&mut tape, x)?;
        tape.scalar(loss)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::from("<input>"),
        worst_entry: (0, 0),
        coords_checked: 0,
    };
    let mut probe = input.clone();
    for r in 0..input.rows() {
        for c in 0..input.cols() {
            let orig = probe.get(r, c);
            probe.set(r, c, orig + eps);
            let fp = eval(&probe, &mut f)?;
            probe.set(r, c, orig - eps);
            let fm = eval(&probe, &mut f)?;
            probe.set(r, c, orig);
            let numeric = (fp - fm) / (2.0 * eps);
            report.observe("<input>", (r, c), relative_error(analytic.get(r, c), numeric));
        }
    }
    Ok(report)
}
