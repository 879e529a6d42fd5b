//! Finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::{Tensor, TensorError};

pub const FD_STEP: f64 = 1e-6;
const REL_FLOOR: f64 = 1e-3;
const KINK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Elements skipped because the one-sided slopes disagree (a kink, such
    /// as a max-pool tie or a ReLU at zero).
    pub kinks: Vec<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare the tape gradient of a scalar function against central
/// differences. `f` receives a fresh tape and one variable per input and
/// must return a single-element loss.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>]) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let f0 = tape.value(loss).item();
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        kinks: Vec::new(),
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + FD_STEP;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = orig - FD_STEP;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = orig;

            let right = (fp - f0) / FD_STEP;
            let left = (f0 - fm) / FD_STEP;
            if (right - left).abs() > KINK_TOL * right.abs().max(left.abs()).max(REL_FLOOR) {
                report.kinks.push((i, j));
                continue;
            }
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            let a = analytic.map_or(0.0, |g| g.data()[j]);
            report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}
