use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error over the reliable coordinates.
    pub max_rel_error: f64,
    /// Coordinate where `max_rel_error` occurred.
    pub worst: Option<usize>,
    pub checked: usize,
    /// Coordinates sitting on a kink (one-sided differences disagree) whose
    /// analytic gradient did not match; excluded from `max_rel_error`.
    pub unreliable: Vec<usize>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.unreliable.extend(other.unreliable);
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares `analytic` against central differences of `f` at `x` for the
/// given coordinates (all when `coords` is `None`).
pub fn compare_gradients(
    analytic: &[f64],
    x: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    eps: f64,
    tol: f64,
    coords: Option<&[usize]>,
) -> GradCheckReport {
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let f0 = f(x);
    let mut xp = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        unreliable: Vec::new(),
        tol,
    };
    for &i in coords {
        xp[i] = x[i] + eps;
        let fp = f(&xp);
        xp[i] = x[i] - eps;
        let fm = f(&xp);
        xp[i] = x[i];
        let central = (fp - fm) / (2.0 * eps);
        let err = relative_error(analytic[i], central);
        if err >= tol {
            let fwd = (fp - f0) / eps;
            let bwd = (f0 - fm) / eps;
            if relative_error(fwd, bwd) >= tol {
                report.unreliable.push(i);
                continue;
            }
        }
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some(i);
        }
    }
    report
}

/// Checks the tape gradient of the scalar `f(x)` against central finite
/// differences, in 64-bit.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = f(&mut tape, xv)?;
    tape.backward(y)?;
    let analytic = tape
        .grad(xv)
        .map(|g| g.data.clone())
        .unwrap_or_else(|| vec![0.0; x.numel()]);
    let eval = |data: &[f64]| -> f64 {
        let mut t = Tape::new();
        let v = t.constant(Tensor {
            shape: x.shape,
            data: data.to_vec(),
        });
        match f(&mut t, v) {
            Ok(y) => t.value(y).item(),
            Err(_) => f64::NAN,
        }
    };
    Ok(compare_gradients(&analytic, &x.data, eval, eps, tol, None))
}
