//! Projected-Newton solver for box-constrained convex quadratic programs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxQpOptions {
    pub max_iter: usize,
    pub min_grad: f64,
    pub min_rel_improve: f64,
    pub step_decrease: f64,
    pub min_step: f64,
    pub armijo: f64,
}

impl Default for BoxQpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            min_grad: 1e-8,
            min_rel_improve: 1e-8,
            step_decrease: 0.6,
            min_step: 1e-22,
            armijo: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    /// `true` where the variable is not held at a bound.
    pub free: Vec<bool>,
    /// Cholesky factor of the Hessian restricted to the free set.
    pub free_chol: Option<Cholesky<f64, Dyn>>,
    pub iterations: usize,
}

fn clamp(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(lo.iter().zip(hi.iter())).map(|(v, (l, h))| v.max(*l).min(*h)))
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    g.dot(x) + 0.5 * x.dot(&(h * x))
}

fn submatrix(h: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| h[(rows[i], cols[j])])
}

fn factor_free(h: &DMatrix<f64>, free: &[bool]) -> Result<Option<Cholesky<f64, Dyn>>> {
    let fidx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    if fidx.is_empty() {
        return Ok(None);
    }
    Cholesky::new(submatrix(h, &fidx, &fidx))
        .map(Some)
        .ok_or(Error::NotPositiveDefinite { step: 0, reg: 0.0 })
}

/// Newton step on the free variables with the others held fixed, as a
/// displacement from `x`.
fn newton_search(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>, free: &[bool]) -> Result<DVector<f64>> {
    let n = x.len();
    let mut search = DVector::zeros(n);
    let Some(chol) = factor_free(h, free)? else {
        return Ok(search);
    };
    let fidx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let cidx: Vec<usize> = (0..n).filter(|&i| !free[i]).collect();
    let mut rhs = DVector::from_iterator(fidx.len(), fidx.iter().map(|&i| g[i]));
    if !cidx.is_empty() {
        let xc = DVector::from_iterator(cidx.len(), cidx.iter().map(|&i| x[i]));
        rhs += submatrix(h, &fidx, &cidx) * xc;
    }
    let newton = chol.solve(&rhs);
    for (k, &i) in fidx.iter().enumerate() {
        search[i] = -newton[k] - x[i];
    }
    Ok(search)
}

fn clamped_set(x: &DVector<f64>, grad: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Vec<bool> {
    (0..x.len())
        .map(|i| (x[i] == lo[i] && grad[i] > 0.0) || (x[i] == hi[i] && grad[i] < 0.0))
        .collect()
}

/// Minimizes `½xᵀHx + gᵀx` subject to `lo ≤ x ≤ hi`, starting from `x0`.
pub fn boxqp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    x0: &DVector<f64>,
    opts: &BoxQpOptions,
) -> Result<BoxQpSolution> {
    let n = g.len();
    if lo.iter().zip(hi.iter()).any(|(l, u)| l > u) {
        return Err(Error::InvalidArgument("box lower bound above upper bound".into()));
    }
    let mut x = clamp(x0, lo, hi);
    let mut value = objective(h, g, &x);
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let grad = g + h * &x;
        let free: Vec<bool> = clamped_set(&x, &grad, lo, hi).iter().map(|c| !c).collect();
        if free.iter().all(|&f| !f) {
            iterations = iter;
            break;
        }
        let gnorm = (0..n).filter(|&i| free[i]).map(|i| grad[i] * grad[i]).sum::<f64>().sqrt();
        if gnorm < opts.min_grad {
            break;
        }
        let mut search = newton_search(h, g, &x, &free)?;
        // Variables resting on a bound that the step would push outward are
        // fixed too; otherwise projection cancels them and the iterates zigzag.
        let mut refined = free.clone();
        loop {
            let outward: Vec<usize> = (0..n)
                .filter(|&i| refined[i] && ((x[i] == lo[i] && search[i] < 0.0) || (x[i] == hi[i] && search[i] > 0.0)))
                .collect();
            if outward.is_empty() {
                break;
            }
            for i in outward {
                refined[i] = false;
            }
            let s = newton_search(h, g, &x, &refined)?;
            if s.dot(&grad) >= 0.0 {
                break;
            }
            search = s;
        }
        let sdotg = search.dot(&grad);
        if sdotg >= 0.0 {
            break;
        }
        // Armijo along the projected path: the predicted decrease uses the
        // displacement after clamping, not the raw search direction.
        let mut step = 1.0;
        let accepted = loop {
            let candidate = clamp(&(&x + &search * step), lo, hi);
            let cand_value = objective(h, g, &candidate);
            let predicted = grad.dot(&(&candidate - &x));
            if predicted < 0.0 && value - cand_value >= -opts.armijo * predicted {
                break Some((candidate, cand_value));
            }
            step *= opts.step_decrease;
            if step < opts.min_step {
                break None;
            }
        };
        // A stalled line search leaves the current feasible iterate as the answer.
        let Some((candidate, cand_value)) = accepted else {
            break;
        };
        let improvement = value - cand_value;
        x = candidate;
        value = cand_value;
        if improvement.abs() < opts.min_rel_improve * value.abs().max(1.0) {
            break;
        }
        if iter + 1 == opts.max_iter {
            return Err(Error::BoxQpNoConvergence(opts.max_iter));
        }
    }
    let grad = g + h * &x;
    let free: Vec<bool> = clamped_set(&x, &grad, lo, hi).iter().map(|c| !c).collect();
    let free_chol = factor_free(h, &free)?;
    Ok(BoxQpSolution {
        x,
        free,
        free_chol,
        iterations,
    })
}
