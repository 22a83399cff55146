//! Box-constrained feasibility-driven DDP.
//!
//! Gauss–Newton backward pass with control bounds handled by a projected
//! Newton QP, and a forward pass that contracts dynamics gaps by `1 − α`, so
//! infeasible state warm-starts are accepted as given.

mod boxqp;

pub use boxqp::{boxqp, BoxQpOptions, BoxQpSolution};

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::ocp::OCProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Cap on major iterations (accepted or rejected).
    pub max_iter: usize,
    pub cost_tol: f64,
    pub grad_tol: f64,
    /// Dynamics gaps below this count as closed.
    pub feasibility_tol: f64,
    pub reg_init: f64,
    /// Smallest nonzero regularization; decreasing below it resets to zero.
    pub reg_min: f64,
    pub reg_max: f64,
    pub reg_increase: f64,
    pub reg_decrease: f64,
    /// Line search tries `α = 2⁻ⁱ` for `i = 0..=line_search_steps`.
    pub line_search_steps: u32,
    /// Weight of the summed absolute gaps in the merit function.
    pub gap_weight: f64,
    /// Consecutive non-improving iterations tolerated at the cost floor.
    pub stall_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            cost_tol: 1e-6,
            grad_tol: 1e-7,
            feasibility_tol: 1e-9,
            reg_init: 0.0,
            reg_min: 1e-9,
            reg_max: 1e10,
            reg_increase: 10.0,
            reg_decrease: 2.0,
            line_search_steps: 10,
            gap_weight: 1e3,
            stall_iterations: 5,
        }
    }
}

/// Per-step output of the backward pass.
#[derive(Debug, Clone)]
pub struct BackwardPassTerms {
    pub k: Vec<DVector<f64>>,
    pub big_k: Vec<DMatrix<f64>>,
    /// Expected first- and second-order cost change for a full step.
    pub dv: [f64; 2],
    /// Largest free-set control gradient over the horizon.
    pub grad_norm: f64,
}

impl BackwardPassTerms {
    /// Model decrease predicted for step length `alpha`.
    pub fn expected_decrease(&self, alpha: f64) -> f64 {
        -(alpha * self.dv[0] + alpha * alpha * self.dv[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Merit value: the cost plus weighted gaps, equal to the cost once
    /// the trajectory is dynamically feasible.
    pub cost: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    #[serde(with = "crate::serde_vecs")]
    pub xs: Vec<DVector<f64>>,
    #[serde(with = "crate::serde_vecs")]
    pub us: Vec<DVector<f64>>,
    pub cost: f64,
    pub cost_trace: Vec<TracePoint>,
    /// Accepted iterations.
    pub iterations: usize,
    pub converged: bool,
    pub failure_reason: Option<String>,
    pub max_gap: f64,
    pub elapsed: f64,
}

/// Linearization of dynamics and cost along a trajectory.
struct Approximation {
    fx: Vec<DMatrix<f64>>,
    fu: Vec<DMatrix<f64>>,
    lx: Vec<DVector<f64>>,
    lu: Vec<DVector<f64>>,
    lxx: Vec<DMatrix<f64>>,
    luu: Vec<DMatrix<f64>>,
    lux: Vec<DMatrix<f64>>,
}

fn approximate(p: &OCProblem, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Approximation {
    let n = us.len();
    let mut a = Approximation {
        fx: Vec::with_capacity(n),
        fu: Vec::with_capacity(n),
        lx: Vec::with_capacity(n + 1),
        lu: Vec::with_capacity(n),
        lxx: Vec::with_capacity(n + 1),
        luu: Vec::with_capacity(n),
        lux: Vec::with_capacity(n),
    };
    for t in 0..n {
        let (fx, fu) = p.model.derivatives(&xs[t], &us[t]);
        let d = p.cost.gauss_newton_derivatives(&xs[t], &us[t], false);
        a.fx.push(fx);
        a.fu.push(fu);
        a.lx.push(d.lx);
        a.lu.push(d.lu);
        a.lxx.push(d.lxx);
        a.luu.push(d.luu);
        a.lux.push(d.lux);
    }
    let d = p.cost.gauss_newton_derivatives(&xs[n], &DVector::zeros(0), true);
    a.lx.push(d.lx);
    a.lxx.push(d.lxx);
    a
}

/// Gaps `f(x_t, u_t) − x_{t+1}`, prefixed with `x0 − x_0`.
pub fn dynamics_gaps(p: &OCProblem, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut gaps = Vec::with_capacity(xs.len());
    gaps.push(&p.x0 - &xs[0]);
    for t in 0..us.len() {
        gaps.push(p.model.step(&xs[t], &us[t]) - &xs[t + 1]);
    }
    gaps
}

fn gap_norm(gaps: &[DVector<f64>]) -> (f64, f64) {
    let l1 = gaps.iter().map(|g| g.lp_norm(1)).sum();
    let max = gaps.iter().map(|g| g.amax()).fold(0.0, f64::max);
    (l1, max)
}

fn backward_pass_with(
    p: &OCProblem,
    us: &[DVector<f64>],
    approx: &Approximation,
    gaps: &[DVector<f64>],
    reg: f64,
    warm_k: Option<&[DVector<f64>]>,
) -> Result<BackwardPassTerms> {
    let n = us.len();
    let (c, m) = (p.control_dim(), p.state_dim());
    let (u_lo, u_hi) = p.model.control_bounds();
    let qp_opts = BoxQpOptions::default();
    let mut k_all = vec![DVector::zeros(c); n];
    let mut kk_all = vec![DMatrix::zeros(c, m); n];
    let mut vx = approx.lx[n].clone();
    let mut vxx = approx.lxx[n].clone();
    let mut dv = [0.0, 0.0];
    let mut grad_norm: f64 = 0.0;

    for t in (0..n).rev() {
        let vx_gap = &vx + &vxx * &gaps[t + 1];
        let fx = &approx.fx[t];
        let fu = &approx.fu[t];
        let fxt_vxx = fx.transpose() * &vxx;
        let fut_vxx = fu.transpose() * &vxx;
        let qx = &approx.lx[t] + fx.transpose() * &vx_gap;
        let qu = &approx.lu[t] + fu.transpose() * &vx_gap;
        let qxx = &approx.lxx[t] + &fxt_vxx * fx;
        let quu = &approx.luu[t] + &fut_vxx * fu;
        let qux = &approx.lux[t] + &fut_vxx * fx;
        let quu_reg = &quu + DMatrix::identity(c, c) * reg;

        let lo = &u_lo - &us[t];
        let hi = &u_hi - &us[t];
        let start = warm_k.map_or_else(|| DVector::zeros(c), |k| k[t].clone());
        let sol = boxqp(&quu_reg, &qu, &lo, &hi, &start, &qp_opts).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite { step: t, reg },
            other => other,
        })?;
        let k = sol.x;
        let mut big_k = DMatrix::zeros(c, m);
        if let Some(chol) = &sol.free_chol {
            let fidx: Vec<usize> = (0..c).filter(|&i| sol.free[i]).collect();
            let qux_f = DMatrix::from_fn(fidx.len(), m, |a, b| qux[(fidx[a], b)]);
            let kf = -chol.solve(&qux_f);
            for (a, &i) in fidx.iter().enumerate() {
                big_k.set_row(i, &kf.row(a));
            }
            let gf = fidx.iter().map(|&i| qu[i].abs()).fold(0.0, f64::max);
            grad_norm = grad_norm.max(gf);
        }

        let kt_quu = big_k.transpose() * &quu;
        vx = &qx + &kt_quu * &k + big_k.transpose() * &qu + qux.transpose() * &k;
        vxx = &qxx + &kt_quu * &big_k + big_k.transpose() * &qux + qux.transpose() * &big_k;
        vxx = (&vxx + vxx.transpose()) * 0.5;
        dv[0] += k.dot(&qu);
        dv[1] += 0.5 * k.dot(&(&quu * &k));
        if !vx.iter().chain(vxx.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("value function at step {t}")));
        }
        k_all[t] = k;
        kk_all[t] = big_k;
    }
    Ok(BackwardPassTerms {
        k: k_all,
        big_k: kk_all,
        dv,
        grad_norm,
    })
}

/// Backward pass around `(xs, us)` with `Q_uu` regularized by `reg·I`.
pub fn backward_pass(p: &OCProblem, xs: &[DVector<f64>], us: &[DVector<f64>], reg: f64) -> Result<BackwardPassTerms> {
    p.check_trajectory(xs, us)?;
    let approx = approximate(p, xs, us);
    let gaps = dynamics_gaps(p, xs, us);
    backward_pass_with(p, us, &approx, &gaps, reg, None)
}

/// Rolls the local policy out with step `alpha`, contracting the gaps of the
/// reference by `1 − alpha`. Returns states, controls and the cost.
pub fn forward_pass(
    p: &OCProblem,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    terms: &BackwardPassTerms,
    alpha: f64,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, f64)> {
    p.check_trajectory(xs, us)?;
    let gaps = dynamics_gaps(p, xs, us);
    let (xn, un) = rollout_policy(p, xs, us, &gaps, terms, alpha)?;
    let cost = p.cost_unchecked(&xn, &un);
    Ok((xn, un, cost))
}

fn rollout_policy(
    p: &OCProblem,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    gaps: &[DVector<f64>],
    terms: &BackwardPassTerms,
    alpha: f64,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let (u_lo, u_hi) = p.model.control_bounds();
    let keep = 1.0 - alpha;
    let mut xn = Vec::with_capacity(xs.len());
    let mut un = Vec::with_capacity(us.len());
    xn.push(&p.x0 - &gaps[0] * keep);
    for t in 0..us.len() {
        let dx = &xn[t] - &xs[t];
        let mut u = &us[t] + &terms.k[t] * alpha + &terms.big_k[t] * dx;
        for i in 0..u.len() {
            u[i] = u[i].max(u_lo[i]).min(u_hi[i]);
        }
        let next = p.model.step(&xn[t], &u) - &gaps[t + 1] * keep;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("rollout state at step {}", t + 1)));
        }
        un.push(u);
        xn.push(next);
    }
    Ok((xn, un))
}

fn clamp_controls(p: &OCProblem, us: &mut [DVector<f64>]) {
    let (lo, hi) = p.model.control_bounds();
    for u in us {
        for i in 0..u.len() {
            u[i] = u[i].max(lo[i]).min(hi[i]);
        }
    }
}

/// Runs Box-FDDP from the given guesses. A missing state guess is replaced
/// by the rollout of the controls; missing controls default to zeros.
pub fn solve(
    p: &OCProblem,
    xs_init: Option<&[DVector<f64>]>,
    us_init: Option<&[DVector<f64>]>,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let clock = Instant::now();
    let n = p.horizon - 1;
    let mut us: Vec<DVector<f64>> = match us_init {
        Some(u) => u.to_vec(),
        None => vec![DVector::zeros(p.control_dim()); n],
    };
    if us.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: us.len(),
        });
    }
    clamp_controls(p, &mut us);
    let mut xs: Vec<DVector<f64>> = match xs_init {
        Some(x) => x.to_vec(),
        None => crate::dynamics::rollout(&p.model, &p.x0, &us),
    };
    p.check_trajectory(&xs, &us)?;
    if xs.iter().chain(&us).any(|v| !v.iter().all(|e| e.is_finite())) {
        return Err(Error::NonFinite("initial guess".into()));
    }

    let mut gaps = dynamics_gaps(p, &xs, &us);
    let mut cost = p.cost_unchecked(&xs, &us);
    let (mut gap_l1, mut max_gap) = gap_norm(&gaps);
    let merit = |cost: f64, l1: f64, max: f64| if max <= opts.feasibility_tol { cost } else { cost + opts.gap_weight * l1 };
    let mut current = merit(cost, gap_l1, max_gap);
    let mut trace = vec![TracePoint {
        iteration: 0,
        cost: current,
        elapsed: clock.elapsed().as_secs_f64(),
    }];
    let mut reg = opts.reg_init;
    let mut accepted = 0;
    let mut converged = false;
    let mut failure: Option<String> = None;
    let mut approx = approximate(p, &xs, &us);
    let mut warm_k: Option<Vec<DVector<f64>>> = None;
    let mut stalls = 0;

    for _ in 0..opts.max_iter {
        let terms = match backward_pass_with(p, &us, &approx, &gaps, reg, warm_k.as_deref()) {
            Ok(t) => t,
            Err(Error::NotPositiveDefinite { .. } | Error::BoxQpNoConvergence(_) | Error::NonFinite(_)) => {
                reg = (reg * opts.reg_increase).max(opts.reg_min);
                if reg > opts.reg_max {
                    failure = Some("regularization exceeded its cap in the backward pass".into());
                    break;
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let feasible = max_gap <= opts.feasibility_tol;
        if feasible && terms.grad_norm < opts.grad_tol {
            converged = true;
            break;
        }

        let mut step = None;
        for i in 0..=opts.line_search_steps {
            let alpha = 0.5f64.powi(i as i32);
            let Ok((xn, un)) = rollout_policy(p, &xs, &us, &gaps, &terms, alpha) else {
                continue;
            };
            let cn = p.cost_unchecked(&xn, &un);
            if !cn.is_finite() {
                continue;
            }
            let gn: Vec<DVector<f64>> = gaps.iter().map(|g| g * (1.0 - alpha)).collect();
            let (l1, mx) = gap_norm(&gn);
            let mn = merit(cn, l1, mx);
            if mn < current {
                step = Some((xn, un, cn, gn, l1, mx, mn));
                break;
            }
        }

        match step {
            Some((xn, un, cn, gn, l1, mx, mn)) => {
                let was_feasible = feasible;
                let delta = current - mn;
                xs = xn;
                us = un;
                cost = cn;
                gaps = gn;
                gap_l1 = l1;
                max_gap = mx;
                current = mn;
                accepted += 1;
                trace.push(TracePoint {
                    iteration: accepted,
                    cost: current,
                    elapsed: clock.elapsed().as_secs_f64(),
                });
                reg /= opts.reg_decrease;
                if reg < opts.reg_min {
                    reg = 0.0;
                }
                warm_k = Some(terms.k);
                stalls = 0;
                approx = approximate(p, &xs, &us);
                if was_feasible && max_gap <= opts.feasibility_tol && delta < opts.cost_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                if feasible && terms.expected_decrease(1.0) < opts.cost_tol {
                    stalls += 1;
                    if stalls >= opts.stall_iterations {
                        converged = true;
                        break;
                    }
                }
                reg = (reg * opts.reg_increase).max(opts.reg_min);
                if reg > opts.reg_max {
                    failure = Some("regularization exceeded its cap in the line search".into());
                    break;
                }
            }
        }
    }
    if !converged && failure.is_none() {
        failure = Some(format!("iteration cap of {} reached", opts.max_iter));
    }
    let _ = gap_l1;
    Ok(SolverResult {
        xs,
        us,
        cost,
        cost_trace: trace,
        iterations: accepted,
        converged,
        failure_reason: failure,
        max_gap,
        elapsed: clock.elapsed().as_secs_f64(),
    })
}
