use nalgebra::DVector;

use super::Trajectory;
use crate::error::{Error, Result};

/// Natural cubic spline through vector-valued knots.
#[derive(Clone, Debug)]
pub struct NaturalCubicSpline {
    knots: Vec<f64>,
    values: Vec<DVector<f64>>,
    second: Vec<DVector<f64>>,
}

impl NaturalCubicSpline {
    pub fn new(knots: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        let n = knots.len();
        if n == 0 || n != values.len() {
            return Err(Error::InvalidArgument("spline needs matching, nonempty knots and values".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("spline knots must be strictly increasing".into()));
        }
        let dim = values[0].len();
        let mut second = vec![DVector::zeros(dim); n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![DVector::zeros(dim); m];
            for i in 0..m {
                let h0 = knots[i + 1] - knots[i];
                let h1 = knots[i + 2] - knots[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = ((&values[i + 2] - &values[i + 1]) / h1 - (&values[i + 1] - &values[i]) / h0) * 6.0;
            }
            for i in 1..m {
                let lower = knots[i + 1] - knots[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                let prev = rhs[i - 1].clone();
                rhs[i] -= prev * w;
            }
            let mut sol = vec![DVector::zeros(dim); m];
            sol[m - 1] = &rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (&rhs[i] - &sol[i + 1] * upper[i]) / diag[i];
            }
            for (i, s) in sol.into_iter().enumerate() {
                second[i + 1] = s;
            }
        }
        Ok(Self { knots, values, second })
    }

    /// Evaluates the spline, holding the end values outside the knot range.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let n = self.knots.len();
        if n == 1 || t <= self.knots[0] {
            return self.values[0].clone();
        }
        if t >= self.knots[n - 1] {
            return self.values[n - 1].clone();
        }
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.values[i].clone(),
            Err(i) => i - 1,
        };
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = 1.0 - a;
        &self.values[i] * a
            + &self.values[i + 1] * b
            + (&self.second[i] * (a * a * a - a) + &self.second[i + 1] * (b * b * b - b)) * (h * h / 6.0)
    }
}

/// Cubic resampling onto `new_len` uniformly spaced knots over the same duration.
///
/// Controls are splined over their own knot times (`i * dt`, zero-order-hold
/// starts) and held constant past the last control knot.
pub fn resample(traj: &Trajectory, new_len: usize) -> Result<Trajectory> {
    if new_len < 2 {
        return Err(Error::InvalidArgument(format!("resample length must be >= 2, got {new_len}")));
    }
    if traj.len() < 2 {
        return Err(Error::InvalidArgument("resample needs at least two states".into()));
    }
    let duration = traj.duration();
    let new_dt = duration / (new_len - 1) as f64;
    let knots: Vec<f64> = (0..traj.len()).map(|i| i as f64 * traj.dt).collect();
    let spline = NaturalCubicSpline::new(knots, traj.states.clone())?;

    let mut states: Vec<DVector<f64>> = (0..new_len).map(|j| spline.eval(j as f64 * new_dt)).collect();
    states[0] = traj.states[0].clone();
    states[new_len - 1] = traj.states[traj.len() - 1].clone();

    let control_knots: Vec<f64> = (0..traj.controls.len()).map(|i| i as f64 * traj.dt).collect();
    let control_spline = NaturalCubicSpline::new(control_knots, traj.controls.clone())?;
    let controls = (0..new_len - 1).map(|j| control_spline.eval(j as f64 * new_dt)).collect();

    Ok(Trajectory {
        states,
        controls,
        dt: new_dt,
        meta: traj.meta.clone(),
    })
}
