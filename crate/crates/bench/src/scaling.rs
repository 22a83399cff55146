use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use topowarm::clustering::{extract_num_classes, ClusterConfig, FiltrationSpec};
use topowarm::{Error, Result, Trajectory};

pub const MIN_SAMPLE_TIME: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub trajectories: usize,
    pub knots: usize,
    /// `N (T − 1)`, the number of filtration points.
    pub segments: usize,
    /// Fastest repeated timing of matrix construction plus persistence.
    pub seconds: f64,
    pub classes: usize,
}

/// Resamples to every `T` in `knots`, takes the first `N` trajectories for
/// every `N` in `counts`, and times filtration matrix plus persistence.
/// Each size runs at least `repeats` times and until [`MIN_SAMPLE_TIME`] has
/// been spent on it, so millisecond sizes are not dominated by timer noise.
pub fn scalability_study(
    trajs: &[Trajectory],
    spec: &FiltrationSpec,
    counts: &[usize],
    knots: &[usize],
    repeats: usize,
) -> Result<Vec<ScalePoint>> {
    if let Some(&n) = counts.iter().max() {
        if n > trajs.len() {
            return Err(Error::InvalidArgument(format!("study needs {n} trajectories, dataset has {}", trajs.len())));
        }
    }
    let cfg = ClusterConfig::default();
    let mut out = Vec::new();
    for &t in knots {
        let spec = FiltrationSpec {
            resample: Some(t),
            ..spec.clone()
        };
        for &n in counts {
            let subset = &trajs[..n];
            let mut best = f64::INFINITY;
            let mut classes = 0;
            let (mut runs, mut spent) = (0, Duration::ZERO);
            while runs < repeats.max(1) || spent < MIN_SAMPLE_TIME {
                let clock = Instant::now();
                let m = spec.filtration_matrix(subset)?;
                let diagram = spec.persistence(&m)?;
                let dt = clock.elapsed();
                best = best.min(dt.as_secs_f64());
                classes = extract_num_classes(&diagram, &cfg);
                runs += 1;
                spent += dt;
            }
            out.push(ScalePoint {
                trajectories: n,
                knots: t,
                segments: n * (t - 1),
                seconds: best,
                classes,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub log_coefficient: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log seconds = a + b log segments`.
pub fn fit_power_law(points: &[ScalePoint]) -> Result<PowerLaw> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.segments > 0 && p.seconds > 0.0)
        .map(|p| ((p.segments as f64).ln(), p.seconds.ln()))
        .collect();
    if xy.len() < 2 {
        return Err(Error::InvalidArgument("power-law fit needs two positive points".into()));
    }
    let n = xy.len() as f64;
    let (mx, my) = (xy.iter().map(|p| p.0).sum::<f64>() / n, xy.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all sizes are equal".into()));
    }
    let b = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerLaw {
        exponent: b,
        log_coefficient: my - b * mx,
        r_squared,
    })
}

pub fn write_scaling_csv(path: &Path, points: &[ScalePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for p in points {
        w.serialize(p).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
