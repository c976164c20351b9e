//! Independent reference values: the absorbed heat kernel, the bridge
//! representation of the surviving density, and the analytic criteria for
//! jumps.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::density::InitialDensity;
use crate::error::{Error, Result};
use crate::rng::{Domain, Streams};
use crate::types::FrontierPath;

fn gauss(t: f64, z: f64) -> f64 {
    (-z * z / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt()
}

/// Density at `y` at time `t` of Brownian motion from `x0` killed at zero.
pub fn reflection_density(t: f64, x0: f64, y: f64) -> Result<f64> {
    if !(t > 0.0 && x0 > 0.0 && y > 0.0) {
        return Err(Error::Input(format!("reflection_density needs t, x0, y > 0, got ({t}, {x0}, {y})")));
    }
    Ok(gauss(t, x0 - y) - gauss(t, x0 + y))
}

/// Monte Carlo estimate of the surviving density at `(t, y)` given the
/// frontier, with its standard error.
///
/// For each sample a start `x` is drawn from the density and a Brownian
/// bridge from `x` to `y + dL(t)` is built on the frontier's time grid up to
/// `t`, where `dL(r) = L(r) - L(0-)`. The sample contributes
/// `g(t, x - y - dL(t))` if the bridge stays above `dL` at every grid time.
pub fn bridge_density(
    t: f64,
    y: f64,
    frontier: &FrontierPath,
    density: &InitialDensity,
    n_samples: usize,
    streams: &Streams,
) -> Result<(f64, f64)> {
    if !(y > 0.0 && t > 0.0) || n_samples < 2 {
        return Err(Error::Input(format!("bridge_density needs t, y > 0 and n_samples >= 2, got ({t}, {y}, {n_samples})")));
    }
    let t_last = *frontier.times.last().ok_or_else(|| Error::Input("empty frontier".into()))?;
    if t > t_last * (1.0 + 1e-12) {
        return Err(Error::Input(format!("frontier ends at {t_last} < t = {t}")));
    }
    let base = frontier.values[0];
    let mut grid: Vec<(f64, f64)> = frontier
        .times
        .iter()
        .zip(&frontier.values)
        .filter(|(s, _)| **s > 0.0 && **s < t * (1.0 - 1e-12))
        .map(|(s, v)| (*s, v - base))
        .collect();
    let shift_t = frontier.step_value(t) - base;
    grid.push((t, shift_t));
    let end = y + shift_t;
    let mass = density.total_mass;

    let contributions: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(Domain::Bridge, i, 0);
            let x = density.quantile(rng.random::<f64>());
            let w = gauss(t, x - end);
            if w == 0.0 || x <= 0.0 {
                return 0.0;
            }
            let mut r = 0.0;
            let mut z = x;
            for &(s, shift) in &grid[..grid.len() - 1] {
                let h = s - r;
                let rem = t - r;
                let mean = z + h * (end - z) / rem;
                let var = h * (rem - h) / rem;
                let n: f64 = rng.sample(StandardNormal);
                z = mean + var.max(0.0).sqrt() * n;
                r = s;
                if z <= shift {
                    return 0.0;
                }
            }
            w * mass
        })
        .collect();
    let n = n_samples as f64;
    let mean = contributions.iter().sum::<f64>() / n;
    let var = contributions.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Mean of the normalised start below `alpha / 2`: the start is known to
/// force a jump.
pub fn blowup_criterion(density: &InitialDensity, alpha: f64) -> bool {
    density.mean() < 0.5 * alpha
}

/// Density bounded by `1/alpha`: the start is known to exclude jumps.
pub fn nojump_criterion(density: &InitialDensity, alpha: f64) -> bool {
    alpha * density.sup() <= 1.0
}
