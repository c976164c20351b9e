//! Frontier increments: the discrete cascade, the physical jump of a
//! continuous CDF, and the Picard iteration over a short horizon.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{Domain, Streams};
use crate::types::{frontier_level, EnsembleState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeResult {
    /// Frontier increment `alpha * absorbed * particle_mass`.
    pub increment: f64,
    pub absorbed: usize,
    pub iterations: usize,
}

/// Smallest fixed point of `x -> alpha * nu((-inf, x])` for the empirical
/// measure `nu` of `positions`, which must be sorted ascending.
///
/// The particle at sorted index `k` is absorbed when
/// `positions[k] <= alpha * k * particle_mass`; ties are absorbed.
pub fn cascade_scan(positions: &[f64], alpha: f64, particle_mass: f64) -> Result<CascadeResult> {
    if positions.windows(2).any(|w| w[1] < w[0] || w[0].is_nan()) {
        return Err(Error::Input("cascade_scan needs positions sorted ascending".into()));
    }
    let k = scan_sorted(positions, alpha, particle_mass);
    Ok(CascadeResult { increment: frontier_level(alpha, k, particle_mass), absorbed: k, iterations: 0 })
}

#[inline]
fn scan_sorted(sorted: &[f64], alpha: f64, particle_mass: f64) -> usize {
    sorted
        .iter()
        .enumerate()
        .find(|(k, &x)| x > frontier_level(alpha, *k, particle_mass))
        .map_or(sorted.len(), |(k, _)| k)
}

/// Same fixed point as [`cascade_scan`], reached by iterating
/// `D_{j+1} = alpha * nu((-inf, D_j])` from `D_0 = alpha * nu((-inf, 0])`.
/// Input order is irrelevant.
pub fn cascade_iterate(positions: &[f64], alpha: f64, particle_mass: f64) -> CascadeResult {
    let count_below = |d: f64| positions.iter().filter(|&&x| x <= d).count();
    let mut k = count_below(0.0);
    let mut iterations = 1;
    loop {
        let next = count_below(frontier_level(alpha, k, particle_mass));
        if next == k {
            break;
        }
        k = next;
        iterations += 1;
    }
    CascadeResult { increment: frontier_level(alpha, k, particle_mass), absorbed: k, iterations }
}

/// Cascade on unsorted values without a full sort: only values below a
/// growing cutoff are sorted. Returns the result together with the indices
/// (into `values`) of the absorbed entries. Equal to [`cascade_scan`] on the
/// sorted input.
pub fn cascade_select(values: &[f64], alpha: f64, particle_mass: f64) -> (CascadeResult, Vec<usize>) {
    let mut cutoff = 0.0_f64;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut cand: Vec<(f64, usize)> =
            values.iter().enumerate().filter(|(_, &x)| x <= cutoff).map(|(i, &x)| (x, i)).collect();
        cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let sorted: Vec<f64> = cand.iter().map(|c| c.0).collect();
        let k = scan_sorted(&sorted, alpha, particle_mass);
        let level = frontier_level(alpha, k, particle_mass);
        // Everything not yet collected lies above `cutoff`; if the level has
        // not reached it, the next particle cannot be absorbed.
        if k < cand.len() || level <= cutoff || cand.len() == values.len() {
            let idx = cand[..k].iter().map(|c| c.1).collect();
            return (CascadeResult { increment: level, absorbed: k, iterations: rounds }, idx);
        }
        cutoff = level.max(2.0 * cutoff);
    }
}

/// Piecewise-linear density on a uniform grid, integrated exactly.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    dx: f64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedCdf {
    /// Builds the CDF of the linear interpolant of `values` on `0, dx, ...`.
    pub fn from_density(dx: f64, values: &[f64]) -> Result<Self> {
        if values.len() < 2 || !(dx > 0.0) {
            return Err(Error::Input("tabulated cdf needs >= 2 values and dx > 0".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Input("tabulated density must be nonnegative (cdf would not be monotone)".into()));
        }
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * dx * (w[0] + w[1]);
            cumulative.push(acc);
        }
        Ok(Self { dx, values: values.to_vec(), cumulative })
    }

    pub fn x_max(&self) -> f64 {
        self.dx * (self.values.len() - 1) as f64
    }

    pub fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.x_max() {
            return self.total();
        }
        let i = ((x / self.dx).floor() as usize).min(self.values.len() - 2);
        let u = x - i as f64 * self.dx;
        let slope = (self.values[i + 1] - self.values[i]) / self.dx;
        self.cumulative[i] + self.values[i] * u + 0.5 * slope * u * u
    }
}

const BISECTIONS: usize = 10;

/// Physical jump `inf{x > 0 : F(x) < x / alpha}` of a CDF on `[0, x_max]`,
/// extended by its value at `x_max` beyond.
///
/// Scans forward at `resolution`. Each scan interval that can contain a point
/// below the line is bisected left-first `BISECTIONS` times, so a crossing is
/// located to `resolution / 2^BISECTIONS` even when `F` is a step function
/// that jumps back above the line inside the interval. Returns 0 when the
/// first point below the line lies in the first refined cell.
pub fn physical_jump_from_cdf<F: Fn(f64) -> f64>(cdf: F, x_max: f64, alpha: f64, resolution: f64) -> Result<f64> {
    if !(resolution > 0.0 && x_max > 0.0) {
        return Err(Error::Input("physical_jump_from_cdf needs resolution > 0 and x_max > 0".into()));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let mut prev_x = 0.0;
    let mut prev_f = cdf(0.0);
    if prev_f.abs() > 0.0 {
        return Err(Error::Input(format!("cdf must vanish at 0, got {prev_f}")));
    }
    let first_cell = resolution / (1u64 << BISECTIONS) as f64;
    let steps = (x_max / resolution).ceil() as usize;
    for j in 1..=steps {
        let x = (j as f64 * resolution).min(x_max);
        let fx = cdf(x);
        if fx < prev_f {
            return Err(Error::Input(format!("cdf is not monotone near x = {x}")));
        }
        if let Some(hit) = first_below(&cdf, alpha, prev_x, prev_f, x, fx, BISECTIONS as u32)? {
            return Ok(if hit <= first_cell * (1.0 + 1e-9) { 0.0 } else { hit });
        }
        prev_x = x;
        prev_f = fx;
    }
    // F is flat at F(x_max) beyond the table; the line x/alpha crosses it at alpha*F(x_max).
    Ok((alpha * prev_f).max(x_max))
}

/// Leftmost cell end in `(a, b]` (cells of width `(b - a) / 2^depth`) at which
/// `F < x / alpha`. Cells with `F(a) >= b / alpha` cannot hold such a point.
fn first_below<F: Fn(f64) -> f64>(cdf: &F, alpha: f64, a: f64, fa: f64, b: f64, fb: f64, depth: u32) -> Result<Option<f64>> {
    if fa >= b / alpha {
        return Ok(None);
    }
    if depth == 0 {
        return Ok((fb < b / alpha).then_some(b));
    }
    let mid = 0.5 * (a + b);
    let fm = cdf(mid);
    if fm < fa || fm > fb {
        return Err(Error::Input(format!("cdf is not monotone near x = {mid}")));
    }
    if let Some(x) = first_below(cdf, alpha, a, fa, mid, fm, depth - 1)? {
        return Ok(Some(x));
    }
    first_below(cdf, alpha, mid, fm, b, fb, depth - 1)
}

/// Frozen Brownian paths over a Picard horizon for every alive particle.
#[derive(Debug, Clone)]
pub struct PicardPaths {
    /// Indices of the alive particles the paths belong to.
    pub indices: Vec<usize>,
    /// `min_s (X_i + B_i(s))` over the inner grid, including `s = 0`.
    pub minima: Vec<f64>,
    /// `X_i + B_i(epsilon)`.
    pub endpoints: Vec<f64>,
}

impl PicardPaths {
    pub fn sample(state: &EnsembleState, epsilon: f64, substeps: usize, streams: &Streams, step: u64) -> Self {
        let sd = (epsilon / substeps as f64).sqrt();
        let indices: Vec<usize> = (0..state.len()).filter(|&i| state.alive[i]).collect();
        let (minima, endpoints): (Vec<f64>, Vec<f64>) = indices
            .par_iter()
            .map(|&i| {
                let mut rng = streams.stream(Domain::Picard, i as u64, step);
                let mut x = state.positions[i];
                let mut lo = x;
                for _ in 0..substeps {
                    let z: f64 = rng.sample(StandardNormal);
                    x += sd * z;
                    lo = lo.min(x);
                }
                (lo, x)
            })
            .unzip();
        Self { indices, minima, endpoints }
    }

    /// Runs `n_iters` Picard iterations `L[n] = alpha * mass * #{min_i <= L[n-1]}`,
    /// `L[0] = 0`. Returns `L[1..=n_iters]`.
    pub fn iterate(&self, alpha: f64, particle_mass: f64, n_iters: usize) -> Vec<f64> {
        let mut sorted = self.minima.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let mut prev = 0.0;
        (0..n_iters)
            .map(|_| {
                let hit = sorted.partition_point(|&m| m <= prev);
                prev = frontier_level(alpha, hit, particle_mass);
                prev
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub iterates: Vec<f64>,
    /// The last two iterates coincide.
    pub converged: bool,
}

/// Picard sequence of frontier candidates over `[t, t + epsilon]` with the
/// Brownian paths frozen on an inner grid of `substeps` points.
pub fn picard_frontier(
    state: &EnsembleState,
    epsilon: f64,
    n_iters: usize,
    substeps: usize,
    streams: &Streams,
    step: u64,
) -> Result<PicardResult> {
    if n_iters == 0 || substeps == 0 || !(epsilon > 0.0) {
        return Err(Error::Input("picard_frontier needs n_iters >= 1, substeps >= 1, epsilon > 0".into()));
    }
    let paths = PicardPaths::sample(state, epsilon, substeps, streams, step);
    let iterates = paths.iterate(state.alpha, state.particle_mass, n_iters);
    let converged = iterates.len() >= 2 && iterates[iterates.len() - 1] == iterates[iterates.len() - 2];
    Ok(PicardResult { iterates, converged })
}
