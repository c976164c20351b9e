//! Finite-difference solver for the density in the frame moving with the
//! frontier: `p_t = p_xx / 2 + L' p_x` on `(0, x_max)`, `p(t, 0) = 0`.
//!
//! The frontier speed of each step is the root of
//! `v = alpha * (M_old - M_new(v)) / dt`, so the discrete mass identity holds
//! to the root tolerance. Jumps are resolved on the tabulated CDF before a
//! step whenever the boundary value approaches `1/alpha`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Config, PdeOptions};
use crate::diagnostics::{detect_jumps, linear_fit, JumpRule};
use crate::error::{Error, Result};
use crate::frontier::{physical_jump_from_cdf, TabulatedCdf};
use crate::particle::{JumpReport, RunSummary};
use crate::types::{DensitySnapshot, FrontierPath};

/// Trapezoid mass of nodal values on `0, dx, ...`.
pub fn grid_mass(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    dx * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1]))
}

/// One-sided second-order `p_x(0)`: `(-3 p0 + 4 p1 - p2) / (2 dx)`.
pub fn boundary_gradient(values: &[f64], dx: f64) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::Input(format!("boundary_gradient needs 3 grid points, got {}", values.len())));
    }
    Ok((-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dx))
}

/// Cell averages of the initial density at the nodes; node 0 is zero.
/// Returns the values and the mass of the half cell `[0, dx/2]` they leave out.
pub fn initial_grid(config: &Config) -> (Vec<f64>, f64) {
    let dx = config.grid.dx;
    let m = config.grid.intervals();
    let d = &config.density;
    let mut values = vec![0.0; m + 1];
    for (i, v) in values.iter_mut().enumerate().skip(1) {
        let x = i as f64 * dx;
        *v = d.cell_average(x - 0.5 * dx, x + 0.5 * dx);
    }
    let lost = d.total_mass - grid_mass(&values, dx);
    (values, lost.max(0.0))
}

/// Boundary value extrapolated by a line through nodes `1..=10`.
pub fn boundary_intercept(values: &[f64], dx: f64) -> f64 {
    let k = 10.min(values.len().saturating_sub(1));
    if k < 2 {
        return values.get(1).copied().unwrap_or(0.0);
    }
    let xs: Vec<f64> = (1..=k).map(|i| i as f64 * dx).collect();
    linear_fit(&xs, &values[1..=k]).0.max(0.0)
}

/// True when the extrapolated boundary value is within `margin` (relative) of `1/alpha`.
pub fn detect_pde_blowup(values: &[f64], dx: f64, alpha: f64, margin: f64) -> bool {
    alpha > 0.0 && boundary_intercept(values, dx) * alpha >= 1.0 - margin
}

/// Size of the physical jump of the current profile, with the boundary node
/// replaced by its extrapolated value.
pub fn pde_jump_size(values: &[f64], dx: f64, alpha: f64) -> Result<f64> {
    let mut v = values.to_vec();
    v[0] = boundary_intercept(values, dx);
    let cdf = TabulatedCdf::from_density(dx, &v)?;
    physical_jump_from_cdf(|x| cdf.eval(x), cdf.x_max(), alpha, 0.25 * dx)
}

/// Removes the mass in `(0, delta]` and shifts the rest: `p(x) <- p(x + delta)`.
/// Returns the mass removed.
pub fn shift_profile(values: &mut [f64], dx: f64, delta: f64) -> f64 {
    let before = grid_mass(values, dx);
    let old = values.to_vec();
    let n = old.len();
    values[0] = 0.0;
    for (i, v) in values.iter_mut().enumerate().skip(1) {
        let s = (i as f64 * dx + delta) / dx;
        let k = s.floor() as usize;
        *v = if k + 1 < n {
            let w = s - k as f64;
            (1.0 - w) * old[k] + w * old[k + 1]
        } else if k + 1 == n && s == k as f64 {
            old[k]
        } else {
            0.0
        };
    }
    before - grid_mass(values, dx)
}

/// Resolves a jump on `values` and returns the frontier increment
/// `alpha * (mass removed)`, or zero when the jump condition gives no shift.
pub fn resolve_pde_jump(values: &mut [f64], dx: f64, alpha: f64) -> Result<f64> {
    let delta = pde_jump_size(values, dx, alpha)?;
    if delta <= 0.0 {
        return Ok(0.0);
    }
    Ok(alpha * shift_profile(values, dx, delta))
}

/// Solves `(I - theta dt A) x = (I + (1-theta) dt A) p` for the operator with
/// speed `v` on nodes `1..M` (Dirichlet at 0, reflecting at `M`).
fn theta_solve(old: &[f64], dx: f64, dt: f64, v: f64, theta: f64, out: &mut [f64], c: &mut [f64]) {
    let m = old.len() - 1;
    let a = 0.5 / (dx * dx);
    let b = v / dx;
    let e = (1.0 - theta) * dt;
    let f = theta * dt;
    out[0] = 0.0;
    if m == 0 {
        return;
    }
    // Thomas algorithm, rows i = 1..=m; c holds modified upper diagonal.
    let mut prev_c = 0.0;
    let mut prev_d = 0.0;
    for i in 1..=m {
        let (lo, di, up, rhs) = if i < m {
            let lp = a * (old[i - 1] - 2.0 * old[i] + old[i + 1]) + b * (old[i + 1] - old[i]);
            (-f * a, 1.0 + f * (2.0 * a + b), -f * (a + b), old[i] + e * lp)
        } else {
            let lp = 2.0 * a * (old[i - 1] - old[i]);
            (-2.0 * f * a, 1.0 + 2.0 * f * a, 0.0, old[i] + e * lp)
        };
        let (lo, rhs) = if i == 1 { (0.0, rhs) } else { (lo, rhs) };
        let denom = di - lo * prev_c;
        prev_c = up / denom;
        prev_d = (rhs - lo * prev_d) / denom;
        c[i] = prev_c;
        out[i] = prev_d;
    }
    for i in (1..m).rev() {
        out[i] -= c[i] * out[i + 1];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdStep {
    pub lambda_dot: f64,
    /// Frontier increment `alpha * (mass lost)`.
    pub increment: f64,
    pub inner_iters: usize,
    pub converged: bool,
}

/// One theta-step with the speed solved by secant iteration on the mass
/// balance. `values` is replaced by the new profile on return.
pub fn fd_step(values: &mut [f64], dx: f64, dt: f64, alpha: f64, theta: f64, opts: &PdeOptions) -> FdStep {
    let n = values.len();
    let m_old = grid_mass(values, dx);
    let mut out = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut eval = |v: f64, out: &mut Vec<f64>| -> f64 {
        theta_solve(values, dx, dt, v, theta, out, &mut c);
        v - alpha * (m_old - grid_mass(out, dx)) / dt
    };
    let ok = |g: f64, v: f64| g.abs() <= opts.inner_tol * v.abs().max(1.0);

    let mut v0 = (0.5 * alpha * boundary_gradient(values, dx).unwrap_or(0.0)).max(0.0);
    let mut g0 = eval(v0, &mut out);
    let mut iters = 1;
    let mut converged = ok(g0, v0);
    let mut v = v0;
    if !converged {
        let mut v1 = v0 - g0;
        while iters < opts.max_inner_iters.max(2) + 1 {
            let g1 = eval(v1, &mut out);
            iters += 1;
            v = v1;
            if ok(g1, v1) {
                converged = true;
                break;
            }
            if g1 == g0 {
                break;
            }
            let v2 = v1 - g1 * (v1 - v0) / (g1 - g0);
            v0 = v1;
            g0 = g1;
            v1 = v2;
        }
    }
    let increment = alpha * (m_old - grid_mass(&out, dx));
    values.copy_from_slice(&out);
    FdStep { lambda_dot: v, increment, inner_iters: iters, converged }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeStepRecord {
    pub t: f64,
    pub lambda_dot: f64,
    pub inner_iters: usize,
    pub blowup_flag: bool,
}

pub struct PdeRun {
    pub frontier: FrontierPath,
    pub snapshots: Vec<DensitySnapshot>,
    pub summary: RunSummary,
    pub steps: Vec<PdeStepRecord>,
    pub values: Vec<f64>,
    pub dx: f64,
}

struct Stepper<'a> {
    dx: f64,
    alpha: f64,
    opts: &'a PdeOptions,
}

impl Stepper<'_> {
    /// Advances by `dt`, halving on inner failure or excessive speed.
    /// Returns (increment, inner iterations, flagged).
    fn advance(&self, values: &mut [f64], dt: f64, smoothing: bool, depth: u32) -> (f64, usize, bool) {
        let backup = values.to_vec();
        let mut iters = 0;
        let mut inc = 0.0;
        let mut speed = 0.0f64;
        let mut converged = true;
        if smoothing {
            for _ in 0..2 {
                let s = fd_step(values, self.dx, 0.5 * dt, self.alpha, 1.0, self.opts);
                inc += s.increment;
                iters += s.inner_iters;
                speed = speed.max(s.lambda_dot);
                converged &= s.converged;
            }
        } else {
            let s = fd_step(values, self.dx, dt, self.alpha, 0.5, self.opts);
            inc = s.increment;
            iters = s.inner_iters;
            speed = s.lambda_dot;
            converged = s.converged;
        }
        let bad = !converged || speed > self.opts.lambda_dot_cap;
        if !bad {
            return (inc, iters, false);
        }
        if depth >= self.opts.max_halvings {
            return (inc, iters, true);
        }
        values.copy_from_slice(&backup);
        let (i1, n1, f1) = self.advance(values, 0.5 * dt, smoothing, depth + 1);
        let (i2, n2, f2) = self.advance(values, 0.5 * dt, smoothing, depth + 1);
        (i1 + i2, iters + n1 + n2, f1 || f2)
    }
}

/// Runs the finite-difference solver from `t = 0` to the horizon.
pub fn run_pde(config: &Config) -> Result<PdeRun> {
    let config = config.clone().validate()?;
    let started = Instant::now();
    let dx = config.grid.dx;
    let alpha = config.alpha;
    let opts = &config.pde;
    let (mut values, lost) = initial_grid(&config);
    let total = config.density.total_mass;
    let offset = alpha * (1.0 - total);
    let mut lambda = offset + alpha * lost;
    let stepper = Stepper { dx, alpha, opts };

    let mut frontier = FrontierPath::default();
    let mut snapshots = Vec::new();
    let mut steps = Vec::new();
    let mut next_snap = 0;
    let snap_due = |next: &mut usize, t: f64| {
        let mut due = false;
        while *next < config.snapshot_times.len() && config.snapshot_times[*next] <= t + 0.5 * config.dt {
            due = true;
            *next += 1;
        }
        due
    };
    let residual = |lambda: f64, values: &[f64]| {
        crate::diagnostics::mass_check(lambda - offset, grid_mass(values, dx), alpha, total)
    };

    frontier.push(0.0, lambda, grid_mass(&values, dx));
    if snap_due(&mut next_snap, 0.0) {
        snapshots.push(DensitySnapshot::new(0.0, dx, values.clone()));
    }
    let mut worst = residual(lambda, &values);
    let mut smoothing_left = opts.smoothing_steps;
    let n = config.n_steps();
    for k in 1..=n {
        let mut jumped = 0.0;
        if detect_pde_blowup(&values, dx, alpha, opts.blowup_margin) {
            jumped = resolve_pde_jump(&mut values, dx, alpha)?;
        }
        let (inc, iters, mut flagged) = stepper.advance(&mut values, config.dt, smoothing_left > 0, 0);
        smoothing_left = smoothing_left.saturating_sub(1);
        if flagged {
            let extra = resolve_pde_jump(&mut values, dx, alpha)?;
            jumped += extra;
            flagged = extra == 0.0;
        }
        if jumped > 0.0 {
            smoothing_left = opts.smoothing_steps;
        }
        lambda += jumped + inc;
        let t = k as f64 * config.dt;
        let mass = grid_mass(&values, dx);
        frontier.push(t, lambda, mass);
        steps.push(PdeStepRecord { t, lambda_dot: inc / config.dt, inner_iters: iters, blowup_flag: flagged });
        worst = worst.max(residual(lambda, &values));
        if snap_due(&mut next_snap, t) {
            snapshots.push(DensitySnapshot::new(t, dx, values.clone()));
        }
    }

    let rule = JumpRule::pde(&config.diagnostics, dx);
    frontier.jumps = detect_jumps(&frontier, &rule);
    let jumps = frontier.jumps.iter().map(|j| JumpReport { time: j.time, size: j.size, ci_low: None, ci_high: None }).collect();
    let summary = RunSummary {
        solver: "pde".into(),
        steps: n,
        final_time: n as f64 * config.dt,
        final_lambda: lambda,
        final_mass: grid_mass(&values, dx),
        max_conservation_residual: worst,
        jumps,
        wall_time_s: started.elapsed().as_secs_f64(),
        unconverged_steps: steps.iter().filter(|s| s.blowup_flag).count(),
    };
    Ok(PdeRun { frontier, snapshots, summary, steps, values, dx })
}
