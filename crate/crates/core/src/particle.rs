//! Monte Carlo engine for the particle system with frontier feedback.
//!
//! Each step draws a Gaussian increment for every alive particle, optionally
//! marks particles whose Brownian bridge crossed zero inside the step, then
//! resolves the frontier increment with the cascade and shifts the survivors.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::density::sample_initial;
use crate::diagnostics::{detect_jumps, JumpRule};
use crate::error::{Error, Result};
use crate::frontier::{cascade_select, CascadeResult, PicardPaths};
use crate::rng::{Domain, Streams};
use crate::types::{frontier_level, DensitySnapshot, EnsembleState, FrontierPath};

/// Probability that a Brownian bridge from `a > 0` to `b > 0` over `dt` hits zero.
pub fn bridge_crossing_probability(a: f64, b: f64, dt: f64) -> f64 {
    (-2.0 * a * b / dt).exp()
}

/// Decides absorption inside a step from a uniform draw `u` in `[0, 1)`.
pub fn bridge_absorption(x_before: f64, x_after: f64, dt: f64, u: f64) -> Result<bool> {
    if !(x_before > 0.0 && x_after > 0.0 && dt > 0.0) {
        return Err(Error::Input(format!(
            "bridge_absorption needs positive endpoints and dt, got ({x_before}, {x_after}, {dt})"
        )));
    }
    Ok(u < bridge_crossing_probability(x_before, x_after, dt))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub cascade: CascadeResult,
    /// Particles marked by the bridge test (before the cascade).
    pub bridge_marked: usize,
}

/// Pre-cascade alive values of one step, kept for the jump bootstrap.
#[derive(Debug, Clone)]
struct CascadeRecord {
    time: f64,
    increment: f64,
    values: Vec<f64>,
}

const KEPT_CASCADES: usize = 8;

/// Stepping engine with reusable buffers.
pub struct ParticleEngine {
    pub state: EnsembleState,
    streams: Streams,
    bridge: bool,
    step: u64,
    alive_idx: Vec<usize>,
    values: Vec<f64>,
    records: Vec<CascadeRecord>,
}

impl ParticleEngine {
    pub fn new(state: EnsembleState, streams: Streams, bridge: bool) -> Self {
        let alive_idx = (0..state.len()).filter(|&i| state.alive[i]).collect();
        Self { state, streams, bridge, step: 0, alive_idx, values: Vec::new(), records: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Noise increment, bridge marking, and cascade over one step of length `dt`.
    pub fn euler_step(&mut self, dt: f64) -> StepOutcome {
        self.step += 1;
        let step = self.step;
        let sd = dt.sqrt();
        let streams = self.streams;
        let bridge = self.bridge;
        let st = &mut self.state;

        let positions = &st.positions;
        self.values.clear();
        self.values.par_extend(self.alive_idx.par_iter().map(|&i| {
            let mut rng = streams.stream(Domain::Step, i as u64, step);
            let x = positions[i];
            let z: f64 = rng.sample(StandardNormal);
            let y = x + sd * z;
            if bridge && y > 0.0 {
                let p = bridge_crossing_probability(x, y, dt);
                if p > 0.0 && rng.random::<f64>() < p {
                    return f64::NEG_INFINITY;
                }
            }
            y
        }));
        let bridge_marked = self.values.iter().filter(|v| **v == f64::NEG_INFINITY).count();

        let (cascade, hit) = cascade_select(&self.values, st.alpha, st.particle_mass);
        let t_new = st.t + dt;
        for (&i, &y) in self.alive_idx.iter().zip(&self.values) {
            st.positions[i] = y;
        }
        for &j in &hit {
            let i = self.alive_idx[j];
            st.mark_absorbed(i, t_new);
            if st.positions[i] == f64::NEG_INFINITY {
                st.positions[i] = 0.0;
            }
        }
        if cascade.increment > 0.0 {
            let d = cascade.increment;
            st.positions
                .par_iter_mut()
                .zip(st.alive.par_iter())
                .filter(|(_, a)| **a)
                .for_each(|(x, _)| *x -= d);
        }
        st.t = t_new;
        st.lambda = st.lambda_from_counts();
        self.keep_record(t_new, cascade.increment);
        if !hit.is_empty() {
            let alive = &self.state.alive;
            self.alive_idx.retain(|&i| alive[i]);
        }
        StepOutcome { cascade, bridge_marked }
    }

    /// One step with the frontier increment from Picard iteration over frozen
    /// paths on `substeps` inner points.
    pub fn picard_step(&mut self, dt: f64, substeps: usize, max_iters: usize) -> (StepOutcome, bool) {
        self.step += 1;
        let st = &mut self.state;
        let paths = PicardPaths::sample(st, dt, substeps, &self.streams, self.step);
        let mut sorted = paths.minima.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let mut k = sorted.partition_point(|&m| m <= 0.0);
        let mut converged = false;
        for _ in 0..max_iters {
            let next = sorted.partition_point(|&m| m <= frontier_level(st.alpha, k, st.particle_mass));
            if next == k {
                converged = true;
                break;
            }
            k = next;
        }
        let level = frontier_level(st.alpha, k, st.particle_mass);
        let t_new = st.t + dt;
        for (j, &i) in paths.indices.iter().enumerate() {
            if paths.minima[j] <= level {
                st.positions[i] = paths.minima[j].min(0.0);
                st.mark_absorbed(i, t_new);
            } else {
                st.positions[i] = paths.endpoints[j] - level;
            }
        }
        st.t = t_new;
        st.lambda = st.lambda_from_counts();
        let alive = &st.alive;
        self.alive_idx.retain(|&i| alive[i]);
        let cascade = CascadeResult { increment: level, absorbed: k, iterations: 0 };
        (StepOutcome { cascade, bridge_marked: 0 }, converged)
    }

    fn keep_record(&mut self, time: f64, increment: f64) {
        if increment <= 0.0 {
            return;
        }
        if self.records.len() == KEPT_CASCADES {
            let (imin, min) = self
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (i, r.increment))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty");
            if increment <= min {
                return;
            }
            self.records.swap_remove(imin);
        }
        self.records.push(CascadeRecord { time, increment, values: self.values.clone() });
    }

    /// Percentile bootstrap interval for the cascade recorded at `time`.
    pub fn bootstrap_cascade(&self, time: f64, replicates: usize) -> Option<(f64, f64)> {
        let rec = self.records.iter().find(|r| (r.time - time).abs() < 1e-12)?;
        let st = &self.state;
        let m = rec.values.len();
        if m == 0 {
            return None;
        }
        let mut sizes: Vec<f64> = (0..replicates as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = self.streams.stream(Domain::Bootstrap, b, (time * 1e9) as u64);
                let sample: Vec<f64> = (0..m).map(|_| rec.values[rng.random_range(0..m)]).collect();
                cascade_select(&sample, st.alpha, st.particle_mass).0.increment
            })
            .collect();
        sizes.sort_unstable_by(f64::total_cmp);
        let q = |p: f64| sizes[((p * (replicates - 1) as f64).round() as usize).min(replicates - 1)];
        Some((q(0.025), q(0.975)))
    }
}

/// Allocating form of [`ParticleEngine::euler_step`]: advances a copy of
/// `state` by one step using streams keyed by `step`.
pub fn euler_step(state: &EnsembleState, dt: f64, bridge: bool, streams: &Streams, step: u64) -> (EnsembleState, StepOutcome) {
    let mut engine = ParticleEngine::new(state.clone(), *streams, bridge);
    engine.step = step.saturating_sub(1);
    let out = engine.euler_step(dt);
    (engine.state, out)
}

/// Histogram density estimate on the grid `0, dx, ..., x_max`.
///
/// Bin heights are averaged onto nodes; the first five nodes are replaced by a
/// local-linear fit through the first ten bins, so the estimate near the
/// boundary is not pulled towards zero and no mass is placed below zero.
pub fn histogram_snapshot(t: f64, positions: &[f64], particle_mass: f64, dx: f64, x_max: f64) -> DensitySnapshot {
    let bins = (x_max / dx).round() as usize;
    let mut h = vec![0.0; bins];
    for &x in positions {
        if x >= 0.0 {
            let k = (x / dx) as usize;
            if k < bins {
                h[k] += 1.0;
            }
        }
    }
    for v in &mut h {
        *v *= particle_mass / dx;
    }
    let mut nodes = vec![0.0; bins + 1];
    for i in 1..bins {
        nodes[i] = 0.5 * (h[i - 1] + h[i]);
    }
    nodes[bins] = 0.5 * h[bins - 1];
    let fit_bins = 10.min(bins);
    if fit_bins >= 2 {
        let xs: Vec<f64> = (0..fit_bins).map(|k| (k as f64 + 0.5) * dx).collect();
        let (intercept, slope) = crate::diagnostics::linear_fit(&xs, &h[..fit_bins]);
        for (i, node) in nodes.iter_mut().enumerate().take(5.min(bins + 1)) {
            *node = (intercept + slope * i as f64 * dx).max(0.0);
        }
    } else {
        nodes[0] = h[0];
    }
    DensitySnapshot::new(t, dx, nodes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub time: f64,
    pub size: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub solver: String,
    pub steps: usize,
    pub final_time: f64,
    pub final_lambda: f64,
    pub final_mass: f64,
    pub max_conservation_residual: f64,
    pub jumps: Vec<JumpReport>,
    pub wall_time_s: f64,
    /// Picard steps that hit the iteration cap (Picard mode only).
    pub unconverged_steps: usize,
}

pub struct ParticleRun {
    pub frontier: FrontierPath,
    pub snapshots: Vec<DensitySnapshot>,
    pub summary: RunSummary,
    pub state: EnsembleState,
}

/// Jump rule for particle frontiers: absolute floor of ten particles' worth.
pub fn particle_jump_rule(config: &Config) -> JumpRule {
    JumpRule::particle(&config.diagnostics, config.alpha, config.particle_mass())
}

fn snapshot_due(times: &[f64], next: &mut usize, t: f64, dt: f64) -> bool {
    let mut due = false;
    while *next < times.len() && times[*next] <= t + 0.5 * dt {
        due = true;
        *next += 1;
    }
    due
}

/// Runs the particle system from `t = 0` to the horizon.
pub fn run_particle(config: &Config) -> Result<ParticleRun> {
    let config = config.clone().validate()?;
    let run = || -> Result<ParticleRun> {
        let started = Instant::now();
        let streams = Streams::new(config.seed);
        let x0 = sample_initial(&config.density, config.particle.n_particles, &streams)?;
        let state = EnsembleState::new(x0, config.alpha, config.density.total_mass);
        let mut engine = ParticleEngine::new(state, streams, config.particle.bridge_correction);
        let mut frontier = FrontierPath::default();
        let mut snapshots = Vec::new();
        let mut next_snap = 0;
        let (dx, x_max) = (config.grid.dx, config.grid.x_max);
        let mut worst = engine.state.conservation_residual();
        let mut unconverged = 0;

        frontier.push(0.0, engine.state.lambda, engine.state.alive_mass());
        if snapshot_due(&config.snapshot_times, &mut next_snap, 0.0, config.dt) {
            snapshots.push(histogram_snapshot(0.0, &engine.state.alive_positions(), engine.state.particle_mass, dx, x_max));
        }
        let n = config.n_steps();
        for k in 1..=n {
            if config.particle.picard_mode {
                let (_, ok) = engine.picard_step(config.dt, config.particle.picard_substeps, config.particle.picard_max_iters);
                if !ok {
                    unconverged += 1;
                }
            } else {
                engine.euler_step(config.dt);
            }
            let t = k as f64 * config.dt;
            engine.state.t = t;
            frontier.push(t, engine.state.lambda, engine.state.alive_mass());
            worst = worst.max(engine.state.conservation_residual());
            if snapshot_due(&config.snapshot_times, &mut next_snap, t, config.dt) {
                snapshots.push(histogram_snapshot(t, &engine.state.alive_positions(), engine.state.particle_mass, dx, x_max));
            }
        }

        let rule = particle_jump_rule(&config);
        frontier.jumps = detect_jumps(&frontier, &rule);
        let jumps = frontier
            .jumps
            .iter()
            .map(|j| {
                let ci = engine.bootstrap_cascade(j.time, 200);
                JumpReport { time: j.time, size: j.size, ci_low: ci.map(|c| c.0), ci_high: ci.map(|c| c.1) }
            })
            .collect();
        let summary = RunSummary {
            solver: "particle".into(),
            steps: n,
            final_time: engine.state.t,
            final_lambda: engine.state.lambda,
            final_mass: engine.state.alive_mass(),
            max_conservation_residual: worst,
            jumps,
            wall_time_s: started.elapsed().as_secs_f64(),
            unconverged_steps: unconverged,
        };
        Ok(ParticleRun { frontier, snapshots, summary, state: engine.state })
    };
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}
