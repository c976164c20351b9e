use serde::{Deserialize, Serialize};

/// `alpha * k * particle_mass`, evaluated the same way everywhere so that
/// frontier levels computed by different routes compare exactly.
#[inline]
pub fn frontier_level(alpha: f64, k: usize, particle_mass: f64) -> f64 {
    alpha * (k as f64 * particle_mass)
}

/// `N` coupled particles together with the current time and frontier value.
///
/// Positions are in the absolute frame, already net of the frontier. Absorbed
/// particles keep their slot; `alive` and `absorption_time` record their fate.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub t: f64,
    pub lambda: f64,
    pub positions: Vec<f64>,
    pub alive: Vec<bool>,
    pub absorption_time: Vec<f64>,
    pub particle_mass: f64,
    pub total_mass: f64,
    pub alpha: f64,
    absorbed: usize,
}

impl EnsembleState {
    /// Fresh ensemble at `t = 0`. Particles at or below zero are absorbed
    /// immediately.
    pub fn new(positions: Vec<f64>, alpha: f64, total_mass: f64) -> Self {
        let n = positions.len();
        let alive: Vec<bool> = positions.iter().map(|&x| x > 0.0).collect();
        let absorbed = alive.iter().filter(|a| !**a).count();
        let absorption_time = alive.iter().map(|&a| if a { f64::INFINITY } else { 0.0 }).collect();
        let mut s = Self {
            t: 0.0,
            lambda: 0.0,
            positions,
            alive,
            absorption_time,
            particle_mass: total_mass / n.max(1) as f64,
            total_mass,
            alpha,
            absorbed,
        };
        s.lambda = s.lambda_from_counts();
        s
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn absorbed_count(&self) -> usize {
        self.absorbed
    }

    pub fn alive_count(&self) -> usize {
        self.len() - self.absorbed
    }

    pub fn alive_mass(&self) -> f64 {
        self.particle_mass * self.alive_count() as f64
    }

    /// `alpha * (initial deficit + absorbed mass)`.
    pub(crate) fn lambda_from_counts(&self) -> f64 {
        self.alpha * ((1.0 - self.total_mass) + self.particle_mass * self.absorbed as f64)
    }

    pub(crate) fn mark_absorbed(&mut self, i: usize, t: f64) {
        debug_assert!(self.alive[i]);
        self.alive[i] = false;
        self.absorption_time[i] = t;
        self.absorbed += 1;
    }

    pub fn alive_positions(&self) -> Vec<f64> {
        self.positions.iter().zip(&self.alive).filter(|(_, a)| **a).map(|(x, _)| *x).collect()
    }

    /// Frontier value before any absorption: `alpha * (1 - total_mass)`.
    pub fn lambda_offset(&self) -> f64 {
        self.alpha * (1.0 - self.total_mass)
    }

    /// `|(lambda - offset)/alpha + alive mass - total mass|`.
    pub fn conservation_residual(&self) -> f64 {
        crate::diagnostics::mass_check(self.lambda - self.lambda_offset(), self.alive_mass(), self.alpha, self.total_mass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// Record of the frontier over the time grid, right-continuous convention.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontierPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Surviving mass at each recorded time.
    pub mass: Vec<f64>,
    pub jumps: Vec<Jump>,
}

impl FrontierPath {
    pub fn push(&mut self, t: f64, value: f64, mass: f64) {
        debug_assert!(self.times.last().is_none_or(|&last| t >= last));
        self.times.push(t);
        self.values.push(value);
        self.mass.push(mass);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// Value at the last recorded time `<= t` (right-continuous step).
    pub fn step_value(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            self.values[0]
        } else {
            self.values[k - 1]
        }
    }

    /// Linear interpolation in time, clamped at the ends.
    pub fn interpolate(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return self.values[k - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if t1 == t {
            return self.values[k];
        }
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] + w * (self.values[k] - self.values[k - 1])
    }
}

/// Density on the uniform grid `0, dx, ..., (len-1) dx` in the moving frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub t: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl DensitySnapshot {
    pub fn new(t: f64, dx: f64, values: Vec<f64>) -> Self {
        Self { t, dx, values }
    }

    pub fn from_fn(t: f64, dx: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::new(t, dx, (0..nodes).map(|i| f(i as f64 * dx)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len().saturating_sub(1))
    }

    /// Trapezoid mass of the values.
    pub fn mass(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.values[1..n - 1].iter().sum();
        self.dx * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
    }

    /// Linear interpolation; zero beyond the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.x_max() {
            return 0.0;
        }
        let s = x / self.dx;
        let i = (s.floor() as usize).min(self.len() - 1);
        if i + 1 >= self.len() {
            return self.values[i];
        }
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Differentiable,
    Hoelder,
    Jump,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Differentiable => "differentiable",
            Regime::Hoelder => "hoelder",
            Regime::Jump => "jump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub regime: Regime,
    /// Extrapolated boundary value of the pre-jump density.
    pub rho_at_zero: f64,
    /// `sup x^-1 rho` over the window.
    pub slope_ratio: f64,
    /// Fitted power of `rho ~ x^p` near the boundary.
    pub exponent: f64,
    pub window: (f64, f64),
}
