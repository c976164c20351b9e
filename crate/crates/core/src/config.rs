//! Run configuration.
//!
//! The file format is TOML with top-level run keys and one flat section per
//! solver module:
//!
//! ```toml
//! alpha = 0.5
//! horizon = 1.0
//! dt = 1e-4
//! seed = 7
//! snapshot_times = [0.5, 1.0]
//!
//! [particle]
//! n_particles = 100000
//! bridge_correction = true
//!
//! [grid]
//! x_max = 20.0
//! dx = 1e-3
//!
//! [density]
//! kind = "uniform"
//! a = 0.0
//! b = 2.0
//! ```
//!
//! Sections `[pde]`, `[diagnostics]` and `[output]` are optional; every key
//! has a default. `--set key=value` overrides use dotted paths such as
//! `pde.blowup_margin=0.1` or `density.b=3`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::InitialDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Feedback strength.
    pub alpha: f64,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Worker threads for the particle engine; 0 uses the rayon default.
    /// Results do not depend on this value.
    #[serde(default)]
    pub threads: usize,
    /// Accept `alpha = 0`, i.e. pure absorbed Brownian motion.
    #[serde(default)]
    pub allow_zero_alpha: bool,
    #[serde(default)]
    pub particle: ParticleOptions,
    pub grid: Grid,
    pub density: InitialDensity,
    #[serde(default)]
    pub pde: PdeOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticOptions,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_max: f64,
    pub dx: f64,
}

impl Grid {
    /// Number of grid intervals; nodes are `0..=len()`.
    pub fn intervals(&self) -> usize {
        (self.x_max / self.dx).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleOptions {
    pub n_particles: usize,
    pub bridge_correction: bool,
    pub picard_mode: bool,
    /// Inner Brownian substeps per Picard horizon.
    pub picard_substeps: usize,
    pub picard_max_iters: usize,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            bridge_correction: true,
            picard_mode: false,
            picard_substeps: 64,
            picard_max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeOptions {
    /// Relative margin below `1/alpha` at which a boundary value counts as blow-up.
    pub blowup_margin: f64,
    /// Frontier speeds above this are treated as a blow-up signal.
    pub lambda_dot_cap: f64,
    pub max_halvings: u32,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    /// Backward-Euler start-up steps after the initial time and after each jump.
    pub smoothing_steps: usize,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            blowup_margin: 0.05,
            lambda_dot_cap: 1e3,
            max_halvings: 8,
            inner_tol: 1e-8,
            max_inner_iters: 5,
            smoothing_steps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticOptions {
    pub k_sigma: f64,
    /// Half-width (in steps) of the window for the local median/MAD.
    pub jump_window: usize,
    /// Relative margin around the `1/alpha` threshold.
    pub rho_margin: f64,
    /// Boundary exponents at or above this count as linear decay.
    pub exponent_threshold: f64,
    /// Cap on `alpha * sup x^-1 rho` for the differentiable regime.
    pub slope_cap: f64,
    pub holder_window: [f64; 2],
    /// Central-difference half-width for frontier speed checks.
    pub speed_h: f64,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        Self {
            k_sigma: 50.0,
            jump_window: 25,
            rho_margin: 0.05,
            exponent_threshold: 0.75,
            slope_cap: 1e6,
            holder_window: [1e-4, 1e-2],
            speed_h: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
}

impl Config {
    /// Minimal configuration for the given density; used by tests and the FFI.
    pub fn new(alpha: f64, horizon: f64, dt: f64, density: InitialDensity) -> Self {
        let x_max = (10.0 * density.support_bound()).max(1.0);
        Self {
            alpha,
            horizon,
            dt,
            seed: 0,
            snapshot_times: Vec::new(),
            threads: 0,
            allow_zero_alpha: alpha == 0.0,
            particle: ParticleOptions::default(),
            grid: Grid { x_max, dx: 1e-3 },
            density,
            pde: PdeOptions::default(),
            diagnostics: DiagnosticOptions::default(),
            output: OutputOptions::default(),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn particle_mass(&self) -> f64 {
        self.density.total_mass / self.particle.n_particles as f64
    }

    /// Checks every invariant and returns the config unchanged on success.
    pub fn validate(self) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 || (self.allow_zero_alpha && self.alpha == 0.0)) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.dt < self.horizon) {
            return bad(format!("dt < horizon violated: dt = {}, horizon = {}", self.dt, self.horizon));
        }
        if self.particle.n_particles == 0 {
            return bad("n_particles must be >= 1".into());
        }
        if !(self.grid.dx > 0.0) {
            return bad(format!("dx must be > 0, got {}", self.grid.dx));
        }
        if self.grid.intervals() < 3 {
            return bad("grid needs at least 3 intervals".into());
        }
        self.density.validate().map_err(|e| Error::Config(e.to_string()))?;
        let need = 10.0 * self.density.support_bound();
        if self.grid.x_max < need {
            return bad(format!(
                "x_max must be >= 10 * support bound of the density ({need}), got {}",
                self.grid.x_max
            ));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("snapshot_times must be sorted".into());
        }
        if self.snapshot_times.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
            return bad("snapshot_times must lie in [0, horizon]".into());
        }
        if self.particle.picard_substeps == 0 {
            return bad("picard_substeps must be >= 1".into());
        }
        if !(self.pde.blowup_margin >= 0.0 && self.pde.blowup_margin < 1.0) {
            return bad("pde.blowup_margin must be in [0, 1)".into());
        }
        let [s0, s1] = self.diagnostics.holder_window;
        if !(s0 > 0.0 && s0 < s1) {
            return bad("diagnostics.holder_window needs 0 < s_min < s_max".into());
        }
        Ok(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    /// Reads a config file, applies `key=value` overrides, and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::parse(path, e.message()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)?.validate()
    }

    /// Applies a single `key=value` override to an already parsed config.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        apply_override(&mut table, assignment)?;
        Self::from_table(table)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Validates a config. Thin wrapper kept for symmetry with the CLI commands.
pub fn validate_config(config: Config) -> Result<Config> {
    config.validate()
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty override key in `{assignment}`")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
