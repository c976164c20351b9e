//! Initial sub-densities of the starting position on `[0, ∞)`.
//!
//! Every shape is normalised so that it integrates to `total_mass`. Point
//! values follow the right-continuous convention at kinks and at the ends of
//! the support.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::rng::{Domain, Streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    /// Constant on `[a, b)`.
    Uniform { a: f64, b: f64 },
    /// Rises linearly from `a` to the mode `b`, falls to zero at `c`.
    Triangular { a: f64, b: f64, c: f64 },
    /// Gaussian `N(mu, sigma^2)` conditioned on `[0, ∞)`.
    TruncGaussian { mu: f64, sigma: f64 },
    /// Linear interpolation of `(x, y)` knots, zero outside `[x_first, x_last)`.
    PiecewiseLinear { knots: Vec<[f64; 2]> },
    /// `min(cap, c·x^power)` on `[0, right)`, with `c` solved from the mass.
    CappedPower { cap: f64, power: f64, right: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDensity {
    #[serde(flatten)]
    pub kind: DensityKind,
    #[serde(default = "one")]
    pub total_mass: f64,
}

fn one() -> f64 {
    1.0
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `P(Z > z)` of the standard normal.
fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Inverse of [`std_normal_sf`] for `q` in `(0, 1)`.
fn std_normal_isf(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Solved parameters of a capped power law: `c` and the kink `x*` where the
/// cap takes over (`x* >= right` when the cap is inactive).
#[derive(Debug, Clone, Copy)]
struct CappedPowerFit {
    c: f64,
    kink: f64,
}

fn fit_capped_power(cap: f64, power: f64, right: f64, mass: f64) -> Result<CappedPowerFit> {
    if !(cap > 0.0 && power > 0.0 && right > 0.0) {
        return Err(Error::Density("capped power needs cap, power, right > 0".into()));
    }
    let uncapped_c = mass * (power + 1.0) / right.powf(power + 1.0);
    if uncapped_c * right.powf(power) <= cap {
        return Ok(CappedPowerFit { c: uncapped_c, kink: right });
    }
    if cap * right <= mass {
        return Err(Error::Density(format!(
            "capped power cannot carry mass {mass}: cap*right = {}",
            cap * right
        )));
    }
    // mass = cap*right - cap*kink*power/(power+1)
    let kink = (cap * right - mass) * (power + 1.0) / (cap * power);
    Ok(CappedPowerFit { c: cap / kink.powf(power), kink })
}

impl InitialDensity {
    pub fn new(kind: DensityKind, total_mass: f64) -> Result<Self> {
        let d = Self { kind, total_mass };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        Self { kind: DensityKind::Uniform { a, b }, total_mass: 1.0 }
    }

    pub fn triangular(a: f64, b: f64, c: f64) -> Self {
        Self { kind: DensityKind::Triangular { a, b, c }, total_mass: 1.0 }
    }

    pub fn trunc_gaussian(mu: f64, sigma: f64) -> Self {
        Self { kind: DensityKind::TruncGaussian { mu, sigma }, total_mass: 1.0 }
    }

    pub fn piecewise_linear(knots: Vec<[f64; 2]>) -> Self {
        Self { kind: DensityKind::PiecewiseLinear { knots }, total_mass: 1.0 }
    }

    pub fn capped_power(cap: f64, power: f64, right: f64) -> Self {
        Self { kind: DensityKind::CappedPower { cap, power, right }, total_mass: 1.0 }
    }

    pub fn with_mass(mut self, total_mass: f64) -> Self {
        self.total_mass = total_mass;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_mass > 0.0 && self.total_mass <= 1.0) {
            return Err(Error::Density(format!("total_mass must be in (0, 1], got {}", self.total_mass)));
        }
        match &self.kind {
            DensityKind::Uniform { a, b } => {
                if !(*a >= 0.0 && b > a && b.is_finite()) {
                    return Err(Error::Density(format!("uniform needs 0 <= a < b, got a={a}, b={b}")));
                }
            }
            DensityKind::Triangular { a, b, c } => {
                if !(*a >= 0.0 && a <= b && b <= c && a < c && c.is_finite()) {
                    return Err(Error::Density(format!(
                        "triangular needs 0 <= a <= b <= c with a < c, got ({a}, {b}, {c})"
                    )));
                }
            }
            DensityKind::TruncGaussian { mu, sigma } => {
                if !(mu.is_finite() && *sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Density(format!("trunc_gaussian needs finite mu and sigma > 0, got ({mu}, {sigma})")));
                }
                if std_normal_sf(-mu / sigma) <= 0.0 {
                    return Err(Error::Density("trunc_gaussian has no mass on [0, inf)".into()));
                }
            }
            DensityKind::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::Density("piecewise_linear needs at least two knots".into()));
                }
                if knots[0][0] < 0.0 {
                    return Err(Error::Density("piecewise_linear knots must lie in [0, inf)".into()));
                }
                for w in knots.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::Density("piecewise_linear knots must be strictly increasing".into()));
                    }
                }
                if knots.iter().any(|k| !(k[1] >= 0.0 && k[1].is_finite() && k[0].is_finite())) {
                    return Err(Error::Density("piecewise_linear values must be finite and nonnegative".into()));
                }
                if self.piecewise_area() <= 0.0 {
                    return Err(Error::Density("piecewise_linear has zero area".into()));
                }
            }
            DensityKind::CappedPower { cap, power, right } => {
                fit_capped_power(*cap, *power, *right, self.total_mass)?;
            }
        }
        Ok(())
    }

    fn piecewise_area(&self) -> f64 {
        match &self.kind {
            DensityKind::PiecewiseLinear { knots } => knots
                .windows(2)
                .map(|w| 0.5 * (w[0][1] + w[1][1]) * (w[1][0] - w[0][0]))
                .sum(),
            _ => 1.0,
        }
    }

    /// Right end of the support; for the Gaussian, `mu + 8 sigma`.
    pub fn support_bound(&self) -> f64 {
        match &self.kind {
            DensityKind::Uniform { b, .. } => *b,
            DensityKind::Triangular { c, .. } => *c,
            DensityKind::TruncGaussian { mu, sigma } => (mu + 8.0 * sigma).max(8.0 * sigma),
            DensityKind::PiecewiseLinear { knots } => knots[knots.len() - 1][0],
            DensityKind::CappedPower { right, .. } => *right,
        }
    }

    /// Pointwise density value at `x >= 0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Input(format!("density evaluated at negative x = {x}")));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let m = self.total_mass;
        match &self.kind {
            DensityKind::Uniform { a, b } => {
                if x >= *a && x < *b {
                    m / (b - a)
                } else {
                    0.0
                }
            }
            DensityKind::Triangular { a, b, c } => {
                let peak = 2.0 * m / (c - a);
                if x < *a || x >= *c {
                    0.0
                } else if x < *b {
                    peak * (x - a) / (b - a)
                } else if b == c {
                    peak
                } else {
                    peak * (c - x) / (c - b)
                }
            }
            DensityKind::TruncGaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                m * std_normal_pdf(z) / (sigma * std_normal_sf(-mu / sigma))
            }
            DensityKind::PiecewiseLinear { knots } => {
                let scale = m / self.piecewise_area();
                if x < knots[0][0] || x >= knots[knots.len() - 1][0] {
                    return 0.0;
                }
                let j = knots.partition_point(|k| k[0] <= x) - 1;
                let (x0, y0) = (knots[j][0], knots[j][1]);
                let (x1, y1) = (knots[j + 1][0], knots[j + 1][1]);
                scale * (y0 + (y1 - y0) * (x - x0) / (x1 - x0))
            }
            DensityKind::CappedPower { cap, power, right } => {
                if x >= *right {
                    return 0.0;
                }
                let fit = fit_capped_power(*cap, *power, *right, m).expect("validated density");
                if x >= fit.kink {
                    *cap
                } else {
                    fit.c * x.powf(*power)
                }
            }
        }
    }

    /// Mass in `[0, x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let m = self.total_mass;
        match &self.kind {
            DensityKind::Uniform { a, b } => m * ((x.min(*b) - a) / (b - a)).max(0.0),
            DensityKind::Triangular { a, b, c } => {
                let (a, b, c) = (*a, *b, *c);
                if x <= a {
                    0.0
                } else if x >= c {
                    m
                } else if x <= b {
                    m * (x - a) * (x - a) / ((c - a) * (b - a))
                } else {
                    m * (1.0 - (c - x) * (c - x) / ((c - a) * (c - b)))
                }
            }
            DensityKind::TruncGaussian { mu, sigma } => {
                let tail0 = std_normal_sf(-mu / sigma);
                let tailx = std_normal_sf((x - mu) / sigma);
                m * ((tail0 - tailx) / tail0).clamp(0.0, 1.0)
            }
            DensityKind::PiecewiseLinear { knots } => {
                let scale = m / self.piecewise_area();
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    let (x0, y0, x1, y1) = (w[0][0], w[0][1], w[1][0], w[1][1]);
                    if x <= x0 {
                        break;
                    }
                    let u = x.min(x1) - x0;
                    let slope = (y1 - y0) / (x1 - x0);
                    acc += y0 * u + 0.5 * slope * u * u;
                }
                (scale * acc).min(m)
            }
            DensityKind::CappedPower { cap, power, right } => {
                let fit = fit_capped_power(*cap, *power, *right, m).expect("validated density");
                let x = x.min(*right);
                if x <= fit.kink {
                    fit.c * x.powf(power + 1.0) / (power + 1.0)
                } else {
                    fit.c * fit.kink.powf(power + 1.0) / (power + 1.0) + cap * (x - fit.kink)
                }
            }
        }
    }

    /// Position at which the normalised CDF equals `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DensityKind::Uniform { a, b } => a + u * (b - a),
            DensityKind::Triangular { a, b, c } => {
                let (a, b, c) = (*a, *b, *c);
                let split = (b - a) / (c - a);
                if u < split {
                    a + (u * (c - a) * (b - a)).sqrt()
                } else {
                    c - ((1.0 - u) * (c - a) * (c - b)).sqrt()
                }
            }
            DensityKind::TruncGaussian { mu, sigma } => {
                // Sample through the upper tail so extreme truncations stay accurate.
                let tail0 = std_normal_sf(-mu / sigma);
                let q = (tail0 * (1.0 - u)).max(f64::MIN_POSITIVE);
                (mu + sigma * std_normal_isf(q)).max(0.0)
            }
            DensityKind::PiecewiseLinear { knots } => {
                let target = u * self.piecewise_area();
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    let (x0, y0, x1, y1) = (w[0][0], w[0][1], w[1][0], w[1][1]);
                    let seg = 0.5 * (y0 + y1) * (x1 - x0);
                    if acc + seg >= target && seg > 0.0 {
                        let r = target - acc;
                        let slope = (y1 - y0) / (x1 - x0);
                        // Solve y0*s + slope*s^2/2 = r for s in [0, x1-x0].
                        let s = if slope.abs() < 1e-300 {
                            r / y0
                        } else {
                            let disc = (y0 * y0 + 2.0 * slope * r).max(0.0);
                            2.0 * r / (y0 + disc.sqrt())
                        };
                        return (x0 + s.clamp(0.0, x1 - x0)).max(0.0);
                    }
                    acc += seg;
                }
                knots[knots.len() - 1][0]
            }
            DensityKind::CappedPower { cap, power, right } => {
                let m = self.total_mass;
                let fit = fit_capped_power(*cap, *power, *right, m).expect("validated density");
                let target = u * m;
                let kink_mass = fit.c * fit.kink.powf(power + 1.0) / (power + 1.0);
                if target <= kink_mass {
                    (target * (power + 1.0) / fit.c).powf(1.0 / (power + 1.0))
                } else {
                    (fit.kink + (target - kink_mass) / cap).min(*right)
                }
            }
        }
    }

    /// Mean of the normalised density (as a probability law).
    pub fn mean(&self) -> f64 {
        match &self.kind {
            DensityKind::Uniform { a, b } => 0.5 * (a + b),
            DensityKind::Triangular { a, b, c } => (a + b + c) / 3.0,
            DensityKind::TruncGaussian { mu, sigma } => {
                let a = -mu / sigma;
                mu + sigma * std_normal_pdf(a) / std_normal_sf(a)
            }
            DensityKind::PiecewiseLinear { knots } => {
                let mut first = 0.0;
                for w in knots.windows(2) {
                    let (x0, y0, x1, y1) = (w[0][0], w[0][1], w[1][0], w[1][1]);
                    let h = x1 - x0;
                    // integral of x*y over the segment, y linear from y0 to y1
                    first += h * (y0 * (2.0 * x0 + x1) + y1 * (x0 + 2.0 * x1)) / 6.0;
                }
                first / self.piecewise_area()
            }
            DensityKind::CappedPower { cap, power, right } => {
                let m = self.total_mass;
                let fit = fit_capped_power(*cap, *power, *right, m).expect("validated density");
                let k = fit.kink.min(*right);
                let ramp = fit.c * k.powf(power + 2.0) / (power + 2.0);
                let flat = if k < *right { 0.5 * cap * (right * right - k * k) } else { 0.0 };
                (ramp + flat) / m
            }
        }
    }

    /// Supremum of the density over `[0, ∞)`.
    pub fn sup(&self) -> f64 {
        let m = self.total_mass;
        match &self.kind {
            DensityKind::Uniform { a, b } => m / (b - a),
            DensityKind::Triangular { a, c, .. } => 2.0 * m / (c - a),
            DensityKind::TruncGaussian { mu, .. } => self.eval_unchecked(mu.max(0.0)),
            DensityKind::PiecewiseLinear { knots } => {
                let ymax = knots.iter().map(|k| k[1]).fold(0.0, f64::max);
                m * ymax / self.piecewise_area()
            }
            DensityKind::CappedPower { cap, power, right } => {
                let fit = fit_capped_power(*cap, *power, *right, m).expect("validated density");
                cap.min(fit.c * right.powf(*power))
            }
        }
    }

    /// Average of the density over `[lo, hi]`.
    pub fn cell_average(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf(hi) - self.cdf(lo)) / (hi - lo)
    }
}

/// Draws `n` i.i.d. starting positions from `density / total_mass`.
///
/// Particle `i` uses its own stream, so the result is identical for any
/// evaluation order.
pub fn sample_initial(density: &InitialDensity, n: usize, streams: &Streams) -> Result<Vec<f64>> {
    density.validate()?;
    if n == 0 {
        return Err(Error::Input("sample_initial needs n >= 1".into()));
    }
    Ok((0..n as u64)
        .map(|i| {
            let u: f64 = streams.stream(Domain::Initial, i, 0).random();
            density.quantile(u)
        })
        .collect())
}
