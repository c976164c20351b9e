//! Verdicts on solver output: jumps, regimes, growth exponents, decay near the
//! boundary, frontier speed and monotonicity of density profiles.

use serde::{Deserialize, Serialize};

use crate::config::DiagnosticOptions;
use crate::error::{Error, Result};
use crate::types::{DensitySnapshot, FrontierPath, Jump, Regime, RegimeLabel};

/// `|lambda/alpha + mass - total_mass|`; with `alpha = 0` the frontier carries
/// no information about absorbed mass and the residual is `|lambda|`.
pub fn mass_check(lambda: f64, mass: f64, alpha: f64, total_mass: f64) -> f64 {
    if alpha == 0.0 {
        return lambda.abs();
    }
    (lambda / alpha + mass - total_mass).abs()
}

/// Ordinary least squares `y = a + b x`. Returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (a, b, _) = linear_fit_r2(xs, ys);
    (a, b)
}

fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    (a, b, r2)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRule {
    pub k_sigma: f64,
    /// Half-width, in steps, of the window the robust background is taken over.
    pub window: usize,
    /// Increments at or below this are never jumps.
    pub floor: f64,
}

impl JumpRule {
    pub fn particle(opts: &DiagnosticOptions, alpha: f64, particle_mass: f64) -> Self {
        Self { k_sigma: opts.k_sigma, window: opts.jump_window, floor: 10.0 * alpha * particle_mass }
    }

    pub fn pde(opts: &DiagnosticOptions, dx: f64) -> Self {
        Self { k_sigma: opts.k_sigma, window: opts.jump_window, floor: 10.0 * dx }
    }
}

/// Flags step increments above `median + k_sigma * 1.4826 * MAD` of the
/// surrounding increments and above the floor. Consecutive flags merge into
/// one jump, reported at the end of its first flagged step.
pub fn detect_jumps(frontier: &FrontierPath, rule: &JumpRule) -> Vec<Jump> {
    let inc = frontier.increments();
    let n = inc.len();
    let mut flags = vec![false; n];
    let mut buf = Vec::with_capacity(2 * rule.window + 1);
    for i in 0..n {
        if !(inc[i] > rule.floor) {
            continue;
        }
        let lo = i.saturating_sub(rule.window);
        let hi = (i + rule.window + 1).min(n);
        buf.clear();
        buf.extend_from_slice(&inc[lo..hi]);
        let med = median(&mut buf);
        for v in buf.iter_mut() {
            *v = (*v - med).abs();
        }
        let mad = median(&mut buf);
        flags[i] = inc[i] > med + rule.k_sigma * 1.4826 * mad;
    }
    let mut jumps = Vec::new();
    let mut i = 0;
    while i < n {
        if flags[i] {
            let time = frontier.times[i + 1];
            let mut size = 0.0;
            while i < n && flags[i] {
                size += inc[i];
                i += 1;
            }
            jumps.push(Jump { time, size });
        } else {
            i += 1;
        }
    }
    jumps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeOptions {
    /// Relative margin below `1/alpha` from which the boundary value counts as a jump.
    pub rho_margin: f64,
    pub exponent_threshold: f64,
    pub slope_cap: f64,
    /// Lower bound on the fit window (e.g. twenty interparticle spacings).
    pub min_window: f64,
}

impl RegimeOptions {
    pub fn from_config(opts: &DiagnosticOptions) -> Self {
        Self {
            rho_margin: opts.rho_margin,
            exponent_threshold: opts.exponent_threshold,
            slope_cap: opts.slope_cap,
            min_window: 0.0,
        }
    }

    pub fn with_min_window(mut self, w: f64) -> Self {
        self.min_window = w;
        self
    }
}

/// Twenty interparticle spacings at the mean density of the positive part of
/// `snapshot`.
pub fn particle_min_window(snapshot: &DensitySnapshot, particle_mass: f64) -> f64 {
    let pos: Vec<f64> = snapshot.values.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return 0.0;
    }
    let mean = pos.iter().sum::<f64>() / pos.len() as f64;
    20.0 * particle_mass / mean
}

/// Local fit of the density near the boundary and the resulting regime.
///
/// The boundary value is the intercept of a least-squares line through the
/// nodes in `(0, w]`, `w = max(10 dx, min_window)`; the growth exponent is the
/// log-log slope through the positive nodes of the same window and the slope
/// ratio is `rho(x_1) / x_1` at the first interior node.
pub fn classify_regime(snapshot: &DensitySnapshot, alpha: f64, opts: &RegimeOptions) -> Result<RegimeLabel> {
    let dx = snapshot.dx;
    let w = (10.0 * dx).max(opts.min_window);
    let nodes: Vec<usize> = (1..snapshot.len()).take_while(|&i| snapshot.x(i) <= w * (1.0 + 1e-9)).collect();
    if nodes.len() < 8 {
        return Err(Error::Inconclusive(format!(
            "boundary window (0, {w}] holds {} grid points, need 8",
            nodes.len()
        )));
    }
    let xs: Vec<f64> = nodes.iter().map(|&i| snapshot.x(i)).collect();
    let ys: Vec<f64> = nodes.iter().map(|&i| snapshot.values[i]).collect();
    let (rho0, _) = linear_fit(&xs, &ys);
    let rho0 = rho0.max(0.0);
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs.iter().zip(&ys).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).unzip();
    let exponent = if lx.len() >= 2 { linear_fit(&lx, &ly).1 } else { f64::INFINITY };
    let slope_ratio = ys[0] / xs[0];
    let regime = if rho0 * alpha >= 1.0 - opts.rho_margin {
        Regime::Jump
    } else if exponent >= opts.exponent_threshold && alpha * slope_ratio <= opts.slope_cap {
        Regime::Differentiable
    } else {
        Regime::Hoelder
    };
    Ok(RegimeLabel { regime, rho_at_zero: rho0, slope_ratio, exponent, window: (0.0, w) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub exponent: f64,
    pub constant: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Fits `log(L(t+s) - L(t))` against `log s` over `s = s_min 2^k <= s_max`.
pub fn estimate_holder(frontier: &FrontierPath, t: f64, window: (f64, f64)) -> Result<HolderFit> {
    let (s_min, s_max) = window;
    if !(s_min > 0.0 && s_min < s_max) {
        return Err(Error::Input(format!("Hoelder window ({s_min}, {s_max}) must satisfy 0 < s_min < s_max")));
    }
    let (t0, t1) = match (frontier.times.first(), frontier.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Input("empty frontier".into())),
    };
    if t < t0 || t + s_max > t1 * (1.0 + 1e-12) {
        return Err(Error::Input(format!("window [{t}, {}] leaves the recorded range [{t0}, {t1}]", t + s_max)));
    }
    let base = frontier.interpolate(t);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut s = s_min;
    while s <= s_max * (1.0 + 1e-12) {
        let d = frontier.interpolate(t + s) - base;
        if !(d > 0.0) {
            return Err(Error::Inconclusive(format!("non-positive increment {d} at s = {s}")));
        }
        xs.push(s.ln());
        ys.push(d.ln());
        s *= 2.0;
    }
    if xs.len() < 2 {
        return Err(Error::Inconclusive("window holds fewer than two dyadic points".into()));
    }
    let (a, b, r2) = linear_fit_r2(&xs, &ys);
    Ok(HolderFit { exponent: b, constant: a.exp(), r_squared: r2, window })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    Holder,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub constant: f64,
    /// Fitted exponent in Hoelder mode, 1 in linear mode.
    pub exponent: f64,
    /// Nodes in the window above 1.1 times the fitted bound.
    pub exceedances: usize,
}

/// Fits `p <= C min(x, 1)` (linear) or `p <= C x^chi` (Hoelder) over `(0, w]`.
pub fn check_decay(snapshot: &DensitySnapshot, mode: DecayMode, w: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> =
        (1..snapshot.len()).map(|i| (snapshot.x(i), snapshot.values[i])).take_while(|(x, _)| *x <= w * (1.0 + 1e-9)).collect();
    if pts.len() < 2 {
        return Err(Error::Inconclusive(format!("decay window (0, {w}] holds fewer than two nodes")));
    }
    let (constant, exponent) = match mode {
        DecayMode::Linear => {
            let num: f64 = pts.iter().map(|(x, p)| p * x.min(1.0)).sum();
            let den: f64 = pts.iter().map(|(x, _)| x.min(1.0).powi(2)).sum();
            (num / den, 1.0)
        }
        DecayMode::Holder => {
            let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().filter(|(_, p)| *p > 0.0).map(|(x, p)| (x.ln(), p.ln())).unzip();
            if lx.len() < 2 {
                return Err(Error::Inconclusive("fewer than two positive nodes in the decay window".into()));
            }
            let (a, b) = linear_fit(&lx, &ly);
            (a.exp(), b)
        }
    };
    let bound = |x: f64| match mode {
        DecayMode::Linear => constant * x.min(1.0),
        DecayMode::Holder => constant * x.powf(exponent),
    };
    let exceedances = pts.iter().filter(|(x, p)| *p > 1.1 * bound(*x) + 1e-300).count();
    Ok(DecayFit { constant, exponent, exceedances })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedCheck {
    pub positive: bool,
    pub min_estimate: f64,
    pub points: usize,
}

/// Central differences `(L(t+h) - L(t-h)) / 2h` at every recorded time with
/// `[t-h, t+h]` inside `window`.
pub fn lambda_dot_positive(frontier: &FrontierPath, window: (f64, f64), h: f64) -> Result<SpeedCheck> {
    let (a, b) = window;
    let tol = 1e-12 * b.abs().max(1.0);
    let mut min = f64::INFINITY;
    let mut points = 0;
    for &t in &frontier.times {
        if t - h < a - tol || t + h > b + tol {
            continue;
        }
        let d = (frontier.interpolate(t + h) - frontier.interpolate(t - h)) / (2.0 * h);
        min = min.min(d);
        points += 1;
    }
    if points == 0 {
        return Err(Error::Inconclusive(format!("window [{a}, {b}] has no interior point for h = {h}")));
    }
    Ok(SpeedCheck { positive: min > 0.0, min_estimate: min, points })
}

/// Sign changes of the first difference after a centred moving average of
/// half-width `bandwidth` (in x units).
pub fn count_monotonicity_changes(snapshot: &DensitySnapshot, bandwidth: f64) -> usize {
    let v = &snapshot.values;
    let n = v.len();
    if n < 3 {
        return 0;
    }
    let k = (bandwidth / snapshot.dx).round().max(0.0) as usize;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + v[i];
    }
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(k);
            let hi = (i + k + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    let diffs: Vec<f64> = smooth.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut changes = 0;
    let mut last = 0.0f64;
    for d in diffs {
        if d.abs() <= 1e-12 * scale {
            continue;
        }
        if last != 0.0 && d.signum() != last {
            changes += 1;
        }
        last = d.signum();
    }
    changes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(f: impl Fn(f64) -> f64, dt: f64, n: usize) -> FrontierPath {
        let mut p = FrontierPath::default();
        for k in 0..=n {
            let t = k as f64 * dt;
            p.push(t, f(t), 1.0);
        }
        p
    }

    fn opts() -> RegimeOptions {
        RegimeOptions::from_config(&DiagnosticOptions::default())
    }

    #[test]
    fn mass_check_examples() {
        assert_eq!(mass_check(2.0, 0.0, 2.0, 1.0), 0.0);
        assert_eq!(mass_check(0.5, 0.75, 2.0, 1.0), 0.0);
        assert_eq!(mass_check(0.0, 0.3, 0.0, 1.0), 0.0);
    }

    #[test]
    fn linear_frontier_has_no_jumps() {
        let p = path(|t| t, 1e-4, 2000);
        let rule = JumpRule { k_sigma: 50.0, window: 25, floor: 1e-2 };
        assert!(detect_jumps(&p, &rule).is_empty());
    }

    #[test]
    fn inserted_step_is_one_jump() {
        let p = path(|t| t + if t >= 0.1 { 0.3 } else { 0.0 }, 1e-4, 2000);
        let rule = JumpRule { k_sigma: 50.0, window: 25, floor: 1e-2 };
        let j = detect_jumps(&p, &rule);
        assert_eq!(j.len(), 1);
        assert!((j[0].size - 0.3).abs() < 1e-3);
        assert!((j[0].time - 0.1).abs() < 1.5e-4);
    }

    #[test]
    fn consecutive_flags_merge() {
        let p = path(|t| t + if t >= 0.1 { 0.2 } else { 0.0 } + if t >= 0.1001 { 0.1 } else { 0.0 }, 1e-4, 2000);
        let rule = JumpRule { k_sigma: 50.0, window: 25, floor: 1e-2 };
        let j = detect_jumps(&p, &rule);
        assert_eq!(j.len(), 1);
        assert!((j[0].size - 0.3).abs() < 1e-3);
    }

    fn fixture(f: impl Fn(f64) -> f64) -> DensitySnapshot {
        DensitySnapshot::from_fn(0.0, 1e-3, 2001, f)
    }

    type Profile = Box<dyn Fn(f64) -> f64>;

    #[test]
    fn nine_fixtures() {
        let cases: Vec<(Profile, Regime)> = vec![
            (Box::new(|x: f64| x * (-x).exp()), Regime::Differentiable),
            (Box::new(|x: f64| 2.0 * x * (-x).exp()), Regime::Differentiable),
            (Box::new(|x: f64| 0.5 * x.sin()), Regime::Differentiable),
            (Box::new(|x: f64| 0.5 * x.sqrt()), Regime::Hoelder),
            (Box::new(|x: f64| 0.3 * x.cbrt()), Regime::Hoelder),
            (Box::new(|x: f64| if x > 0.0 { 0.5 } else { 0.0 }), Regime::Hoelder),
            (Box::new(|x: f64| if x > 0.0 { 1.2 } else { 0.0 }), Regime::Jump),
            (Box::new(|x: f64| if x > 0.0 { 1.5 - x } else { 0.0 }), Regime::Jump),
            (Box::new(|x: f64| if x > 0.0 { 1.0 + x.sqrt() } else { 0.0 }), Regime::Jump),
        ];
        for (i, (f, want)) in cases.into_iter().enumerate() {
            let label = classify_regime(&fixture(f), 1.0, &opts()).unwrap();
            assert_eq!(label.regime, want, "fixture {i}: {label:?}");
        }
    }

    #[test]
    fn threshold_flip() {
        let s = fixture(|x| if x > 0.0 { 0.8 } else { 0.0 });
        assert_eq!(classify_regime(&s, 1.0, &opts()).unwrap().regime, Regime::Hoelder);
        assert_eq!(classify_regime(&s, 1.5, &opts()).unwrap().regime, Regime::Jump);
    }

    #[test]
    fn short_window_is_inconclusive() {
        let s = DensitySnapshot::from_fn(0.0, 1e-3, 5, |x| x);
        assert!(matches!(classify_regime(&s, 1.0, &opts()), Err(Error::Inconclusive(_))));
    }

    #[test]
    fn holder_exact_power_laws() {
        let p = path(f64::sqrt, 1e-4, 200);
        let fit = estimate_holder(&p, 0.0, (1e-4, 1e-2)).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
        let p = path(|t| t, 1e-4, 200);
        let fit = estimate_holder(&p, 0.0, (1e-4, 1e-2)).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-9);
    }

    #[test]
    fn holder_perturbed() {
        let p = path(|t| t.sqrt() * (1.0 + 0.01 * (t * 1e4).sin()), 1e-4, 200);
        let fit = estimate_holder(&p, 0.0, (1e-4, 1e-2)).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.05);
    }

    #[test]
    fn holder_flat_is_inconclusive() {
        let p = path(|_| 1.0, 1e-4, 200);
        assert!(matches!(estimate_holder(&p, 0.0, (1e-4, 1e-2)), Err(Error::Inconclusive(_))));
        assert!(matches!(estimate_holder(&p, 0.0, (1e-4, 1.0)), Err(Error::Input(_))));
    }

    #[test]
    fn decay_examples() {
        let s = DensitySnapshot::from_fn(0.0, 1e-3, 3001, |x| 0.3 * x.min(1.0));
        let fit = check_decay(&s, DecayMode::Linear, 2.0).unwrap();
        assert!((fit.constant - 0.3).abs() < 1e-9);
        assert_eq!(fit.exceedances, 0);
        let s = DensitySnapshot::from_fn(0.0, 1e-3, 3001, |x| 0.3 * x.sqrt());
        let fit = check_decay(&s, DecayMode::Holder, 0.5).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-9);
        assert!((fit.constant - 0.3).abs() < 1e-9);
    }

    #[test]
    fn speed_examples() {
        let p = path(|t| 2.0 * t, 1e-3, 1000);
        let c = lambda_dot_positive(&p, (0.0, 1.0), 0.01).unwrap();
        assert!(c.positive);
        assert!((c.min_estimate - 2.0).abs() < 1e-9);
        let p = path(|_| 0.4, 1e-3, 1000);
        assert!(!lambda_dot_positive(&p, (0.0, 1.0), 0.01).unwrap().positive);
    }

    #[test]
    fn monotonicity_examples() {
        let bump = DensitySnapshot::from_fn(0.0, 1e-2, 1001, |x| (-(x - 5.0).powi(2)).exp());
        assert_eq!(count_monotonicity_changes(&bump, 0.05), 1);
        let dec = DensitySnapshot::from_fn(0.0, 1e-2, 1001, |x| (-x).exp());
        assert_eq!(count_monotonicity_changes(&dec, 0.05), 0);
        let two = DensitySnapshot::from_fn(0.0, 1e-2, 1001, |x| (-(x - 3.0).powi(2)).exp() + (-(x - 7.0).powi(2)).exp());
        assert_eq!(count_monotonicity_changes(&two, 0.05), 3);
    }
}
