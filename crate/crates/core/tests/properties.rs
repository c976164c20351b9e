use proptest::prelude::*;

use supercool::density::{sample_initial, InitialDensity};
use supercool::diagnostics::{
    classify_regime, detect_jumps, estimate_holder, JumpRule, RegimeOptions,
};
use supercool::frontier::{cascade_iterate, cascade_scan, cascade_select, physical_jump_from_cdf, picard_frontier};
use supercool::particle::ParticleEngine;
use supercool::rng::Streams;
use supercool::types::{DensitySnapshot, EnsembleState, FrontierPath};

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn ensemble() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-1.0f64..3.0, 0..300), 0.01f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scan_iterate_select_agree((xs, alpha) in ensemble()) {
        let mass = 1.0 / xs.len().max(1) as f64;
        let s = sorted(xs.clone());
        let a = cascade_scan(&s, alpha, mass).unwrap();
        let b = cascade_iterate(&xs, alpha, mass);
        let (c, idx) = cascade_select(&xs, alpha, mass);
        prop_assert_eq!(a.increment, b.increment);
        prop_assert_eq!(a.absorbed, b.absorbed);
        prop_assert_eq!(a.increment, c.increment);
        prop_assert_eq!(a.absorbed, c.absorbed);
        prop_assert_eq!(idx.len(), a.absorbed);
        prop_assert!(idx.iter().all(|&i| xs[i] <= a.increment));
        prop_assert!(b.iterations <= xs.len() + 1);
    }

    #[test]
    fn adding_absorbed_particle_never_decreases((xs, alpha) in ensemble(), frac in 0.0f64..1.0) {
        let mass = 0.01;
        let d0 = cascade_iterate(&xs, alpha, mass).increment;
        let mut more = xs.clone();
        more.push(d0 * frac - 1e-3);
        prop_assert!(cascade_iterate(&more, alpha, mass).increment >= d0);
    }

    #[test]
    fn translating_down_never_decreases((xs, alpha) in ensemble(), shift in 0.0f64..1.0) {
        let mass = 0.01;
        let d0 = cascade_iterate(&xs, alpha, mass).increment;
        let down: Vec<f64> = xs.iter().map(|x| x - shift).collect();
        prop_assert!(cascade_iterate(&down, alpha, mass).increment >= d0);
    }

    /// Prior absorption of the non-positive part, repeated shifts until no
    /// particle sits in (0, D], then one jump on the shifted empirical CDF.
    #[test]
    fn cdf_jump_reproduces_cascade((xs, alpha) in ensemble()) {
        let mass = 1.0 / xs.len().max(1) as f64;
        let s = sorted(xs);
        let want = cascade_scan(&s, alpha, mass).unwrap().increment;
        let count = |lo: f64, hi: f64| s.iter().filter(|&&x| x > lo && x <= hi).count() as f64;
        let mut d = alpha * mass * s.iter().filter(|&&x| x <= 0.0).count() as f64;
        let mut prev = 0.0;
        loop {
            let c = count(prev, d);
            if c == 0.0 {
                break;
            }
            prev = d;
            d += alpha * mass * c;
        }
        let base = d;
        let cdf = |u: f64| mass * count(base, base + u);
        let resolution = 1e-3;
        let delta = physical_jump_from_cdf(cdf, 10.0, alpha, resolution).unwrap();
        prop_assert!((base + delta - want).abs() <= resolution, "{} + {} vs {}", base, delta, want);
    }

    #[test]
    fn picard_monotone_and_bounded(seed in 0u64..1000, n in 1usize..400, alpha in 0.05f64..2.0) {
        let streams = Streams::new(seed);
        let xs = sample_initial(&InitialDensity::uniform(0.0, 1.0), n, &streams).unwrap();
        let st = EnsembleState::new(xs, alpha, 1.0);
        let r = picard_frontier(&st, 1e-3, 50, 16, &streams, 1).unwrap();
        prop_assert!(r.iterates.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(r.iterates.iter().all(|&l| l <= alpha * st.alive_mass() * (1.0 + 1e-12)));
    }

    #[test]
    fn particle_conservation_exact(seed in 0u64..10_000, alpha in 0.1f64..3.0) {
        let streams = Streams::new(seed);
        let xs = sample_initial(&InitialDensity::uniform(0.0, 1.0), 500, &streams).unwrap();
        let mut e = ParticleEngine::new(EnsembleState::new(xs, alpha, 1.0), streams, true);
        let mut last = e.state.lambda;
        for _ in 0..50 {
            e.euler_step(1e-3);
            prop_assert!(e.state.conservation_residual() <= 4.0 * f64::EPSILON);
            prop_assert!(e.state.lambda >= last);
            last = e.state.lambda;
        }
    }

    #[test]
    fn coupling_is_monotone_in_alpha(seed in 0u64..10_000, a1 in 0.1f64..2.0, extra in 0.0f64..1.0) {
        let streams = Streams::new(seed);
        let xs = sample_initial(&InitialDensity::uniform(0.0, 0.8), 400, &streams).unwrap();
        let mut lo = ParticleEngine::new(EnsembleState::new(xs.clone(), a1, 1.0), streams, true);
        let mut hi = ParticleEngine::new(EnsembleState::new(xs, a1 + extra, 1.0), streams, true);
        for _ in 0..40 {
            lo.euler_step(1e-3);
            hi.euler_step(1e-3);
            prop_assert!(hi.state.lambda >= lo.state.lambda);
            prop_assert!(hi.state.alive_count() <= lo.state.alive_count());
        }
    }

    #[test]
    fn classifier_scale_consistent(kind in 0usize..4, c in 0.2f64..5.0, level in 0.1f64..1.5) {
        let f = move |x: f64| -> f64 {
            if x <= 0.0 { return 0.0; }
            match kind {
                0 => level * x * (-x).exp(),
                1 => level * x.sqrt(),
                2 => level,
                _ => level + x,
            }
        };
        let s = DensitySnapshot::from_fn(0.0, 1e-3, 200, f);
        let scaled = DensitySnapshot::from_fn(0.0, 1e-3, 200, move |x| c * f(x));
        let opts = RegimeOptions::from_config(&Default::default());
        let a = classify_regime(&s, 1.0, &opts).unwrap();
        let b = classify_regime(&scaled, 1.0 / c, &opts).unwrap();
        let near = (a.rho_at_zero - (1.0 - opts.rho_margin)).abs() < 1e-9;
        prop_assume!(!near);
        prop_assert_eq!(a.regime, b.regime);
    }

    #[test]
    fn holder_recovers_power_laws(beta in 0.1f64..2.0, c in 0.1f64..10.0) {
        let mut p = FrontierPath::default();
        for k in 0..=200 {
            let t = k as f64 * 1e-4;
            p.push(t, c * t.powf(beta), 1.0);
        }
        let fit = estimate_holder(&p, 0.0, (1e-4, 1e-2)).unwrap();
        prop_assert!((fit.exponent - beta).abs() < 1e-6);
        prop_assert!((fit.constant - c).abs() < 1e-6 * c);
    }

    #[test]
    fn jump_detection_idempotent_and_bounded(incs in prop::collection::vec(0.0f64..1e-3, 50..400), spikes in prop::collection::vec((0usize..400, 0.0f64..1.0), 0..4)) {
        let mut v = incs;
        for (i, s) in spikes {
            let k = i % v.len();
            v[k] += s;
        }
        let mut p = FrontierPath::default();
        let mut acc = 0.0;
        p.push(0.0, 0.0, 1.0);
        for (k, d) in v.iter().enumerate() {
            acc += d;
            p.push((k + 1) as f64 * 1e-3, acc, 1.0);
        }
        let rule = JumpRule { k_sigma: 50.0, window: 25, floor: 1e-2 };
        let j1 = detect_jumps(&p, &rule);
        let j2 = detect_jumps(&p, &rule);
        prop_assert_eq!(&j1, &j2);
        let total: f64 = j1.iter().map(|j| j.size).sum();
        prop_assert!(total <= acc * (1.0 + 1e-12));
    }
}

#[test]
fn sample_ks_distance_within_bound() {
    let n = 100_000;
    let presets = [
        InitialDensity::uniform(0.0, 2.0),
        InitialDensity::triangular(0.0, 1.0, 2.0),
        InitialDensity::trunc_gaussian(1.0, 0.2),
        InitialDensity::piecewise_linear(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]),
    ];
    for d in presets {
        let xs = sorted(sample_initial(&d, n, &Streams::new(17)).unwrap());
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = d.cdf(x) / d.total_mass;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 1.63 / (n as f64).sqrt(), "{d:?}: KS = {ks}");
    }
}
