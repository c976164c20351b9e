//! Acceptance criteria A1-A10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use supercool::cli::frontier_distance;
use supercool::density::{sample_initial, InitialDensity};
use supercool::diagnostics::{classify_regime, estimate_holder, lambda_dot_positive, mass_check, RegimeOptions};
use supercool::frontier::{cascade_iterate, cascade_scan, picard_frontier};
use supercool::oracles::{bridge_density, reflection_density};
use supercool::particle::{run_particle, ParticleEngine, ParticleRun};
use supercool::pde::{run_pde, PdeRun};
use supercool::rng::Streams;
use supercool::types::{DensitySnapshot, EnsembleState, FrontierPath, Regime};
use supercool::Config;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn blowup_config(seed: u64) -> Config {
    let mut c = Config::new(2.0, 1.0, 1e-4, InitialDensity::uniform(0.0, 0.5));
    c.particle.n_particles = 100_000;
    c.seed = seed;
    c
}

fn nojump_config(seed: u64) -> Config {
    let mut c = Config::new(0.5, 1.0, 1e-4, InitialDensity::uniform(0.0, 2.0));
    c.particle.n_particles = 100_000;
    c.seed = seed;
    c
}

struct Runs {
    blowup: Vec<ParticleRun>,
    nojump: Vec<ParticleRun>,
    nojump_times: Vec<Duration>,
    blowup_pde: PdeRun,
    nojump_pde: PdeRun,
    nojump_pde_time: Duration,
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let blowup = SEEDS.iter().map(|&s| run_particle(&blowup_config(s)).expect("blow-up run")).collect();
        let mut nojump = Vec::new();
        let mut nojump_times = Vec::new();
        for &s in &SEEDS {
            let t = Instant::now();
            nojump.push(run_particle(&nojump_config(s)).expect("control run"));
            nojump_times.push(t.elapsed());
        }
        let blowup_pde = run_pde(&blowup_config(0)).expect("blow-up pde");
        let t = Instant::now();
        let nojump_pde = run_pde(&nojump_config(0)).expect("control pde");
        Runs { blowup, nojump, nojump_times, blowup_pde, nojump_pde, nojump_pde_time: t.elapsed() }
    })
}

fn a1() -> Verdict {
    let start = Instant::now();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let m = rng.random_range(0..=1000usize);
        let alpha = 3.0 * (1.0 - rng.random::<f64>());
        let mass = 1.0 / m.max(1) as f64;
        let mut xs: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..3.0)).collect();
        xs.sort_by(f64::total_cmp);
        let a = cascade_scan(&xs, alpha, mass).expect("sorted");
        let b = cascade_iterate(&xs, alpha, mass);
        if a.increment != b.increment || a.absorbed != b.absorbed {
            mismatches += 1;
        }
    }
    let el = start.elapsed();
    verdict(
        mismatches == 0 && el < Duration::from_secs(5),
        format!("{mismatches} mismatches in 10000 instances, {:.2}s (limit 5s)", el.as_secs_f64()),
    )
}

fn a2() -> Verdict {
    let mut worst = 0.0f64;
    let mut monotone = true;
    for seed in 0..10u64 {
        for (alpha, d) in [(2.0, InitialDensity::uniform(0.0, 0.5)), (0.5, InitialDensity::uniform(0.0, 2.0))] {
            let streams = Streams::new(seed);
            let xs = sample_initial(&d, 20_000, &streams).expect("sample");
            let mut e = ParticleEngine::new(EnsembleState::new(xs, alpha, 1.0), streams, true);
            let mut last = e.state.lambda;
            worst = worst.max(e.state.conservation_residual());
            for _ in 0..2000 {
                e.euler_step(1e-4);
                worst = worst.max(e.state.conservation_residual());
                monotone &= e.state.lambda >= last;
                last = e.state.lambda;
            }
        }
    }
    let ulp4 = 4.0 * f64::EPSILON;
    let r = runs();
    let pde_res = [(&r.nojump_pde, 0.5), (&r.blowup_pde, 2.0)]
        .iter()
        .map(|(run, alpha)| {
            let k = run.frontier.len() - 1;
            mass_check(run.frontier.values[k], run.frontier.mass[k], *alpha, 1.0)
        })
        .fold(0.0f64, f64::max);
    verdict(
        worst <= ulp4 && monotone && pde_res <= 1e-3,
        format!("particle max residual {worst:e} (limit {ulp4:e}), monotone {monotone}; PDE residual at t=1 {pde_res:e} (limit 1e-3)"),
    )
}

fn reflection_bin(a: f64, b: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("normal");
    (n.cdf(b - 1.0) - n.cdf(a - 1.0)) - (n.cdf(b + 1.0) - n.cdf(a + 1.0))
}

fn a3() -> Verdict {
    let start = Instant::now();
    let mut c = Config::new(0.0, 1.0, 1e-4, InitialDensity::trunc_gaussian(1.0, 1e-6));
    c.particle.n_particles = 100_000;
    let run = run_particle(&c).expect("alpha = 0 run");
    let el = start.elapsed();
    let n = c.particle.n_particles as f64;
    let bins = 100;
    let w = 0.05;
    let mut counts = vec![0.0; bins];
    for x in run.state.alive_positions() {
        let k = (x / w) as usize;
        if k < bins {
            counts[k] += 1.0;
        }
    }
    // Sanity anchor for the bin probabilities: the midpoint density.
    let mid = reflection_density(1.0, 1.0, 1.0).expect("oracle");
    assert!((reflection_bin(0.975, 1.025) / 0.05 - mid).abs() < 1e-3);
    let mut outside = 0;
    let mut chi2 = 0.0;
    let mut rest_obs = n;
    let mut rest_p = 1.0;
    for (k, &o) in counts.iter().enumerate() {
        let p = reflection_bin(k as f64 * w, (k + 1) as f64 * w);
        let e = n * p;
        let se = (n * p * (1.0 - p)).sqrt();
        if (o - e).abs() > 3.0 * se {
            outside += 1;
        }
        chi2 += (o - e).powi(2) / e;
        rest_obs -= o;
        rest_p -= p;
    }
    chi2 += (rest_obs - n * rest_p).powi(2) / (n * rest_p);
    let pval = 1.0 - ChiSquared::new(bins as f64).expect("chi2").cdf(chi2);
    verdict(
        outside == 0 && pval > 1e-3 && el < Duration::from_secs(60),
        format!("{outside}/100 bins outside 3 SE, chi2 = {chi2:.1} (df 100), p = {pval:.4}, run {:.1}s (limit 60s)", el.as_secs_f64()),
    )
}

fn a4() -> Verdict {
    let r = runs();
    let mc: Vec<usize> = r.blowup.iter().map(|p| p.summary.jumps.len()).collect();
    let pde = r.blowup_pde.summary.jumps.len();
    let ctrl: Vec<usize> = r.nojump.iter().map(|p| p.summary.jumps.len()).collect();
    let pass = mc.iter().all(|&j| j >= 1) && pde >= 1 && ctrl.iter().all(|&j| j == 0);
    verdict(pass, format!("blow-up jumps per seed {mc:?}, PDE {pde}; control jumps per seed {ctrl:?}"))
}

fn a5() -> Verdict {
    let r = runs();
    let (d, at) = frontier_distance(&r.nojump[0].frontier, &r.nojump_pde.frontier);
    let el = r.nojump_times[0] + r.nojump_pde_time;
    let jm = r.blowup[0].summary.jumps.first();
    let jp = r.blowup_pde.summary.jumps.first();
    let (dt_j, ds_j) = match (jm, jp) {
        (Some(a), Some(b)) => ((a.time - b.time).abs(), (a.size - b.size).abs()),
        _ => (f64::INFINITY, f64::INFINITY),
    };
    verdict(
        d <= 0.02 && el < Duration::from_secs(300) && dt_j <= 0.01 && ds_j <= 0.05,
        format!(
            "control sup|dL| = {d:.5} at t = {at} (limit 0.02), {:.1}s (limit 300s); blow-up jump time diff {dt_j:e} (limit 0.01), size diff {ds_j:.4} (limit 0.05)",
            el.as_secs_f64()
        ),
    )
}

fn a6() -> Verdict {
    let mut c = Config::new(1.0, 0.011, 1e-5, InitialDensity::capped_power(0.9, 1.0 / 3.0, 1.1112));
    c.grid.dx = 1e-3;
    c.snapshot_times = vec![0.0];
    let run = run_pde(&c).expect("pde run");
    let label = classify_regime(&run.snapshots[0], 1.0, &RegimeOptions::from_config(&c.diagnostics));
    let regime_ok = matches!(&label, Ok(l) if l.regime == Regime::Hoelder);
    match estimate_holder(&run.frontier, 0.0, (1e-4, 1e-2)) {
        Ok(fit) => verdict(
            regime_ok && (0.4..=0.6).contains(&fit.exponent) && fit.r_squared >= 0.95,
            format!(
                "start regime {:?}, exponent {:.4} (window [0.4, 0.6]), r2 {:.5} (limit 0.95), jumps {}",
                label.map(|l| l.regime),
                fit.exponent,
                fit.r_squared,
                run.summary.jumps.len()
            ),
        ),
        Err(e) => verdict(false, format!("fit failed: {e}")),
    }
}

fn fixture(f: impl Fn(f64) -> f64) -> DensitySnapshot {
    DensitySnapshot::from_fn(0.0, 1e-3, 2001, f)
}

fn a7() -> Verdict {
    let opts = RegimeOptions::from_config(&Default::default());
    let pos = |f: fn(f64) -> f64| move |x: f64| if x > 0.0 { f(x) } else { 0.0 };
    let cases: Vec<(DensitySnapshot, Regime)> = vec![
        (fixture(|x| x * (-x).exp()), Regime::Differentiable),
        (fixture(|x| 2.0 * x * (-x).exp()), Regime::Differentiable),
        (fixture(|x| 0.5 * x.sin()), Regime::Differentiable),
        (fixture(|x| 0.5 * x.sqrt()), Regime::Hoelder),
        (fixture(|x| 0.3 * x.cbrt()), Regime::Hoelder),
        (fixture(pos(|_| 0.5)), Regime::Hoelder),
        (fixture(pos(|_| 1.2)), Regime::Jump),
        (fixture(pos(|x| 1.5 - x)), Regime::Jump),
        (fixture(pos(|x| 1.0 + x.sqrt())), Regime::Jump),
    ];
    let mut correct = 0;
    for (s, want) in &cases {
        if classify_regime(s, 1.0, &opts).map(|l| l.regime).ok() == Some(*want) {
            correct += 1;
        }
    }
    let flip = fixture(pos(|_| 0.8));
    let lo = classify_regime(&flip, 1.0, &opts).map(|l| l.regime).ok();
    let hi = classify_regime(&flip, 1.5, &opts).map(|l| l.regime).ok();
    verdict(
        correct == 9 && lo == Some(Regime::Hoelder) && hi == Some(Regime::Jump),
        format!("{correct}/9 fixtures correct; rho(0+) = 0.8 gives {lo:?} at alpha 1 and {hi:?} at alpha 1.5"),
    )
}

fn a8() -> Verdict {
    let d = InitialDensity::uniform(0.0, 1.0);
    let eps = [1e-4, 4e-4, 16e-4];
    let mut monotone = true;
    let mut ratios = Vec::new();
    let mut all_converged = true;
    for &seed in &SEEDS {
        let streams = Streams::new(seed);
        let xs = sample_initial(&d, 100_000, &streams).expect("sample");
        let state = EnsembleState::new(xs, 0.5, 1.0);
        let mut limits = Vec::new();
        for (k, &e) in eps.iter().enumerate() {
            let r = picard_frontier(&state, e, 200, 64, &streams, k as u64 + 1).expect("picard");
            monotone &= r.iterates.windows(2).all(|w| w[1] >= w[0]);
            all_converged &= r.converged;
            limits.push(*r.iterates.last().expect("iterates"));
        }
        ratios.push((limits[1] / limits[0], limits[2] / limits[1]));
    }
    let (lo, hi) = (2.0 / 1.5, 2.0 * 1.5);
    let in_band = ratios.iter().all(|&(a, b)| (lo..=hi).contains(&a) && (lo..=hi).contains(&b));
    let shown: Vec<String> = ratios.iter().map(|(a, b)| format!("({a:.3}, {b:.3})")).collect();
    verdict(
        in_band && monotone,
        format!(
            "L ratios per seed {} (band [{lo:.3}, {hi:.3}]), iterates monotone {monotone}, converged {all_converged}",
            shown.join(" ")
        ),
    )
}

fn a9() -> Verdict {
    let mut c = Config::new(0.5, 0.5, 1e-4, InitialDensity::uniform(0.0, 2.0));
    c.particle.n_particles = 100_000;
    let run = run_particle(&c).expect("run");
    let mass = c.particle_mass();
    let w = 0.05;
    let alive = run.state.alive_positions();
    let streams = Streams::new(c.seed ^ 0xb1d6e);
    let mut agree = 0;
    let mut rows = Vec::new();
    for j in 0..10 {
        let y = 0.25 * (j + 1) as f64;
        let count = alive.iter().filter(|&&x| x >= y - 0.5 * w && x < y + 0.5 * w).count() as f64;
        let h = count * mass / w;
        let se_h = count.sqrt() * mass / w;
        let (b, se_b) = bridge_density(0.5, y, &run.frontier, &c.density, 10_000, &streams).expect("bridge");
        let z = (h - b).abs() / (se_h * se_h + se_b * se_b).sqrt();
        if z <= 3.0 {
            agree += 1;
        }
        rows.push(format!("{z:.2}"));
    }
    verdict(agree >= 9, format!("{agree}/10 points within 3 combined SE (need 9); |z| = [{}]", rows.join(", ")))
}

/// Windows between detected jumps, cut where the surviving mass vanishes.
fn inter_jump_windows(f: &FrontierPath, min_len: f64) -> Vec<(f64, f64)> {
    let horizon = *f.times.last().expect("times");
    let alive_end = f
        .times
        .iter()
        .zip(&f.mass)
        .filter(|(_, m)| **m > 1e-9)
        .map(|(t, _)| *t)
        .next_back()
        .unwrap_or(0.0);
    let mut cuts = vec![0.0];
    cuts.extend(f.jumps.iter().map(|j| j.time));
    cuts.push(horizon);
    cuts.windows(2)
        .map(|w| (w[0], w[1].min(alive_end)))
        .filter(|(a, b)| b - a >= min_len)
        .collect()
}

fn a10() -> Verdict {
    let r = runs();
    let dt = 1e-4;
    let h = 0.01;
    let mut tested = 0;
    let mut failed = 0;
    let mut min_speed = f64::INFINITY;
    let frontiers = r
        .blowup
        .iter()
        .chain(&r.nojump)
        .map(|p| &p.frontier)
        .chain([&r.blowup_pde.frontier, &r.nojump_pde.frontier]);
    for f in frontiers {
        for win in inter_jump_windows(f, 10.0 * dt) {
            match lambda_dot_positive(f, win, h) {
                Ok(s) => {
                    tested += 1;
                    min_speed = min_speed.min(s.min_estimate);
                    if !s.positive {
                        failed += 1;
                    }
                }
                Err(_) => {
                    // Window shorter than 2h: central differences need h on both sides.
                    let hh = 0.25 * (win.1 - win.0);
                    if hh >= 2.0 * dt {
                        tested += 1;
                        match lambda_dot_positive(f, win, hh) {
                            Ok(s) if s.positive => min_speed = min_speed.min(s.min_estimate),
                            _ => failed += 1,
                        }
                    }
                }
            }
        }
    }
    verdict(
        failed == 0 && tested > 0,
        format!("{tested} windows tested, {failed} with a non-positive speed estimate, min estimate {min_speed:.4}"),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("A1", "cascade equivalence", a1),
        ("A2", "conservation", a2),
        ("A3", "alpha = 0 against the absorbed heat kernel", a3),
        ("A4", "jump detection and no-jump control", a4),
        ("A5", "particle and PDE frontiers agree", a5),
        ("A6", "square-root growth in the intermediate regime", a6),
        ("A7", "regime classifier fixtures", a7),
        ("A8", "Picard iterate scaling", a8),
        ("A9", "bridge representation against the histogram", a9),
        ("A10", "positive frontier speed between jumps", a10),
    ];
    let mut failures = 0;
    for (id, name, f) in criteria {
        let t = Instant::now();
        let v = f();
        if !v.pass {
            failures += 1;
        }
        println!(
            "{id:<4}{} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
