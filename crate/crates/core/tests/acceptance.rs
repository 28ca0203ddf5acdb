//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails. Runtime limits count toward the verdict.

use std::f64::consts::PI;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracflow::anisotropy::Anisotropy;
use fracflow::cli::selftest::norm_zoo_2d;
use fracflow::convolution::{convolve, convolve_direct};
use fracflow::curvature::{kappa_s, BodySpec, QuadParams};
use fracflow::distance::hausdorff;
use fracflow::grid::{Boundary, GridField, GridSpec};
use fracflow::kernel::{p_h_closed_form, p_h_eval, sample_kernel_with, KernelSpec};
use fracflow::mobility::{a, convexity_probe, phi_reduced_ratio, MobilityContext, PolarNorm};
use fracflow::scheme::{
    convexity_sweep, evolve, extinction_sweep, loglog_slope, min_resolved_h, random_convex_field, threshold_step,
    ForcingTerm, SchemeParams, ThresholdRule,
};
use fracflow::splitting::{default_polar, distance_bound_check, split_evolve, split_evolve_with};
use fracflow::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn c1_kernel_identity() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let zoo = norm_zoo_2d()?;
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let s = [0.25, 0.5, 0.75][i % 3];
        let spec = KernelSpec::new(zoo[i % zoo.len()].clone(), s)?;
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let h = 10f64.powf(rng.gen_range(-6.0..0.0));
        let p = p_h_eval(&spec, &x, h)?;
        let q = p_h_closed_form(&spec, &x, h)?;
        worst = worst.max((p - q).abs() / q);
    }
    outcome(worst <= 1e-12, format!("max relative gap {worst:.2e} over 10^4 points (tol 1e-12)"))
}

fn c2_convolution_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let zoo = norm_zoo_2d()?;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let boundary = if i % 2 == 0 { Boundary::Periodic } else { Boundary::ZeroPadded };
        let grid = GridSpec::cube(2, 32, -1.0, 1.0, boundary)?;
        let spec = KernelSpec::new(zoo[i % 4].clone(), [0.25, 0.5, 0.75][i % 3])?;
        let kernel = sample_kernel_with(&spec, &grid, 2e-3, 0.0)?;
        let v = (0..grid.len()).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let f = GridField::phase(grid, v)?;
        let x = convolve(&f, &kernel)?;
        let y = convolve_direct(&f, &kernel)?;
        for (p, q) in x.values().iter().zip(y.values()) {
            worst = worst.max((p - q).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max abs diff {worst:.2e} over 20 fields (tol 1e-10)"))
}

fn c3_halfspace_curvature() -> Result<Outcome> {
    let body = BodySpec::halfspace(vec![0.6, 0.8], 0.3)?;
    let x = [0.18, 0.24];
    let mut worst_value: f64 = 0.0;
    let mut worst_bar: f64 = 0.0;
    let mut ok = true;
    for a in norm_zoo_2d()? {
        for s in [0.25, 0.5, 0.75] {
            let est = kappa_s(&x, &body, &a, s, &QuadParams::default())?;
            ok &= est.value.abs() <= est.error && est.error <= 1e-4;
            worst_value = worst_value.max(est.value.abs());
            worst_bar = worst_bar.max(est.error);
        }
    }
    outcome(
        ok,
        format!("12 cases, max |kappa| {worst_value:.2e}, max error bar {worst_bar:.2e} (bar <= 1e-4)"),
    )
}

fn c4_ball_scaling() -> Result<Outcome> {
    let norms = [Anisotropy::euclidean(2)?, Anisotropy::weighted_lq(3.0, vec![1.0, 2.0])?];
    let mut worst: f64 = 0.0;
    for a in &norms {
        for s in [0.25, 0.5, 0.75] {
            for t in [0.0, 0.7] {
                let u = [f64::cos(t), f64::sin(t)];
                let unit = kappa_s(&u, &BodySpec::ball(vec![0.0, 0.0], 1.0)?, a, s, &QuadParams::default())?.value;
                for r in [0.5, 2.0, 4.0] {
                    let k = kappa_s(&[r * u[0], r * u[1]], &BodySpec::ball(vec![0.0, 0.0], r)?, a, s, &QuadParams::default())?;
                    let want = r.powf(-s) * unit;
                    worst = worst.max((k.value - want).abs() / want.abs());
                }
            }
        }
    }
    outcome(worst <= 1e-3, format!("max relative deviation {worst:.2e} (tol 1e-3)"))
}

fn c5_mobility() -> Result<Outcome> {
    // int_R dt / (1 + |t|^a) = 2 (pi/a) / sin(pi/a), a = 2.5
    let a_exp: f64 = 2.5;
    let line = 2.0 * (PI / a_exp) / (PI / a_exp).sin();
    let oracle = 1.0 / (2.0 * line);
    let ctx = MobilityContext::new(Anisotropy::euclidean(2)?, 0.5)?;
    let value = a(&ctx, &[0.3, -0.8])?;
    let frozen_rel = (value - 0.189205).abs() / 0.189205;
    let oracle_rel = (value - oracle).abs() / oracle;
    let mut probes_ok = true;
    let mut violations = 0;
    for n in norm_zoo_2d()? {
        let rep = convexity_probe(&MobilityContext::new(n, 0.5)?, 1000)?;
        probes_ok &= rep.pass;
        violations += rep.violations;
    }
    let ctx3 = MobilityContext::new(Anisotropy::euclidean(3)?, 0.5)?;
    let ps: Vec<Vec<f64>> = (0..8).map(|k| {
        let t = PI * k as f64 / 8.0 + 0.1;
        vec![t.cos(), t.sin(), 0.0]
    }).collect();
    let ratios = phi_reduced_ratio(&ctx3, &ps)?;
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    outcome(
        frozen_rel <= 1e-5 && oracle_rel <= 1e-9 && probes_ok && spread <= 0.01,
        format!(
            "A = {value:.8} (vs 0.189205: {frozen_rel:.1e}, vs oracle {oracle:.8}: {oracle_rel:.1e}); \
             probe violations {violations} over 4 x 1000; reduced-ratio spread {spread:.1e}"
        ),
    )
}

fn c6_convexity() -> Result<Outcome> {
    let grid = GridSpec::cube(2, 256, -1.0, 1.0, Boundary::Periodic)?;
    let s = 0.75;
    let bodies = (0..50).map(|i| random_convex_field(&grid, 600 + i)).collect::<Result<Vec<_>>>()?;
    let norms = [
        Anisotropy::euclidean(2)?,
        Anisotropy::weighted_lq(3.0, vec![1.0, 2.0])?,
        Anisotropy::scaled_euclidean(2, vec![2.0, 0.5, 0.5, 1.0])?,
    ];
    let h0 = min_resolved_h(&grid, s);
    let (mut checked, mut bad, mut rejected) = (0, 0, 0);
    for n in &norms {
        for f in [1.0, 2.0, 4.0] {
            let spec = KernelSpec::new(n.clone(), s)?;
            let mut p = SchemeParams::new(spec, grid.clone(), f * h0, 20.0 * f * h0, ForcingTerm::Constant(1.0));
            p.seed = 6;
            let rep = convexity_sweep(&bodies, &p, 20)?;
            checked += rep.iterates_checked;
            bad += rep.violations.len();
            rejected += rep.rejected_inputs.len();
        }
    }
    outcome(
        bad == 0 && rejected == 0 && checked > 0,
        format!("{checked} nonempty iterates checked, {bad} not digitally convex, {rejected} inputs rejected"),
    )
}

fn c7_extinction() -> Result<Outcome> {
    let grid = GridSpec::cube(2, 512, -0.5, 0.5, Boundary::Periodic)?;
    let s = 0.5;
    let h = min_resolved_h(&grid, s);
    let spec = KernelSpec::new(Anisotropy::euclidean(2)?, s)?;
    let p = SchemeParams::new(spec, grid, h, 2000.0 * h, ForcingTerm::zero());
    let radii = [0.08, 0.11, 0.16, 0.22];
    let steps = extinction_sweep(&p, &[0.0, 0.0], &radii)?;
    if steps.iter().any(Option::is_none) {
        return outcome(false, format!("a ball survived the horizon: {steps:?}"));
    }
    let times: Vec<f64> = steps.iter().map(|n| n.unwrap() as f64 * h).collect();
    let slope = loglog_slope(&radii, &times)?;
    outcome(
        (slope - 1.5).abs() <= 0.15,
        format!("extinction steps {:?}, slope {slope:.4} (target 1.5 +- 0.15)", steps.iter().map(|n| n.unwrap()).collect::<Vec<_>>()),
    )
}

fn c8_monotonicity() -> Result<Outcome> {
    let grid = GridSpec::cube(2, 64, -1.0, 1.0, Boundary::Periodic)?;
    let s = 0.75;
    let h = min_resolved_h(&grid, s);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let kernels = norm_zoo_2d()?
        .into_iter()
        .map(|n| sample_kernel_with(&KernelSpec::new(n, s)?, &grid, h, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let mut broken = 0;
    for i in 0..100 {
        let (e, f) = if i % 2 == 0 {
            let a = random_convex_field(&grid, 800 + i)?;
            let b = random_convex_field(&grid, 900 + i)?;
            let union: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x.max(*y)).collect();
            let u = GridField::phase(grid.clone(), union)?;
            (a, u)
        } else {
            let bits: Vec<bool> = (0..grid.len()).map(|_| rng.gen_bool(0.4)).collect();
            let extra: Vec<bool> = (0..grid.len()).map(|_| rng.gen_bool(0.2)).collect();
            let e: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let f: Vec<f64> = bits.iter().zip(&extra).map(|(&b, &x)| if b || x { 1.0 } else { -1.0 }).collect();
            (GridField::phase(grid.clone(), e)?, GridField::phase(grid.clone(), f)?)
        };
        let k = &kernels[i as usize % 4];
        let level = k.tail_mass() + rng.gen_range(-1.0..1.0) * k.sigma();
        let rule = if i % 3 == 0 { ThresholdRule::GreaterEqual } else { ThresholdRule::Strict };
        let te = threshold_step(&e, k, level, rule)?;
        let tf = threshold_step(&f, k, level, rule)?;
        if !te.subset_of(&tf) {
            broken += 1;
        }
    }
    outcome(broken == 0, format!("{broken} of 100 nested pairs lost inclusion"))
}

fn c9_distance_bound() -> Result<Outcome> {
    let grid = GridSpec::cube(2, 192, -3.0, 3.0, Boundary::ZeroPadded)?;
    let polar = |n: Anisotropy| -> Result<PolarNorm> { PolarNorm::new(&MobilityContext::new(n, 0.5)?, 512) };
    let inner = GridField::ball(grid.clone(), &[0.0, 0.0], 1.0)?;
    let outer = GridField::ball(grid.clone(), &[0.0, 0.0], 2.0)?;
    let mut lines = Vec::new();
    let mut ok = true;

    let euclid = polar(Anisotropy::euclidean(2)?)?;
    let rep = distance_bound_check(&inner, &outer, -1.0, 0.0, &euclid, 6.0, 0.25)?;
    let equal = rep
        .times
        .iter()
        .zip(rep.delta.iter().zip(&rep.bound))
        .filter(|(t, _)| **t < rep.first_contact)
        .all(|(_, (d, b))| (d - b).abs() <= rep.slack);
    ok &= rep.pass && equal && rep.first_contact < 6.0;
    lines.push(format!("equality case deficit {:.2e} slack {:.3}", rep.max_deficit, rep.slack));

    let off = GridField::ball(grid.clone(), &[0.3, 0.0], 0.7)?;
    let wl = polar(Anisotropy::weighted_lq(3.0, vec![1.0, 2.0])?)?;
    let rep = distance_bound_check(&off, &outer, -1.0, -1.0, &wl, 2.0, 0.25)?;
    ok &= rep.pass;
    lines.push(format!("equal speeds deficit {:.2e} slack {:.3}", rep.max_deficit, rep.slack));

    let se = polar(Anisotropy::scaled_euclidean(2, vec![2.0, 0.5, 0.5, 1.0])?)?;
    let rep = distance_bound_check(&inner, &outer, -1.0, 1.0, &se, 4.0, 0.25)?;
    ok &= rep.pass && rep.first_contact < 4.0;
    lines.push(format!("opposite speeds deficit {:.2e} slack {:.3}", rep.max_deficit, rep.slack));
    outcome(ok, lines.join("; "))
}

fn c10_splitting() -> Result<Outcome> {
    let grid = GridSpec::cube(2, 256, -1.0, 1.0, Boundary::Periodic)?;
    let s = 0.75;
    let h = min_resolved_h(&grid, s);
    let spec = KernelSpec::new(Anisotropy::euclidean(2)?, s)?;
    let e0 = GridField::ball(grid.clone(), &[0.0, 0.0], 0.7)?;
    let cell = grid.max_spacing();
    let forcing = ForcingTerm::sinusoid(3.0, 0.05, 0.0)?;
    let mut p = SchemeParams::new(spec, grid, h, 64.0 * h, forcing);
    p.record_every = 0;
    let kernel = sample_kernel_with(&p.kernel, &p.grid, p.h, p.min_mass_ratio)?;
    let polar = default_polar(&p)?;
    let reference = evolve(&e0, &p)?.final_field;
    let mut dists = Vec::new();
    let mut nonempty = !reference.is_empty_set();
    for k in [8.0, 4.0, 2.0] {
        let split = split_evolve_with(&e0, &p, k * h, &kernel, &polar)?.final_field;
        nonempty &= !split.is_empty_set();
        dists.push(hausdorff(&split, &reference)?);
    }
    let monotone = dists.windows(2).all(|w| w[1] <= w[0] + cell);

    p.forcing = ForcingTerm::zero();
    p.stop_at_extinction = false;
    let unforced = evolve(&e0, &p)?;
    let mut exact = true;
    let mut matched = 0;
    for k in [8.0, 4.0, 2.0] {
        let split = split_evolve(&e0, &p, k * h)?;
        exact &= split.final_field == unforced.final_field;
        for rec in split.records.iter().filter(|r| r.level.is_some()) {
            exact &= rec.measurements == unforced.records[rec.step].measurements;
            matched += 1;
        }
    }
    let cells: Vec<String> = dists.iter().map(|d| format!("{:.2}", d / cell)).collect();
    outcome(
        monotone && nonempty && exact,
        format!(
            "Hausdorff at eps 8h, 4h, 2h = [{}] cells (monotone within 1 cell: {monotone}); \
             g = 0 matches evolve at {matched} records: {exact}",
            cells.join(", ")
        ),
    )
}

const SWEEP: &str = "[experiment]
preset = \"ball-shrink-sweep\"
seed = 11
[kernel]
s = 0.5
[grid]
dims = [512, 512]
lower = [-0.5, -0.5]
upper = [0.5, 0.5]
[scheme]
steps = 2000
[preset]
radii = [0.08, 0.11, 0.16, 0.22]
";

fn c11_determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, SWEEP)?;
    let mut csvs = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_fracflow"))
            .args(["run", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()])
            .env("FRACFLOW_THREADS", threads)
            .stdout(Stdio::null())
            .status()?;
        if !status.success() {
            return outcome(false, format!("run {run} exited with {status}"));
        }
        csvs.push(std::fs::read(out.join("extinction.csv"))?);
    }
    let rows = String::from_utf8_lossy(&csvs[0]).lines().count() - 1;
    outcome(
        csvs[0] == csvs[1] && rows == 4,
        format!("two runs (1 and 4 threads), {rows} rows, {} bytes, identical: {}", csvs[0].len(), csvs[0] == csvs[1]),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "kernel identity", Duration::from_secs(1), c1_kernel_identity),
        (2, "convolution oracle", Duration::from_secs(5), c2_convolution_oracle),
        (3, "halfspace curvature", Duration::from_secs(30), c3_halfspace_curvature),
        (4, "ball curvature scaling", Duration::from_secs(60), c4_ball_scaling),
        (5, "mobility", Duration::from_secs(120), c5_mobility),
        (6, "convexity preservation", Duration::from_secs(600), c6_convexity),
        (7, "extinction scaling", Duration::from_secs(600), c7_extinction),
        (8, "monotonicity", Duration::from_secs(60), c8_monotonicity),
        (9, "distance bound", Duration::from_secs(120), c9_distance_bound),
        (10, "splitting consistency", Duration::from_secs(900), c10_splitting),
        (11, "determinism", Duration::from_secs(300), c11_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && took <= limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as u32;
        println!(
            "{} criterion {id:>2} {name}: {detail} [{:.2} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
