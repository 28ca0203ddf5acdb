//! The experiment presets behind `fracflow run`.

use std::f64::consts::PI;
use std::path::Path;

use serde_json::{json, Value};

use crate::curvature::{kappa_s, kbar, mbar, BodySpec, QuadParams};
use crate::distance::hausdorff;
use crate::error::{Error, Result};
use crate::kernel::sample_kernel_with;
use crate::mobility::{convexity_probe_seeded, phi_reduced_ratio, MobilityContext, PolarNorm, CONVEXITY_SEED};
use crate::quadrature::nested_sphere_point;
use crate::scheme::{
    convexity_sweep, evolve_with_kernel, extinction_sweep, loglog_slope, random_convex_field, Trajectory,
};
use crate::splitting::{default_polar, split_evolve_with};

use super::config::Resolved;
use super::output::{fmt_f64, fmt_opt, write_snapshot, CsvTable};
use super::selftest;

pub const DEFAULT_RADII: [f64; 4] = [0.08, 0.11, 0.16, 0.22];

#[derive(Clone, Debug)]
pub struct PresetOutput {
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
    pub results: Value,
    /// `Some(false)` when the preset is a check that failed.
    pub pass: Option<bool>,
}

pub fn run_preset(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    match r.config.experiment.preset.as_str() {
        "evolve" => evolve(r, out),
        "splitting-compare" => splitting_compare(r, out),
        "ball-shrink-sweep" => ball_shrink_sweep(r, out),
        "convexity-sweep" => convexity(r, out),
        "mobility-table" => mobility_table(r, out),
        "curvature-table" => curvature_table(r, out),
        "selftest" => selftest_preset(r, out),
        other => Err(Error::config("experiment.preset", format!("unknown preset `{other}`"))),
    }
}

pub fn trajectory_table(traj: &Trajectory, dim: usize) -> CsvTable {
    let mut header = vec!["step".to_string(), "time".into(), "level".into(), "volume".into()];
    header.extend((0..dim).map(|i| format!("centroid_{i}")));
    header.extend(["boundary_cells".into(), "convex".into(), "extinct".into()]);
    let mut t = CsvTable { header, rows: Vec::new() };
    for rec in &traj.records {
        let m = &rec.measurements;
        let mut row = vec![rec.step.to_string(), fmt_f64(rec.time), fmt_opt(rec.level), fmt_f64(m.volume)];
        for i in 0..dim {
            row.push(fmt_opt(m.centroid.as_ref().map(|c| c[i])));
        }
        row.push(m.boundary_cells.to_string());
        row.push(m.convex.map(|b| b.to_string()).unwrap_or_default());
        row.push(m.extinct.to_string());
        t.push(row);
    }
    t
}

fn write_fields(traj: &Trajectory, out: &Path, files: &mut Vec<String>) -> Result<()> {
    if traj.fields.is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(out.join("snapshots"))?;
    for (n, f) in &traj.fields {
        let name = format!("snapshots/step_{n:06}.ffs");
        write_snapshot(&out.join(&name), f, *n as f64 * traj.h)?;
        files.push(name);
    }
    Ok(())
}

fn evolve(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    let e0 = r.initial_field()?;
    let p = &r.params;
    p.validate()?;
    let kernel = sample_kernel_with(&p.kernel, &p.grid, p.h, p.min_mass_ratio)?;
    let traj = evolve_with_kernel(&e0, p, &kernel)?;
    trajectory_table(&traj, r.grid.dim()).write(&out.join("steps.csv"))?;
    let mut files = vec!["steps.csv".to_string()];
    write_fields(&traj, out, &mut files)?;
    let last = traj.records.last().expect("trajectory has the initial record");
    Ok(PresetOutput {
        files,
        results: json!({
            "h": p.h,
            "steps": last.step,
            "sigma_h": kernel.sigma(),
            "tail_mass": kernel.tail_mass(),
            "mass_ratio": kernel.mass_ratio(),
            "extinction_step": traj.extinction_step,
            "extinction_time": traj.extinction_time(),
            "final_volume": last.measurements.volume,
        }),
        pass: None,
    })
}

fn splitting_compare(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    let e0 = r.initial_field()?;
    let p = &r.params;
    p.validate()?;
    let kernel = sample_kernel_with(&p.kernel, &p.grid, p.h, p.min_mass_ratio)?;
    let polar = default_polar(p)?;
    let reference = evolve_with_kernel(&e0, p, &kernel)?;
    let ks = r.config.preset.epsilon_steps.clone().unwrap_or_else(|| vec![8, 4, 2]);
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::config("preset.epsilon_steps", "need positive multiples of h"));
    }
    let cell = r.grid.max_spacing();
    let mut table = CsvTable::new(&[
        "epsilon_steps",
        "epsilon",
        "hausdorff",
        "hausdorff_cells",
        "split_volume",
        "reference_volume",
    ]);
    let ref_vol = reference.records.last().unwrap().measurements.volume;
    let mut dists = Vec::new();
    for &k in &ks {
        let eps = k as f64 * p.h;
        let split = split_evolve_with(&e0, p, eps, &kernel, &polar)?;
        let d = hausdorff(&split.final_field, &reference.final_field)?;
        dists.push(d);
        table.push(vec![
            k.to_string(),
            fmt_f64(eps),
            fmt_f64(d),
            fmt_f64(d / cell),
            fmt_f64(split.records.last().unwrap().measurements.volume),
            fmt_f64(ref_vol),
        ]);
    }
    table.write(&out.join("splitting.csv"))?;
    let monotone = dists.windows(2).all(|w| w[1] <= w[0] + cell);
    Ok(PresetOutput {
        files: vec!["splitting.csv".into()],
        results: json!({ "h": p.h, "hausdorff": dists, "monotone_within_cell": monotone }),
        pass: None,
    })
}

fn ball_shrink_sweep(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    let p = &r.params;
    p.validate()?;
    let radii = r.config.preset.radii.clone().unwrap_or_else(|| DEFAULT_RADII.to_vec());
    if radii.is_empty() || radii.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::config("preset.radii", "need positive radii"));
    }
    let center = r.center()?;
    let steps = extinction_sweep(p, &center, &radii)?;
    let mut table = CsvTable::new(&["radius", "extinction_step", "extinction_time"]);
    for (&rad, st) in radii.iter().zip(&steps) {
        table.push(vec![
            fmt_f64(rad),
            st.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(st.map(|n| n as f64 * p.h)),
        ]);
    }
    table.write(&out.join("extinction.csv"))?;
    let all = steps.iter().all(Option::is_some);
    let slope = if all && radii.len() >= 2 {
        let t: Vec<f64> = steps.iter().map(|n| n.unwrap() as f64 * p.h).collect();
        loglog_slope(&radii, &t).ok()
    } else {
        None
    };
    Ok(PresetOutput {
        files: vec!["extinction.csv".into()],
        results: json!({
            "h": p.h,
            "all_extinct": all,
            "slope": slope,
            "expected_slope": 1.0 + r.kernel.s(),
        }),
        pass: None,
    })
}

fn convexity(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    let n_bodies = r.config.preset.bodies.unwrap_or(50);
    let n_steps = r.config.preset.steps.unwrap_or(20);
    if n_steps < 2 {
        return Err(Error::config("preset.steps", "need at least 2 steps"));
    }
    let factors = r.config.preset.h_factors.clone().unwrap_or_else(|| vec![1.0]);
    if factors.is_empty() || factors.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
        return Err(Error::config("preset.h_factors", "need positive factors"));
    }
    let seed = r.config.experiment.seed;
    let bodies = (0..n_bodies)
        .map(|i| random_convex_field(&r.grid, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = CsvTable::new(&["h", "body", "accepted", "iterates_checked", "violations", "extinct"]);
    let mut per_h = Vec::new();
    let mut pass = true;
    for f in factors {
        let mut p = r.params.clone();
        p.h *= f;
        p.horizon = n_steps as f64 * p.h;
        let rep = convexity_sweep(&bodies, &p, n_steps)?;
        for (b, o) in rep.outcomes.iter().enumerate() {
            table.push(vec![
                fmt_f64(p.h),
                b.to_string(),
                o.accepted.to_string(),
                o.iterates_checked.to_string(),
                o.violations.to_string(),
                o.extinct.to_string(),
            ]);
        }
        pass &= rep.pass;
        per_h.push(json!({
            "h": p.h,
            "iterates_checked": rep.iterates_checked,
            "violations": rep.violations.len(),
            "rejected_inputs": rep.rejected_inputs.len(),
            "extinct_bodies": rep.extinct_bodies,
            "pass": rep.pass,
        }));
    }
    table.write(&out.join("convexity.csv"))?;
    Ok(PresetOutput {
        files: vec!["convexity.csv".into()],
        results: json!({ "sweeps": per_h, "pass": pass }),
        pass: Some(pass),
    })
}

fn mobility_table(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    let ctx = MobilityContext::new(r.anisotropy.clone(), r.kernel.s())?;
    let dim = ctx.dim();
    let n = r.config.preset.directions.unwrap_or(64);
    if n == 0 {
        return Err(Error::config("preset.directions", "must be positive"));
    }
    let polar = PolarNorm::new(&ctx, if dim == 2 { 512 } else { 4096 })?;
    let mut header = vec!["direction".to_string()];
    header.extend((0..dim).map(|i| format!("p_{i}")));
    header.extend(["a", "a_error", "phi", "phi_error", "phi_polar"].map(String::from));
    let mut table = CsvTable { header, rows: Vec::new() };
    for k in 0..n {
        let p = if dim == 2 {
            let t = PI * k as f64 / n as f64;
            vec![t.cos(), t.sin()]
        } else {
            nested_sphere_point(dim, k as u64)
        };
        let a = ctx.a_estimate(&p)?;
        let phi = ctx.phi_estimate(&p)?;
        let mut row = vec![k.to_string()];
        row.extend(p.iter().map(|&v| fmt_f64(v)));
        row.extend([
            fmt_f64(a.value),
            fmt_f64(a.error),
            fmt_f64(phi.value),
            fmt_f64(phi.error),
            fmt_f64(polar.eval(&p)),
        ]);
        table.push(row);
    }
    table.write(&out.join("mobility.csv"))?;
    let trials = r.config.preset.trials.unwrap_or(1000);
    let probe = convexity_probe_seeded(&ctx, trials, CONVEXITY_SEED.wrapping_add(r.config.experiment.seed))?;
    let spread = if dim >= 3 {
        let ps: Vec<Vec<f64>> = (0..8)
            .map(|k| {
                let t = PI * k as f64 / 8.0;
                let mut v = vec![0.0; dim];
                v[0] = t.cos();
                v[1] = t.sin();
                v
            })
            .collect();
        let ratios = phi_reduced_ratio(&ctx, &ps)?;
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some((hi - lo) / lo)
    } else {
        None
    };
    Ok(PresetOutput {
        files: vec!["mobility.csv".into()],
        results: json!({
            "convexity_probe": {
                "trials": probe.trials,
                "violations": probe.violations,
                "max_violation": probe.max_violation,
                "error_bar": probe.error_bar,
                "pass": probe.pass,
            },
            "reduced_ratio_spread": spread,
        }),
        pass: Some(probe.pass),
    })
}

fn curvature_table(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    let dim = r.grid.dim();
    let n = r.config.preset.points.unwrap_or(16);
    if n == 0 {
        return Err(Error::config("preset.points", "must be positive"));
    }
    let ini = &r.config.initial;
    let (body, points): (BodySpec, Vec<Vec<f64>>) = match ini.shape.as_str() {
        "ball" => {
            let c = r.center()?;
            let body = BodySpec::ball(c.clone(), ini.radius).map_err(|e| Error::config("initial.radius", e.to_string()))?;
            let pts = (0..n)
                .map(|k| {
                    let u = if dim == 2 {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        vec![t.cos(), t.sin()]
                    } else {
                        nested_sphere_point(dim, k as u64)
                    };
                    c.iter().zip(&u).map(|(ci, ui)| ci + ini.radius * ui).collect()
                })
                .collect();
            (body, pts)
        }
        "halfspace" => {
            let nu = ini.normal.clone().ok_or_else(|| Error::config("initial.normal", "required for this shape"))?;
            if nu.len() != 2 || dim != 2 {
                return Err(Error::config("initial.normal", "half-plane tables are 2D"));
            }
            let len = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
            let body = BodySpec::halfspace(nu.clone(), ini.offset).map_err(|e| Error::config("initial.normal", e.to_string()))?;
            let base = [nu[0] * ini.offset / (len * len), nu[1] * ini.offset / (len * len)];
            let tan = [-nu[1] / len, nu[0] / len];
            let pts = (0..n)
                .map(|k| {
                    let t = k as f64 - 0.5 * (n - 1) as f64;
                    vec![base[0] + 0.1 * t * tan[0], base[1] + 0.1 * t * tan[1]]
                })
                .collect();
            (body, pts)
        }
        "box" => {
            if dim != 2 {
                return Err(Error::config("initial.shape", "box tables are 2D"));
            }
            let c = r.center()?;
            let w = ini.half_widths.clone().ok_or_else(|| Error::config("initial.half_widths", "required for this shape"))?;
            if w.len() != 2 || w.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::config("initial.half_widths", "expected 2 positive entries"));
            }
            let v = vec![
                vec![c[0] - w[0], c[1] - w[1]],
                vec![c[0] + w[0], c[1] - w[1]],
                vec![c[0] + w[0], c[1] + w[1]],
                vec![c[0] - w[0], c[1] + w[1]],
            ];
            let pts = (0..n)
                .map(|k| {
                    let e = k % 4;
                    let f = ((k / 4) as f64 + 0.5) / n.div_ceil(4) as f64;
                    let (a, b) = (&v[e], &v[(e + 1) % 4]);
                    vec![a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
                })
                .collect();
            (BodySpec::ConvexPolytope { vertices: v }, pts)
        }
        other => {
            return Err(Error::config(
                "initial.shape",
                format!("curvature tables take ball, halfspace or box, not `{other}`"),
            ))
        }
    };
    let s = r.kernel.s();
    let mut header = vec!["norm".to_string(), "s".into(), "body".into(), "point".into()];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    header.extend(["kappa", "error"].map(String::from));
    let mut table = CsvTable { header, rows: Vec::new() };
    let label = r.anisotropy.label();
    for (k, x) in points.iter().enumerate() {
        let est = kappa_s(x, &body, &r.anisotropy, s, &QuadParams::default())?;
        let mut row = vec![label.clone(), fmt_f64(s), body.label().to_string(), k.to_string()];
        row.extend(x.iter().map(|&v| fmt_f64(v)));
        row.extend([fmt_f64(est.value), fmt_f64(est.error)]);
        table.push(row);
    }
    table.write(&out.join("curvature.csv"))?;
    let kb = if dim == 2 { Some(kbar(&r.anisotropy, s, 64)?) } else { None };
    let mb = mbar(&r.anisotropy, s, dim)?;
    Ok(PresetOutput {
        files: vec!["curvature.csv".into()],
        results: json!({ "kbar": kb, "mbar": mb }),
        pass: None,
    })
}

pub fn checks_table(checks: &[selftest::Check]) -> CsvTable {
    let mut t = CsvTable::new(&["check", "value", "tolerance", "pass"]);
    for c in checks {
        t.push(vec![c.name.clone(), fmt_f64(c.value), fmt_f64(c.tolerance), c.pass.to_string()]);
    }
    t
}

fn selftest_preset(r: &Resolved, out: &Path) -> Result<PresetOutput> {
    let checks = selftest::run_all(r.config.experiment.seed)?;
    checks_table(&checks).write(&out.join("selftest.csv"))?;
    let pass = checks.iter().all(|c| c.pass);
    Ok(PresetOutput {
        files: vec!["selftest.csv".into()],
        results: json!({ "checks": checks.len(), "pass": pass }),
        pass: Some(pass),
    })
}
