//! Configuration, presets and serialization behind the `fracflow` binary.

pub mod config;
pub mod output;
pub mod presets;
pub mod selftest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::error::{Error, Result};

pub use config::{resolve, ExperimentConfig, Resolved, PRESETS};
pub use output::{read_snapshot, write_snapshot, CsvTable, Snapshot};
pub use presets::{run_preset, PresetOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOLUTION: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Resolution { .. } | Error::DomainTooSmall { .. } => EXIT_RESOLUTION,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub preset: PresetOutput,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.preset.pass == Some(false) {
            EXIT_RUNTIME
        } else {
            EXIT_OK
        }
    }
}

/// Loads, validates and runs the config at `path`, writing the preset's
/// artifacts and `manifest.json` into the output directory (`output`
/// overrides `experiment.output`).
pub fn run(path: &Path, output: Option<&Path>) -> Result<RunOutcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let config = ExperimentConfig::parse(&text)?;
    let resolved = resolve(&config)?;
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&config.experiment.output));
    std::fs::create_dir_all(&out)?;
    let start = Instant::now();
    let preset = run_preset(&resolved, &out)?;
    let manifest = json!({
        "program": "fracflow",
        "version": env!("CARGO_PKG_VERSION"),
        "preset": config.experiment.preset,
        "seed": config.experiment.seed,
        "config_file": path.display().to_string(),
        "config_text": text,
        "resolved": {
            "dim": resolved.grid.dim(),
            "dims": resolved.grid.dims(),
            "spacing": resolved.grid.spacing(),
            "boundary": resolved.grid.boundary().name(),
            "anisotropy": resolved.anisotropy.label(),
            "s": resolved.kernel.s(),
            "h": resolved.params.h,
            "horizon": resolved.params.horizon,
            "steps": resolved.params.n_steps(),
            "forcing": resolved.forcing.label(),
            "threshold_rule": resolved.params.rule.name(),
            "tail_correction": resolved.params.tail_correction,
        },
        "threads": rayon::current_num_threads(),
        "wall_seconds": start.elapsed().as_secs_f64(),
        "files": preset.files,
        "results": preset.results,
    });
    output::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunOutcome { output_dir: out, preset })
}

/// One-paragraph description of a preset, with the config keys it reads.
pub fn describe(preset: &str) -> Option<&'static str> {
    Some(match preset {
        "evolve" => {
            "evolve: iterate the threshold scheme from [initial] for the configured horizon.\n\
             reads: [anisotropy] [kernel] [grid] [scheme] [forcing] [initial]\n\
             writes: steps.csv (step, time, level, volume, centroid, boundary cells, convexity, extinction),\n\
             snapshots/step_NNNNNN.ffs every scheme.record_every steps, manifest.json"
        }
        "splitting-compare" => {
            "splitting-compare: run the forced scheme and the splitting scheme at windows\n\
             epsilon = k h for k in preset.epsilon_steps (default [8, 4, 2]), and report the\n\
             Hausdorff distance between the final sets.\n\
             writes: splitting.csv, manifest.json (monotone_within_cell)"
        }
        "ball-shrink-sweep" => {
            "ball-shrink-sweep: extinction step of balls of radius preset.radii\n\
             (default [0.08, 0.11, 0.16, 0.22]) centered at initial.center.\n\
             writes: extinction.csv (radius, extinction_step, extinction_time),\n\
             manifest.json (log-log slope of extinction time against radius)"
        }
        "convexity-sweep" => {
            "convexity-sweep: preset.bodies random convex bodies (default 50), thresholded\n\
             preset.steps times (default 20) at each h = factor * scheme h for factor in\n\
             preset.h_factors (default [1]); every nonempty iterate must be digitally convex.\n\
             writes: convexity.csv, manifest.json; exits 1 on a violation"
        }
        "mobility-table" => {
            "mobility-table: A(p), Phi(p) and the polar Phi°(p) with error bars over\n\
             preset.directions unit directions (default 64), plus a convexity probe of Phi\n\
             with preset.trials triples (default 1000) and, in 3D, the reduced-formula spread.\n\
             writes: mobility.csv, manifest.json; exits 1 if the probe fails"
        }
        "curvature-table" => {
            "curvature-table: fractional curvature at preset.points boundary points\n\
             (default 16) of the [initial] body (ball, halfspace or box).\n\
             writes: curvature.csv (norm, s, body, point, x, kappa, error), manifest.json (kbar, mbar)"
        }
        "selftest" => {
            "selftest: kernel identity on 10^4 points, spectral against direct convolution\n\
             on 20 random 32x32 fields, and half-plane curvature for every norm kind at\n\
             s = 0.25, 0.5, 0.75.\n\
             writes: selftest.csv, manifest.json; exits 1 if a check fails"
        }
        _ => return None,
    })
}
