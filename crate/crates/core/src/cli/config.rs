//! Experiment configuration: `key = value` lines under `[section]` headers
//! (a TOML subset), resolved into validated engine objects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anisotropy::Anisotropy;
use crate::error::{Error, Result};
use crate::grid::{Boundary, GridField, GridSpec};
use crate::kernel::KernelSpec;
use crate::scheme::{min_resolved_h, random_convex_field, ForcingTerm, SchemeParams, ThresholdRule};

use super::output::read_snapshot;

pub const PRESETS: [&str; 7] = [
    "evolve",
    "splitting-compare",
    "ball-shrink-sweep",
    "convexity-sweep",
    "mobility-table",
    "curvature-table",
    "selftest",
];

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub anisotropy: AnisotropySection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub forcing: ForcingSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub preset: PresetSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub preset: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            preset: "selftest".into(),
            seed: 0,
            output: default_output(),
        }
    }
}

fn default_output() -> String {
    "fracflow-out".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnisotropySection {
    /// `euclidean`, `weighted-lq`, `scaled-euclidean` or `polytope`.
    pub kind: String,
    pub q: Option<f64>,
    pub weights: Option<Vec<f64>>,
    /// Row-major, `dim * dim` entries.
    pub matrix: Option<Vec<f64>>,
    pub directions: Option<Vec<Vec<f64>>>,
}

impl Default for AnisotropySection {
    fn default() -> Self {
        AnisotropySection {
            kind: "euclidean".into(),
            q: None,
            weights: None,
            matrix: None,
            directions: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub s: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { s: 0.75 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dims: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub boundary: String,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            dims: vec![128, 128],
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
            boundary: "periodic".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    /// Time step; when absent, `h_factor` times the smallest resolved step.
    pub h: Option<f64>,
    pub h_factor: f64,
    pub horizon: Option<f64>,
    /// Step count used when `horizon` is absent.
    pub steps: usize,
    pub threshold_rule: String,
    pub record_every: usize,
    pub tail_correction: bool,
    pub stop_at_extinction: bool,
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            h: None,
            h_factor: 1.0,
            horizon: None,
            steps: 100,
            threshold_rule: "strict-greater".into(),
            record_every: 10,
            tail_correction: true,
            stop_at_extinction: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSection {
    /// `constant`, `piecewise-linear` or `sinusoid`.
    pub kind: String,
    pub value: f64,
    pub times: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub amplitude: Option<f64>,
    pub period: Option<f64>,
    pub phase: Option<f64>,
}

impl Default for ForcingSection {
    fn default() -> Self {
        ForcingSection {
            kind: "constant".into(),
            value: 0.0,
            times: None,
            values: None,
            amplitude: None,
            period: None,
            phase: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// `ball`, `halfspace`, `box`, `random-convex` or `snapshot`.
    pub shape: String,
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub normal: Option<Vec<f64>>,
    pub offset: f64,
    pub half_widths: Option<Vec<f64>>,
    pub path: Option<String>,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            shape: "ball".into(),
            center: None,
            radius: 0.5,
            normal: None,
            offset: 0.0,
            half_widths: None,
            path: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetSection {
    pub radii: Option<Vec<f64>>,
    /// Splitting windows as multiples of `h`.
    pub epsilon_steps: Option<Vec<usize>>,
    pub bodies: Option<usize>,
    pub steps: Option<usize>,
    /// Multiples of the resolved `h` swept by `convexity-sweep`.
    pub h_factors: Option<Vec<f64>>,
    pub directions: Option<usize>,
    pub points: Option<usize>,
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map_or("config".to_string(), |sp| {
                let line = text[..sp.start].matches('\n').count() + 1;
                format!("line {line}")
            });
            Error::config(field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// A configuration with every block turned into validated engine objects.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub anisotropy: Anisotropy,
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub forcing: ForcingTerm,
    /// Scheme parameters with `h` and the horizon resolved. The resolution
    /// guard is not applied here.
    pub params: SchemeParams,
}

fn cfg<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    })
}

fn require<T: Clone>(field: &str, v: &Option<T>) -> Result<T> {
    v.clone().ok_or_else(|| Error::config(field, "required for this kind"))
}

pub fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    if !PRESETS.contains(&config.experiment.preset.as_str()) {
        return Err(Error::config(
            "experiment.preset",
            format!("unknown preset `{}`; expected one of {}", config.experiment.preset, PRESETS.join(", ")),
        ));
    }
    let grid = resolve_grid(&config.grid)?;
    let dim = grid.dim();
    let anisotropy = resolve_anisotropy(&config.anisotropy, dim)?;
    let kernel = cfg("kernel.s", KernelSpec::new(anisotropy.clone(), config.kernel.s))?;
    let forcing = resolve_forcing(&config.forcing)?;
    let sc = &config.scheme;
    let h = match sc.h {
        Some(h) => h,
        None => {
            if !(sc.h_factor > 0.0 && sc.h_factor.is_finite()) {
                return Err(Error::config("scheme.h_factor", "must be positive"));
            }
            sc.h_factor * min_resolved_h(&grid, config.kernel.s)
        }
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("scheme.h", "must be positive and finite"));
    }
    let horizon = match sc.horizon {
        Some(t) => t,
        None => {
            if sc.steps == 0 {
                return Err(Error::config("scheme.steps", "must be at least 1"));
            }
            sc.steps as f64 * h
        }
    };
    if !(horizon > h && horizon.is_finite()) {
        return Err(Error::config("scheme.horizon", "must be finite and exceed h"));
    }
    let rule = ThresholdRule::parse(&sc.threshold_rule).ok_or_else(|| {
        Error::config("scheme.threshold_rule", "expected `strict-greater` or `greater-equal`")
    })?;
    let mut params = SchemeParams::new(kernel.clone(), grid.clone(), h, horizon, forcing.clone());
    params.rule = rule;
    params.tail_correction = sc.tail_correction;
    params.record_every = sc.record_every;
    params.stop_at_extinction = sc.stop_at_extinction;
    params.seed = config.experiment.seed;
    Ok(Resolved {
        config: config.clone(),
        anisotropy,
        kernel,
        grid,
        forcing,
        params,
    })
}

fn resolve_grid(g: &GridSection) -> Result<GridSpec> {
    let d = g.dims.len();
    if !(2..=3).contains(&d) {
        return Err(Error::config("grid.dims", "expected 2 or 3 axes"));
    }
    if g.lower.len() != d {
        return Err(Error::config("grid.lower", format!("expected {d} entries")));
    }
    if g.upper.len() != d {
        return Err(Error::config("grid.upper", format!("expected {d} entries")));
    }
    let boundary = Boundary::parse(&g.boundary)
        .ok_or_else(|| Error::config("grid.boundary", "expected `periodic` or `zero-padded`"))?;
    let mut spacing = Vec::with_capacity(d);
    for i in 0..d {
        let ext = g.upper[i] - g.lower[i];
        if !(ext > 0.0 && ext.is_finite()) {
            return Err(Error::config("grid.upper", "must exceed grid.lower on every axis"));
        }
        if g.dims[i] == 0 {
            return Err(Error::config("grid.dims", "must be positive"));
        }
        spacing.push(ext / g.dims[i] as f64);
    }
    cfg("grid.dims", GridSpec::new(g.dims.clone(), g.lower.clone(), spacing, boundary))
}

fn resolve_anisotropy(a: &AnisotropySection, dim: usize) -> Result<Anisotropy> {
    match a.kind.as_str() {
        "euclidean" => cfg("anisotropy.kind", Anisotropy::euclidean(dim)),
        "weighted-lq" => {
            let q = require("anisotropy.q", &a.q)?;
            let w = a.weights.clone().unwrap_or_else(|| vec![1.0; dim]);
            if w.len() != dim {
                return Err(Error::config("anisotropy.weights", format!("expected {dim} entries")));
            }
            cfg("anisotropy.q", Anisotropy::weighted_lq(q, w))
        }
        "scaled-euclidean" => {
            let m = require("anisotropy.matrix", &a.matrix)?;
            cfg("anisotropy.matrix", Anisotropy::scaled_euclidean(dim, m))
        }
        "polytope" => {
            let d = require("anisotropy.directions", &a.directions)?;
            cfg("anisotropy.directions", Anisotropy::polytope(dim, d))
        }
        other => Err(Error::config(
            "anisotropy.kind",
            format!("unknown kind `{other}`; expected euclidean, weighted-lq, scaled-euclidean or polytope"),
        )),
    }
}

fn resolve_forcing(f: &ForcingSection) -> Result<ForcingTerm> {
    match f.kind.as_str() {
        "constant" => {
            if !f.value.is_finite() {
                return Err(Error::config("forcing.value", "must be finite"));
            }
            Ok(ForcingTerm::Constant(f.value))
        }
        "piecewise-linear" => {
            let t = require("forcing.times", &f.times)?;
            let v = require("forcing.values", &f.values)?;
            cfg("forcing.times", ForcingTerm::piecewise_linear(t, v))
        }
        "sinusoid" => {
            let a = require("forcing.amplitude", &f.amplitude)?;
            let p = require("forcing.period", &f.period)?;
            cfg("forcing.period", ForcingTerm::sinusoid(a, p, f.phase.unwrap_or(0.0)))
        }
        other => Err(Error::config(
            "forcing.kind",
            format!("unknown kind `{other}`; expected constant, piecewise-linear or sinusoid"),
        )),
    }
}

impl Resolved {
    pub fn center(&self) -> Result<Vec<f64>> {
        let d = self.grid.dim();
        match &self.config.initial.center {
            Some(c) if c.len() == d => Ok(c.clone()),
            Some(_) => Err(Error::config("initial.center", format!("expected {d} entries"))),
            None => Ok((0..d)
                .map(|i| self.grid.origin()[i] + 0.5 * self.grid.extent(i))
                .collect()),
        }
    }

    /// The initial phase field described by `[initial]`.
    pub fn initial_field(&self) -> Result<GridField> {
        let ini = &self.config.initial;
        let d = self.grid.dim();
        match ini.shape.as_str() {
            "ball" => {
                let c = self.center()?;
                cfg("initial.radius", GridField::ball(self.grid.clone(), &c, ini.radius))
            }
            "halfspace" => {
                let n = require("initial.normal", &ini.normal)?;
                if n.len() != d {
                    return Err(Error::config("initial.normal", format!("expected {d} entries")));
                }
                cfg("initial.normal", GridField::halfspace(self.grid.clone(), &n, ini.offset))
            }
            "box" => {
                let c = self.center()?;
                let w = require("initial.half_widths", &ini.half_widths)?;
                if w.len() != d || w.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::config("initial.half_widths", format!("expected {d} positive entries")));
                }
                Ok(GridField::phase_from_fn(self.grid.clone(), |x| {
                    x.iter().zip(&c).zip(&w).all(|((xi, ci), wi)| (xi - ci).abs() <= *wi)
                }))
            }
            "random-convex" => cfg(
                "initial.shape",
                random_convex_field(&self.grid, self.config.experiment.seed),
            ),
            "snapshot" => {
                let p = require("initial.path", &ini.path)?;
                let snap = cfg("initial.path", read_snapshot(Path::new(&p)))?;
                let f = snap.field;
                if f.grid().dims() != self.grid.dims() || !f.is_phase() {
                    return Err(Error::config("initial.path", "snapshot is not a phase field on the configured grid"));
                }
                cfg("initial.path", GridField::phase(self.grid.clone(), f.into_values()))
            }
            other => Err(Error::config(
                "initial.shape",
                format!("unknown shape `{other}`; expected ball, halfspace, box, random-convex or snapshot"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(text: &str) -> String {
        match ExperimentConfig::parse(text).and_then(|c| resolve(&c)) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::parse("[experiment]\npreset = \"evolve\"\n").unwrap();
        let r = resolve(&c).unwrap();
        assert_eq!(r.grid.dims(), &[128, 128]);
        assert_eq!(r.params.n_steps(), 100);
        assert!(r.params.validate().is_ok());
        assert_eq!(r.initial_field().unwrap().count_inside(), GridField::ball(r.grid.clone(), &[0.0, 0.0], 0.5).unwrap().count_inside());
    }

    #[test]
    fn errors_name_the_field() {
        let head = "[experiment]\npreset = \"evolve\"\n";
        assert_eq!(field_of(&format!("{head}[kernel]\ns = 1.5\n")), "kernel.s");
        assert_eq!(field_of(&format!("{head}[anisotropy]\nkind = \"weighted-lq\"\n")), "anisotropy.q");
        assert_eq!(field_of(&format!("{head}[anisotropy]\nkind = \"blob\"\n")), "anisotropy.kind");
        assert_eq!(field_of(&format!("{head}[grid]\ndims = [64, 64]\nlower = [0.0]\n")), "grid.lower");
        assert_eq!(field_of(&format!("{head}[scheme]\nthreshold_rule = \"maybe\"\n")), "scheme.threshold_rule");
        assert_eq!(field_of(&format!("{head}[forcing]\nkind = \"sinusoid\"\namplitude = 1.0\n")), "forcing.period");
        assert_eq!(field_of("[experiment]\npreset = \"nope\"\n"), "experiment.preset");
        assert_eq!(field_of(&format!("{head}[kernel]\nt = 0.5\n")), "line 4");
    }

    #[test]
    fn echo_reparses() {
        let c = ExperimentConfig::parse(
            "[experiment]\npreset = \"splitting-compare\"\nseed = 7\n[forcing]\nkind = \"sinusoid\"\namplitude = 2.0\nperiod = 0.1\n[preset]\nepsilon_steps = [4, 2]\n",
        )
        .unwrap();
        let back = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        assert_eq!(back.preset.epsilon_steps, Some(vec![4, 2]));
    }
}
