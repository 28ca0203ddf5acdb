//! Threshold dynamics `E -> {P_h * chi(E) > g(nh) sigma_h}` and the
//! measurements recorded along a run.
//!
//! Positive forcing raises the threshold and therefore shrinks sets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::convolution::convolve;
use crate::curvature::convex_hull;
use crate::error::{check_dim, Error, Result};
use crate::grid::{FieldKind, GridField, GridSpec};
use crate::kernel::{concentration_scale, sample_kernel_with, KernelGrid, KernelSpec, MIN_MASS_RATIO};
use crate::quadrature::{integrate_panels, Estimate, Tolerance};

/// Time-dependent forcing `g`.
#[derive(Clone, Debug, PartialEq)]
pub enum ForcingTerm {
    Constant(f64),
    /// Linear interpolation between knots, constant beyond the ends.
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
    /// `amplitude * sin(2 pi t / period + phase)`.
    Sinusoid { amplitude: f64, period: f64, phase: f64 },
}

impl ForcingTerm {
    pub fn zero() -> Self {
        ForcingTerm::Constant(0.0)
    }

    pub fn piecewise_linear(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::param("forcing", "need equally many knots and values (at least one)"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::param("forcing", "knots and values must be finite"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("forcing", "knot times must be strictly increasing"));
        }
        Ok(ForcingTerm::PiecewiseLinear { times, values })
    }

    pub fn sinusoid(amplitude: f64, period: f64, phase: f64) -> Result<Self> {
        if !(period > 0.0) || !amplitude.is_finite() || !phase.is_finite() || !period.is_finite() {
            return Err(Error::param("forcing", "sinusoid needs finite amplitude/phase and a positive period"));
        }
        Ok(ForcingTerm::Sinusoid { amplitude, period, phase })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ForcingTerm::Constant(c) => *c,
            ForcingTerm::PiecewiseLinear { times, values } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    (1.0 - w) * values[k - 1] + w * values[k]
                }
            }
            ForcingTerm::Sinusoid { amplitude, period, phase } => amplitude * (2.0 * PI * t / period + phase).sin(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ForcingTerm::Constant(c) => *c == 0.0,
            ForcingTerm::PiecewiseLinear { values, .. } => values.iter().all(|v| *v == 0.0),
            ForcingTerm::Sinusoid { amplitude, .. } => *amplitude == 0.0,
        }
    }

    /// `sup |g|` over `[0, horizon]`.
    pub fn sup_bound(&self, horizon: f64) -> f64 {
        let ends = self.eval(0.0).abs().max(self.eval(horizon).abs());
        match self {
            ForcingTerm::Constant(c) => c.abs(),
            ForcingTerm::PiecewiseLinear { times, values } => times
                .iter()
                .zip(values)
                .filter(|(t, _)| (0.0..=horizon).contains(*t))
                .fold(ends, |m, (_, v)| m.max(v.abs())),
            ForcingTerm::Sinusoid { amplitude, period, phase } => {
                let omega = 2.0 * PI / period;
                let m = ((phase - 0.5 * PI) / PI).ceil();
                let first_peak = (0.5 * PI + m * PI - phase) / omega;
                if first_peak <= horizon {
                    amplitude.abs()
                } else {
                    ends
                }
            }
        }
    }

    /// `int_a^b g`.
    pub fn integral(&self, a: f64, b: f64) -> Result<Estimate> {
        if let ForcingTerm::Constant(c) = self {
            return Ok(Estimate::new(c * (b - a), 0.0));
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let mut points = vec![lo];
        if let ForcingTerm::PiecewiseLinear { times, .. } = self {
            points.extend(times.iter().copied().filter(|t| *t > lo && *t < hi));
        }
        points.push(hi);
        let scale = self.sup_bound(hi).max(self.eval(lo).abs()).max(f64::MIN_POSITIVE);
        let tol = Tolerance {
            abs: 1e-14 * scale * (hi - lo),
            rel: 1e-13,
            max_intervals: 4000,
        };
        let est = integrate_panels(|t| self.eval(t), &points, tol)?;
        Ok(if b < a { est.scale(-1.0) } else { est })
    }

    pub fn label(&self) -> String {
        match self {
            ForcingTerm::Constant(c) => format!("constant({c})"),
            ForcingTerm::PiecewiseLinear { times, .. } => format!("piecewise-linear({} knots)", times.len()),
            ForcingTerm::Sinusoid { amplitude, period, phase } => format!("sinusoid({amplitude}, {period}, {phase})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// `conv > level`
    #[default]
    Strict,
    /// `conv >= level`
    GreaterEqual,
}

impl ThresholdRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strict-greater" | "strict" | ">" => Some(ThresholdRule::Strict),
            "greater-equal" | ">=" => Some(ThresholdRule::GreaterEqual),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdRule::Strict => "strict-greater",
            ThresholdRule::GreaterEqual => "greater-equal",
        }
    }

    #[inline]
    fn keep(self, value: f64, level: f64) -> bool {
        match self {
            ThresholdRule::Strict => value > level,
            ThresholdRule::GreaterEqual => value >= level,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemeParams {
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub h: f64,
    pub horizon: f64,
    pub forcing: ForcingTerm,
    pub rule: ThresholdRule,
    /// Add the kernel mass outside the sampled box to the level, so the
    /// on-grid convolution is compared as if the set were surrounded by
    /// its complement.
    pub tail_correction: bool,
    /// Keep every k-th field (the final field is always kept); 0 keeps none.
    pub record_every: usize,
    pub stop_at_extinction: bool,
    pub min_mass_ratio: f64,
    pub seed: u64,
}

impl SchemeParams {
    pub fn new(kernel: KernelSpec, grid: GridSpec, h: f64, horizon: f64, forcing: ForcingTerm) -> Self {
        SchemeParams {
            kernel,
            grid,
            h,
            horizon,
            forcing,
            rule: ThresholdRule::default(),
            tail_correction: true,
            record_every: 1,
            stop_at_extinction: true,
            min_mass_ratio: MIN_MASS_RATIO,
            seed: 0,
        }
    }

    /// `floor(horizon / h)`, tolerant to rounding in the quotient.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.h * (1.0 + 1e-12)).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.kernel.dim(), self.grid.dim())?;
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::param("h", "must be positive and finite"));
        }
        if !(self.horizon > self.h) || !self.horizon.is_finite() {
            return Err(Error::param("horizon", "must be finite and exceed h"));
        }
        resolution_guard(&self.grid, self.h, self.kernel.s())
    }
}

/// Refuses `h` when `h^(1/(1+s)) < 3 * max spacing`.
pub fn resolution_guard(grid: &GridSpec, h: f64, s: f64) -> Result<()> {
    let scale = concentration_scale(h, s)?;
    let required = 3.0 * grid.max_spacing();
    if scale < required {
        return Err(Error::Resolution { scale, required });
    }
    Ok(())
}

/// Smallest `h` passing [`resolution_guard`].
pub fn min_resolved_h(grid: &GridSpec, s: f64) -> f64 {
    (3.0 * grid.max_spacing()).powf(1.0 + s) * (1.0 + 1e-12)
}

/// One threshold step at a caller-supplied level.
pub fn threshold_step(field: &GridField, kernel: &KernelGrid, level: f64, rule: ThresholdRule) -> Result<GridField> {
    field.require_phase()?;
    let conv = convolve(field, kernel)?;
    let values = conv
        .into_values()
        .into_par_iter()
        .map(|v| if rule.keep(v, level) { 1.0 } else { -1.0 })
        .collect();
    Ok(GridField::from_parts(field.grid().clone(), values, FieldKind::Phase))
}

/// Level `g(t) sigma_h`, plus the tail mass when the params ask for it.
pub fn step_level(params: &SchemeParams, kernel: &KernelGrid, t: f64) -> f64 {
    let base = params.forcing.eval(t) * kernel.sigma();
    if params.tail_correction {
        base + kernel.tail_mass()
    } else {
        base
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    pub volume: f64,
    /// Mean cell center of the `+1` cells; `None` when empty.
    pub centroid: Option<Vec<f64>>,
    pub boundary_cells: usize,
    /// Digital convexity within the one-cell band (2D only).
    pub convex: Option<bool>,
    pub extinct: bool,
}

pub fn measure(field: &GridField) -> Measurements {
    let grid = field.grid();
    let count = field.count_inside();
    let centroid = if count == 0 {
        None
    } else {
        let dim = grid.dim();
        let sum = (0..grid.len())
            .into_par_iter()
            .filter(|&i| field.inside(i))
            .map(|i| grid.center_of(i))
            .reduce(
                || vec![0.0; dim],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Some(sum.into_iter().map(|v| v / count as f64).collect())
    };
    Measurements {
        volume: grid.cell_volume() * count as f64,
        centroid,
        boundary_cells: field.boundary_cells(true).len(),
        convex: digitally_convex(field).ok(),
        extinct: count == 0,
    }
}

/// Whether a 2D phase field is digitally convex within a one-cell band:
/// every cell whose center lies in the convex hull of the `+1` cell centers
/// but is itself `-1` must touch a `+1` cell (8-neighborhood). Empty sets
/// are convex.
pub fn digitally_convex(field: &GridField) -> Result<bool> {
    field.require_phase()?;
    let grid = field.grid();
    if grid.dim() != 2 {
        return Err(Error::Unsupported("digital convexity is implemented in 2D".into()));
    }
    let (nx, ny) = (grid.dims()[0], grid.dims()[1]);
    let v = field.values();
    // the hull of all +1 centers is the hull of the row extremes
    let mut extremes = Vec::new();
    for i in 0..nx {
        let row = &v[i * ny..(i + 1) * ny];
        if let Some(lo) = row.iter().position(|&x| x > 0.0) {
            let hi = row.iter().rposition(|&x| x > 0.0).unwrap_or(lo);
            extremes.push(vec![i as f64, lo as f64]);
            extremes.push(vec![i as f64, hi as f64]);
        }
    }
    if extremes.is_empty() {
        return Ok(true);
    }
    let hull = convex_hull(&extremes);
    let (i_lo, i_hi) = extremes
        .iter()
        .fold((usize::MAX, 0usize), |(a, b), p| (a.min(p[0] as usize), b.max(p[0] as usize)));
    let near_set = |i: usize, j: usize| -> bool {
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                let (a, b) = (i as isize + di, j as isize + dj);
                if a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny && v[a as usize * ny + b as usize] > 0.0 {
                    return true;
                }
            }
        }
        false
    };
    let ok = (i_lo..=i_hi).into_par_iter().all(|i| {
        let Some((jlo, jhi)) = hull_row_span(&hull, i as f64) else {
            return true;
        };
        let a = (jlo - 1e-9).ceil().max(0.0) as usize;
        let b = ((jhi + 1e-9).floor() as usize).min(ny - 1);
        (a..=b).all(|j| v[i * ny + j] > 0.0 || near_set(i, j))
    });
    Ok(ok)
}

/// `[min, max]` of the second coordinate over the hull at first coordinate `x`.
fn hull_row_span(hull: &[Vec<f64>], x: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let n = hull.len();
    for k in 0..n {
        let (p, q) = (&hull[k], &hull[(k + 1) % n]);
        if p[0] == x {
            lo = lo.min(p[1]);
            hi = hi.max(p[1]);
        }
        if (p[0] - x) * (q[0] - x) < 0.0 {
            let y = p[1] + (x - p[0]) / (q[0] - p[0]) * (q[1] - p[1]);
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// Threshold level used to produce this step (`None` for the initial
    /// set and for transport steps).
    pub level: Option<f64>,
    pub measurements: Measurements,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub h: f64,
    pub records: Vec<StepRecord>,
    /// Recorded fields with their step index.
    pub fields: Vec<(usize, GridField)>,
    /// First step at which the set is empty.
    pub extinction_step: Option<usize>,
    pub final_field: GridField,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn extinction_time(&self) -> Option<f64> {
        self.extinction_step.map(|n| n as f64 * self.h)
    }

    pub fn field_at(&self, step: usize) -> Option<&GridField> {
        self.fields.iter().find(|(n, _)| *n == step).map(|(_, f)| f)
    }

    pub(crate) fn start(e0: &GridField, h: f64, keep_fields: bool) -> Self {
        let m = measure(e0);
        let extinct = m.extinct;
        Trajectory {
            h,
            records: vec![StepRecord {
                step: 0,
                time: 0.0,
                level: None,
                measurements: m,
            }],
            fields: if keep_fields { vec![(0, e0.clone())] } else { Vec::new() },
            extinction_step: extinct.then_some(0),
            final_field: e0.clone(),
        }
    }

    pub(crate) fn push(&mut self, step: usize, time: f64, level: Option<f64>, field: GridField, keep: bool) {
        let m = measure(&field);
        if m.extinct && self.extinction_step.is_none() {
            self.extinction_step = Some(step);
        }
        self.records.push(StepRecord {
            step,
            time,
            level,
            measurements: m,
        });
        if keep {
            self.fields.push((step, field.clone()));
        }
        self.final_field = field;
    }

    /// Keeps the final field in `fields` if it was not recorded.
    pub(crate) fn seal(&mut self, record_every: usize) {
        let last = self.records.last().map(|r| r.step).unwrap_or(0);
        if record_every > 0 && self.fields.last().map(|(n, _)| *n) != Some(last) {
            self.fields.push((last, self.final_field.clone()));
        }
    }
}

/// Runs `floor(horizon / h)` threshold steps from `e0`; the step producing
/// time `(n+1) h` uses `g(nh)`.
pub fn evolve(e0: &GridField, params: &SchemeParams) -> Result<Trajectory> {
    params.validate()?;
    let kernel = sample_kernel_with(&params.kernel, &params.grid, params.h, params.min_mass_ratio)?;
    evolve_with_kernel(e0, params, &kernel)
}

/// [`evolve`] with a pre-sampled kernel (which must match `params`).
pub fn evolve_with_kernel(e0: &GridField, params: &SchemeParams, kernel: &KernelGrid) -> Result<Trajectory> {
    params.validate()?;
    e0.require_phase()?;
    if e0.grid() != &params.grid || kernel.grid() != &params.grid {
        return Err(Error::GridMismatch);
    }
    let keep = |n: usize| params.record_every > 0 && n % params.record_every == 0;
    let mut traj = Trajectory::start(e0, params.h, keep(0));
    let mut field = e0.clone();
    for n in 0..params.n_steps() {
        if params.stop_at_extinction && traj.extinction_step.is_some() {
            break;
        }
        let level = step_level(params, kernel, n as f64 * params.h);
        field = threshold_step(&field, kernel, level, params.rule)?;
        traj.push(n + 1, (n + 1) as f64 * params.h, Some(level), field.clone(), keep(n + 1));
    }
    traj.seal(params.record_every);
    Ok(traj)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexitySweepReport {
    pub bodies: usize,
    /// Inputs that failed the digital convexity check and were skipped.
    pub rejected_inputs: Vec<usize>,
    pub iterates_checked: usize,
    /// `(body, step)` pairs whose nonempty iterate is not digitally convex.
    pub violations: Vec<(usize, usize)>,
    pub extinct_bodies: usize,
    pub outcomes: Vec<BodyOutcome>,
    pub pass: bool,
}

/// Per-body summary of a [`convexity_sweep`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BodyOutcome {
    pub accepted: bool,
    pub iterates_checked: usize,
    pub violations: usize,
    pub extinct: bool,
}

/// Thresholds each convex body `n_steps` times at constant levels drawn
/// uniformly from `±sup|g| sigma_h` (seeded by `params.seed` and the body
/// index) and checks digital convexity of every nonempty iterate.
pub fn convexity_sweep(bodies: &[GridField], params: &SchemeParams, n_steps: usize) -> Result<ConvexitySweepReport> {
    params.validate()?;
    let kernel = sample_kernel_with(&params.kernel, &params.grid, params.h, params.min_mass_ratio)?;
    let bound = params.forcing.sup_bound(params.horizon) * kernel.sigma();
    let tail = if params.tail_correction { kernel.tail_mass() } else { 0.0 };
    let outcomes: Vec<Result<(bool, usize, Vec<usize>, bool)>> = bodies
        .par_iter()
        .enumerate()
        .map(|(b, body)| {
            if body.grid() != &params.grid {
                return Err(Error::GridMismatch);
            }
            if !digitally_convex(body)? {
                return Ok((false, 0, Vec::new(), false));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (b as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut field = body.clone();
            let mut bad = Vec::new();
            let mut checked = 0;
            for k in 1..=n_steps {
                let c = if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
                field = threshold_step(&field, &kernel, c + tail, params.rule)?;
                if field.is_empty_set() {
                    return Ok((true, checked, bad, true));
                }
                checked += 1;
                if !digitally_convex(&field)? {
                    bad.push(k);
                }
            }
            Ok((true, checked, bad, false))
        })
        .collect();
    let mut report = ConvexitySweepReport {
        bodies: bodies.len(),
        ..Default::default()
    };
    for (b, out) in outcomes.into_iter().enumerate() {
        let (accepted, checked, bad, extinct) = out?;
        report.outcomes.push(BodyOutcome {
            accepted,
            iterates_checked: checked,
            violations: bad.len(),
            extinct,
        });
        if !accepted {
            report.rejected_inputs.push(b);
            continue;
        }
        report.iterates_checked += checked;
        report.violations.extend(bad.into_iter().map(|k| (b, k)));
        report.extinct_bodies += extinct as usize;
    }
    report.pass = report.violations.is_empty();
    Ok(report)
}

/// Extinction step of a ball of each radius centered at `center`, or
/// `None` if it survives the horizon. The kernel is sampled once.
pub fn extinction_sweep(params: &SchemeParams, center: &[f64], radii: &[f64]) -> Result<Vec<Option<usize>>> {
    params.validate()?;
    let kernel = sample_kernel_with(&params.kernel, &params.grid, params.h, params.min_mass_ratio)?;
    let mut p = params.clone();
    p.stop_at_extinction = true;
    p.record_every = 0;
    radii
        .iter()
        .map(|&r| {
            let e0 = GridField::ball(params.grid.clone(), center, r)?;
            Ok(evolve_with_kernel(&e0, &p, &kernel)?.extinction_step)
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::param("points", "need at least two (x, y) pairs of equal length"));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::param("points", "log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("points", "x values must not all coincide"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// A random convex body on a 2D grid: a rotated ellipse, a rotated
/// rectangle or the hull of random points, sized to the middle of the box.
pub fn random_convex_field(grid: &GridSpec, seed: u64) -> Result<GridField> {
    if grid.dim() != 2 {
        return Err(Error::Unsupported("random convex bodies are generated in 2D".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 * grid.extent(0).min(grid.extent(1));
    let mid = [
        grid.origin()[0] + 0.5 * grid.extent(0),
        grid.origin()[1] + 0.5 * grid.extent(1),
    ];
    let c = [
        mid[0] + rng.gen_range(-0.15..0.15) * half,
        mid[1] + rng.gen_range(-0.15..0.15) * half,
    ];
    let theta: f64 = rng.gen_range(0.0..PI);
    let (st, ct) = theta.sin_cos();
    let a = rng.gen_range(0.25..0.6) * half;
    let b = rng.gen_range(0.4..1.0) * a;
    let local = move |x: &[f64]| {
        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
        (ct * dx + st * dy, -st * dx + ct * dy)
    };
    let field = match rng.gen_range(0..3) {
        0 => GridField::phase_from_fn(grid.clone(), move |x| {
            let (u, v) = local(x);
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        }),
        1 => GridField::phase_from_fn(grid.clone(), move |x| {
            let (u, v) = local(x);
            u.abs() <= a && v.abs() <= b
        }),
        _ => {
            let n = rng.gen_range(5..12);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let t: f64 = rng.gen_range(0.0..2.0 * PI);
                    let r = rng.gen_range(0.5..1.0);
                    vec![c[0] + r * a * t.cos(), c[1] + r * b * t.sin()]
                })
                .collect();
            let hull = convex_hull(&pts);
            GridField::phase_from_fn(grid.clone(), move |x| inside_polygon(&hull, x))
        }
    };
    Ok(field)
}

fn inside_polygon(hull: &[Vec<f64>], x: &[f64]) -> bool {
    let n = hull.len();
    n >= 3
        && (0..n).all(|k| {
            let (p, q) = (&hull[k], &hull[(k + 1) % n]);
            (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]) >= 0.0
        })
}
