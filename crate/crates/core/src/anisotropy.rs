//! Norms driving the interaction kernel.
//!
//! An [`Anisotropy`] is one of a small family of parametric norms on `R^dim`
//! together with certified equivalence constants `c_lower |x| <= N(x) <= c_upper |x|`.
//! Arbitrary evaluators enter only through [`Anisotropy::custom`], which runs
//! [`validate_norm`] before accepting them.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::quadrature::{dot, euclid};

/// Anything that evaluates a (candidate) norm on `R^dim`.
pub trait NormEvaluator: Send + Sync {
    fn dim(&self) -> usize;

    /// Unchecked evaluation; `x.len()` must equal `self.dim()`.
    fn value(&self, x: &[f64]) -> f64;

    /// `Some(k)` when the evaluator is exactly `k |x|`.
    fn euclidean_scale(&self) -> Option<f64> {
        None
    }
}

impl<F> NormEvaluator for (usize, F)
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.1)(x)
    }
}

pub type NormFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum AnisotropyKind {
    Euclidean,
    /// `(Σ w_i |x_i|^q)^(1/q)`; `q = ∞` gives `max w_i |x_i|`.
    WeightedLq { q: f64, weights: Vec<f64> },
    /// `|M x|` for a symmetric positive definite `M`, stored row-major.
    ScaledEuclidean { matrix: Vec<f64> },
    /// Support function of the symmetric set `{±d_j}`: `max_j |d_j · x|`.
    Polytope { directions: Vec<Vec<f64>> },
    Custom(NormFn),
}

impl fmt::Debug for AnisotropyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnisotropyKind::Euclidean => write!(f, "Euclidean"),
            AnisotropyKind::WeightedLq { q, weights } => f
                .debug_struct("WeightedLq")
                .field("q", q)
                .field("weights", weights)
                .finish(),
            AnisotropyKind::ScaledEuclidean { matrix } => {
                f.debug_struct("ScaledEuclidean").field("matrix", matrix).finish()
            }
            AnisotropyKind::Polytope { directions } => f
                .debug_struct("Polytope")
                .field("directions", directions)
                .finish(),
            AnisotropyKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Anisotropy {
    kind: AnisotropyKind,
    dim: usize,
    c_lower: f64,
    c_upper: f64,
}

/// Default number of sphere samples used to certify the norm bounds.
pub fn default_bound_samples(dim: usize) -> usize {
    10 * dim * 1024
}

impl Anisotropy {
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::build(AnisotropyKind::Euclidean, dim)
    }

    pub fn weighted_lq(q: f64, weights: Vec<f64>) -> Result<Self> {
        if !(q >= 1.0) {
            return Err(Error::param("q", format!("must be >= 1, got {q}")));
        }
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::param("weights", "must be finite and positive"));
        }
        let dim = weights.len();
        Self::build(AnisotropyKind::WeightedLq { q, weights }, dim)
    }

    pub fn scaled_euclidean(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::param(
                "matrix",
                format!("expected {} entries, got {}", dim * dim, matrix.len()),
            ));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (matrix[i * dim + j], matrix[j * dim + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::param("matrix", "must be symmetric"));
                }
            }
        }
        if !cholesky_ok(&matrix, dim) {
            return Err(Error::param("matrix", "must be positive definite"));
        }
        Self::build(AnisotropyKind::ScaledEuclidean { matrix }, dim)
    }

    /// Support-function norm of the direction set, symmetrized by adding `-d`
    /// for every `d`.
    pub fn polytope(dim: usize, directions: Vec<Vec<f64>>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::param("directions", "empty direction set"));
        }
        let mut sym: Vec<Vec<f64>> = Vec::with_capacity(2 * directions.len());
        for d in directions {
            check_dim(dim, d.len())?;
            if d.iter().any(|x| !x.is_finite()) || euclid(&d) == 0.0 {
                return Err(Error::param("directions", "directions must be finite and nonzero"));
            }
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            for v in [d, neg] {
                if !sym.iter().any(|w| w == &v) {
                    sym.push(v);
                }
            }
        }
        Self::build(AnisotropyKind::Polytope { directions: sym }, dim)
    }

    /// Accepts an arbitrary evaluator after it passes [`validate_norm`].
    pub fn custom(dim: usize, f: NormFn) -> Result<Self> {
        let report = validate_norm(&(dim, |x: &[f64]| f(x)), 4096, EXACT_TOLERANCE, 0x5eed);
        if !report.pass {
            return Err(Error::NotANorm(report.summary()));
        }
        Self::build(AnisotropyKind::Custom(f), dim)
    }

    fn build(kind: AnisotropyKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        let mut a = Anisotropy {
            kind,
            dim,
            c_lower: 1.0,
            c_upper: 1.0,
        };
        a.certify_bounds(default_bound_samples(dim))?;
        Ok(a)
    }

    pub fn kind(&self) -> &AnisotropyKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    pub fn c_upper(&self) -> f64 {
        self.c_upper
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, AnisotropyKind::Euclidean)
    }

    /// Short label used in tables and manifests.
    pub fn label(&self) -> String {
        match &self.kind {
            AnisotropyKind::Euclidean => "euclidean".into(),
            AnisotropyKind::WeightedLq { q, weights } => {
                format!("weighted-l{}({})", fmt_q(*q), join(weights))
            }
            AnisotropyKind::ScaledEuclidean { matrix } => {
                format!("scaled-euclidean({})", join(matrix))
            }
            AnisotropyKind::Polytope { directions } => {
                format!("polytope({} directions)", directions.len())
            }
            AnisotropyKind::Custom(_) => "custom".into(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.norm(x))
    }

    #[inline]
    pub(crate) fn norm(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            AnisotropyKind::Euclidean => euclid(x),
            AnisotropyKind::WeightedLq { q, weights } => {
                if q.is_infinite() {
                    x.iter()
                        .zip(weights)
                        .map(|(xi, w)| w * xi.abs())
                        .fold(0.0, f64::max)
                } else if *q == 1.0 {
                    x.iter().zip(weights).map(|(xi, w)| w * xi.abs()).sum()
                } else {
                    // scale by the largest term so tiny and huge inputs stay finite
                    let m = x
                        .iter()
                        .zip(weights)
                        .map(|(xi, w)| w.powf(1.0 / q) * xi.abs())
                        .fold(0.0, f64::max);
                    if m == 0.0 {
                        return 0.0;
                    }
                    let sum: f64 = x
                        .iter()
                        .zip(weights)
                        .map(|(xi, w)| w * (xi.abs() / m).powf(*q))
                        .sum();
                    m * sum.powf(1.0 / q)
                }
            }
            AnisotropyKind::ScaledEuclidean { matrix } => {
                let d = self.dim;
                let mut acc = 0.0;
                for i in 0..d {
                    let row = dot(&matrix[i * d..(i + 1) * d], x);
                    acc += row * row;
                }
                acc.sqrt()
            }
            AnisotropyKind::Polytope { directions } => directions
                .iter()
                .map(|d| dot(d, x).abs())
                .fold(0.0, f64::max),
            AnisotropyKind::Custom(f) => {
                if x.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f(x)
                }
            }
        }
    }

    /// Min and max of the norm over quasi-uniform samples of the Euclidean
    /// unit sphere, each refined by a local pattern search; the result is
    /// stored on `self`.
    pub fn certify_bounds(&mut self, n_samples: usize) -> Result<(f64, f64)> {
        if n_samples < self.dim * 10 {
            return Err(Error::param(
                "n_samples",
                format!("need at least {} samples, got {n_samples}", self.dim * 10),
            ));
        }
        let samples = sphere_samples(self.dim, n_samples);
        let mut lo = (f64::INFINITY, 0usize);
        let mut hi = (f64::NEG_INFINITY, 0usize);
        for (i, u) in samples.iter().enumerate() {
            let v = self.norm(u);
            if !v.is_finite() {
                return Err(Error::NotANorm(format!("non-finite value {v} on the unit sphere")));
            }
            if v < lo.0 {
                lo = (v, i);
            }
            if v > hi.0 {
                hi = (v, i);
            }
        }
        let step = sample_spacing(self.dim, n_samples);
        let lower = refine_extreme(self, &samples[lo.1], step, -1.0).min(lo.0);
        let upper = refine_extreme(self, &samples[hi.1], step, 1.0).max(hi.0);
        if !(lower > 1e-12 * upper) {
            return Err(Error::NotANorm(format!(
                "sampled minimum {lower:.3e} on the unit sphere is not positive"
            )));
        }
        self.c_lower = lower;
        self.c_upper = upper;
        Ok((lower, upper))
    }

    /// [`validate_norm`] with the tolerance appropriate to this kind.
    pub fn validate(&self, n_samples: usize) -> NormReport {
        let tol = match self.kind {
            AnisotropyKind::Polytope { .. } => POLYTOPE_TOLERANCE,
            _ => EXACT_TOLERANCE,
        };
        validate_norm(self, n_samples, tol, 0x5eed)
    }
}

impl NormEvaluator for Anisotropy {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.norm(x)
    }
    fn euclidean_scale(&self) -> Option<f64> {
        self.is_euclidean().then_some(1.0)
    }
}

fn fmt_q(q: f64) -> String {
    if q.is_infinite() {
        "inf".into()
    } else {
        format!("{q}")
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn cholesky_ok(m: &[f64], n: usize) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return false;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    true
}

/// Quasi-uniform points on the Euclidean unit sphere: equispaced angles in
/// 2D, a Fibonacci lattice in 3D, seeded Gaussian directions beyond.
pub(crate) fn sphere_samples(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * k as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0xa11ce);
            (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
                    let len = euclid(&v);
                    v.into_iter().map(|x| x / len).collect()
                })
                .collect()
        }
    }
}

fn sample_spacing(dim: usize, n: usize) -> f64 {
    match dim {
        1 => 0.0,
        2 => 2.0 * PI / n as f64,
        d => (4.0 * PI / n as f64).powf(1.0 / (d - 1) as f64),
    }
}

/// Pattern search on the unit sphere for a local extreme of the norm
/// (`sign = 1` maximizes, `-1` minimizes).
fn refine_extreme(a: &Anisotropy, start: &[f64], step: f64, sign: f64) -> f64 {
    let dim = a.dim;
    if dim == 1 || step == 0.0 {
        return a.norm(start);
    }
    let mut x = start.to_vec();
    let mut best = sign * a.norm(&x);
    let mut h = step;
    let mut trial = vec![0.0; dim];
    while h > 1e-13 {
        let mut improved = false;
        for axis in 0..dim {
            for dir in [-1.0, 1.0] {
                trial.copy_from_slice(&x);
                trial[axis] += dir * h;
                let len = euclid(&trial);
                trial.iter_mut().for_each(|v| *v /= len);
                let val = sign * a.norm(&trial);
                if val > best {
                    best = val;
                    x.copy_from_slice(&trial);
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    sign * best
}

pub(crate) fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub const EXACT_TOLERANCE: f64 = 1e-9;
pub const POLYTOPE_TOLERANCE: f64 = 1e-6;

/// Worst relative violations of the norm axioms over random samples.
#[derive(Clone, Debug)]
pub struct NormReport {
    pub samples: usize,
    pub evenness: f64,
    pub homogeneity: f64,
    pub convexity: f64,
    /// Number of nonzero samples where the evaluator was not positive.
    pub nonpositive: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl NormReport {
    pub fn summary(&self) -> String {
        format!(
            "evenness {:.3e}, homogeneity {:.3e}, midpoint convexity {:.3e}, nonpositive {} (tolerance {:.1e})",
            self.evenness, self.homogeneity, self.convexity, self.nonpositive, self.tolerance
        )
    }
}

/// Checks evenness, positive 1-homogeneity and midpoint convexity of `norm`
/// at `n_samples` random points (relative violations).
pub fn validate_norm<N: NormEvaluator + ?Sized>(
    norm: &N,
    n_samples: usize,
    tolerance: f64,
    seed: u64,
) -> NormReport {
    let dim = norm.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        (0..dim).map(|_| scale * gaussian(rng)).collect()
    };
    let rel = |err: f64, scale: f64| err / scale.abs().max(1e-300);

    let (mut even, mut homog, mut conv, mut nonpos) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for _ in 0..n_samples {
        let x = point(&mut rng);
        let y = point(&mut rng);
        let nx = norm.value(&x);
        let ny = norm.value(&y);
        if !(nx > 0.0) {
            nonpos += 1;
        }
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        even = even.max(rel((norm.value(&neg) - nx).abs(), nx));

        let lambda = 10f64.powf(rng.gen_range(-2.0..2.0));
        let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        homog = homog.max(rel((norm.value(&scaled) - lambda * nx).abs(), lambda * nx));

        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let avg = 0.5 * (nx + ny);
        conv = conv.max(rel((norm.value(&mid) - avg).max(0.0), avg));
    }
    let pass = even <= tolerance && homog <= tolerance && conv <= tolerance && nonpos == 0;
    NormReport {
        samples: n_samples,
        evenness: even,
        homogeneity: homog,
        convexity: conv,
        nonpositive: nonpos,
        tolerance,
        pass,
    }
}
