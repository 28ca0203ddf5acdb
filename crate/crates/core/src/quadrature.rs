//! Adaptive Gauss–Kronrod quadrature, endpoint-singularity substitutions and
//! nested low-discrepancy direction sets shared by the geometric modules.

use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A quadrature value together with its estimated absolute error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }

    pub fn scale(self, factor: f64) -> Self {
        Estimate::new(self.value * factor, self.error * factor.abs())
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate::new(self.value + rhs.value, self.error + rhs.error)
    }
}

impl std::iter::Sum for Estimate {
    fn sum<I: Iterator<Item = Estimate>>(iter: I) -> Estimate {
        iter.fold(Estimate::default(), |a, b| a + b)
    }
}

/// Stopping rule for adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance {
            abs: 1e-300,
            rel,
            max_intervals: 4000,
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::relative(1e-10)
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Estimate::new(kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature of `f` over the panels
/// delimited by the sorted `points` (at least two).
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Result<Estimate> {
    if points.len() < 2 {
        return Err(Error::param("points", "need at least two breakpoints"));
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(Panel {
                a: w[0],
                b: w[1],
                est: kronrod15(&f, w[0], w[1]),
            });
        }
    }
    let total = |heap: &BinaryHeap<Panel>| heap.iter().map(|p| p.est).sum::<Estimate>();
    let mut sum = total(&heap);
    let mut since_resum = 0usize;
    while sum.error > tol.target(sum.value) {
        if heap.len() >= tol.max_intervals {
            if !sum.value.is_finite() {
                return Err(Error::Quadrature("non-finite integrand".into()));
            }
            return Err(Error::Quadrature(format!(
                "error estimate {:.3e} above target {:.3e} after {} panels",
                sum.error,
                tol.target(sum.value),
                heap.len()
            )));
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // cannot bisect further in floating point
            heap.push(worst);
            break;
        }
        let left = kronrod15(&f, worst.a, mid);
        let right = kronrod15(&f, mid, worst.b);
        sum.value += left.value + right.value - worst.est.value;
        sum.error += left.error + right.error - worst.est.error;
        heap.push(Panel { a: worst.a, b: mid, est: left });
        heap.push(Panel { a: mid, b: worst.b, est: right });
        since_resum += 1;
        if since_resum == 64 {
            sum = total(&heap);
            since_resum = 0;
        }
    }
    let sum = total(&heap);
    if !sum.value.is_finite() {
        return Err(Error::Quadrature("non-finite integrand".into()));
    }
    Ok(sum)
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_panels(f, &[a, b], tol)
}

/// Integrates `f` over `[a, b]` when `f` may behave like `|x - a|^(-beta)`
/// near `a`, using `x = a + (b - a) u^p` with `p = 1 / (1 - beta)`.
pub fn integrate_singular_start<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    beta: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    let p = 1.0 / (1.0 - beta).max(1e-3);
    let len = b - a;
    integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let x = a + len * u.powf(p);
            f(x) * len * p * u.powf(p - 1.0)
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integrates `f` on `[0, ∞)` when `f(r)` decays like `r^(-1-s)`: `[0, 1]`
/// directly and `[1, ∞)` through `r = w^(-1/s)`, which maps the tail onto a
/// bounded smooth integrand.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, s: f64, tol: Tolerance) -> Result<Estimate> {
    let near = integrate(&f, 0.0, 1.0, tol)?;
    let far = integrate(
        |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            let r = w.powf(-1.0 / s);
            // dr = (1/s) w^(-1/s - 1) dw
            f(r) * r / (s * w)
        },
        0.0,
        1.0,
        tol,
    )?;
    Ok(near + far)
}

/// Radical inverse of `k` in the given base.
pub fn van_der_corput(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// `k`-th element of a prefix-nested quasi-uniform sequence on the Euclidean
/// unit sphere of `R^dim` (dim 2 or 3). Taking the first `n` elements for
/// increasing `n` always yields nested sets.
pub fn nested_sphere_point(dim: usize, k: u64) -> Vec<f64> {
    match dim {
        1 => vec![if k % 2 == 0 { 1.0 } else { -1.0 }],
        2 => {
            let t = 2.0 * PI * van_der_corput(k, 2);
            vec![t.cos(), t.sin()]
        }
        _ => {
            // dims > 3 are handled by the caller; fall back to the 3-sphere map.
            let z = 1.0 - 2.0 * van_der_corput(k, 2);
            let phi = 2.0 * PI * van_der_corput(k, 3);
            let r = (1.0 - z * z).max(0.0).sqrt();
            vec![r * phi.cos(), r * phi.sin(), z]
        }
    }
}

/// Surface area of the Euclidean unit sphere `S^(dim-1)` in `R^dim`
/// (for dim 1 this is the counting measure of `{-1, 1}`).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        d => 2.0 * PI / (d - 2) as f64 * sphere_area(d - 2),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn euclid(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal basis of the orthogonal complement of `p` (p ≠ 0).
pub(crate) fn orthonormal_complement(p: &[f64]) -> Vec<Vec<f64>> {
    let dim = p.len();
    let n = euclid(p);
    let unit: Vec<f64> = p.iter().map(|x| x / n).collect();
    let mut basis: Vec<Vec<f64>> = vec![unit];
    // Gram–Schmidt over the canonical vectors, most orthogonal ones first.
    let mut axes: Vec<usize> = (0..dim).collect();
    axes.sort_by(|&i, &j| p[i].abs().total_cmp(&p[j].abs()));
    for &i in &axes {
        if basis.len() == dim {
            break;
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (vk, bk) in v.iter_mut().zip(b) {
                    *vk -= c * bk;
                }
            }
        }
        let len = euclid(&v);
        if len > 1e-8 {
            v.iter_mut().for_each(|x| *x /= len);
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((est.value - exact).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^(-0.75) dx = 4
        let est =
            integrate_singular_start(|x| x.powf(-0.75), 0.0, 1.0, 0.75, Tolerance::default())
                .unwrap();
        assert!((est.value - 4.0).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn half_line_matches_beta_function() {
        // ∫_0^∞ dt / (1 + t^a) = (π/a) / sin(π/a)
        let a: f64 = 2.5;
        let est = integrate_half_line(|t| 1.0 / (1.0 + t.powf(a)), 0.5, Tolerance::default())
            .unwrap();
        let exact = (PI / a) / (PI / a).sin();
        assert!((est.value - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn nested_points_are_unit() {
        for dim in [2, 3] {
            for k in 0..100 {
                let p = nested_sphere_point(dim, k);
                assert!((euclid(&p) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(sphere_area(2), 2.0 * PI);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn complement_is_orthonormal() {
        let p = [0.3, -1.2, 2.0];
        let basis = orthonormal_complement(&p);
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!(dot(b, &p).abs() < 1e-12);
            assert!((euclid(b) - 1.0).abs() < 1e-12);
        }
        assert!(dot(&basis[0], &basis[1]).abs() < 1e-12);
    }
}
