//! Mobility `A(p)`, the one-homogeneous `Phi(p) = |p| A(p)` and its polar.
//!
//! The hyperplane integral of `P` factors exactly in polar coordinates on
//! `p^perp`: `int_{p^perp} P = I_rad * int_{S(p^perp)} N(w)^(-(N-1)) dw` with
//! `I_rad = int_0^inf t^(N-2) / (1 + t^(N+s)) dt`. The radial factor is
//! computed once per context.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anisotropy::{gaussian, Anisotropy, NormEvaluator};
use crate::error::{check_dim, Error, Result};
use crate::kernel::check_s;
use crate::quadrature::{
    dot, euclid, integrate_half_line, integrate_panels, nested_sphere_point, orthonormal_complement, Estimate,
    Tolerance,
};

#[derive(Clone, Debug)]
pub struct MobilityContext {
    anisotropy: Anisotropy,
    s: f64,
    tol: Tolerance,
    radial: Estimate,
}

impl MobilityContext {
    /// Context with the default hyperplane tolerance (1e-10 relative).
    pub fn new(anisotropy: Anisotropy, s: f64) -> Result<Self> {
        Self::with_tolerance(anisotropy, s, Tolerance::relative(1e-10))
    }

    pub fn with_tolerance(anisotropy: Anisotropy, s: f64, tol: Tolerance) -> Result<Self> {
        check_s(s)?;
        let dim = anisotropy.dim();
        if !(2..=3).contains(&dim) {
            return Err(Error::Unsupported(format!("mobility in dimension {dim}")));
        }
        let a = dim as f64 + s;
        let k = (dim - 2) as i32;
        let radial = integrate_half_line(|t| t.powi(k) / (1.0 + t.powf(a)), 1.0 + s, tol)?;
        Ok(MobilityContext {
            anisotropy,
            s,
            tol,
            radial,
        })
    }

    pub fn anisotropy(&self) -> &Anisotropy {
        &self.anisotropy
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.anisotropy.dim()
    }

    /// `A(p)` with its quadrature error bar.
    pub fn a_estimate(&self, p: &[f64]) -> Result<Estimate> {
        check_dim(self.dim(), p.len())?;
        let len = euclid(p);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::param("p", "mobility needs a nonzero finite direction"));
        }
        let basis = orthonormal_complement(p);
        let n = &self.anisotropy;
        let angular = match self.dim() {
            2 => {
                let t = &basis[0];
                let minus = [-t[0], -t[1]];
                Estimate::new(1.0 / n.norm(t) + 1.0 / n.norm(&minus), 0.0)
            }
            _ => {
                let (e1, e2) = (&basis[0], &basis[1]);
                integrate_panels(
                    |psi: f64| {
                        let (sp, cp) = psi.sin_cos();
                        let w = [cp * e1[0] + sp * e2[0], cp * e1[1] + sp * e2[1], cp * e1[2] + sp * e2[2]];
                        n.norm(&w).powi(-2)
                    },
                    &[0.0, 0.5 * PI, PI, 1.5 * PI, 2.0 * PI],
                    self.tol,
                )?
            }
        };
        let integral = self.radial.value * angular.value;
        let value = 1.0 / (2.0 * integral);
        let rel = self.radial.error / self.radial.value + angular.error / angular.value;
        Ok(Estimate::new(value, value * rel))
    }

    /// `Phi(p)` with its error bar; `Phi(0) = 0`.
    pub fn phi_estimate(&self, p: &[f64]) -> Result<Estimate> {
        check_dim(self.dim(), p.len())?;
        let len = euclid(p);
        if len == 0.0 {
            return Ok(Estimate::default());
        }
        Ok(self.a_estimate(p)?.scale(len))
    }
}

/// `A(p) = (2 int_{p^perp} P)^(-1)`.
pub fn a(ctx: &MobilityContext, p: &[f64]) -> Result<f64> {
    ctx.a_estimate(p).map(|e| e.value)
}

/// `Phi(p) = |p| A(p)`, extended by `Phi(0) = 0`.
pub fn phi(ctx: &MobilityContext, p: &[f64]) -> Result<f64> {
    ctx.phi_estimate(p).map(|e| e.value)
}

fn check_polar_dirs(dim: usize, n_dirs: usize) -> Result<()> {
    let min = if dim == 2 { 128 } else { 2048 };
    if n_dirs < min {
        return Err(Error::param("n_dirs", format!("need at least {min} directions in dim {dim}")));
    }
    Ok(())
}

/// Points `xi / Phi(xi)` for the first `n` nested unit directions.
fn wulff_points(ctx: &MobilityContext, n: usize) -> Result<Vec<Vec<f64>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let xi = nested_sphere_point(ctx.dim(), k);
            let f = phi(ctx, &xi)?;
            Ok(xi.iter().map(|v| v / f).collect())
        })
        .collect()
}

/// `Phi°(q) = sup { xi.q : Phi(xi) <= 1 }` over `n_dirs` sampled directions.
pub fn phi_polar(ctx: &MobilityContext, q: &[f64], n_dirs: usize) -> Result<f64> {
    check_dim(ctx.dim(), q.len())?;
    check_polar_dirs(ctx.dim(), n_dirs)?;
    let pts = wulff_points(ctx, n_dirs)?;
    Ok(pts.iter().map(|w| dot(w, q)).fold(0.0, f64::max))
}

/// Reusable evaluator for `Phi°`.
///
/// Euclidean anisotropies use the exact `|q| / alpha`. Otherwise 2D
/// tabulates the sampled polar on a uniform angle table and interpolates
/// linearly; 3D takes the sampled max directly.
#[derive(Clone, Debug)]
pub struct PolarNorm {
    dim: usize,
    form: PolarForm,
}

#[derive(Clone, Debug)]
enum PolarForm {
    Scaled(f64),
    Table(Vec<f64>),
    Samples(Vec<Vec<f64>>),
}

const POLAR_TABLE: usize = 4096;

impl PolarNorm {
    pub fn new(ctx: &MobilityContext, n_dirs: usize) -> Result<Self> {
        let dim = ctx.dim();
        check_polar_dirs(dim, n_dirs)?;
        if ctx.anisotropy().is_euclidean() {
            let mut e = vec![0.0; dim];
            e[0] = 1.0;
            return Ok(Self::euclidean(dim, phi(ctx, &e)?));
        }
        let pts = wulff_points(ctx, n_dirs)?;
        let form = if dim == 2 {
            let table = (0..POLAR_TABLE)
                .into_par_iter()
                .map(|j| {
                    let t = 2.0 * PI * j as f64 / POLAR_TABLE as f64;
                    let q = [t.cos(), t.sin()];
                    pts.iter().map(|w| dot(w, &q)).fold(0.0, f64::max)
                })
                .collect();
            PolarForm::Table(table)
        } else {
            PolarForm::Samples(pts)
        };
        Ok(PolarNorm { dim, form })
    }

    /// Polar of `alpha |.|`.
    pub fn euclidean(dim: usize, alpha: f64) -> Self {
        PolarNorm {
            dim,
            form: PolarForm::Scaled(alpha),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.form, PolarForm::Scaled(_))
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        match &self.form {
            PolarForm::Scaled(alpha) => euclid(q) / alpha,
            PolarForm::Table(table) => {
                let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                let n = table.len();
                let t = q[1].atan2(q[0]).rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
                let j = (t.floor() as usize).min(n - 1);
                let f = t - j as f64;
                r * ((1.0 - f) * table[j] + f * table[(j + 1) % n])
            }
            PolarForm::Samples(pts) => pts.iter().map(|w| dot(w, q)).fold(0.0, f64::max),
        }
    }
}

impl NormEvaluator for PolarNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn euclidean_scale(&self) -> Option<f64> {
        match self.form {
            PolarForm::Scaled(alpha) => Some(1.0 / alpha),
            _ => None,
        }
    }
}

/// `Phi` as a [`NormEvaluator`] (quadrature errors are swallowed as NaN).
pub struct MobilityNorm<'a>(pub &'a MobilityContext);

impl NormEvaluator for MobilityNorm<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        phi(self.0, x).unwrap_or(f64::NAN)
    }
}

/// Ratios `Phi(p) * int_R dz / N(Rp + z e_3)^2` for in-plane `p` (dim 3).
/// `Rp = (-p_2, p_1, 0)`; the ratios are the constant `C(3, s)` when the
/// hyperplane quadrature is consistent.
pub fn phi_reduced_ratio(ctx: &MobilityContext, p_list: &[Vec<f64>]) -> Result<Vec<f64>> {
    if ctx.dim() < 3 {
        return Err(Error::Unsupported("the reduced formula needs dim >= 3".into()));
    }
    p_list
        .iter()
        .map(|p| {
            check_dim(3, p.len())?;
            if p[2] != 0.0 || (p[0] == 0.0 && p[1] == 0.0) {
                return Err(Error::param("p", "directions must be nonzero and lie in the e1 e2 plane"));
            }
            let rp = [-p[1], p[0]];
            let n = ctx.anisotropy();
            // the integrand is even in z
            let half = integrate_half_line(|z| n.norm(&[rp[0], rp[1], z]).powi(-2), 1.0, ctx.tol)?;
            Ok(phi(ctx, p)? * 2.0 * half.value)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityReport {
    pub trials: usize,
    /// Triples whose violation exceeds twice their error bar.
    pub violations: usize,
    pub max_violation: f64,
    /// Error bar of the triple attaining `max_violation`.
    pub error_bar: f64,
    pub pass: bool,
}

pub const CONVEXITY_SEED: u64 = 0x5eed_c0de;

/// Random midpoint-convexity checks `Phi(l p1 + (1-l) p0) <= l Phi(p1) + (1-l) Phi(p0)`.
pub fn convexity_probe(ctx: &MobilityContext, n_trials: usize) -> Result<ConvexityReport> {
    convexity_probe_seeded(ctx, n_trials, CONVEXITY_SEED)
}

pub fn convexity_probe_seeded(ctx: &MobilityContext, n_trials: usize, seed: u64) -> Result<ConvexityReport> {
    if n_trials < 1000 {
        return Err(Error::param("n_trials", "need at least 1000 trials"));
    }
    let dim = ctx.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..n_trials)
        .map(|_| {
            let p0: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let p1: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let l = rand::Rng::gen_range(&mut rng, 1e-3..1.0 - 1e-3);
            (p0, p1, l)
        })
        .collect();
    let checks: Vec<(f64, f64)> = triples
        .par_iter()
        .map(|(p0, p1, l)| {
            let mid: Vec<f64> = p0.iter().zip(p1).map(|(a, b)| l * b + (1.0 - l) * a).collect();
            let f0 = ctx.phi_estimate(p0)?;
            let f1 = ctx.phi_estimate(p1)?;
            let fm = ctx.phi_estimate(&mid)?;
            let rhs = l * f1.value + (1.0 - l) * f0.value;
            let bar = fm.error + l * f1.error + (1.0 - l) * f0.error + 1e-13 * rhs.abs().max(fm.value);
            Ok((fm.value - rhs, bar))
        })
        .collect::<Result<_>>()?;
    let mut report = ConvexityReport {
        trials: n_trials,
        violations: 0,
        max_violation: f64::NEG_INFINITY,
        error_bar: 0.0,
        pass: true,
    };
    for (v, bar) in checks {
        if v > 2.0 * bar {
            report.violations += 1;
        }
        if v > report.max_violation {
            report.max_violation = v;
            report.error_bar = bar;
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(a: Anisotropy, s: f64) -> MobilityContext {
        MobilityContext::new(a, s).unwrap()
    }

    #[test]
    fn euclidean_2d_closed_form() {
        // int_R dt / (1 + |t|^a) = 2 (pi/a) / sin(pi/a), a = 2.5
        let a_exp = 2.5f64;
        let line = 2.0 * (PI / a_exp) / (PI / a_exp).sin();
        assert!((line - 2.64262).abs() < 1e-5);
        let c = ctx(Anisotropy::euclidean(2).unwrap(), 0.5);
        for t in [0.0f64, 0.3, 1.7, 2.9] {
            let v = a(&c, &[t.cos(), t.sin()]).unwrap();
            assert!((v - 1.0 / (2.0 * line)).abs() < 1e-9 / line, "{v}");
            assert!((v - 0.189205).abs() < 1e-5 * 0.189205);
        }
    }

    #[test]
    fn euclidean_3d_closed_form() {
        // int_{R^2} dy / (1 + |y|^a) = 2 pi (pi/a) / sin(2 pi/a), a = 3.5
        let a_exp = 3.5f64;
        let plane = 2.0 * PI * (PI / a_exp) / (2.0 * PI / a_exp).sin();
        let c = ctx(Anisotropy::euclidean(3).unwrap(), 0.5);
        let v = a(&c, &[0.3, -0.4, 1.2]).unwrap();
        assert!((v - 1.0 / (2.0 * plane)).abs() < 1e-9 * v);
    }

    #[test]
    fn weighted_l1_2d_matches_line_integral() {
        // A(p) = N(t) / (2 * line) for the unit tangent t of p
        let an = Anisotropy::weighted_lq(1.0, vec![1.0, 2.0]).unwrap();
        let c = ctx(an.clone(), 0.5);
        let line = 2.0 * (PI / 2.5) / (PI / 2.5).sin();
        let p = [0.6, 0.8];
        let t = [-0.8, 0.6];
        let expect = an.eval(&t).unwrap() / (2.0 * line);
        assert!((a(&c, &p).unwrap() - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn homogeneity_and_zero() {
        let c = ctx(Anisotropy::scaled_euclidean(2, vec![1.0, 0.2, 0.2, 1.5]).unwrap(), 0.4);
        assert_eq!(phi(&c, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(a(&c, &[0.0, 0.0]).is_err());
        let p = [0.3, -1.1];
        assert_eq!(a(&c, &p).unwrap(), a(&c, &[0.6, -2.2]).unwrap());
        let f = phi(&c, &p).unwrap();
        for l in [-2.0, 0.5] {
            let q = [l * p[0], l * p[1]];
            assert!((phi(&c, &q).unwrap() - l.abs() * f).abs() < 1e-12 * f);
        }
    }

    #[test]
    fn euclidean_constant_over_directions() {
        let c = ctx(Anisotropy::euclidean(3).unwrap(), 0.3);
        let ref_v = a(&c, &[1.0, 0.0, 0.0]).unwrap();
        for k in 0..100 {
            let p = nested_sphere_point(3, k);
            assert!((a(&c, &p).unwrap() - ref_v).abs() < 1e-6 * ref_v);
        }
    }

    #[test]
    fn polar_of_euclidean() {
        let c = ctx(Anisotropy::euclidean(2).unwrap(), 0.5);
        let alpha = phi(&c, &[1.0, 0.0]).unwrap();
        let q = [0.7, -0.2];
        let sampled = phi_polar(&c, &q, 128).unwrap();
        let exact = euclid(&q) / alpha;
        assert!(sampled <= exact * (1.0 + 1e-12));
        assert!((sampled - exact).abs() < 1e-3 * exact);
        assert_eq!(phi_polar(&c, &[0.0, 0.0], 128).unwrap(), 0.0);
        let pn = PolarNorm::new(&c, 128).unwrap();
        assert!(pn.is_exact());
        assert!((pn.eval(&q) - exact).abs() < 1e-12 * exact);
        assert!(phi_polar(&c, &q, 64).is_err());
    }

    #[test]
    fn polar_monotone_in_directions() {
        let c = ctx(Anisotropy::weighted_lq(1.0, vec![1.0, 2.0]).unwrap(), 0.5);
        let q = [0.31, 0.77];
        let mut last = 0.0;
        for n in [128, 256, 512, 1024] {
            let v = phi_polar(&c, &q, n).unwrap();
            assert!(v >= last);
            last = v;
        }
        // table interpolation stays within the sampling error
        let pn = PolarNorm::new(&c, 1024).unwrap();
        assert!((pn.eval(&q) - last).abs() < 1e-3 * last);
    }

    #[test]
    fn polar_duality_bound() {
        // xi.q <= Phi(xi) Phi°(q)
        let c = ctx(Anisotropy::scaled_euclidean(2, vec![1.0, 0.0, 0.0, 1.5]).unwrap(), 0.5);
        let pn = PolarNorm::new(&c, 512).unwrap();
        for k in 0..50 {
            let xi = nested_sphere_point(2, k);
            let q = nested_sphere_point(2, k + 7);
            assert!(dot(&xi, &q) <= phi(&c, &xi).unwrap() * pn.eval(&q) * (1.0 + 2e-3));
        }
    }

    #[test]
    fn reduced_ratio_constant() {
        let c = ctx(Anisotropy::euclidean(3).unwrap(), 0.5);
        let dirs: Vec<Vec<f64>> = (0..8)
            .map(|k| {
                let t = PI * k as f64 / 8.0 + 0.1;
                vec![t.cos(), t.sin(), 0.0]
            })
            .collect();
        let r = phi_reduced_ratio(&c, &dirs).unwrap();
        let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!((hi - lo) / lo < 1e-6);
        let doubled: Vec<Vec<f64>> = dirs.iter().map(|p| p.iter().map(|v| 2.0 * v).collect()).collect();
        let r2 = phi_reduced_ratio(&c, &doubled).unwrap();
        for (x, y) in r.iter().zip(&r2) {
            assert!((x - y).abs() < 1e-8 * x);
        }
        let c2 = ctx(Anisotropy::scaled_euclidean(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]).unwrap(), 0.5);
        let r = phi_reduced_ratio(&c2, &dirs).unwrap();
        let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!((hi - lo) / lo < 0.02);
        assert!(phi_reduced_ratio(&ctx(Anisotropy::euclidean(2).unwrap(), 0.5), &[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn convexity_for_2d_kinds() {
        for an in [
            Anisotropy::euclidean(2).unwrap(),
            Anisotropy::weighted_lq(1.0, vec![1.0, 1.0]).unwrap(),
            Anisotropy::scaled_euclidean(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap(),
        ] {
            let rep = convexity_probe(&ctx(an, 0.5), 1000).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
        assert!(convexity_probe(&ctx(Anisotropy::euclidean(2).unwrap(), 0.5), 10).is_err());
    }
}
