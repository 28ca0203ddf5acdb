//! The interaction kernels `P(x) = 1/(1 + N(x)^(N+s))` and
//! `P_h(x) = sigma_h^(-N/s) P(x / sigma_h^(1/s))`, and their sampling onto a grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::anisotropy::Anisotropy;
use crate::convolution::Spectral;
use crate::error::{check_dim, Error, Result};
use crate::grid::{FieldKind, GridField, GridSpec};
use crate::quadrature::{integrate, integrate_panels, sphere_area, Estimate, Tolerance};

#[derive(Clone, Debug)]
pub struct KernelSpec {
    anisotropy: Anisotropy,
    s: f64,
}

impl KernelSpec {
    pub fn new(anisotropy: Anisotropy, s: f64) -> Result<Self> {
        check_s(s)?;
        Ok(KernelSpec { anisotropy, s })
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

    /// `N + s`.
    pub fn exponent(&self) -> f64 {
        self.dim() as f64 + self.s
    }
}

pub(crate) fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::param("s", format!("must lie in (0, 1), got {s}")))
    }
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::param("h", format!("must be positive, got {h}")))
    }
}

/// `sigma_h = h^(s/(1+s))`.
pub fn sigma(h: f64, s: f64) -> Result<f64> {
    check_h(h)?;
    check_s(s)?;
    Ok(h.powf(s / (1.0 + s)))
}

/// Spatial concentration scale `sigma_h^(1/s) = h^(1/(1+s))` of `P_h`.
pub fn concentration_scale(h: f64, s: f64) -> Result<f64> {
    check_h(h)?;
    check_s(s)?;
    Ok(h.powf(1.0 / (1.0 + s)))
}

pub fn p_eval(spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    let n = spec.anisotropy.eval(x)?;
    Ok(1.0 / (1.0 + n.powf(spec.exponent())))
}

/// `P_h` through the scaling definition.
pub fn p_h_eval(spec: &KernelSpec, x: &[f64], h: f64) -> Result<f64> {
    check_dim(spec.dim(), x.len())?;
    let sig = sigma(h, spec.s)?;
    let scale = sig.powf(1.0 / spec.s);
    let y: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let p = p_eval(spec, &y)?;
    Ok(sig.powf(-(spec.dim() as f64) / spec.s) * p)
}

/// `P_h` through `h^(s/(1+s)) / (h^((N+s)/(1+s)) + N(x)^(N+s))`.
pub fn p_h_closed_form(spec: &KernelSpec, x: &[f64], h: f64) -> Result<f64> {
    check_h(h)?;
    let c = PhConstants::new(spec, h);
    Ok(c.value(spec.anisotropy.eval(x)?))
}

#[derive(Clone, Copy, Debug)]
struct PhConstants {
    sigma: f64,
    eps: f64,
    a: f64,
}

impl PhConstants {
    fn new(spec: &KernelSpec, h: f64) -> Self {
        let s = spec.s;
        let a = spec.exponent();
        PhConstants {
            sigma: h.powf(s / (1.0 + s)),
            eps: h.powf(a / (1.0 + s)),
            a,
        }
    }

    #[inline]
    fn value(&self, norm: f64) -> f64 {
        self.sigma / (self.eps + norm.powf(self.a))
    }
}

/// Minimum ratio `mass_on_grid / mass_total` accepted by [`sample_kernel`].
pub const MIN_MASS_RATIO: f64 = 0.9;

/// `P_h` sampled on the offsets of a grid, with mass bookkeeping.
pub struct KernelGrid {
    spec: KernelSpec,
    grid: GridSpec,
    h: f64,
    sigma: f64,
    values: Vec<f64>,
    mass_on_grid: f64,
    mass_total: f64,
    tail_mass: f64,
    tail_ball_bound: f64,
    spectral: OnceLock<Spectral>,
}

impl fmt::Debug for KernelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelGrid")
            .field("spec", &self.spec)
            .field("grid", &self.grid)
            .field("h", &self.h)
            .field("mass_on_grid", &self.mass_on_grid)
            .field("mass_total", &self.mass_total)
            .finish_non_exhaustive()
    }
}

impl KernelGrid {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kernel values in wrapped layout: cell index `m` along an axis of `n`
    /// cells holds offset `m` when `m <= (n-1)/2` and `m - n` otherwise.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass_on_grid(&self) -> f64 {
        self.mass_on_grid
    }

    /// `mass_on_grid` plus the integral of `P_h` outside the sampled box.
    pub fn mass_total(&self) -> f64 {
        self.mass_total
    }

    /// Integral of `P_h` outside the sampled box.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Upper bound for the tail from `N >= c_lower |x|` outside the largest
    /// inscribed Euclidean ball.
    pub fn tail_ball_bound(&self) -> f64 {
        self.tail_ball_bound
    }

    pub fn mass_ratio(&self) -> f64 {
        self.mass_on_grid / self.mass_total
    }

    /// Kernel value at an integer cell offset, if that offset was sampled.
    pub fn value_at_offset(&self, offset: &[isize]) -> Option<f64> {
        if offset.len() != self.grid.dim() {
            return None;
        }
        let mut idx = 0usize;
        for (i, &k) in offset.iter().enumerate() {
            let n = self.grid.dims()[i];
            idx = idx * n + offset_to_index(k, n)?;
        }
        Some(self.values[idx])
    }

    /// The sampled kernel as a scalar field, for inspection and snapshots.
    pub fn as_field(&self) -> GridField {
        GridField::from_parts(self.grid.clone(), self.values.clone(), FieldKind::Scalar)
    }

    pub(crate) fn spectral(&self) -> &Spectral {
        self.spectral
            .get_or_init(|| Spectral::for_kernel(&self.grid, &self.values))
    }
}

/// Signed offset held by wrapped index `m` on an axis of `n` cells.
#[inline]
pub(crate) fn index_to_offset(m: usize, n: usize) -> isize {
    if m <= (n - 1) / 2 {
        m as isize
    } else {
        m as isize - n as isize
    }
}

#[inline]
pub(crate) fn offset_to_index(k: isize, n: usize) -> Option<usize> {
    let hi = ((n - 1) / 2) as isize;
    let lo = hi + 1 - n as isize;
    if k < lo || k > hi {
        None
    } else {
        Some(k.rem_euclid(n as isize) as usize)
    }
}

/// [`sample_kernel_with`] at the default mass threshold.
pub fn sample_kernel(spec: &KernelSpec, grid: &GridSpec, h: f64) -> Result<KernelGrid> {
    sample_kernel_with(spec, grid, h, MIN_MASS_RATIO)
}

/// Samples `P_h` at the cell offsets of `grid`, averaging the origin cell
/// over a `3^dim` midpoint subgrid, and rejects the result when less than
/// `min_ratio` of the kernel mass lands on the grid.
pub fn sample_kernel_with(spec: &KernelSpec, grid: &GridSpec, h: f64, min_ratio: f64) -> Result<KernelGrid> {
    check_dim(spec.dim(), grid.dim())?;
    check_h(h)?;
    let consts = PhConstants::new(spec, h);
    let dims = grid.dims().to_vec();
    let spacing = grid.spacing().to_vec();
    let dim = grid.dim();

    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            // evaluate through the lower of {idx, -idx} so the pair is bit-identical
            let multi = grid.unravel(idx);
            let mirror: Vec<usize> = multi
                .iter()
                .zip(&dims)
                .map(|(&m, &n)| (n - m) % n)
                .collect();
            let canon = if grid.index(&mirror) < idx { mirror } else { multi };
            let offset: Vec<f64> = canon
                .iter()
                .enumerate()
                .map(|(i, &m)| index_to_offset(m, dims[i]) as f64 * spacing[i])
                .collect();
            if offset.iter().all(|&v| v == 0.0) {
                origin_cell_average(spec, &consts, &spacing)
            } else {
                consts.value(spec.anisotropy.norm(&offset))
            }
        })
        .collect();

    let mass_on_grid = values.iter().sum::<f64>() * grid.cell_volume();
    let half: Vec<f64> = (0..dim).map(|i| 0.5 * grid.extent(i)).collect();
    let tail = tail_mass(spec, &consts, &half)?;
    let mass_total = mass_on_grid + tail.value;
    let r_in = half.iter().copied().fold(f64::INFINITY, f64::min);
    let s = spec.s;
    let tail_ball_bound = consts.sigma * sphere_area(dim) * r_in.powf(-s)
        / (s * spec.anisotropy.c_lower().powf(consts.a));

    if mass_on_grid < min_ratio * mass_total {
        return Err(Error::DomainTooSmall {
            on_grid: mass_on_grid,
            total: mass_total,
        });
    }
    Ok(KernelGrid {
        spec: spec.clone(),
        grid: grid.clone(),
        h,
        sigma: consts.sigma,
        values,
        mass_on_grid,
        mass_total,
        tail_mass: tail.value,
        tail_ball_bound,
        spectral: OnceLock::new(),
    })
}

fn origin_cell_average(spec: &KernelSpec, c: &PhConstants, spacing: &[f64]) -> f64 {
    let dim = spacing.len();
    let count = 3usize.pow(dim as u32);
    let mut point = vec![0.0; dim];
    let mut total = 0.0;
    for j in 0..count {
        let mut r = j;
        for (i, p) in point.iter_mut().enumerate() {
            *p = ((r % 3) as f64 - 1.0) / 3.0 * spacing[i];
            r /= 3;
        }
        total += c.value(spec.anisotropy.norm(&point));
    }
    total / count as f64
}

/// Integral of `P_h` outside the box `prod [-half_i, half_i]`, in polar
/// coordinates. Along the ray in direction `theta` leaving the box at
/// `r0`, the substitution `r = r0 w^(-1/s)` turns the radial integral into
/// `sigma r0^N / s * int_0^1 dw / (eps w^((N+s)/s) + (r0 N(theta))^(N+s))`.
fn tail_mass(spec: &KernelSpec, c: &PhConstants, half: &[f64]) -> Result<Estimate> {
    let dim = half.len();
    let s = spec.s;
    let a = c.a;
    let tol = Tolerance::relative(1e-10);
    let radial = |theta: &[f64]| -> Result<f64> {
        let r0 = theta
            .iter()
            .zip(half)
            .map(|(t, l)| if *t == 0.0 { f64::INFINITY } else { l / t.abs() })
            .fold(f64::INFINITY, f64::min);
        let far = (r0 * spec.anisotropy.norm(theta)).powf(a);
        let inner = integrate(|w: f64| 1.0 / (c.eps * w.powf(a / s) + far), 0.0, 1.0, tol)?;
        Ok(c.sigma * r0.powi(dim as i32) / s * inner.value)
    };
    match dim {
        1 => Ok(Estimate::new(radial(&[1.0])? + radial(&[-1.0])?, 0.0)),
        2 => {
            let corner = half[1].atan2(half[0]);
            let points = [
                0.0,
                corner,
                PI - corner,
                PI,
                PI + corner,
                2.0 * PI - corner,
                2.0 * PI,
            ];
            fallible(|t| radial(&[t.cos(), t.sin()]), &points, Tolerance::relative(1e-9))
        }
        3 => {
            let corner = half[1].atan2(half[0]);
            let azimuths = [
                0.0,
                corner,
                PI - corner,
                PI,
                PI + corner,
                2.0 * PI - corner,
                2.0 * PI,
            ];
            fallible(
                |z| {
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let ring = fallible(
                        |psi| radial(&[rho * psi.cos(), rho * psi.sin(), z]),
                        &azimuths,
                        Tolerance::relative(1e-9),
                    )?;
                    Ok(ring.value)
                },
                &[-1.0, 0.0, 1.0],
                Tolerance::relative(1e-8),
            )
        }
        _ => {
            // no tailored quadrature beyond 3D: fall back to the ball bound
            let r_in = half.iter().copied().fold(f64::INFINITY, f64::min);
            let bound = c.sigma * sphere_area(dim) * r_in.powf(-s)
                / (s * spec.anisotropy.c_lower().powf(a));
            Ok(Estimate::new(bound, bound))
        }
    }
}

/// `integrate_panels` for an integrand that can itself fail.
pub(crate) fn fallible<F>(f: F, points: &[f64], tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> Result<f64>,
{
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let out = integrate_panels(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        points,
        tol,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    out
}

/// `int_{R^N} P = N |B_N| (pi/a) / sin(pi N / a)` with `a = N + s` and
/// `|B_N|` the volume of the unit ball of the norm, for the Euclidean norm.
pub fn euclidean_total_mass(dim: usize, s: f64) -> f64 {
    let a = dim as f64 + s;
    sphere_area(dim) * (PI / a) / (PI * dim as f64 / a).sin()
}
