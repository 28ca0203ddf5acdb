//! Anisotropic fractional curvature
//! `kappa_s(x, E) = -PV int (chi_E - chi_{E^c})(y) / N(y - x)^(N+s) dy`
//! and the ball constants `kbar`, `mbar`.
//!
//! The principal value is evaluated ray by ray. Along the ray `x + r theta`
//! the signed indicator is piecewise constant; with sign `sigma_rho` just past
//! the excluded radius `rho` and jumps `j_k` at crossings `c_k > rho`,
//!
//! `int_rho^inf r^(-1-s) u dr = sigma_rho rho^(-s)/s + sum_k j_k c_k^(-s)/s`.
//!
//! For `rho = 0` at a C^1 boundary point the first term cancels between
//! `theta` and `-theta`, which leaves an absolutely integrable angular
//! integrand whose only singularities (`~ |angle|^(-s)`) sit at the tangent
//! directions and are removed by a power substitution.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::anisotropy::Anisotropy;
use crate::error::{check_dim, Error, Result};
use crate::grid::GridField;
use crate::kernel::{check_s, fallible};
use crate::quadrature::{
    dot, euclid, integrate_half_line, integrate_singular_start, nested_sphere_point, orthonormal_complement,
    sphere_area, Estimate, Tolerance,
};

#[derive(Clone, Debug)]
pub enum BodySpec {
    Ball { center: Vec<f64>, radius: f64 },
    /// `{y : normal . y <= offset}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// The `+1` set of a 2D phase field, reconstructed by bilinear
    /// interpolation; everything outside the grid counts as complement.
    Gridded(GridField),
    /// Convex hull of the given vertices (2D).
    ConvexPolytope { vertices: Vec<Vec<f64>> },
}

impl BodySpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", "must be positive"));
        }
        Ok(BodySpec::Ball { center, radius })
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if !(euclid(&normal) > 0.0) {
            return Err(Error::param("normal", "must be nonzero"));
        }
        Ok(BodySpec::Halfspace { normal, offset })
    }

    pub fn dim(&self) -> usize {
        match self {
            BodySpec::Ball { center, .. } => center.len(),
            BodySpec::Halfspace { normal, .. } => normal.len(),
            BodySpec::Gridded(f) => f.grid().dim(),
            BodySpec::ConvexPolytope { vertices } => vertices.first().map_or(0, |v| v.len()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BodySpec::Ball { .. } => "ball",
            BodySpec::Halfspace { .. } => "halfspace",
            BodySpec::Gridded(_) => "gridded",
            BodySpec::ConvexPolytope { .. } => "polytope",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadParams {
    /// Relative tolerance of the angular quadrature.
    pub rel_tol: f64,
    /// Maximum distance from the query point to the boundary; `None` means
    /// `1e-9` times the body scale for parametric bodies and one cell for
    /// gridded ones.
    pub boundary_tol: Option<f64>,
    /// Excluded inner radius; `None` means 0 for parametric bodies and
    /// `max(1e-3 diam, spacing)` for gridded ones.
    pub rho_min: Option<f64>,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            rel_tol: 1e-10,
            boundary_tol: None,
            rho_min: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureEstimate {
    pub value: f64,
    /// Quadrature error plus, when `rho_min > 0`, the inner-region bound.
    pub error: f64,
    pub rho_min: f64,
    /// Set when the inner-region bound rests on an estimated curvature.
    pub heuristic: bool,
}

/// Crossing structure of one ray leaving the boundary point.
struct RayProfile {
    /// Sign of the indicator just past `rho`.
    start: f64,
    /// `(distance, jump)` for every crossing beyond `rho`.
    crossings: Vec<(f64, f64)>,
}

/// `normal_part` is `theta . nu` for the inward normal `nu`, as constructed
/// by the angular parametrization (exactly zero at tangent directions).
trait RayBody: Sync {
    fn profile(&self, x: &[f64], theta: &[f64], normal_part: f64, rho: f64) -> RayProfile;
}

struct BallRays {
    radius: f64,
}

impl RayBody for BallRays {
    fn profile(&self, _x: &[f64], _theta: &[f64], normal_part: f64, rho: f64) -> RayProfile {
        // |x + r theta - c|^2 = R^2 with x - c = -R nu: roots 0 and 2 R theta.nu
        let chord = 2.0 * self.radius * normal_part;
        if chord > rho {
            RayProfile {
                start: 1.0,
                crossings: vec![(chord, -2.0)],
            }
        } else {
            RayProfile {
                start: -1.0,
                crossings: Vec::new(),
            }
        }
    }
}

struct HalfspaceRays;

impl RayBody for HalfspaceRays {
    fn profile(&self, _x: &[f64], _theta: &[f64], normal_part: f64, _rho: f64) -> RayProfile {
        RayProfile {
            start: if normal_part > 0.0 { 1.0 } else { -1.0 },
            crossings: Vec::new(),
        }
    }
}

/// Convex polygon as `{y : n_i . y <= b_i}`.
struct PolygonRays {
    normals: Vec<[f64; 2]>,
    offsets: Vec<f64>,
    face: usize,
}

impl RayBody for PolygonRays {
    fn profile(&self, x: &[f64], theta: &[f64], normal_part: f64, rho: f64) -> RayProfile {
        let mut t_hi = f64::INFINITY;
        if normal_part > 0.0 {
            for (k, (n, b)) in self.normals.iter().zip(&self.offsets).enumerate() {
                let rate = n[0] * theta[0] + n[1] * theta[1];
                if rate > 0.0 && k != self.face {
                    let slack = b - (n[0] * x[0] + n[1] * x[1]);
                    t_hi = t_hi.min(slack.max(0.0) / rate);
                }
            }
        }
        if normal_part > 0.0 && t_hi > rho {
            RayProfile {
                start: 1.0,
                crossings: vec![(t_hi, -2.0)],
            }
        } else {
            RayProfile {
                start: -1.0,
                crossings: Vec::new(),
            }
        }
    }
}

const SMOOTHING_PASSES: usize = 1;
const GRIDDED_RHO_CELLS: f64 = 8.0;

/// Bilinear reconstruction of a smoothed 2D phase field.
struct GriddedRays {
    surface: Surface,
    step: f64,
    exit: f64,
}

impl GriddedRays {
    fn value(&self, p: &[f64]) -> f64 {
        self.surface.value(p)
    }
}

impl RayBody for GriddedRays {
    fn profile(&self, x: &[f64], theta: &[f64], _normal_part: f64, rho: f64) -> RayProfile {
        let at = |t: f64| self.value(&[x[0] + t * theta[0], x[1] + t * theta[1]]);
        let mut prev_t = rho;
        let mut prev = at(rho);
        let start = if prev > 0.0 { 1.0 } else { -1.0 };
        let mut sign = start;
        let mut crossings = Vec::new();
        let mut t = rho;
        while t < self.exit {
            t = (t + self.step).min(self.exit);
            let v = at(t);
            let s = if v > 0.0 { 1.0 } else { -1.0 };
            if s != sign {
                let (mut lo, mut hi, mut flo) = (prev_t, t, prev);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let fm = at(mid);
                    if (fm > 0.0) == (flo > 0.0) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                crossings.push((0.5 * (lo + hi), s - sign));
                sign = s;
            }
            prev_t = t;
            prev = v;
        }
        if sign > 0.0 {
            crossings.push((self.exit, -2.0));
        }
        RayProfile { start, crossings }
    }
}

/// Interface model of a 2D phase field: one pass of the binomial filter
/// `[1 2 1]^2 / 16`, then bilinear interpolation with nodes at cell
/// centers. Nodes outside the grid read as `-1`.
struct Surface {
    origin: [f64; 2],
    spacing: [f64; 2],
    dims: [usize; 2],
    values: Vec<f64>,
}

impl Surface {
    fn new(field: &GridField, passes: usize) -> Self {
        let g = field.grid();
        let (nx, ny) = (g.dims()[0], g.dims()[1]);
        let mut values = field.values().to_vec();
        for _ in 0..passes {
            let at = |v: &[f64], i: isize, j: isize| -> f64 {
                if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                    -1.0
                } else {
                    v[i as usize * ny + j as usize]
                }
            };
            let mut next = vec![0.0; values.len()];
            for i in 0..nx as isize {
                for j in 0..ny as isize {
                    let mut acc = 0.0;
                    for (di, wi) in [(-1isize, 1.0), (0, 2.0), (1, 1.0)] {
                        for (dj, wj) in [(-1isize, 1.0), (0, 2.0), (1, 1.0)] {
                            acc += wi * wj * at(&values, i + di, j + dj);
                        }
                    }
                    next[i as usize * ny + j as usize] = acc / 16.0;
                }
            }
            values = next;
        }
        Surface {
            origin: [g.origin()[0], g.origin()[1]],
            spacing: [g.spacing()[0], g.spacing()[1]],
            dims: [nx, ny],
            values,
        }
    }

    fn value(&self, p: &[f64]) -> f64 {
        let (o, h, n) = (self.origin, self.spacing, self.dims);
        let fx = (p[0] - o[0]) / h[0] - 0.5;
        let fy = (p[1] - o[1]) / h[1] - 0.5;
        let (i0, j0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - i0, fy - j0);
        let node = |i: f64, j: f64| -> f64 {
            if i < 0.0 || j < 0.0 || i >= n[0] as f64 || j >= n[1] as f64 {
                -1.0
            } else {
            self.values[i as usize * n[1] + j as usize]
        }
    };
    (1.0 - tx) * (1.0 - ty) * node(i0, j0)
        + tx * (1.0 - ty) * node(i0 + 1.0, j0)
        + (1.0 - tx) * ty * node(i0, j0 + 1.0)
        + tx * ty * node(i0 + 1.0, j0 + 1.0)
    }

    fn grad(&self, p: &[f64]) -> [f64; 2] {
        let (dx, dy) = (0.25 * self.spacing[0], 0.25 * self.spacing[1]);
        [
            (self.value(&[p[0] + dx, p[1]]) - self.value(&[p[0] - dx, p[1]])) / (2.0 * dx),
            (self.value(&[p[0], p[1] + dy]) - self.value(&[p[0], p[1] - dy])) / (2.0 * dy),
        ]
    }
}

/// Boundary point, inward unit normal and ray model for a body.
struct Prepared<'a> {
    point: Vec<f64>,
    inward: Vec<f64>,
    rays: Box<dyn RayBody + 'a>,
    rho: f64,
    /// Curvature bound for the inner-region estimate and whether it is heuristic.
    curvature: (f64, bool),
}

fn prepare<'a>(x: &[f64], body: &'a BodySpec, quad: &QuadParams) -> Result<Prepared<'a>> {
    let dim = body.dim();
    check_dim(dim, x.len())?;
    let near = |distance: f64, default: f64| -> Result<()> {
        let tol = quad.boundary_tol.unwrap_or(default);
        if distance > tol {
            Err(Error::NotOnBoundary { distance, tolerance: tol })
        } else {
            Ok(())
        }
    };
    match body {
        BodySpec::Ball { center, radius } => {
            let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
            let len = euclid(&d);
            near((len - radius).abs(), 1e-9 * radius)?;
            if len == 0.0 {
                return Err(Error::NotOnBoundary {
                    distance: *radius,
                    tolerance: quad.boundary_tol.unwrap_or(1e-9 * radius),
                });
            }
            let u: Vec<f64> = d.iter().map(|v| v / len).collect();
            let point = center.iter().zip(&u).map(|(c, v)| c + radius * v).collect();
            Ok(Prepared {
                point,
                inward: u.iter().map(|v| -v).collect(),
                rays: Box::new(BallRays { radius: *radius }),
                rho: quad.rho_min.unwrap_or(0.0),
                curvature: (1.0 / radius, false),
            })
        }
        BodySpec::Halfspace { normal, offset } => {
            let len = euclid(normal);
            let n: Vec<f64> = normal.iter().map(|v| v / len).collect();
            let gap = dot(&n, x) - offset / len;
            near(gap.abs(), 1e-9 * (1.0 + euclid(x)))?;
            let point = x.iter().zip(&n).map(|(a, b)| a - gap * b).collect();
            Ok(Prepared {
                point,
                inward: n.iter().map(|v| -v).collect(),
                rays: Box::new(HalfspaceRays),
                rho: quad.rho_min.unwrap_or(0.0),
                curvature: (0.0, false),
            })
        }
        BodySpec::ConvexPolytope { vertices } => {
            if dim != 2 {
                return Err(Error::Unsupported("polytope bodies are implemented in 2D".into()));
            }
            let hull = convex_hull(vertices);
            if hull.len() < 3 {
                return Err(Error::param("vertices", "vertices must affinely span the plane"));
            }
            let mut normals = Vec::new();
            let mut offsets = Vec::new();
            let mut best = (f64::INFINITY, 0usize, vec![0.0; 2]);
            let scale = hull
                .iter()
                .map(|v| v[0].abs().max(v[1].abs()))
                .fold(0.0, f64::max);
            for k in 0..hull.len() {
                let (p, q) = (&hull[k], &hull[(k + 1) % hull.len()]);
                let e = [q[0] - p[0], q[1] - p[1]];
                let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                let n = [e[1] / len, -e[0] / len];
                normals.push(n);
                offsets.push(n[0] * p[0] + n[1] * p[1]);
                let t = (((x[0] - p[0]) * e[0] + (x[1] - p[1]) * e[1]) / (len * len)).clamp(0.0, 1.0);
                let proj = vec![p[0] + t * e[0], p[1] + t * e[1]];
                let d = ((x[0] - proj[0]).powi(2) + (x[1] - proj[1]).powi(2)).sqrt();
                if d < best.0 {
                    best = (d, k, proj);
                }
            }
            near(best.0, 1e-9 * (1.0 + scale))?;
            let (k, point) = (best.1, best.2);
            let (p, q) = (&hull[k], &hull[(k + 1) % hull.len()]);
            let edge_len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            let to_vertex = ((point[0] - p[0]).powi(2) + (point[1] - p[1]).powi(2))
                .sqrt()
                .min(((point[0] - q[0]).powi(2) + (point[1] - q[1]).powi(2)).sqrt());
            if to_vertex <= 1e-9 * edge_len {
                return Err(Error::AmbiguousBoundary("point is a polytope vertex".into()));
            }
            let n = normals[k];
            Ok(Prepared {
                point,
                inward: vec![-n[0], -n[1]],
                rays: Box::new(PolygonRays { normals, offsets, face: k }),
                rho: quad.rho_min.unwrap_or(0.0),
                curvature: (0.0, false),
            })
        }
        BodySpec::Gridded(field) => {
            field.require_phase()?;
            if dim != 2 {
                return Err(Error::Unsupported("gridded bodies are implemented in 2D".into()));
            }
            let g = field.grid();
            let spacing = g.max_spacing();
            let surface = Surface::new(field, SMOOTHING_PASSES);
            let mut p = x.to_vec();
            for _ in 0..20 {
                let u = surface.value(&p);
                let gr = surface.grad(&p);
                let g2 = gr[0] * gr[0] + gr[1] * gr[1];
                if g2 * spacing * spacing < 1e-6 {
                    return Err(Error::AmbiguousBoundary(format!(
                        "flat phase-field gradient near ({:.4}, {:.4})",
                        p[0], p[1]
                    )));
                }
                p[0] -= u * gr[0] / g2;
                p[1] -= u * gr[1] / g2;
                if u.abs() < 1e-13 {
                    break;
                }
            }
            let moved = ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt();
            near(moved, spacing)?;
            let gr = surface.grad(&p);
            let gl = (gr[0] * gr[0] + gr[1] * gr[1]).sqrt();
            if gl * spacing < 1e-3 {
                return Err(Error::AmbiguousBoundary("flat phase-field gradient".into()));
            }
            let inward = vec![gr[0] / gl, gr[1] / gl];
            // interface offsets along the normal at tangential distance +-d,
            // widened until they exceed two cells
            let t = [-inward[1], inward[0]];
            let mut d = 2.0 * spacing;
            let mut curvature = 1.0 / g.diameter();
            while d <= 0.25 * g.diameter() {
                let offsets: Option<Vec<f64>> = [1.0, -1.0]
                    .iter()
                    .map(|sign| {
                        let q = [p[0] + sign * d * t[0], p[1] + sign * d * t[1]];
                        interface_offset(&surface, q, &inward, d)
                    })
                    .collect();
                let Some(offsets) = offsets else { break };
                let sag = offsets[0] + offsets[1];
                if sag.abs() >= 2.0 * spacing {
                    curvature = curvature.max(sag.abs() / (d * d));
                    break;
                }
                d *= 2.0;
            }
            // the staircase hides curvature below the scale d
            let rho = quad
                .rho_min
                .unwrap_or_else(|| (GRIDDED_RHO_CELLS * spacing).max(d).min(0.1 * g.diameter()));
            let o = g.origin();
            let (e0, e1) = (o[0] + g.extent(0), o[1] + g.extent(1));
            let exit = ray_exit_bound(&p, [o[0], o[1]], [e0, e1]);
            Ok(Prepared {
                point: p,
                inward,
                rays: Box::new(GriddedRays {
                    surface,
                    step: 0.25 * g.min_spacing(),
                    exit,
                }),
                rho,
                curvature: (curvature, true),
            })
        }
    }
}

/// Signed position `l` in `[-reach, reach]` of the zero level along
/// `q + l nu`, by bisection.
fn interface_offset(surface: &Surface, q: [f64; 2], nu: &[f64], reach: f64) -> Option<f64> {
    let at = |l: f64| surface.value(&[q[0] + l * nu[0], q[1] + l * nu[1]]);
    let (mut lo, mut hi) = (-reach, reach);
    let (flo, fhi) = (at(lo), at(hi));
    if flo * fhi > 0.0 {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (at(mid) > 0.0) == (fhi > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Distance beyond which every ray from `p` has left the box.
fn ray_exit_bound(p: &[f64], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let dx = (p[0] - lo[0]).abs().max((hi[0] - p[0]).abs());
    let dy = (p[1] - lo[1]).abs().max((hi[1] - p[1]).abs());
    (dx * dx + dy * dy).sqrt() + 1.0
}

/// Andrew's monotone chain, counterclockwise, without collinear points.
pub(crate) fn convex_hull(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts.into_iter().map(|p| p.to_vec()).collect();
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.into_iter().map(|p| p.to_vec()).collect()
}

/// Radial integral `int_rho^inf r^(-1-s) u(x + r theta) dr` for one ray,
/// dropping the `rho^(-s)` term when `rho = 0`.
fn ray_integral(rays: &dyn RayBody, x: &[f64], theta: &[f64], normal_part: f64, rho: f64, s: f64) -> f64 {
    let prof = rays.profile(x, theta, normal_part, rho);
    let mut acc = 0.0;
    if rho > 0.0 {
        acc += prof.start * rho.powf(-s) / s;
    }
    for (c, jump) in prof.crossings {
        acc += jump * c.powf(-s) / s;
    }
    acc
}

/// `-int_{S^1} f(theta, theta.nu) dtheta`, split into four quarters that
/// each start at a tangent direction of the inward normal `nu`.
fn angular_2d<F: Fn([f64; 2], f64) -> f64>(nu: &[f64], f: F, s: f64, tol: Tolerance) -> Result<Estimate> {
    let tau = [-nu[1], nu[0]];
    let mut total = Estimate::default();
    for (ts, ns) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
        let quarter = |delta: f64| {
            let (sd, cd) = delta.sin_cos();
            let theta = [ts * cd * tau[0] + ns * sd * nu[0], ts * cd * tau[1] + ns * sd * nu[1]];
            f(theta, ns * sd)
        };
        total = total + integrate_singular_start(quarter, 0.0, 0.5 * PI, s, tol)?;
    }
    Ok(total.scale(-1.0))
}

/// Fractional curvature of `body` at the boundary point `x`.
pub fn kappa_s(x: &[f64], body: &BodySpec, a: &Anisotropy, s: f64, quad: &QuadParams) -> Result<CurvatureEstimate> {
    check_s(s)?;
    check_dim(a.dim(), body.dim())?;
    let prep = prepare(x, body, quad)?;
    let dim = a.dim();
    let exponent = dim as f64 + s;
    let tol = Tolerance {
        abs: 1e-14,
        rel: quad.rel_tol,
        max_intervals: 20_000,
    };
    let rho = prep.rho;
    let point = &prep.point;
    let rays = prep.rays.as_ref();
    let integrand = |theta: &[f64], nc: f64| {
        let j = ray_integral(rays, point, theta, nc, rho, s);
        if j == 0.0 {
            0.0
        } else {
            a.norm(theta).powf(-exponent) * j
        }
    };

    let est = match dim {
        2 => angular_2d(&prep.inward, |theta, nc| integrand(&theta, nc), s, tol)?,
        3 => {
            let basis = orthonormal_complement(&prep.inward);
            let nu = prep.inward.clone();
            let mut total = Estimate::default();
            for ns in [1.0, -1.0] {
                // delta is the elevation from the tangent plane
                let ring = |delta: f64| -> Result<f64> {
                    let (sd, cd) = delta.sin_cos();
                    let inner = fallible(
                        |psi| {
                            let (ss, cs) = psi.sin_cos();
                            let mut theta = [0.0; 3];
                            for i in 0..3 {
                                theta[i] = ns * sd * nu[i] + cd * (cs * basis[0][i] + ss * basis[1][i]);
                            }
                            Ok(integrand(&theta, ns * sd))
                        },
                        &[0.0, 0.5 * PI, PI, 1.5 * PI, 2.0 * PI],
                        tol,
                    )?;
                    Ok(inner.value * cd)
                };
                total = total + singular_fallible(&ring, 0.0, 0.5 * PI, s, tol)?;
            }
            total.scale(-1.0)
        }
        _ => return Err(Error::Unsupported(format!("curvature in dimension {dim}"))),
    };

    let (curv, heuristic) = prep.curvature;
    let inner_bar = if rho > 0.0 {
        2.0 * sphere_area(dim - 1) * curv * rho.powf(1.0 - s) / (1.0 - s) * a.c_lower().powf(-exponent)
    } else {
        0.0
    };
    Ok(CurvatureEstimate {
        value: est.value,
        error: est.error + inner_bar,
        rho_min: rho,
        heuristic: heuristic && rho > 0.0,
    })
}

fn singular_fallible<F>(f: &F, a: f64, b: f64, beta: f64, tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> Result<f64>,
{
    let p = 1.0 / (1.0 - beta).max(1e-3);
    let len = b - a;
    fallible(
        |u| {
            if u <= 0.0 {
                return Ok(0.0);
            }
            Ok(f(a + len * u.powf(p))? * len * p * u.powf(p - 1.0))
        },
        &[0.0, 1.0],
        tol,
    )
}

/// Maximal curvature of the Euclidean unit ball over the first
/// `n_boundary_samples` points of a nested quasi-uniform boundary sequence.
pub fn kbar(a: &Anisotropy, s: f64, n_boundary_samples: usize) -> Result<f64> {
    if n_boundary_samples < 64 {
        return Err(Error::param("n_boundary_samples", "need at least 64 samples"));
    }
    let values = kbar_samples(a, s, n_boundary_samples)?;
    Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Curvatures of the Euclidean unit ball at the nested boundary samples.
pub fn kbar_samples(a: &Anisotropy, s: f64, n: usize) -> Result<Vec<f64>> {
    let dim = a.dim();
    let body = BodySpec::ball(vec![0.0; dim], 1.0)?;
    let quad = QuadParams::default();
    (0..n as u64)
        .into_par_iter()
        .map(|k| kappa_s(&nested_sphere_point(dim, k), &body, a, s, &quad).map(|e| e.value))
        .collect()
}

/// `mbar = 1/2 int_{y.e = 0} dy / (1 + c_upper |y|^(N+s))`.
pub fn mbar(a: &Anisotropy, s: f64, dim: usize) -> Result<f64> {
    check_dim(a.dim(), dim)?;
    mbar_for_bound(a.c_upper(), s, dim)
}

/// [`mbar`] for an explicit constant `c_upper`.
pub fn mbar_for_bound(c_upper: f64, s: f64, dim: usize) -> Result<f64> {
    check_s(s)?;
    if dim < 2 {
        return Err(Error::param("dim", "mbar needs dim >= 2"));
    }
    if !(c_upper > 0.0) {
        return Err(Error::param("c_upper", "must be positive"));
    }
    let a = dim as f64 + s;
    let k = (dim - 2) as i32;
    let radial = integrate_half_line(|r| r.powi(k) / (1.0 + c_upper * r.powf(a)), 1.0 + s, Tolerance::relative(1e-12))?;
    if !radial.value.is_finite() || radial.value <= 0.0 {
        return Err(Error::Quadrature("hyperplane integral did not converge".into()));
    }
    Ok(0.5 * sphere_area(dim - 1) * radial.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, GridSpec};

    fn gamma(x: f64) -> f64 {
        // Lanczos, g = 7
        const C: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            return PI / ((PI * x).sin() * gamma(1.0 - x));
        }
        let x = x - 1.0;
        let mut acc = C[0];
        for (i, c) in C.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }

    /// `(2^(1-s)/s) sqrt(pi) Gamma((1-s)/2) / Gamma(1 - s/2)`.
    fn unit_disk_closed_form(s: f64) -> f64 {
        2f64.powf(1.0 - s) / s * PI.sqrt() * gamma(0.5 * (1.0 - s)) / gamma(1.0 - 0.5 * s)
    }

    /// Truncated integral `-int_{|y-x| > rho} u(y) |y-x|^(-2-s) dy` for the
    /// unit disk: midpoint polar grid on `rho <= r <= 2`, uniform in
    /// `r^(-s)`, plus the all-outside contribution beyond `r = 2`.
    fn brute_polar(x: [f64; 2], s: f64, rho: f64, n_r: usize, n_t: usize) -> f64 {
        let (u0, u1) = (rho.powf(-s), 2f64.powf(-s));
        let du = (u0 - u1) / n_r as f64;
        let mut acc = 0.0;
        for i in 0..n_r {
            let u = u0 - du * (i as f64 + 0.5);
            let r = u.powf(-1.0 / s);
            let mut ring = 0.0;
            for j in 0..n_t {
                let t = 2.0 * PI * (j as f64 + 0.5) / n_t as f64;
                let y = [x[0] + r * t.cos(), x[1] + r * t.sin()];
                ring += if y[0] * y[0] + y[1] * y[1] <= 1.0 { 1.0 } else { -1.0 };
            }
            acc += ring * 2.0 * PI / n_t as f64 * du / s;
        }
        acc -= 2.0 * PI * u1 / s;
        -acc
    }

    #[test]
    fn unit_disk_matches_closed_form_and_polar_oracle() {
        let a = Anisotropy::euclidean(2).unwrap();
        let body = BodySpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        let exact = unit_disk_closed_form(0.5);
        assert!((exact - 14.8328).abs() < 1e-3, "{exact}");
        for t in [0.0f64, 0.7, 2.0, 4.1] {
            let k = kappa_s(&[t.cos(), t.sin()], &body, &a, 0.5, &QuadParams::default()).unwrap();
            assert!((k.value - exact).abs() < 1e-8 * exact, "{} vs {exact}", k.value);
        }
        for s in [0.25, 0.75] {
            let k = kappa_s(&[0.0, 1.0], &body, &a, s, &QuadParams::default()).unwrap();
            let e = unit_disk_closed_form(s);
            assert!((k.value - e).abs() < 1e-8 * e);
        }
        // truncated integral against the brute polar grid
        let rho = 0.05;
        let quad = QuadParams {
            rho_min: Some(rho),
            ..QuadParams::default()
        };
        let k = kappa_s(&[1.0, 0.0], &body, &a, 0.5, &quad).unwrap();
        let brute = brute_polar([1.0, 0.0], 0.5, rho, 2000, 20_000);
        assert!((brute - k.value).abs() < 1e-3 * k.value.abs(), "{brute} vs {}", k.value);
        assert!((k.value - exact).abs() <= k.error);
    }

    #[test]
    fn unit_sphere_closed_form() {
        // 3D: 2 pi 2^(1-s) / (s (1-s))
        let a = Anisotropy::euclidean(3).unwrap();
        let body = BodySpec::ball(vec![0.0; 3], 1.0).unwrap();
        let s = 0.5;
        let k = kappa_s(&[0.0, 0.6, 0.8], &body, &a, s, &QuadParams::default()).unwrap();
        let exact = 2.0 * PI * 2f64.powf(1.0 - s) / (s * (1.0 - s));
        assert!((k.value - exact).abs() < 1e-7 * exact, "{} vs {exact}", k.value);
    }

    #[test]
    fn halfspace_is_flat() {
        let a = Anisotropy::weighted_lq(1.0, vec![1.0, 2.0]).unwrap();
        let body = BodySpec::halfspace(vec![1.0, 1.0], 0.5).unwrap();
        let k = kappa_s(&[0.25, 0.25], &body, &a, 0.5, &QuadParams::default()).unwrap();
        assert_eq!(k.value, 0.0);
    }

    #[test]
    fn ball_scaling() {
        let a = Anisotropy::scaled_euclidean(2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let s = 0.5;
        let x = [0.6, 0.8];
        let unit = kappa_s(&x, &BodySpec::ball(vec![0.0, 0.0], 1.0).unwrap(), &a, s, &QuadParams::default())
            .unwrap()
            .value;
        for r in [0.5, 2.0, 4.0] {
            let body = BodySpec::ball(vec![0.0, 0.0], r).unwrap();
            let k = kappa_s(&[r * x[0], r * x[1]], &body, &a, s, &QuadParams::default()).unwrap();
            assert!((k.value - r.powf(-s) * unit).abs() < 1e-9 * unit);
        }
    }

    #[test]
    fn off_boundary_rejected() {
        let a = Anisotropy::euclidean(2).unwrap();
        let body = BodySpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            kappa_s(&[0.5, 0.0], &body, &a, 0.5, &QuadParams::default()),
            Err(Error::NotOnBoundary { .. })
        ));
        assert!(kappa_s(&[1.0, 0.0], &body, &a, 1.5, &QuadParams::default()).is_err());
    }

    #[test]
    fn square_face_is_positive() {
        let a = Anisotropy::euclidean(2).unwrap();
        let body = BodySpec::ConvexPolytope {
            vertices: vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0]],
        };
        let k = kappa_s(&[1.0, 0.2], &body, &a, 0.5, &QuadParams::default()).unwrap();
        assert!(k.value > 0.0);
        // the square contains the unit disk, so its curvature is smaller
        let disk = unit_disk_closed_form(0.5);
        let k0 = kappa_s(&[1.0, 0.0], &body, &a, 0.5, &QuadParams::default()).unwrap();
        assert!(k0.value < disk);
        assert!(matches!(
            kappa_s(&[1.0, 1.0], &body, &a, 0.5, &QuadParams::default()),
            Err(Error::AmbiguousBoundary(_))
        ));
    }

    #[test]
    fn gridded_disk_is_close() {
        let a = Anisotropy::euclidean(2).unwrap();
        let grid = GridSpec::cube(2, 256, -1.5, 1.5, Boundary::Periodic).unwrap();
        let field = GridField::ball(grid, &[0.0, 0.0], 1.0).unwrap();
        let body = BodySpec::Gridded(field);
        let quad = QuadParams {
            rel_tol: 1e-5,
            ..QuadParams::default()
        };
        let exact = unit_disk_closed_form(0.5);
        for x in [[1.0, 0.0], [0.6, 0.8]] {
            let k = kappa_s(&x, &body, &a, 0.5, &quad).unwrap();
            assert!(k.heuristic);
            assert!((k.value - exact).abs() <= k.error, "{} +- {} vs {exact}", k.value, k.error);
        }
    }

    #[test]
    fn mbar_values() {
        let a = 2.5f64;
        let exact = (PI / a) / (PI / a).sin();
        let m = mbar_for_bound(1.0, 0.5, 2).unwrap();
        assert!((m - exact).abs() < 1e-10 * exact);
        assert!((m - 1.32131).abs() < 1e-5);
        assert!(mbar_for_bound(2.0, 0.5, 2).unwrap() < m);
        // dim 3: pi c^(-2/a) (pi/a) / sin(2 pi/a), a = 3.5
        let a3 = 3.5f64;
        let m3 = mbar_for_bound(1.0, 0.5, 3).unwrap();
        let exact3 = PI * (PI / a3) / (2.0 * PI / a3).sin();
        assert!((m3 - exact3).abs() < 1e-9 * exact3);
    }

    #[test]
    fn kbar_is_monotone_and_symmetric() {
        let e = Anisotropy::euclidean(2).unwrap();
        let samples = kbar_samples(&e, 0.5, 64).unwrap();
        let mean = samples.iter().sum::<f64>() / 64.0;
        for v in &samples {
            assert!((v - mean).abs() < 1e-3 * mean);
        }
        let m = Anisotropy::scaled_euclidean(2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let k64 = kbar(&m, 0.5, 64).unwrap();
        let k128 = kbar(&m, 0.5, 128).unwrap();
        assert!(k128 >= k64);
        let vals = kbar_samples(&m, 0.5, 64).unwrap();
        let mean = vals.iter().sum::<f64>() / 64.0;
        assert!(k64 > mean);
    }
}
