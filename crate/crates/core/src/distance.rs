//! Anisotropic distances between sets of grid cells (2D).
//!
//! Sets are unions of closed cells. The distance from a cell center `x` to
//! a set is the smallest polar-norm length `Phi°(z)` over points `z` of the
//! set's cells; it is exact for the chosen norm, not a propagated
//! approximation. Values come from scattering a stencil of cell-box
//! distances from the boundary cells.

use rayon::prelude::*;

use crate::anisotropy::NormEvaluator;
use crate::error::{Error, Result};
use crate::grid::{FieldKind, GridField, GridSpec};

fn require_2d(grid: &GridSpec) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::Unsupported("distances are implemented in 2D".into()));
    }
    Ok(())
}

/// `Phi°` lengths of one cell step along each axis; the smallest is the
/// transport resolution.
pub fn cell_steps(grid: &GridSpec, polar: &dyn NormEvaluator) -> Vec<f64> {
    let dim = grid.dim();
    (0..dim)
        .map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = grid.spacing()[i];
            polar.value(&e)
        })
        .collect()
}

/// Offsets `k` with the smallest `Phi°` over the cell box centered at
/// `k * spacing`, for all boxes within `reach`.
struct Stencil {
    offsets: Vec<([isize; 2], f64)>,
}

const GOLDEN_ITERS: usize = 80;

fn segment_min(polar: &dyn NormEvaluator, a: [f64; 2], b: [f64; 2]) -> f64 {
    let at = |t: f64| polar.value(&[a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (at(x1), at(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = at(x2);
        }
    }
    f1.min(f2).min(at(0.0)).min(at(1.0))
}

impl Stencil {
    fn new(grid: &GridSpec, polar: &dyn NormEvaluator, reach: f64) -> Self {
        let h = [grid.spacing()[0], grid.spacing()[1]];
        // lower bound Phi°(z) >= m |z| from the axis and diagonal samples
        let m = match polar.euclidean_scale() {
            Some(k) => k,
            None => {
                (0..720)
                    .map(|j| {
                        let t = std::f64::consts::PI * j as f64 / 360.0;
                        polar.value(&[t.cos(), t.sin()])
                    })
                    .fold(f64::INFINITY, f64::min)
                    * 0.98
            }
        };
        let span = reach / m;
        let kmax = [(span / h[0] + 1.0).ceil() as isize, (span / h[1] + 1.0).ceil() as isize];
        let rows: Vec<Vec<([isize; 2], f64)>> = (-kmax[0]..=kmax[0])
            .into_par_iter()
            .map(|k0| {
                let mut row = Vec::new();
                for k1 in -kmax[1]..=kmax[1] {
                    let d = box_distance(polar, [k0, k1], h);
                    if d <= reach {
                        row.push(([k0, k1], d));
                    }
                }
                row
            })
            .collect();
        Stencil {
            offsets: rows.into_iter().flatten().collect(),
        }
    }
}

/// `min Phi°(z)` over the box `prod [k_i h_i - h_i/2, k_i h_i + h_i/2]`.
fn box_distance(polar: &dyn NormEvaluator, k: [isize; 2], h: [f64; 2]) -> f64 {
    if k == [0, 0] {
        return 0.0;
    }
    if let Some(scale) = polar.euclidean_scale() {
        let g0 = ((k[0].abs() as f64 - 0.5) * h[0]).max(0.0);
        let g1 = ((k[1].abs() as f64 - 0.5) * h[1]).max(0.0);
        return scale * (g0 * g0 + g1 * g1).sqrt();
    }
    let lo = [(k[0] as f64 - 0.5) * h[0], (k[1] as f64 - 0.5) * h[1]];
    let hi = [(k[0] as f64 + 0.5) * h[0], (k[1] as f64 + 0.5) * h[1]];
    // the box misses the origin, so the convex minimum sits on an edge
    [
        ([lo[0], lo[1]], [hi[0], lo[1]]),
        ([hi[0], lo[1]], [hi[0], hi[1]]),
        ([hi[0], hi[1]], [lo[0], hi[1]]),
        ([lo[0], hi[1]], [lo[0], lo[1]]),
    ]
    .iter()
    .map(|(a, b)| segment_min(polar, *a, *b))
    .fold(f64::INFINITY, f64::min)
}

/// For every cell of the opposite phase, the distance to the union of the
/// `sources` cells, capped at `reach`.
fn scatter(field: &GridField, sources: &[usize], stencil: &Stencil, target_inside: bool, reach: f64) -> Vec<f64> {
    let grid = field.grid();
    let n = grid.len();
    if sources.is_empty() {
        return vec![reach; n];
    }
    let threads = rayon::current_num_threads().max(1);
    let chunk = sources.len().div_ceil(threads);
    sources
        .par_chunks(chunk)
        .map(|part| {
            let mut buf = vec![reach; n];
            for &b in part {
                let multi = grid.unravel(b);
                for (k, d) in &stencil.offsets {
                    if let Some(x) = grid.offset(&multi, k) {
                        if field.inside(x) == target_inside && *d < buf[x] {
                            buf[x] = *d;
                        }
                    }
                }
            }
            buf
        })
        .reduce_with(|mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x = x.min(*y));
            a
        })
        .unwrap_or_else(|| vec![reach; n])
}

/// `d(x) = dist(x, C) - dist(x, C^c)` clamped to `[-eta, eta]` (negative
/// inside `C`).
pub fn signed_distance_truncated(c: &GridField, polar: &dyn NormEvaluator, eta: f64) -> Result<GridField> {
    c.require_phase()?;
    require_2d(c.grid())?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::param("eta", "must be positive and finite"));
    }
    if c.is_empty_set() {
        return Err(Error::DegenerateSet("empty"));
    }
    if c.is_full_set() {
        return Err(Error::DegenerateSet("full"));
    }
    let stencil = Stencil::new(c.grid(), polar, eta);
    let inner = c.boundary_cells(true);
    let outer = c.boundary_cells(false);
    let out = scatter(c, &inner, &stencil, false, eta);
    let ins = scatter(c, &outer, &stencil, true, eta);
    let values = (0..c.grid().len())
        .map(|i| if c.inside(i) { -ins[i] } else { out[i] })
        .collect();
    Ok(GridField::from_parts(c.grid().clone(), values, FieldKind::Scalar))
}

#[derive(Clone, Debug)]
pub struct Transport {
    pub field: GridField,
    /// The radius was below one cell step and the set was left unchanged.
    pub sub_resolution: bool,
    pub radius: f64,
}

/// Morphological transport by the `Phi°` ball of radius `|c| dt`: erosion
/// for `c > 0`, dilation for `c < 0`, identity for `c = 0`.
pub fn transport_step(c_set: &GridField, polar: &dyn NormEvaluator, c: f64, dt: f64) -> Result<Transport> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    transport_radius(c_set, polar, -c * dt)
}

/// Dilation by `radius` when positive, erosion by `-radius` when negative.
pub fn transport_radius(c_set: &GridField, polar: &dyn NormEvaluator, radius: f64) -> Result<Transport> {
    c_set.require_phase()?;
    require_2d(c_set.grid())?;
    let r = radius.abs();
    let unchanged = |sub: bool| Transport {
        field: c_set.clone(),
        sub_resolution: sub,
        radius,
    };
    if radius == 0.0 {
        return Ok(unchanged(false));
    }
    let step = cell_steps(c_set.grid(), polar).into_iter().fold(f64::INFINITY, f64::min);
    if r < step {
        return Ok(unchanged(true));
    }
    if c_set.is_empty_set() || c_set.is_full_set() {
        return Ok(unchanged(false));
    }
    let eta = r + 2.0 * step;
    let d = signed_distance_truncated(c_set, polar, eta)?;
    let values = d
        .values()
        .par_iter()
        .map(|&v| {
            let keep = if radius > 0.0 { v <= r } else { v < -r };
            if keep {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(Transport {
        field: GridField::from_parts(c_set.grid().clone(), values, FieldKind::Phase),
        sub_resolution: false,
        radius,
    })
}

/// `min Phi°(x1 - x2)` over boundary cells `x1` of `c1` and `x2` of `c2`
/// (cell centers).
pub fn boundary_distance(c1: &GridField, c2: &GridField, polar: &dyn NormEvaluator) -> Result<f64> {
    c1.require_phase()?;
    c2.require_phase()?;
    if c1.grid() != c2.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = c1.grid();
    let b1 = c1.boundary_cells(true);
    let b2 = c2.boundary_cells(true);
    if b1.is_empty() || b2.is_empty() {
        return Err(Error::DegenerateSet("without boundary"));
    }
    let p2: Vec<Vec<f64>> = b2.iter().map(|&j| grid.center_of(j)).collect();
    let best = b1
        .par_iter()
        .map(|&i| {
            let x = grid.center_of(i);
            p2.iter().fold(f64::INFINITY, |m, y| {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                m.min(polar.value(&z))
            })
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

/// Hausdorff distance between the `+1` cell-center sets (Euclidean). Two
/// empty sets are at distance 0, an empty and a nonempty set at infinity.
pub fn hausdorff(c1: &GridField, c2: &GridField) -> Result<f64> {
    c1.require_phase()?;
    c2.require_phase()?;
    if c1.grid() != c2.grid() {
        return Err(Error::GridMismatch);
    }
    match (c1.is_empty_set(), c2.is_empty_set()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(f64::INFINITY),
        _ => {}
    }
    Ok(one_sided(c1, c2).max(one_sided(c2, c1)))
}

/// `sup_{x in a} dist(x, b)`; the nearest `b` center to an outside cell is
/// always a boundary cell of `b`.
fn one_sided(a: &GridField, b: &GridField) -> f64 {
    let grid = a.grid();
    let targets: Vec<Vec<f64>> = b.boundary_cells(true).iter().map(|&j| grid.center_of(j)).collect();
    (0..grid.len())
        .into_par_iter()
        .filter(|&i| a.inside(i) && !b.inside(i))
        .map(|i| {
            let x = grid.center_of(i);
            targets
                .iter()
                .map(|y| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::Anisotropy;
    use crate::grid::Boundary;

    fn grid(n: usize, lo: f64, hi: f64) -> GridSpec {
        GridSpec::cube(2, n, lo, hi, Boundary::ZeroPadded).unwrap()
    }

    #[test]
    fn halfplane_distance() {
        let g = grid(64, -1.0, 1.0);
        let e = Anisotropy::euclidean(2).unwrap();
        // C = {x_0 <= 0}, the interface sits on a cell face
        let c = GridField::phase_from_fn(g.clone(), |x| x[0] <= 0.0);
        let d = signed_distance_truncated(&c, &e, 0.5).unwrap();
        for i in 0..g.len() {
            let x = g.center_of(i);
            let expect = x[0].clamp(-0.5, 0.5);
            assert!((d.values()[i] - expect).abs() < 1e-12, "{x:?} {} {expect}", d.values()[i]);
        }
    }

    #[test]
    fn ball_distance_and_clamp() {
        let g = grid(128, -2.0, 2.0);
        let e = Anisotropy::euclidean(2).unwrap();
        let c = GridField::ball(g.clone(), &[0.0, 0.0], 1.0).unwrap();
        let eta = 0.4;
        let d = signed_distance_truncated(&c, &e, eta).unwrap();
        let tol = 1.5 * g.cell_diagonal();
        for i in 0..g.len() {
            let x = g.center_of(i);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let v = d.values()[i];
            assert!(v.abs() <= eta);
            assert!((v - (r - 1.0).clamp(-eta, eta)).abs() <= tol);
        }
        assert!(matches!(
            signed_distance_truncated(&GridField::constant_phase(g, false), &e, 1.0),
            Err(Error::DegenerateSet(_))
        ));
    }

    #[test]
    fn anisotropic_box_distance_matches_brute_force() {
        let a = Anisotropy::weighted_lq(1.0, vec![1.0, 2.0]).unwrap();
        let h = [0.1, 0.1];
        for k in [[3isize, 1], [-2, 5], [0, 4], [6, -6]] {
            let mut best = f64::INFINITY;
            let n = 400;
            for i in 0..=n {
                for j in 0..=n {
                    let z = [
                        (k[0] as f64 - 0.5 + i as f64 / n as f64) * h[0],
                        (k[1] as f64 - 0.5 + j as f64 / n as f64) * h[1],
                    ];
                    best = best.min(a.value(&z));
                }
            }
            let d = box_distance(&a, k, h);
            assert!(d <= best + 1e-12 && best - d < 1e-3 * h[0], "{k:?} {d} {best}");
        }
    }

    #[test]
    fn transport_examples() {
        let g = grid(128, -2.0, 2.0);
        let e = Anisotropy::euclidean(2).unwrap();
        let c = GridField::ball(g.clone(), &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(transport_step(&c, &e, 0.0, 0.25).unwrap().field, c);
        let tiny = transport_step(&c, &e, 1.0, 1e-3).unwrap();
        assert!(tiny.sub_resolution && tiny.field == c);
        // c > 0 erodes: ball(0, 1 - 0.25)
        let shrunk = transport_step(&c, &e, 1.0, 0.25).unwrap().field;
        let expect = GridField::ball(g.clone(), &[0.0, 0.0], 0.75).unwrap();
        assert!(hausdorff(&shrunk, &expect).unwrap() <= 1.5 * g.cell_diagonal());
        // dilation then erosion of a convex set
        let grown = transport_step(&c, &e, -1.0, 0.3).unwrap().field;
        let back = transport_step(&grown, &e, 1.0, 0.3).unwrap().field;
        assert!(hausdorff(&back, &c).unwrap() <= g.cell_diagonal());
        assert!(c.subset_of(&grown) && shrunk.subset_of(&c));
    }

    #[test]
    fn boundary_distance_examples() {
        let g = grid(128, -3.0, 3.0);
        let e = Anisotropy::euclidean(2).unwrap();
        let b1 = GridField::ball(g.clone(), &[0.0, 0.0], 1.0).unwrap();
        let b2 = GridField::ball(g.clone(), &[0.0, 0.0], 2.0).unwrap();
        let d = boundary_distance(&b1, &b2, &e).unwrap();
        assert!((d - 1.0).abs() <= 1.5 * g.cell_diagonal());
        assert_eq!(boundary_distance(&b1, &b1, &e).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_conventions() {
        let g = grid(32, -1.0, 1.0);
        let a = GridField::ball(g.clone(), &[0.0, 0.0], 0.5).unwrap();
        let empty = GridField::constant_phase(g.clone(), false);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&empty, &empty).unwrap(), 0.0);
        assert!(hausdorff(&a, &empty).unwrap().is_infinite());
        let b = a.shifted(&[2, 0]).unwrap();
        assert!((hausdorff(&a, &b).unwrap() - 2.0 * g.spacing()[0]).abs() < 1e-12);
    }
}
