//! Uniform rectangular grids and the fields living on them.
//!
//! Storage is row-major with the last axis fastest. Cell `k` along axis `i`
//! has center `origin[i] + (k + 1/2) spacing[i]`.

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    ZeroPadded,
}

impl Boundary {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "periodic" => Some(Boundary::Periodic),
            "zero-padded" | "zero_padded" => Some(Boundary::ZeroPadded),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::ZeroPadded => "zero-padded",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    dims: Vec<usize>,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    boundary: Boundary,
}

pub const MIN_CELLS_PER_AXIS: usize = 8;

impl GridSpec {
    pub fn new(dims: Vec<usize>, origin: Vec<f64>, spacing: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::param("dims", "grid needs at least one axis"));
        }
        check_dim(dims.len(), origin.len())?;
        check_dim(dims.len(), spacing.len())?;
        if let Some(n) = dims.iter().find(|&&n| n < MIN_CELLS_PER_AXIS) {
            return Err(Error::param(
                "dims",
                format!("every axis needs at least {MIN_CELLS_PER_AXIS} cells, got {n}"),
            ));
        }
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::param("spacing", "spacings must be finite and positive"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::param("origin", "origin must be finite"));
        }
        Ok(GridSpec {
            dims,
            origin,
            spacing,
            boundary,
        })
    }

    /// `n^dim` cells covering `[lower, upper)^dim`.
    pub fn cube(dim: usize, n: usize, lower: f64, upper: f64, boundary: Boundary) -> Result<Self> {
        if !(upper > lower) {
            return Err(Error::param("extent", "upper bound must exceed lower bound"));
        }
        let h = (upper - lower) / n as f64;
        Self::new(vec![n; dim], vec![lower; dim], vec![h; dim], boundary)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn with_boundary(&self, boundary: Boundary) -> GridSpec {
        GridSpec {
            boundary,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.dims[axis] as f64 * self.spacing[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Length of one cell diagonal.
    pub fn cell_diagonal(&self) -> f64 {
        self.spacing.iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for i in (0..self.dim().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&k, &n)| acc * n + k)
    }

    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            out[i] = idx % self.dims[i];
            idx /= self.dims[i];
        }
        out
    }

    pub fn center(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(i, &k)| self.origin[i] + (k as f64 + 0.5) * self.spacing[i])
            .collect()
    }

    pub fn center_of(&self, idx: usize) -> Vec<f64> {
        self.center(&self.unravel(idx))
    }

    /// Index of the cell containing `x`, if inside the domain.
    pub fn locate(&self, x: &[f64]) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let k = ((x[i] - self.origin[i]) / self.spacing[i]).floor();
            if k < 0.0 || k >= self.dims[i] as f64 {
                return None;
            }
            out.push(k as usize);
        }
        Some(out)
    }

    /// Neighbor of `multi` displaced by `delta` cells, wrapping on periodic
    /// grids and `None` when it leaves a zero-padded grid.
    pub fn offset(&self, multi: &[usize], delta: &[isize]) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..self.dim() {
            let n = self.dims[i] as isize;
            let mut k = multi[i] as isize + delta[i];
            if k < 0 || k >= n {
                match self.boundary {
                    Boundary::Periodic => k = k.rem_euclid(n),
                    Boundary::ZeroPadded => return None,
                }
            }
            idx = idx * self.dims[i] + k as usize;
        }
        Some(idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    /// Values in {-1, +1}: the signed indicator of a set.
    Phase,
    Scalar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
    kind: FieldKind,
}

impl GridField {
    pub fn scalar(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_dim(grid.len(), values.len())?;
        Ok(GridField {
            grid,
            values,
            kind: FieldKind::Scalar,
        })
    }

    pub fn phase(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_dim(grid.len(), values.len())?;
        if values.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::param("values", "phase fields take only the values -1 and +1"));
        }
        Ok(GridField {
            grid,
            values,
            kind: FieldKind::Phase,
        })
    }

    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>, kind: FieldKind) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        GridField { grid, values, kind }
    }

    pub fn constant_phase(grid: GridSpec, inside: bool) -> Self {
        let v = if inside { 1.0 } else { -1.0 };
        let n = grid.len();
        GridField::from_parts(grid, vec![v; n], FieldKind::Phase)
    }

    /// Phase field of the set of cells whose centers satisfy `inside`.
    pub fn phase_from_fn<F: Fn(&[f64]) -> bool + Sync>(grid: GridSpec, inside: F) -> Self {
        use rayon::prelude::*;
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| if inside(&grid.center_of(i)) { 1.0 } else { -1.0 })
            .collect();
        GridField::from_parts(grid, values, FieldKind::Phase)
    }

    /// Phase field of a Euclidean ball.
    pub fn ball(grid: GridSpec, center: &[f64], radius: f64) -> Result<Self> {
        check_dim(grid.dim(), center.len())?;
        let c = center.to_vec();
        Ok(Self::phase_from_fn(grid, move |x| {
            x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= radius * radius
        }))
    }

    /// Phase field of `{x : normal . x <= offset}`.
    pub fn halfspace(grid: GridSpec, normal: &[f64], offset: f64) -> Result<Self> {
        check_dim(grid.dim(), normal.len())?;
        let n = normal.to_vec();
        Ok(Self::phase_from_fn(grid, move |x| {
            x.iter().zip(&n).map(|(a, b)| a * b).sum::<f64>() <= offset
        }))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn is_phase(&self) -> bool {
        self.kind == FieldKind::Phase
    }

    pub(crate) fn require_phase(&self) -> Result<()> {
        if self.is_phase() {
            Ok(())
        } else {
            Err(Error::param("field", "expected a phase field"))
        }
    }

    #[inline]
    pub fn inside(&self, idx: usize) -> bool {
        self.values[idx] > 0.0
    }

    pub fn count_inside(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn is_empty_set(&self) -> bool {
        self.values.iter().all(|&v| v <= 0.0)
    }

    pub fn is_full_set(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    /// Cellwise inclusion of the `+1` sets.
    pub fn subset_of(&self, other: &GridField) -> bool {
        self.grid == other.grid
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| a <= 0.0 || b > 0.0)
    }

    pub fn complement(&self) -> GridField {
        GridField::from_parts(
            self.grid.clone(),
            self.values.iter().map(|v| -v).collect(),
            self.kind,
        )
    }

    /// Periodic translation by whole cells: `out[k + shift] = in[k]`.
    pub fn shifted(&self, shift: &[isize]) -> Result<GridField> {
        check_dim(self.grid.dim(), shift.len())?;
        let neg: Vec<isize> = shift.iter().map(|s| -s).collect();
        let periodic = self.grid.with_boundary(Boundary::Periodic);
        let values = (0..self.grid.len())
            .map(|i| {
                let src = periodic.offset(&periodic.unravel(i), &neg).expect("periodic");
                self.values[src]
            })
            .collect();
        Ok(GridField::from_parts(self.grid.clone(), values, self.kind))
    }

    /// Cells of the `+1` set (or of the `-1` set when `inside` is false)
    /// having a face neighbor in the other set. Cells beyond a zero-padded
    /// edge count as `-1`.
    pub fn boundary_cells(&self, inside: bool) -> Vec<usize> {
        let dim = self.grid.dim();
        let mut delta = vec![0isize; dim];
        (0..self.grid.len())
            .filter(|&i| {
                if self.inside(i) != inside {
                    return false;
                }
                let multi = self.grid.unravel(i);
                for axis in 0..dim {
                    for step in [-1isize, 1] {
                        delta.iter_mut().for_each(|d| *d = 0);
                        delta[axis] = step;
                        let other = match self.grid.offset(&multi, &delta) {
                            Some(j) => self.inside(j),
                            None => false,
                        };
                        if other != inside {
                            return true;
                        }
                    }
                }
                false
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = GridSpec::new(vec![8, 10, 12], vec![0.0; 3], vec![1.0; 3], Boundary::Periodic).unwrap();
        for i in [0, 7, 119, 959] {
            assert_eq!(g.index(&g.unravel(i)), i);
        }
        assert_eq!(g.strides(), vec![120, 12, 1]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::cube(2, 4, 0.0, 1.0, Boundary::Periodic).is_err());
        assert!(GridSpec::new(vec![8, 8], vec![0.0, 0.0], vec![1.0, 0.0], Boundary::Periodic).is_err());
        assert!(GridField::phase(
            GridSpec::cube(1, 8, 0.0, 1.0, Boundary::Periodic).unwrap(),
            vec![0.5; 8]
        )
        .is_err());
    }

    #[test]
    fn centers_are_symmetric() {
        let g = GridSpec::cube(2, 16, -1.0, 1.0, Boundary::Periodic).unwrap();
        let a = g.center(&[0, 3]);
        let b = g.center(&[15, 12]);
        assert_eq!(a[0], -b[0]);
        assert_eq!(a[1], -b[1]);
    }

    #[test]
    fn ball_area() {
        let g = GridSpec::cube(2, 256, -1.0, 1.0, Boundary::Periodic).unwrap();
        let b = GridField::ball(g.clone(), &[0.0, 0.0], 0.5).unwrap();
        let area = b.count_inside() as f64 * g.cell_volume();
        let exact = std::f64::consts::PI * 0.25;
        assert!((area - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn shift_wraps() {
        let g = GridSpec::cube(2, 8, 0.0, 1.0, Boundary::Periodic).unwrap();
        let mut v = vec![-1.0; 64];
        v[g.index(&[7, 7])] = 1.0;
        let f = GridField::phase(g.clone(), v).unwrap();
        let s = f.shifted(&[1, 2]).unwrap();
        assert!(s.inside(g.index(&[0, 1])));
        assert_eq!(s.count_inside(), 1);
    }

    #[test]
    fn boundary_of_square() {
        let g = GridSpec::cube(2, 16, 0.0, 16.0, Boundary::Periodic).unwrap();
        let f = GridField::phase_from_fn(g, |x| (4.0..8.0).contains(&x[0]) && (4.0..8.0).contains(&x[1]));
        assert_eq!(f.count_inside(), 16);
        assert_eq!(f.boundary_cells(true).len(), 12);
        assert_eq!(f.boundary_cells(false).len(), 16);
    }
}
