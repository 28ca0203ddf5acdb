//! Convolution of grid fields with a sampled kernel: a spectral path
//! (real-to-complex FFT along the last axis, complex FFTs along the others)
//! and a direct nested-loop oracle.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Boundary, FieldKind, GridField, GridSpec};
use crate::kernel::{index_to_offset, offset_to_index, KernelGrid};

/// Largest grid accepted by [`convolve_direct`].
pub const DIRECT_LIMIT: usize = 1 << 16;

/// Transform plans for one array shape.
struct Plans {
    shape: Vec<usize>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl Plans {
    fn new(shape: &[usize]) -> Self {
        let last = *shape.last().expect("nonempty shape");
        let mut real = RealFftPlanner::<f64>::new();
        let mut complex = FftPlanner::<f64>::new();
        let axes = &shape[..shape.len() - 1];
        Plans {
            shape: shape.to_vec(),
            r2c: real.plan_fft_forward(last),
            c2r: real.plan_fft_inverse(last),
            forward: axes.iter().map(|&n| complex.plan_fft_forward(n)).collect(),
            inverse: axes.iter().map(|&n| complex.plan_fft_inverse(n)).collect(),
        }
    }

    fn half(&self) -> usize {
        self.shape.last().unwrap() / 2 + 1
    }

    fn spectrum_len(&self) -> usize {
        self.shape[..self.shape.len() - 1].iter().product::<usize>() * self.half()
    }

    fn forward(&self, mut real: Vec<f64>) -> Vec<Complex64> {
        let last = *self.shape.last().unwrap();
        let half = self.half();
        let mut spec = vec![Complex64::new(0.0, 0.0); self.spectrum_len()];
        real.par_chunks_mut(last)
            .zip(spec.par_chunks_mut(half))
            .for_each_init(
                || self.r2c.make_scratch_vec(),
                |scratch, (input, output)| {
                    self.r2c
                        .process_with_scratch(input, output, scratch)
                        .expect("sizes fixed by plan");
                },
            );
        for axis in 0..self.shape.len() - 1 {
            self.along_axis(&mut spec, axis, &self.forward[axis]);
        }
        spec
    }

    fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let last = *self.shape.last().unwrap();
        let half = self.half();
        for axis in (0..self.shape.len() - 1).rev() {
            self.along_axis(&mut spec, axis, &self.inverse[axis]);
        }
        let mut real = vec![0.0; spec.len() / half * last];
        let scale = 1.0 / self.shape.iter().product::<usize>() as f64;
        spec.par_chunks_mut(half)
            .zip(real.par_chunks_mut(last))
            .for_each_init(
                || self.c2r.make_scratch_vec(),
                |scratch, (input, output)| {
                    input[0].im = 0.0;
                    if last % 2 == 0 {
                        input[half - 1].im = 0.0;
                    }
                    self.c2r
                        .process_with_scratch(input, output, scratch)
                        .expect("sizes fixed by plan");
                    output.iter_mut().for_each(|v| *v *= scale);
                },
            );
        real
    }

    /// Complex FFT of every line along `axis`, through a transposed buffer so
    /// that all lines are contiguous.
    fn along_axis(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.shape[axis];
        let mut inner = self.half();
        for &d in &self.shape[axis + 1..self.shape.len() - 1] {
            inner *= d;
        }
        let block = n * inner;
        let src: &[Complex64] = data;
        let mut lines = vec![Complex64::new(0.0, 0.0); data.len()];
        lines
            .par_chunks_mut(n)
            .enumerate()
            .for_each_init(
                || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                |scratch, (c, line)| {
                    let (outer, j) = (c / inner, c % inner);
                    let base = outer * block + j;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = src[base + k * inner];
                    }
                    fft.process_with_scratch(line, scratch);
                },
            );
        data.par_chunks_mut(inner).enumerate().for_each(|(r, row)| {
            let (outer, k) = (r / n, r % n);
            let base = outer * block;
            for (j, v) in row.iter_mut().enumerate() {
                *v = lines[base + j * n + k];
            }
        });
    }
}

/// Cached transform of a kernel for repeated convolutions on one grid.
pub(crate) struct Spectral {
    plans: Plans,
    kernel: Vec<Complex64>,
    padded: bool,
}

impl Spectral {
    pub(crate) fn for_kernel(grid: &GridSpec, values: &[f64]) -> Self {
        match grid.boundary() {
            Boundary::Periodic => {
                let plans = Plans::new(grid.dims());
                let kernel = plans.forward(values.to_vec());
                Spectral {
                    plans,
                    kernel,
                    padded: false,
                }
            }
            Boundary::ZeroPadded => {
                let shape: Vec<usize> = grid.dims().iter().map(|n| 2 * n).collect();
                let plans = Plans::new(&shape);
                let padded = GridSpec::new(
                    shape.clone(),
                    vec![0.0; shape.len()],
                    vec![1.0; shape.len()],
                    Boundary::Periodic,
                )
                .expect("doubled grid is valid");
                let mut real = vec![0.0; padded.len()];
                for (idx, &v) in values.iter().enumerate() {
                    let multi = grid.unravel(idx);
                    let target: Vec<usize> = multi
                        .iter()
                        .enumerate()
                        .map(|(i, &m)| {
                            let k = index_to_offset(m, grid.dims()[i]);
                            k.rem_euclid(shape[i] as isize) as usize
                        })
                        .collect();
                    real[padded.index(&target)] = v;
                }
                let kernel = plans.forward(real);
                Spectral {
                    plans,
                    kernel,
                    padded: true,
                }
            }
        }
    }

    fn apply(&self, grid: &GridSpec, field: &[f64]) -> Vec<f64> {
        let real = if self.padded {
            let shape = &self.plans.shape;
            let last = *grid.dims().last().unwrap();
            let mut real = vec![0.0; shape.iter().product()];
            for (row_idx, row) in field.chunks(last).enumerate() {
                let start = padded_row_start(grid.dims(), shape, row_idx);
                real[start..start + last].copy_from_slice(row);
            }
            real
        } else {
            field.to_vec()
        };
        let mut spec = self.plans.forward(real);
        spec.par_iter_mut()
            .zip(self.kernel.par_iter())
            .for_each(|(a, k)| *a *= k);
        let full = self.plans.inverse(spec);
        if self.padded {
            let last = *grid.dims().last().unwrap();
            let mut out = Vec::with_capacity(field.len());
            for row_idx in 0..field.len() / last {
                let start = padded_row_start(grid.dims(), &self.plans.shape, row_idx);
                out.extend_from_slice(&full[start..start + last]);
            }
            out
        } else {
            full
        }
    }
}

fn padded_row_start(dims: &[usize], shape: &[usize], row_idx: usize) -> usize {
    let d = dims.len();
    let mut rem = row_idx;
    let mut multi = vec![0usize; d - 1];
    for i in (0..d - 1).rev() {
        multi[i] = rem % dims[i];
        rem /= dims[i];
    }
    let mut start = 0usize;
    for i in 0..d - 1 {
        start = start * shape[i] + multi[i];
    }
    start * shape[d - 1]
}

fn check_grids(field: &GridField, kernel: &KernelGrid) -> Result<()> {
    if field.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `P_h * u` by FFT: circular on periodic grids, linear (with the field
/// taken as zero outside the grid) on zero-padded grids. Scaled by the cell
/// volume so that it approximates the continuum convolution.
pub fn convolve(field: &GridField, kernel: &KernelGrid) -> Result<GridField> {
    check_grids(field, kernel)?;
    let mut out = kernel.spectral().apply(field.grid(), field.values());
    let vol = field.grid().cell_volume();
    out.par_iter_mut().for_each(|v| *v *= vol);
    Ok(GridField::from_parts(field.grid().clone(), out, FieldKind::Scalar))
}

/// Reference nested-loop convolution with the same semantics as [`convolve`].
pub fn convolve_direct(field: &GridField, kernel: &KernelGrid) -> Result<GridField> {
    check_grids(field, kernel)?;
    let grid = field.grid();
    if grid.len() > DIRECT_LIMIT {
        return Err(Error::SizeGuard {
            cells: grid.len(),
            limit: DIRECT_LIMIT,
        });
    }
    let dims = grid.dims();
    let multis: Vec<Vec<usize>> = (0..grid.len()).map(|i| grid.unravel(i)).collect();
    let periodic = grid.boundary() == Boundary::Periodic;
    let vol = grid.cell_volume();
    let kv = kernel.values();
    let input = field.values();
    let out: Vec<f64> = multis
        .par_iter()
        .map(|mi| {
            let mut acc = 0.0;
            'cells: for (j, mj) in multis.iter().enumerate() {
                let mut kidx = 0usize;
                for a in 0..dims.len() {
                    let n = dims[a];
                    let diff = mi[a] as isize - mj[a] as isize;
                    let m = if periodic {
                        diff.rem_euclid(n as isize) as usize
                    } else {
                        match offset_to_index(diff, n) {
                            Some(m) => m,
                            None => continue 'cells,
                        }
                    };
                    kidx = kidx * n + m;
                }
                acc += kv[kidx] * input[j];
            }
            acc * vol
        })
        .collect();
    Ok(GridField::from_parts(grid.clone(), out, FieldKind::Scalar))
}
