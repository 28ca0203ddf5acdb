//! Bundled fixtures run by `fracflow selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anisotropy::Anisotropy;
use crate::convolution::{convolve, convolve_direct};
use crate::curvature::{kappa_s, BodySpec, QuadParams};
use crate::error::Result;
use crate::grid::{Boundary, GridField, GridSpec};
use crate::kernel::{p_h_closed_form, p_h_eval, sample_kernel_with, KernelSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

/// One norm of each kind in 2D.
pub fn norm_zoo_2d() -> Result<Vec<Anisotropy>> {
    let r3 = 3f64.sqrt() / 2.0;
    Ok(vec![
        Anisotropy::euclidean(2)?,
        Anisotropy::weighted_lq(3.0, vec![1.0, 2.0])?,
        Anisotropy::scaled_euclidean(2, vec![2.0, 0.5, 0.5, 1.0])?,
        Anisotropy::polytope(2, vec![vec![1.0, 0.0], vec![0.5, r3], vec![-0.5, r3]])?,
    ])
}

/// Largest relative gap between the two forms of `P_h` over `n` random
/// `(x, h)` pairs for every norm of the zoo.
pub fn kernel_identity(n: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<KernelSpec> = norm_zoo_2d()?
        .into_iter()
        .zip([0.25, 0.5, 0.75, 0.5])
        .map(|(a, s)| KernelSpec::new(a, s))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let spec = &specs[i % specs.len()];
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let h = 10f64.powf(rng.gen_range(-5.0..0.0));
        let a = p_h_eval(spec, &x, h)?;
        let b = p_h_closed_form(spec, &x, h)?;
        worst = worst.max((a - b).abs() / b.abs());
    }
    Ok(Check::new(format!("kernel identity ({n} points)"), worst, 1e-12))
}

/// Largest spectral/direct gap over `n` random 32x32 phase fields.
pub fn convolution_oracle(n: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zoo = norm_zoo_2d()?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let boundary = if i % 2 == 0 { Boundary::Periodic } else { Boundary::ZeroPadded };
        let grid = GridSpec::new(vec![32, 32], vec![-1.0, -1.0], vec![1.0 / 16.0; 2], boundary)?;
        let spec = KernelSpec::new(zoo[i % zoo.len()].clone(), 0.5)?;
        let kernel = sample_kernel_with(&spec, &grid, 2e-3, 0.0)?;
        let v = (0..grid.len())
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let f = GridField::phase(grid, v)?;
        let a = convolve(&f, &kernel)?;
        let b = convolve_direct(&f, &kernel)?;
        let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
    }
    Ok(Check::new(format!("convolution oracle ({n} fields)"), worst, 1e-10))
}

/// `|kappa_s|` at a point of a half-plane, for every norm of the zoo and
/// `s` in {0.25, 0.5, 0.75}. Passes when the value is inside its error bar
/// and the bar is at most `1e-4`.
pub fn halfspace_curvature() -> Result<Vec<Check>> {
    let normal = vec![0.6, 0.8];
    let offset = 0.3;
    let x = [0.18, 0.24];
    let body = BodySpec::halfspace(normal, offset)?;
    let mut out = Vec::new();
    for a in norm_zoo_2d()? {
        for s in [0.25, 0.5, 0.75] {
            let est = kappa_s(&x, &body, &a, s, &QuadParams::default())?;
            let mut c = Check::new(format!("halfspace curvature {} s={s}", a.label()), est.value.abs(), 1e-4);
            c.pass = est.value.abs() <= est.error && est.error <= 1e-4;
            c.tolerance = est.error;
            out.push(c);
        }
    }
    Ok(out)
}

pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let mut v = vec![kernel_identity(10_000, seed)?, convolution_oracle(20, seed)?];
    v.extend(halfspace_curvature()?);
    Ok(v)
}
