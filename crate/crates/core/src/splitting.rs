//! Alternating evolution: transport windows `(2n eps, (2n+1) eps]` at speed
//! `2 c_eps` and unforced curvature windows `((2n+1) eps, (2n+2) eps]` run
//! for twice their duration, plus the boundary-distance diagnostics.

use crate::anisotropy::NormEvaluator;
use crate::distance::{boundary_distance, cell_steps, transport_radius};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::kernel::{sample_kernel_with, KernelGrid};
use crate::mobility::{MobilityContext, PolarNorm};
use crate::scheme::{threshold_step, ForcingTerm, SchemeParams, Trajectory};

/// Window kind at a given time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Transport,
    Curvature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitWindow {
    pub index: usize,
    pub phase: Phase,
    pub start: f64,
    pub end: f64,
    /// Scheme steps of length `h` covering the window.
    pub steps: usize,
    /// `c_eps` of the window pair.
    pub c_eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSchedule {
    pub epsilon: f64,
    pub horizon: f64,
    pub h: f64,
    pub windows: Vec<SplitWindow>,
}

impl SplitSchedule {
    /// Windows tiling `(0, floor(horizon / h) h]`; `epsilon` must be a
    /// positive integer multiple of `h`.
    pub fn new(forcing: &ForcingTerm, epsilon: f64, horizon: f64, h: f64) -> Result<Self> {
        let per = steps_per_window(epsilon, h)?;
        let total = (horizon / h * (1.0 + 1e-12)).floor() as usize;
        let mut windows = Vec::new();
        let mut done = 0;
        let mut index = 0;
        while done < total {
            let steps = per.min(total - done);
            let phase = Self::phase_of_index(index);
            windows.push(SplitWindow {
                index,
                phase,
                start: done as f64 * h,
                end: (done + steps) as f64 * h,
                steps,
                c_eps: c_eps(forcing, epsilon, index / 2)?,
            });
            done += steps;
            index += 1;
        }
        Ok(SplitSchedule {
            epsilon,
            horizon,
            h,
            windows,
        })
    }

    fn phase_of_index(index: usize) -> Phase {
        if index % 2 == 0 {
            Phase::Transport
        } else {
            Phase::Curvature
        }
    }

    /// Phase of time `t > 0` (windows are open on the left).
    pub fn phase_at(&self, t: f64) -> Phase {
        let k = ((t / self.epsilon).ceil() as usize).max(1) - 1;
        Self::phase_of_index(k)
    }
}

fn steps_per_window(epsilon: f64, h: f64) -> Result<usize> {
    if !(epsilon > 0.0) || !(h > 0.0) {
        return Err(Error::param("epsilon", "epsilon and h must be positive"));
    }
    let ratio = epsilon / h;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::param("epsilon", format!("must be an integer multiple of h (epsilon/h = {ratio})")));
    }
    Ok(m as usize)
}

/// `c_eps = (1/(2 eps)) int_{2n eps}^{(2n+2) eps} g`.
pub fn c_eps(g: &ForcingTerm, epsilon: f64, n: usize) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    if let ForcingTerm::Constant(c) = g {
        return Ok(*c);
    }
    let a = 2.0 * n as f64 * epsilon;
    Ok(g.integral(a, a + 2.0 * epsilon)?.value / (2.0 * epsilon))
}

/// Default polar norm of the mobility for `params` (2D: 512 directions).
pub fn default_polar(params: &SchemeParams) -> Result<PolarNorm> {
    let ctx = MobilityContext::new(params.kernel.anisotropy().clone(), params.kernel.s())?;
    let n = if ctx.dim() == 2 { 512 } else { 4096 };
    PolarNorm::new(&ctx, n)
}

/// Split evolution on the schedule of `epsilon`. Records carry
/// `step` = scheme steps taken so far, so with `g = 0` they line up with
/// [`crate::scheme::evolve`] at the same step count.
pub fn split_evolve(e0: &GridField, params: &SchemeParams, epsilon: f64) -> Result<Trajectory> {
    params.validate()?;
    let kernel = sample_kernel_with(&params.kernel, &params.grid, params.h, params.min_mass_ratio)?;
    let polar = default_polar(params)?;
    split_evolve_with(e0, params, epsilon, &kernel, &polar)
}

pub fn split_evolve_with(
    e0: &GridField,
    params: &SchemeParams,
    epsilon: f64,
    kernel: &KernelGrid,
    polar: &dyn NormEvaluator,
) -> Result<Trajectory> {
    params.validate()?;
    e0.require_phase()?;
    if e0.grid() != &params.grid || kernel.grid() != &params.grid {
        return Err(Error::GridMismatch);
    }
    let schedule = SplitSchedule::new(&params.forcing, epsilon, params.horizon, params.h)?;
    let level = if params.tail_correction { kernel.tail_mass() } else { 0.0 };
    let h = params.h;
    let keep = |n: usize| params.record_every > 0 && n % params.record_every == 0;
    let mut traj = Trajectory::start(e0, h, keep(0));
    let mut field = e0.clone();
    let mut steps = 0usize;
    let mut records = 0usize;
    // signed radius not yet realized on the grid; a transport by r moves
    // the cell boundary by round(r / step) layers and the rest carries over
    let mut pending = 0.0;
    let step = cell_steps(&params.grid, polar).into_iter().fold(f64::INFINITY, f64::min);
    for w in &schedule.windows {
        if params.stop_at_extinction && field.is_empty_set() {
            break;
        }
        match w.phase {
            Phase::Transport => {
                pending -= 2.0 * w.c_eps * (w.end - w.start);
                let moved = transport_radius(&field, polar, pending)?;
                if !moved.sub_resolution {
                    pending -= pending.signum() * (pending.abs() / step).round() * step;
                }
                field = moved.field;
                records += 1;
                traj.push(steps, w.end, None, field.clone(), keep(records));
            }
            Phase::Curvature => {
                let n = 2 * w.steps;
                for k in 0..n {
                    field = threshold_step(&field, kernel, level, params.rule)?;
                    steps += 1;
                    records += 1;
                    let t = w.start + (k + 1) as f64 * 0.5 * h;
                    traj.push(steps, t, Some(level), field.clone(), keep(records));
                }
            }
        }
    }
    traj.seal(params.record_every);
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport {
    pub times: Vec<f64>,
    /// `delta(t)` in `Phi°` units.
    pub delta: Vec<f64>,
    /// `delta(0) - t (c2 - c1)`.
    pub bound: Vec<f64>,
    /// First sampled time with `delta = 0` or a vanished boundary; the
    /// horizon if none.
    pub first_contact: f64,
    pub slack: f64,
    /// `max(bound - delta)` over the checked samples.
    pub max_deficit: f64,
    pub pass: bool,
}

/// Transports `c1 ⊆ c2` at constant speeds and checks
/// `delta(t) >= delta(0) - t (c2 - c1) - slack` up to first contact, with a
/// slack of two cells in `Phi°` units. Each sample transports the initial
/// sets by the full radius `|c_i| t`.
pub fn distance_bound_check(
    c1_set: &GridField,
    c2_set: &GridField,
    c1: f64,
    c2: f64,
    polar: &dyn NormEvaluator,
    horizon: f64,
    dt: f64,
) -> Result<DistanceReport> {
    if !c1_set.subset_of(c2_set) {
        return Err(Error::Containment);
    }
    if !(dt > 0.0) || !(horizon >= dt) {
        return Err(Error::param("dt", "need 0 < dt <= horizon"));
    }
    let step = cell_steps(c1_set.grid(), polar).into_iter().fold(0.0, f64::max);
    let slack = 2.0 * step;
    let delta0 = boundary_distance(c1_set, c2_set, polar)?;
    let n = (horizon / dt * (1.0 + 1e-12)).floor() as usize;
    let mut report = DistanceReport {
        times: Vec::new(),
        delta: Vec::new(),
        bound: Vec::new(),
        first_contact: horizon,
        slack,
        max_deficit: f64::NEG_INFINITY,
        pass: true,
    };
    for k in 0..=n {
        let t = k as f64 * dt;
        let a = transport_radius(c1_set, polar, -c1 * t)?.field;
        let b = transport_radius(c2_set, polar, -c2 * t)?.field;
        let delta = match boundary_distance(&a, &b, polar) {
            Ok(d) => d,
            Err(Error::DegenerateSet(_)) => 0.0,
            Err(e) => return Err(e),
        };
        let bound = delta0 - t * (c2 - c1);
        report.times.push(t);
        report.delta.push(delta);
        report.bound.push(bound);
        report.max_deficit = report.max_deficit.max(bound - delta);
        if delta < bound - slack {
            report.pass = false;
        }
        if delta == 0.0 {
            report.first_contact = t;
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::Anisotropy;
    use crate::grid::{Boundary, GridSpec};
    use crate::kernel::KernelSpec;
    use crate::scheme::{evolve, min_resolved_h};
    use std::f64::consts::PI;

    #[test]
    fn c_eps_examples() {
        let eps = 0.1;
        assert_eq!(c_eps(&ForcingTerm::Constant(1.7), eps, 3).unwrap(), 1.7);
        let lin = ForcingTerm::piecewise_linear(vec![0.0, 10.0], vec![0.0, 10.0]).unwrap();
        assert!((c_eps(&lin, eps, 0).unwrap() - eps).abs() < 1e-14);
        let sin = ForcingTerm::sinusoid(3.0, 2.0 * eps, 0.4).unwrap();
        assert!(c_eps(&sin, eps, 2).unwrap().abs() < 1e-8);
    }

    #[test]
    fn schedule_tiles_horizon() {
        let g = ForcingTerm::Constant(1.0);
        let s = SplitSchedule::new(&g, 0.03, 0.2, 0.01).unwrap();
        assert_eq!(s.windows.iter().map(|w| w.steps).sum::<usize>(), 20);
        assert_eq!(s.windows[0].phase, Phase::Transport);
        assert_eq!(s.windows[1].phase, Phase::Curvature);
        assert_eq!(s.phase_at(0.03), Phase::Transport);
        assert_eq!(s.phase_at(0.031), Phase::Curvature);
        assert!(SplitSchedule::new(&g, 0.025, 0.2, 0.01).is_err());
    }

    fn fixture() -> (SchemeParams, GridField) {
        let g = GridSpec::cube(2, 128, -1.0, 1.0, Boundary::Periodic).unwrap();
        let h = min_resolved_h(&g, 0.75);
        let spec = KernelSpec::new(Anisotropy::euclidean(2).unwrap(), 0.75).unwrap();
        let e0 = GridField::ball(g.clone(), &[0.0, 0.0], 0.8).unwrap();
        (SchemeParams::new(spec, g, h, 24.0 * h, ForcingTerm::zero()), e0)
    }

    #[test]
    fn unforced_split_matches_evolve() {
        let (p, e0) = fixture();
        let split = split_evolve(&e0, &p, 4.0 * p.h).unwrap();
        // 24 steps = 3 curvature windows of 4 steps, each run twice
        let mut q = p.clone();
        q.horizon = 24.0 * p.h;
        let reference = evolve(&e0, &q).unwrap();
        assert_eq!(split.final_field, reference.final_field);
        for rec in split.records.iter().filter(|r| r.level.is_some()) {
            let r = &reference.records[rec.step];
            assert_eq!(rec.measurements, r.measurements);
        }
    }

    #[test]
    fn forcing_shifts_radius_like_transport() {
        let (mut p, e0) = fixture();
        let ctx = MobilityContext::new(p.kernel.anisotropy().clone(), p.kernel.s()).unwrap();
        let alpha = crate::mobility::phi(&ctx, &[1.0, 0.0]).unwrap();
        let radius = |f: &GridField| (f.count_inside() as f64 * f.grid().cell_volume() / PI).sqrt();
        let cell = p.grid.spacing()[0];
        let c = 6.0;
        p.forcing = ForcingTerm::Constant(c);
        // a single transport window is pure transport at speed 2c
        let mut one = p.clone();
        one.horizon = 4.0 * p.h;
        let moved = split_evolve(&e0, &one, 4.0 * p.h).unwrap().final_field;
        let predicted = alpha * 2.0 * c * 4.0 * p.h;
        let drop = radius(&e0) - radius(&moved);
        assert!((drop - predicted).abs() <= 1.5 * cell, "{drop} vs {predicted}");
        // over three window pairs smaller balls also shrink faster, so the
        // forced drop is at least the transport share
        p.forcing = ForcingTerm::zero();
        let unforced = split_evolve(&e0, &p, 4.0 * p.h).unwrap().final_field;
        p.forcing = ForcingTerm::Constant(c);
        let forced = split_evolve(&e0, &p, 4.0 * p.h).unwrap().final_field;
        assert!(forced.subset_of(&unforced));
        let drop = radius(&unforced) - radius(&forced);
        assert!(drop >= 3.0 * predicted - 3.0 * cell, "{drop} vs {}", 3.0 * predicted);
    }

    #[test]
    fn concentric_equality_case() {
        let g = GridSpec::cube(2, 192, -3.0, 3.0, Boundary::ZeroPadded).unwrap();
        let c1 = GridField::ball(g.clone(), &[0.0, 0.0], 1.0).unwrap();
        let c2 = GridField::ball(g.clone(), &[0.0, 0.0], 2.0).unwrap();
        let e = Anisotropy::euclidean(2).unwrap();
        let rep = distance_bound_check(&c1, &c2, -1.0, 0.0, &e, 1.2, 0.1).unwrap();
        assert!(rep.pass, "{rep:?}");
        // equality up to the slack
        for (d, b) in rep.delta.iter().zip(&rep.bound) {
            assert!((d - b).abs() <= rep.slack);
        }
        assert!(rep.first_contact < 1.2);
        assert!(matches!(
            distance_bound_check(&c2, &c1, 0.0, 0.0, &e, 1.0, 0.5),
            Err(Error::Containment)
        ));
    }
}
