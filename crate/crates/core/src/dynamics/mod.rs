//! Time evolution, Liouvillian assembly and steady states.

mod integrator;
mod sparse;
mod steady;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blockspace::BlockSpace;
use crate::channels::{Generator, LiouvillianSpec};
use crate::error::{Error, Result};
use crate::states::{hermitize_slice, CollectiveState};
use crate::C64;
use integrator::{step_factor, DenseStep, Dopri5};

pub use sparse::{
    assemble_liouvillian, assemble_liouvillian_with_budget, SparseLiouvillian,
    DEFAULT_MEMORY_BUDGET,
};
pub use steady::{steady_state, steady_state_with, SteadyStateOptions, SteadyStateReport};

/// Trace drift below which returned states are silently renormalized.
pub const TRACE_RENORMALIZE: f64 = 1e-8;
/// Trace drift above which integration fails.
pub const TRACE_FAIL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    /// Longest time a crossing search integrates before giving up.
    pub horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: None,
            max_step: None,
            max_steps: 1_000_000,
            horizon: 1e3,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(Error::Domain(
                "integrator tolerances must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::Domain("max_steps must be positive".into()));
        }
        if self.initial_step.is_some_and(|h| !positive(h))
            || self.max_step.is_some_and(|h| !positive(h))
        {
            return Err(Error::Domain("step bounds must be positive".into()));
        }
        if !positive(self.horizon) {
            return Err(Error::Domain("horizon must be positive".into()));
        }
        Ok(())
    }

    /// Same configuration with both tolerances multiplied by `factor`.
    pub fn with_scaled_tolerances(mut self, factor: f64) -> Self {
        self.rtol *= factor;
        self.atol *= factor;
        self
    }
}

/// Which way the polarization fraction has to pass the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rising,
    Falling,
}

/// State at the moment the polarization fraction reached a target.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub target: f64,
    pub time: f64,
    pub state: CollectiveState,
}

type Rhs<'a> = &'a dyn Fn(&[C64], &mut [C64]);
type Fix<'a> = &'a dyn Fn(&mut [C64]);

/// Adaptive integration of `y' = rhs(y)` with dense output over the last step.
struct Trajectory<'a> {
    rhs: Rhs<'a>,
    fix: Fix<'a>,
    cfg: IntegratorConfig,
    stepper: Dopri5,
    dense: Option<DenseStep>,
    h: f64,
    steps: usize,
}

impl<'a> Trajectory<'a> {
    fn new(rhs: Rhs<'a>, fix: Fix<'a>, y0: Vec<C64>, cfg: &IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut call = |y: &[C64], dy: &mut [C64]| rhs(y, dy);
        let mut stepper = Dopri5::new(y0, &mut call);
        let h = match cfg.initial_step {
            Some(h) => h,
            None => stepper.initial_step(&mut call, cfg.rtol, cfg.atol),
        };
        Ok(Trajectory {
            rhs,
            fix,
            cfg: *cfg,
            stepper,
            dense: None,
            h,
            steps: 0,
        })
    }

    fn time(&self) -> f64 {
        self.stepper.t
    }

    /// Takes one accepted step that ends no later than `t_limit`.
    fn advance(&mut self, t_limit: f64) -> Result<()> {
        let (rhs, fix) = (self.rhs, self.fix);
        let mut rhs = |y: &[C64], dy: &mut [C64]| rhs(y, dy);
        let mut fix = |y: &mut [C64]| fix(y);
        let mut rejected = false;
        loop {
            let t = self.stepper.t;
            if self.steps >= self.cfg.max_steps {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("exceeded {} steps", self.cfg.max_steps),
                });
            }
            let mut h = self.h;
            if let Some(max) = self.cfg.max_step {
                h = h.min(max);
            }
            let remaining = t_limit - t;
            let clamped = h >= remaining;
            if clamped {
                h = remaining;
            }
            if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) && !clamped {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("step size underflow (h={h:e})"),
                });
            }
            let err = self
                .stepper
                .attempt(&mut rhs, &mut fix, h, self.cfg.rtol, self.cfg.atol);
            self.steps += 1;
            if !err.is_finite() {
                self.h = h * 0.1;
                rejected = true;
                continue;
            }
            if err <= 1.0 {
                match &mut self.dense {
                    Some(d) => self.stepper.dense_into(h, d),
                    None => self.dense = Some(self.stepper.dense(h)),
                }
                self.stepper.accept(h);
                if clamped {
                    self.stepper.t = t_limit;
                }
                let mut factor = step_factor(err);
                if rejected {
                    factor = factor.min(1.0);
                }
                let next = h * factor;
                self.h = if clamped { next.max(self.h) } else { next };
                return Ok(());
            }
            self.h = h * step_factor(err).min(1.0);
            rejected = true;
        }
    }

    fn current(&self) -> Vec<C64> {
        self.stepper.y.clone()
    }

    fn dense_at(&self, t: f64) -> Vec<C64> {
        let dense = self
            .dense
            .as_ref()
            .expect("dense output requested before first step");
        let mut data = vec![C64::ZERO; self.stepper.y.len()];
        dense.eval_into(t, &mut data);
        data
    }
}

/// Integrates `y' = rhs(y)` from `y0` at time 0 and returns `y` at each of
/// the non-decreasing `times`. `fix` is applied to every accepted point.
pub(crate) fn integrate_samples(
    rhs: Rhs<'_>,
    fix: Fix<'_>,
    y0: Vec<C64>,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<C64>>> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Domain(
            "sample times must be finite and non-negative".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("sample times must be non-decreasing".into()));
    }
    let mut traj = Trajectory::new(rhs, fix, y0, cfg)?;
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    loop {
        // samples not later than the current time lie inside the last step
        while next < times.len() && times[next] <= traj.time() {
            let ts = times[next];
            out.push(if ts == traj.time() {
                traj.current()
            } else {
                traj.dense_at(ts)
            });
            next += 1;
        }
        if next == times.len() {
            return Ok(out);
        }
        traj.advance(t_end)?;
    }
}

/// Hermitizes a raw state vector and applies the trace-drift policy.
fn finish_state(
    space: &Arc<BlockSpace>,
    mut data: Vec<C64>,
    trace0: C64,
    time: f64,
) -> Result<CollectiveState> {
    hermitize_slice(space, &mut data);
    let mut state = CollectiveState::from_data(space, data)?;
    let tr = state.trace();
    let drift = (tr - trace0).norm() / trace0.norm();
    if drift > TRACE_FAIL {
        return Err(Error::Integration {
            time,
            reason: format!("trace drifted by {drift:e}"),
        });
    }
    if drift <= TRACE_RENORMALIZE {
        state.scale(trace0 / tr);
    } else {
        log::warn!("trace drift {drift:e} at t={time} left uncorrected");
    }
    Ok(state)
}

/// Integrates the master equation and returns the state at each sample time.
pub fn evolve(
    spec: &LiouvillianSpec,
    initial: &CollectiveState,
    sample_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<CollectiveState>> {
    let space = initial.space();
    let gen = Generator::new(spec, space)?;
    initial.validate().map_err(|e| e.context("initial state"))?;
    let rhs = |y: &[C64], dy: &mut [C64]| gen.apply_into(y, dy);
    let fix = |y: &mut [C64]| hermitize_slice(space, y);
    let raw = integrate_samples(&rhs, &fix, initial.data().to_vec(), sample_times, cfg)?;
    let trace0 = initial.trace();
    raw.into_iter()
        .zip(sample_times)
        .map(|(data, &t)| finish_state(space, data, trace0, t))
        .collect()
}

/// Integrates until `f = <J_z>/(N/2)` first reaches `target`.
pub fn evolve_until_fraction(
    spec: &LiouvillianSpec,
    initial: &CollectiveState,
    target: f64,
    direction: Direction,
    cfg: &IntegratorConfig,
) -> Result<(CollectiveState, f64)> {
    let mut hits = evolve_until_fractions(spec, initial, &[target], direction, cfg)?;
    let c = hits.pop().expect("one target requested");
    Ok((c.state, c.time))
}

/// Single trajectory visiting several targets, ordered along `direction`.
pub fn evolve_until_fractions(
    spec: &LiouvillianSpec,
    initial: &CollectiveState,
    targets: &[f64],
    direction: Direction,
    cfg: &IntegratorConfig,
) -> Result<Vec<Crossing>> {
    let sign = match direction {
        Direction::Rising => 1.0,
        Direction::Falling => -1.0,
    };
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("targets must be finite".into()));
    }
    if targets.windows(2).any(|w| sign * (w[1] - w[0]) <= 0.0) {
        return Err(Error::Domain(
            "targets must be strictly ordered along the direction".into(),
        ));
    }
    let space = initial.space().clone();
    let half_n = space.n_particles() as f64 / 2.0;
    let jz_diag: Vec<(usize, f64)> = space
        .blocks()
        .iter()
        .flat_map(|b| (0..b.dim).map(move |r| (b.elem(r, r), b.m_at(r).value())))
        .collect();
    let fraction = |y: &[C64]| jz_diag.iter().map(|&(i, m)| y[i].re * m).sum::<f64>() / half_n;

    let f0 = fraction(initial.data());
    if let Some(&first) = targets.first() {
        if sign * (first - f0) < 0.0 {
            return Err(Error::Domain(format!(
                "initial f={f0} is already past target {first}"
            )));
        }
    }
    let mut out = Vec::with_capacity(targets.len());
    let mut pending = targets.iter().copied().peekable();
    while let Some(&t) = pending.peek() {
        if t != f0 {
            break;
        }
        out.push(Crossing {
            target: t,
            time: 0.0,
            state: initial.clone(),
        });
        pending.next();
    }
    if let Some(&t) = pending.peek() {
        if t.abs() >= 1.0 {
            return Err(Error::NoCrossing {
                target: t,
                horizon: 0.0,
                last: f0,
            });
        }
    } else {
        return Ok(out);
    }

    let gen = Generator::new(spec, &space)?;
    initial.validate().map_err(|e| e.context("initial state"))?;
    let rhs = |y: &[C64], dy: &mut [C64]| gen.apply_into(y, dy);
    let fix = |y: &mut [C64]| hermitize_slice(&space, y);
    let mut traj = Trajectory::new(&rhs, &fix, initial.data().to_vec(), cfg)?;
    let trace0 = initial.trace();
    let mut f_prev = f0;
    while let Some(&target) = pending.peek() {
        let scale = traj.stepper.y.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let speed = traj
            .stepper
            .derivative()
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        if traj.time() >= cfg.horizon || speed <= 1e-14 * scale {
            return Err(Error::NoCrossing {
                target,
                horizon: traj.time(),
                last: f_prev,
            });
        }
        traj.advance(cfg.horizon)?;
        let f_new = fraction(&traj.stepper.y);
        while let Some(&target) = pending.peek() {
            if sign * (f_new - target) < 0.0 {
                break;
            }
            let dense = traj.dense.as_ref().expect("step taken");
            let coeffs = dense.project(fraction);
            let (mut lo, mut hi) = (0.0, 1.0);
            let g = |theta: f64| sign * (DenseStep::eval_scalar(&coeffs, theta) - target);
            if g(lo) >= 0.0 {
                hi = 0.0;
            }
            loop {
                let t_lo = dense.t0 + lo * dense.h;
                if (hi - lo) * dense.h <= 1e-9 * t_lo.max(f64::MIN_POSITIVE) || hi - lo < 1e-16 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if g(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let time = dense.t0 + hi * dense.h;
            out.push(Crossing {
                target,
                time,
                state: finish_state(&space, traj.dense_at(time), trace0, time)?,
            });
            pending.next();
        }
        f_prev = f_new;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
