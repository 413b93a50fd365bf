//! Explicit solver for the nonlinear exchange equation on the aligned grid.
//!
//! Per wealth class the equation is a birth-death chain on levels
//! `0..=K` whose jump rate `(eta/3) mu_t([h, inf))` is shared by all
//! classes. Level 0 is absorbing; level `K` reflects (its upward jump is
//! dropped) so every column of the generator sums to zero.

use log::warn;
use rayon::prelude::*;

use crate::asymptotics::project_ph;
use crate::error::{Error, Result};
use crate::measure::{GridMeasure, ModelParams};
use crate::real::Real;

/// Top-level occupancy (relative to total mass) that triggers a warning.
pub const TRUNCATION_WARN_FRACTION: f64 = 1e-10;

/// Class sweeps above this many cells run on the rayon pool.
const PARALLEL_CELLS: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Reference step; the adaptive step is capped at `cap_factor * dt0`.
    pub dt0: T,
    /// Bound on `(2 eta / 3) B dt`, in `(0, 1)`.
    pub theta_max: T,
    pub t_end: T,
    /// Early stop once the V-distance to the limit falls to this fraction
    /// of its initial value. `None` runs to `t_end`.
    pub stop_frac: Option<T>,
    pub snapshot_every: usize,
    pub cap_factor: T,
    /// Trapezoid instead of left-endpoint accumulation of the clock.
    pub trapezoid_theta: bool,
    /// Keep a copy of the measure at every snapshot.
    pub keep_measures: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            dt0: T::lit(0.25),
            theta_max: T::half(),
            t_end: T::lit(1e7),
            stop_frac: Some(T::lit(0.05)),
            snapshot_every: 1,
            cap_factor: T::lit(100.0),
            trapezoid_theta: false,
            keep_measures: false,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > T::zero() && self.dt0.is_finite()) {
            return Err(Error::config(format!("solver.dt0 must be positive, got {}", self.dt0)));
        }
        if !(self.theta_max > T::zero() && self.theta_max < T::one()) {
            return Err(Error::config(format!(
                "solver.theta_max must lie in (0, 1), got {}",
                self.theta_max
            )));
        }
        if !(self.t_end >= T::zero()) {
            return Err(Error::config(format!("solver.t_end must be nonnegative, got {}", self.t_end)));
        }
        if let Some(f) = self.stop_frac {
            if !(f > T::zero() && f < T::one()) {
                return Err(Error::config(format!("solver.stop_frac must lie in (0, 1), got {f}")));
            }
        }
        if self.snapshot_every == 0 {
            return Err(Error::config("solver.snapshot_every must be at least 1"));
        }
        if !(self.cap_factor >= T::one()) {
            return Err(Error::config("solver.cap_factor must be at least 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn dt_cap(&self) -> T {
        self.cap_factor * self.dt0
    }
}

/// Norm distances to the asymptotic limit at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T> {
    pub tv_dist: T,
    pub v_dist: T,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    /// `mu_t([h, inf))` at each snapshot.
    pub b: Vec<T>,
    pub theta: Vec<T>,
    pub diagnostics: Vec<Diagnostics<T>>,
    /// Measures at snapshot times, when requested.
    pub snapshots: Vec<(T, GridMeasure<T>)>,
    /// `(t, B)` at the start of every step and at the final time.
    pub rate_table: Vec<(T, T)>,
    pub final_measure: GridMeasure<T>,
    pub steps: usize,
    pub stopped_early: bool,
    /// First step at which top-level occupancy exceeded the warning level.
    pub truncation_step: Option<usize>,
    /// Largest top-level mass seen over the run.
    pub max_top_mass: T,
    pub min_mass: T,
}

impl<T: Real> Trajectory<T> {
    fn new(mu0: &GridMeasure<T>) -> Self {
        Self {
            times: Vec::new(),
            b: Vec::new(),
            theta: Vec::new(),
            diagnostics: Vec::new(),
            snapshots: Vec::new(),
            rate_table: Vec::new(),
            final_measure: mu0.clone(),
            steps: 0,
            stopped_early: false,
            truncation_step: None,
            max_top_mass: mu0.top_level_mass().abs(),
            min_mass: mu0.masses().iter().copied().fold(T::infinity(), T::min),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_v_dist(&self) -> T {
        self.diagnostics.first().map_or(T::zero(), |d| d.v_dist)
    }
}

fn generator_class<T: Real>(w: &[T], c: T, out: &mut [T]) {
    let kmax = w.len() - 1;
    out[0] = c * w[1];
    if kmax == 1 {
        out[1] = -c * w[1];
        return;
    }
    out[1] = c * (w[2] - T::two() * w[1]);
    for k in 2..kmax {
        out[k] = c * (w[k - 1] + w[k + 1] - T::two() * w[k]);
    }
    out[kmax] = c * (w[kmax - 1] - w[kmax]);
}

/// Time derivative of the measure at rate `c`.
pub fn apply_generator<T: Real>(mu: &GridMeasure<T>, c: T) -> GridMeasure<T> {
    let spec = *mu.spec();
    let mut out = GridMeasure::zeros(spec);
    for j in 0..spec.m {
        generator_class(mu.class(j), c, out.class_mut(j));
    }
    out
}

/// One explicit step on a single class: `out = w + s G w` with `s = c dt`.
fn euler_class<T: Real>(w: &[T], s: T, out: &mut [T]) {
    let kmax = w.len() - 1;
    out[0] = w[0] + s * w[1];
    if kmax == 1 {
        out[1] = w[1] - s * w[1];
        return;
    }
    out[1] = w[1] + s * (w[2] - T::two() * w[1]);
    for k in 2..kmax {
        out[k] = w[k] + s * (w[k - 1] + w[k + 1] - T::two() * w[k]);
    }
    out[kmax] = w[kmax] + s * (w[kmax - 1] - w[kmax]);
}

fn euler_into<T: Real>(w: &[T], levels: usize, s: T, out: &mut [T]) {
    if w.len() >= PARALLEL_CELLS {
        out.par_chunks_mut(levels)
            .zip(w.par_chunks(levels))
            .for_each(|(o, i)| euler_class(i, s, o));
    } else {
        out.chunks_mut(levels)
            .zip(w.chunks(levels))
            .for_each(|(o, i)| euler_class(i, s, o));
    }
}

/// `mu + dt * apply_generator(mu, c)`.
pub fn step_euler<T: Real>(mu: &GridMeasure<T>, c: T, dt: T) -> GridMeasure<T> {
    let spec = *mu.spec();
    let mut out = GridMeasure::zeros(spec);
    euler_into(mu.masses(), spec.levels(), c * dt, out.masses_mut());
    out
}

/// Largest step keeping the explicit update positivity preserving.
pub fn adaptive_dt<T: Real>(b: T, params: &ModelParams<T>, config: &SolverConfig<T>) -> T {
    let cap = config.dt_cap();
    if b > T::zero() {
        cap.min(config.theta_max * T::three() / (T::two() * params.eta * b))
    } else {
        cap
    }
}

/// `log(1 + eta B0 t / 3)`, the guaranteed growth of the rescaling clock.
pub fn theta_lower_bound<T: Real>(t: T, b0: T, params: &ModelParams<T>) -> T {
    (params.eta * b0 * t / T::three()).ln_1p()
}

/// Quantities gathered in one pass over the state after a step.
struct Sweep<T> {
    above: T,
    top: T,
    tv: T,
    v: T,
    min: T,
}

fn sweep<T: Real>(mu: &GridMeasure<T>, limit: &GridMeasure<T>, weights: &[T]) -> Sweep<T> {
    let spec = mu.spec();
    let levels = spec.levels();
    let mut s = Sweep {
        above: T::zero(),
        top: T::zero(),
        tv: T::zero(),
        v: T::zero(),
        min: T::infinity(),
    };
    for ((cls, lim), wts) in mu
        .masses()
        .chunks(levels)
        .zip(limit.masses().chunks(levels))
        .zip(weights.chunks(levels))
    {
        for k in 0..levels {
            let x = cls[k];
            if k >= 1 {
                s.above += x;
            }
            let diff = (x - lim[k]).abs();
            s.tv += diff;
            s.v += wts[k] * diff;
            s.min = s.min.min(x);
        }
        s.top += cls[levels - 1];
    }
    s
}

/// Evolves `mu0` under the nonlinear equation until `t_end` or the
/// early-stop criterion relative to `limit`.
pub fn solve_nonlinear<T: Real>(
    mu0: &GridMeasure<T>,
    params: &ModelParams<T>,
    config: &SolverConfig<T>,
    limit: &GridMeasure<T>,
) -> Result<Trajectory<T>> {
    config.validate()?;
    if mu0.spec() != limit.spec() {
        return Err(Error::config("initial measure and limit live on different grids"));
    }
    let spec = *mu0.spec();
    let weights = spec.v_weights();
    let total = mu0.total_mass().abs();
    let warn_level = T::lit(TRUNCATION_WARN_FRACTION) * total;

    let mut traj = Trajectory::new(mu0);
    let mut cur = mu0.clone();
    let mut next = GridMeasure::zeros(spec);

    let s0 = sweep(&cur, limit, &weights);
    if !(s0.v.is_finite()) {
        return Err(Error::Numerical {
            step: 0,
            message: "initial measure is not finite".into(),
        });
    }
    let target = config.stop_frac.map(|f| f * s0.v);
    let mut t = T::zero();
    let mut theta = T::zero();
    let mut b = s0.above;
    let mut state = s0;

    let record = |traj: &mut Trajectory<T>, t: T, b: T, theta: T, s: &Sweep<T>, mu: &GridMeasure<T>| {
        traj.times.push(t);
        traj.b.push(b);
        traj.theta.push(theta);
        traj.diagnostics.push(Diagnostics {
            tv_dist: s.tv,
            v_dist: s.v,
        });
        if config.keep_measures {
            traj.snapshots.push((t, mu.clone()));
        }
    };
    record(&mut traj, t, b, theta, &state, &cur);

    let reached = |s: &Sweep<T>| target.is_some_and(|tg| s.v <= tg);
    if reached(&state) || config.t_end <= T::zero() {
        traj.stopped_early = reached(&state);
        traj.rate_table.push((t, b));
        traj.final_measure = cur;
        return Ok(traj);
    }

    let mut step = 0usize;
    loop {
        let c = params.rate(b);
        let mut dt = adaptive_dt(b.abs(), params, config);
        let last = t + dt >= config.t_end;
        if last {
            dt = config.t_end - t;
        }
        traj.rate_table.push((t, b));
        euler_into(cur.masses(), spec.levels(), c * dt, next.masses_mut());
        std::mem::swap(&mut cur, &mut next);
        step += 1;

        state = sweep(&cur, limit, &weights);
        if !state.v.is_finite() {
            return Err(Error::Numerical {
                step,
                message: format!("non-finite mass after step at t = {t}"),
            });
        }
        let b_new = state.above;
        theta += if config.trapezoid_theta {
            dt * (c + params.rate(b_new)) * T::half()
        } else {
            dt * c
        };
        t = if last { config.t_end } else { t + dt };
        b = b_new;

        traj.min_mass = traj.min_mass.min(state.min);
        let top = state.top.abs();
        if top > traj.max_top_mass {
            traj.max_top_mass = top;
        }
        if traj.truncation_step.is_none() && top > warn_level {
            traj.truncation_step = Some(step);
            warn!(
                "top level {} holds mass {:e} at step {step} (t = {t}); truncation may bias the run",
                spec.k_max, top
            );
        }

        let stop = reached(&state);
        if stop || last || step % config.snapshot_every == 0 {
            record(&mut traj, t, b, theta, &state, &cur);
        }
        if stop || last {
            traj.stopped_early = stop;
            break;
        }
    }
    traj.rate_table.push((t, b));
    traj.steps = step;
    traj.final_measure = cur;
    Ok(traj)
}

fn check_linear_dt<T: Real>(dt: T) -> Result<()> {
    if !(dt > T::zero() && T::two() * dt < T::one()) {
        return Err(Error::config(format!(
            "linear step must lie in (0, 1/2) for positivity, got {dt}"
        )));
    }
    Ok(())
}

/// Evolves `mu0` with the unit-rate linear semigroup up to `tau_end`.
///
/// Rows are recorded at every step; `theta` equals the time itself.
pub fn solve_linear<T: Real>(mu0: &GridMeasure<T>, tau_end: T, dt: T) -> Result<Trajectory<T>> {
    check_linear_dt(dt)?;
    let spec = *mu0.spec();
    let limit = project_ph(mu0);
    let weights = spec.v_weights();
    let mut traj = Trajectory::new(mu0);
    let mut cur = mu0.clone();
    let mut next = GridMeasure::zeros(spec);
    let mut tau = T::zero();
    let mut state = sweep(&cur, &limit, &weights);
    let push = |traj: &mut Trajectory<T>, tau: T, s: &Sweep<T>| {
        traj.times.push(tau);
        traj.b.push(s.above);
        traj.theta.push(tau);
        traj.diagnostics.push(Diagnostics {
            tv_dist: s.tv,
            v_dist: s.v,
        });
    };
    push(&mut traj, tau, &state);
    let mut step = 0;
    while tau < tau_end {
        let h = dt.min(tau_end - tau);
        traj.rate_table.push((tau, state.above));
        euler_into(cur.masses(), spec.levels(), h, next.masses_mut());
        std::mem::swap(&mut cur, &mut next);
        step += 1;
        tau = if tau + dt >= tau_end { tau_end } else { tau + h };
        state = sweep(&cur, &limit, &weights);
        if !state.v.is_finite() {
            return Err(Error::Numerical {
                step,
                message: "non-finite mass in linear evolution".into(),
            });
        }
        traj.min_mass = traj.min_mass.min(state.min);
        traj.max_top_mass = traj.max_top_mass.max(state.top.abs());
        push(&mut traj, tau, &state);
    }
    traj.rate_table.push((tau, state.above));
    traj.steps = step;
    traj.snapshots.push((tau, cur.clone()));
    traj.final_measure = cur;
    Ok(traj)
}

/// Unit-rate linear evolution sampled at the sorted times `taus`; steps of
/// at most `dt` are shortened to land on each sample time exactly.
pub fn evolve_linear_at<T: Real>(mu0: &GridMeasure<T>, taus: &[T], dt: T) -> Result<Vec<GridMeasure<T>>> {
    check_linear_dt(dt)?;
    if taus.windows(2).any(|w| w[1] < w[0]) || taus.first().is_some_and(|&t| t < T::zero()) {
        return Err(Error::config("sample times must be sorted and nonnegative"));
    }
    let spec = *mu0.spec();
    let mut cur = mu0.clone();
    let mut next = GridMeasure::zeros(spec);
    let mut tau = T::zero();
    let mut out = Vec::with_capacity(taus.len());
    for &target in taus {
        while tau < target {
            let h = dt.min(target - tau);
            euler_into(cur.masses(), spec.levels(), h, next.masses_mut());
            std::mem::swap(&mut cur, &mut next);
            tau = if tau + dt >= target { target } else { tau + h };
        }
        out.push(cur.clone());
    }
    Ok(out)
}
