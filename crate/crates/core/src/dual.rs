//! Adjoint equation on one wealth class.
//!
//! A test function restricted to the class `{x + k h}` is a vector of level
//! values. It evolves under `f' = (eta/3) b(t) A f` where `A` is the gated
//! second difference, truncated at level `K` as the exact transpose of the
//! forward generator. Two routes are provided: explicit Euler on the ODE and
//! Picard iteration of the mild (integral) form.

use crate::dynamics::{solve_nonlinear, SolverConfig};
use crate::error::{Error, Result};
use crate::measure::{GridMeasure, ModelParams};
use crate::real::Real;

/// Test function restricted to one wealth class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFunction<T> {
    pub offset: T,
    pub values: Vec<T>,
}

impl<T: Real> ClassFunction<T> {
    pub fn new(offset: T, values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::config("a class function needs at least two levels"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("class function values must be finite"));
        }
        Ok(Self { offset, values })
    }

    pub fn constant(offset: T, levels: usize, c: T) -> Self {
        Self {
            offset,
            values: vec![c; levels],
        }
    }

    /// Indicator of level `k`.
    pub fn indicator(offset: T, levels: usize, k: usize) -> Self {
        let mut values = vec![T::zero(); levels];
        values[k] = T::one();
        Self { offset, values }
    }

    /// The Lyapunov weight `2 - exp(-alpha(x) (x + k h))` on the class.
    pub fn lyapunov_weight(offset: T, h: T, levels: usize) -> Self {
        let alpha = T::two() * T::LN_2() / (T::two() * offset + h);
        let values = (0..levels)
            .map(|k| T::two() - (-alpha * (offset + T::from_usize_lossy(k) * h)).exp())
            .collect();
        Self { offset, values }
    }

    pub fn k_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max_k |f_k| / V(offset + k h)`.
    pub fn v_norm(&self, h: T) -> T {
        let v = Self::lyapunov_weight(self.offset, h, self.values.len());
        self.values
            .iter()
            .zip(&v.values)
            .fold(T::zero(), |m, (f, w)| m.max(f.abs() / *w))
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }
}

/// Nonnegative continuous rate `b(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction<T> {
    Constant(T),
    /// Piecewise-linear through sorted `(t, b)` nodes, constant beyond.
    Table(Vec<(T, T)>),
}

impl<T: Real> RateFunction<T> {
    pub fn table(nodes: Vec<(T, T)>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::config("rate table is empty"));
        }
        if nodes.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::config("rate table times must be nondecreasing"));
        }
        if nodes.iter().any(|n| !(n.1 >= T::zero())) {
            return Err(Error::domain("rate values must be nonnegative"));
        }
        Ok(Self::Table(nodes))
    }

    pub fn eval(&self, t: T) -> T {
        match self {
            RateFunction::Constant(b) => *b,
            RateFunction::Table(nodes) => {
                let i = nodes.partition_point(|n| n.0 <= t);
                if i == 0 {
                    return nodes[0].1;
                }
                if i == nodes.len() {
                    return nodes[i - 1].1;
                }
                let (t0, b0) = nodes[i - 1];
                let (t1, b1) = nodes[i];
                if t1 == t0 {
                    b1
                } else {
                    b0 + (b1 - b0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    pub fn sup(&self) -> T {
        match self {
            RateFunction::Constant(b) => *b,
            RateFunction::Table(nodes) => nodes.iter().fold(T::zero(), |m, n| m.max(n.1)),
        }
    }
}

/// Gated second difference with the reflecting-top truncation.
pub fn apply_a<T: Real>(f: &ClassFunction<T>) -> ClassFunction<T> {
    let mut out = vec![T::zero(); f.values.len()];
    a_into(&f.values, &mut out);
    ClassFunction {
        offset: f.offset,
        values: out,
    }
}

fn a_into<T: Real>(f: &[T], out: &mut [T]) {
    let kmax = f.len() - 1;
    out[0] = T::zero();
    for k in 1..kmax {
        out[k] = f[k + 1] + f[k - 1] - T::two() * f[k];
    }
    out[kmax] = f[kmax - 1] - f[kmax];
}

/// Explicit Euler for `f' = (eta/3) b(sigma) A f` on `[s, t]`.
pub fn evolve_dual_ode<T: Real>(
    f0: &ClassFunction<T>,
    b: &RateFunction<T>,
    s: T,
    t: T,
    params: &ModelParams<T>,
    dt: T,
) -> Result<ClassFunction<T>> {
    if !(s <= t) {
        return Err(Error::config(format!("dual evolution needs s <= t, got s = {s}, t = {t}")));
    }
    if !(dt > T::zero()) {
        return Err(Error::config("dual step must be positive"));
    }
    if T::two() * params.rate(b.sup()) * dt > T::one() {
        return Err(Error::config(format!(
            "dual step {dt} too large for rate {}: needs (2 eta / 3) sup b dt <= 1",
            b.sup()
        )));
    }
    let mut f = f0.values.clone();
    let mut af = vec![T::zero(); f.len()];
    let mut sigma = s;
    while sigma < t {
        let h = dt.min(t - sigma);
        let c = params.rate(b.eval(sigma));
        a_into(&f, &mut af);
        for (fi, ai) in f.iter_mut().zip(&af) {
            *fi += h * c * *ai;
        }
        sigma = if sigma + dt >= t { t } else { sigma + h };
    }
    Ok(ClassFunction {
        offset: f0.offset,
        values: f,
    })
}

/// `N_t f0`: the unit-rate linear evolution of a class function.
pub fn evolve_unit_rate<T: Real>(f0: &ClassFunction<T>, t: T, dt: T) -> Result<ClassFunction<T>> {
    let params = ModelParams::new(T::three(), T::one())?;
    evolve_dual_ode(f0, &RateFunction::Constant(T::one()), T::zero(), t, &params, dt)
}

/// Default number of time nodes per Picard window.
pub const PICARD_NODES: usize = 64;

/// Discretized mild equation on `[0, window]` for one class.
///
/// A path is the list of class-function values at each mesh node.
#[derive(Debug, Clone)]
pub struct PicardProblem<T> {
    f0: Vec<T>,
    times: Vec<T>,
    /// Trapezoid cumulative integral of `rate`.
    clock: Vec<T>,
    /// Contraction factor `(2 eta / 3) sup b * window`.
    pub contraction: T,
}

impl<T: Real> PicardProblem<T> {
    pub fn new(
        f0: &ClassFunction<T>,
        b: &RateFunction<T>,
        window: T,
        params: &ModelParams<T>,
        nodes: usize,
    ) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::config("Picard mesh needs at least two nodes"));
        }
        if !(window > T::zero()) {
            return Err(Error::config("Picard window must be positive"));
        }
        let sup = b.sup();
        let bound = T::three() / (T::two() * params.eta * sup);
        if sup > T::zero() && !(window < bound) {
            return Err(Error::config(format!(
                "Picard window {window} violates the contraction bound {bound}"
            )));
        }
        let step = window / T::from_usize_lossy(nodes - 1);
        let times: Vec<T> = (0..nodes).map(|i| T::from_usize_lossy(i) * step).collect();
        let rate: Vec<T> = times.iter().map(|&t| params.rate(b.eval(t))).collect();
        let mut clock = vec![T::zero(); nodes];
        for i in 1..nodes {
            clock[i] = clock[i - 1] + step * (rate[i - 1] + rate[i]) * T::half();
        }
        Ok(Self {
            f0: f0.values.clone(),
            times,
            clock,
            contraction: T::two() * params.rate(sup) * window,
        })
    }

    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    /// Constant-in-time extension of the initial function.
    pub fn initial_path(&self) -> Vec<Vec<T>> {
        vec![self.f0.clone(); self.nodes()]
    }

    /// One application of the mild-form operator.
    ///
    /// The time integral is taken in the clock variable `Lambda`, where the
    /// kernel is a pure exponential; neighbor sums are interpolated linearly
    /// between nodes and integrated against the kernel exactly.
    pub fn gamma(&self, path: &[Vec<T>]) -> Vec<Vec<T>> {
        let n = self.nodes();
        let levels = self.f0.len();
        let kmax = levels - 1;
        let sums: Vec<Vec<T>> = path
            .iter()
            .map(|f| {
                (0..levels)
                    .map(|k| match k {
                        0 => T::zero(),
                        k if k == kmax => f[k - 1],
                        k => f[k - 1] + f[k + 1],
                    })
                    .collect()
            })
            .collect();
        let degree = |k: usize| -> usize {
            match k {
                0 => 0,
                k if k == kmax => 1,
                _ => 2,
            }
        };
        let mut out = vec![vec![T::zero(); levels]; n];
        // weights[d] for the current (i, segment) pair, degrees 1 and 2
        let mut w_left = [T::zero(); 3];
        let mut w_right = [T::zero(); 3];
        for i in 0..n {
            let row = &mut out[i];
            for k in 0..levels {
                let deg = T::from_usize_lossy(degree(k));
                row[k] = self.f0[k] * (-deg * self.clock[i]).exp();
            }
            for l in 0..i {
                let d = self.clock[l + 1] - self.clock[l];
                if d <= T::zero() {
                    continue;
                }
                for deg in 1..=2usize {
                    let a = T::from_usize_lossy(deg);
                    let decay = (-a * (self.clock[i] - self.clock[l + 1])).exp();
                    let (phi0, phi1) = exp_moments(a * d, d);
                    w_left[deg] = decay * phi1;
                    w_right[deg] = decay * (phi0 - phi1);
                }
                for k in 1..levels {
                    let deg = degree(k);
                    row[k] += w_left[deg] * sums[l][k] + w_right[deg] * sums[l + 1][k];
                }
            }
        }
        out
    }
}

/// `(int_0^d e^{-a s} ds, int_0^d (s/d) e^{-a s} ds)` with `x = a d`.
fn exp_moments<T: Real>(x: T, d: T) -> (T, T) {
    if x < T::lit(1e-3) {
        let c = |v: f64| T::lit(v);
        let phi0 = d * (T::one() - x * (c(0.5) - x * (c(1.0 / 6.0) - x * c(1.0 / 24.0))));
        let phi1 = d * (c(0.5) - x * (c(1.0 / 3.0) - x * (c(0.125) - x * c(1.0 / 30.0))));
        (phi0, phi1)
    } else {
        let e = (-x).exp();
        let phi0 = d * (T::one() - e) / x;
        let phi1 = d * (T::one() - e * (T::one() + x)) / (x * x);
        (phi0, phi1)
    }
}

/// Result of a Picard solve: the value at the window end and the sup-norm
/// distance between successive iterates.
#[derive(Debug, Clone)]
pub struct PicardReport<T> {
    pub value: ClassFunction<T>,
    pub increments: Vec<T>,
    pub contraction: T,
}

impl<T: Real> PicardReport<T> {
    /// Whether every increment shrank by at most the contraction factor.
    pub fn contracted(&self) -> bool {
        let slack = T::epsilon() * T::lit(64.0);
        self.increments
            .windows(2)
            .all(|w| w[1] <= self.contraction * w[0] + slack)
    }
}

fn path_distance<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> T {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (*p - *q).abs()))
        .fold(T::zero(), T::max)
}

/// Picard iteration of the mild form over `[0, window]`.
pub fn picard_gamma<T: Real>(
    f0: &ClassFunction<T>,
    b: &RateFunction<T>,
    window: T,
    params: &ModelParams<T>,
    iters: usize,
) -> Result<PicardReport<T>> {
    picard_gamma_with_nodes(f0, b, window, params, iters, PICARD_NODES)
}

pub fn picard_gamma_with_nodes<T: Real>(
    f0: &ClassFunction<T>,
    b: &RateFunction<T>,
    window: T,
    params: &ModelParams<T>,
    iters: usize,
    nodes: usize,
) -> Result<PicardReport<T>> {
    if iters == 0 {
        return Err(Error::config("Picard iteration count must be at least 1"));
    }
    let problem = PicardProblem::new(f0, b, window, params, nodes)?;
    let mut path = problem.initial_path();
    let mut increments = Vec::with_capacity(iters);
    for _ in 0..iters {
        let next = problem.gamma(&path);
        increments.push(path_distance(&next, &path));
        path = next;
    }
    let value = ClassFunction {
        offset: f0.offset,
        values: path.pop().expect("mesh has nodes"),
    };
    Ok(PicardReport {
        value,
        increments,
        contraction: problem.contraction,
    })
}

/// `<mu, f>` for one class function per offset.
pub fn pair_classes<T: Real>(mu: &GridMeasure<T>, fs: &[ClassFunction<T>]) -> T {
    fs.iter()
        .enumerate()
        .map(|(j, f)| mu.class(j).iter().zip(&f.values).map(|(w, v)| *w * *v).sum::<T>())
        .sum()
}

/// Both sides of the duality identity and their gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCheck<T> {
    /// `<mu_t, f>` from the forward solver.
    pub forward: T,
    /// `<mu_0, M_{0,t} f>` from the adjoint solver.
    pub adjoint: T,
    pub gap: T,
}

/// Compares the forward solver against the adjoint evolution driven by the
/// recorded `(t, B)` table.
///
/// The forward run uses the fixed step `dt`; the adjoint uses `dt / 2` so
/// the two discretizations do not share time nodes.
pub fn duality_gap<T: Real>(
    mu0: &GridMeasure<T>,
    fs: &[ClassFunction<T>],
    t: T,
    params: &ModelParams<T>,
    dt: T,
) -> Result<DualityCheck<T>> {
    let spec = *mu0.spec();
    if fs.len() != spec.m || fs.iter().any(|f| f.values.len() != spec.levels()) {
        return Err(Error::config("need one class function per offset, sized to the grid levels"));
    }
    let b0 = mu0.mass_above_h().abs();
    let theta_max = T::half();
    if T::two() * params.rate(b0) * dt > theta_max {
        return Err(Error::config(format!("step {dt} too large for the forward solver")));
    }
    let config = SolverConfig {
        dt0: dt,
        theta_max,
        t_end: t,
        stop_frac: None,
        snapshot_every: usize::MAX,
        cap_factor: T::one(),
        trapezoid_theta: false,
        keep_measures: false,
    };
    let traj = solve_nonlinear(mu0, params, &config, &crate::asymptotics::project_ph(mu0))?;
    let forward = pair_classes(&traj.final_measure, fs);
    let rate = RateFunction::table(
        traj.rate_table
            .iter()
            .map(|&(s, b)| (s, b.max(T::zero())))
            .collect(),
    )?;
    let evolved = fs
        .iter()
        .map(|f| evolve_dual_ode(f, &rate, T::zero(), t, params, dt * T::half()))
        .collect::<Result<Vec<_>>>()?;
    let adjoint = pair_classes(mu0, &evolved);
    Ok(DualityCheck {
        forward,
        adjoint,
        gap: (forward - adjoint).abs(),
    })
}

/// `1 + exp(-2 t)`, the coupling bound for `(delta_x - delta_{x+h}) N_t`.
pub fn coupling_decay<T: Real>(t: T) -> T {
    T::one() + (-T::two() * t).exp()
}

/// Total variation of `(delta_x - delta_{x+h}) N_t` on a class truncated
/// at `k_max`.
pub fn measured_coupling<T: Real>(t: T, dt: T, k_max: usize) -> Result<T> {
    let spec = crate::measure::GridSpec::new(T::one(), 1, k_max)?;
    let mut mu = GridMeasure::zeros(spec);
    mu.set(0, 0, T::one());
    mu.set(0, 1, -T::one());
    let traj = crate::dynamics::solve_linear(&mu, t, dt)?;
    Ok(traj.final_measure.norm_tv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ModelParams<f64> {
        ModelParams::new(3.0, 0.5).unwrap()
    }

    #[test]
    fn constants_are_harmonic() {
        let f = ClassFunction::constant(0.1, 8, 1.0);
        assert!(apply_a(&f).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_is_harmonic_in_the_interior() {
        let h = 0.5;
        let x = 0.1;
        let f = ClassFunction::new(x, (0..10).map(|k| x + k as f64 * h).collect()).unwrap();
        let af = apply_a(&f);
        for k in 1..9 {
            assert_relative_eq!(af.values[k], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn indicator_stencil() {
        let f = ClassFunction::indicator(0.0, 8, 4);
        let af = apply_a(&f);
        assert_eq!(af.values, vec![0.0, 0.0, 0.0, 1.0, -2.0, 1.0, 0.0, 0.0]);
        let base = apply_a(&ClassFunction::indicator(0.0, 8, 0));
        assert_eq!(base.values[1], 1.0);
    }

    #[test]
    fn table_interpolates() {
        let r = RateFunction::table(vec![(0.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_relative_eq!(r.eval(0.5), 0.75);
        assert_eq!(r.eval(-1.0), 1.0);
        assert_eq!(r.eval(5.0), 0.0);
        assert_eq!(r.sup(), 1.0);
        assert!(RateFunction::table(vec![(1.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(RateFunction::table(vec![(0.0, -1.0)]).is_err());
    }

    #[test]
    fn ode_preserves_constants_and_sign() {
        let b = RateFunction::Constant(1.0);
        let one = ClassFunction::constant(0.2, 12, 1.0);
        let out = evolve_dual_ode(&one, &b, 0.3, 2.0, &params(), 1e-3).unwrap();
        for v in out.values {
            assert_relative_eq!(v, 1.0, epsilon = 1e-13);
        }
        let pos = ClassFunction::indicator(0.2, 12, 5);
        let out = evolve_dual_ode(&pos, &b, 0.0, 2.0, &params(), 1e-3).unwrap();
        assert!(out.values.iter().all(|&v| v >= 0.0));
        assert!(out.sup_norm() <= 1.0);
        assert!(evolve_dual_ode(&pos, &b, 2.0, 1.0, &params(), 1e-3).is_err());
        assert!(evolve_dual_ode(&pos, &b, 0.0, 1.0, &params(), 0.6).is_err());
    }

    #[test]
    fn base_indicator_fills_the_class() {
        let f = ClassFunction::indicator(0.0, 201, 0);
        let out = evolve_unit_rate(&f, 50.0, 1e-2).unwrap();
        // survival past time 50 from level k is about k / sqrt(50 pi)
        assert!(out.values[0] == 1.0);
        assert!(out.values[1] > 0.9);
    }

    #[test]
    fn picard_fixes_constants() {
        let f = ClassFunction::constant(0.0, 6, 1.0);
        let rep = picard_gamma(&f, &RateFunction::Constant(1.0), 0.1, &params(), 5).unwrap();
        for v in rep.value.values {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn picard_rejects_long_windows() {
        let f = ClassFunction::constant(0.0, 6, 1.0);
        assert!(picard_gamma(&f, &RateFunction::Constant(1.0), 0.5, &params(), 5).is_err());
        assert!(picard_gamma(&f, &RateFunction::Constant(1.0), 0.1, &params(), 0).is_err());
    }

    #[test]
    fn picard_increments_contract() {
        let f = ClassFunction::new(0.0, vec![0.3, -1.0, 0.5, 0.9, -0.2, 0.0, 1.0]).unwrap();
        let rep = picard_gamma(&f, &RateFunction::Constant(1.0), 0.2, &params(), 12).unwrap();
        assert!(rep.contracted(), "{:?}", rep.increments);
    }

    #[test]
    fn coupling_at_time_zero() {
        assert_eq!(coupling_decay(0.0), 2.0);
        assert_relative_eq!(coupling_decay(1.0), 1.0 + (-2.0f64).exp());
        let m = measured_coupling(0.0, 0.01, 10).unwrap();
        assert_eq!(m, 2.0);
    }
}
