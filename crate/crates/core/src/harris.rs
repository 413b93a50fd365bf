//! Explicit constants for the subgeometric decay estimate.
//!
//! The linear semigroup at time `T` satisfies a Lyapunov bound with
//! constants `(gamma_L, K)` and a local coupling bound with `gamma_H`.
//! These combine into a weighted-norm contraction `gamma(T) < 1` through a
//! weight `beta`, the positive root of a quadratic. The nonlinear decay
//! rate and prefactor follow as `lambda(T) = -ln gamma / T` and
//! `C(T) = C_V e^{omega_V T} (1 + beta) / (gamma beta)`, with the best pair
//! reached as `T -> 0`.

use crate::error::{Error, Result};
use crate::real::Real;

/// Sign of the `K (1 - 1/A)` term in the quadratic for `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignVariant {
    /// Linear coefficient `gamma_H - gamma_L - K (1 - 1/A)`.
    AsTyped,
    /// Linear coefficient `gamma_H - gamma_L + K (1 - 1/A)`.
    #[default]
    PaperConsistent,
}

impl SignVariant {
    pub const ALL: [SignVariant; 2] = [SignVariant::PaperConsistent, SignVariant::AsTyped];

    pub fn name(self) -> &'static str {
        match self {
            SignVariant::AsTyped => "as_typed",
            SignVariant::PaperConsistent => "paper_consistent",
        }
    }
}

impl std::str::FromStr for SignVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_typed" => Ok(Self::AsTyped),
            "paper_consistent" => Ok(Self::PaperConsistent),
            other => Err(Error::config(format!("unknown sign variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisInputs<T> {
    /// Lyapunov rate.
    pub sigma: T,
    /// Evaluation time.
    pub t: T,
    /// Level-set bound for the coupling condition.
    pub a_level: T,
    /// Growth prefactor of the semigroup in the weighted norm.
    pub c_v: T,
    /// Growth rate of the semigroup in the weighted norm.
    pub omega_v: T,
    pub sign_variant: SignVariant,
}

impl<T: Real> Default for HarrisInputs<T> {
    fn default() -> Self {
        Self {
            sigma: T::two(),
            t: T::one(),
            a_level: T::three(),
            c_v: T::one(),
            omega_v: T::zero(),
            sign_variant: SignVariant::PaperConsistent,
        }
    }
}

impl<T: Real> HarrisInputs<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero() && self.sigma.is_finite()) {
            return Err(Error::config(format!("harris.sigma must be positive, got {}", self.sigma)));
        }
        if !(self.t > T::zero() && self.t.is_finite()) {
            return Err(Error::config(format!("harris.T must be positive, got {}", self.t)));
        }
        // the Lyapunov constant 2 sigma must satisfy 2 sigma / A < sigma
        if !(self.a_level > T::two() && self.a_level.is_finite()) {
            return Err(Error::config(format!("harris.A must exceed 2, got {}", self.a_level)));
        }
        if !(self.c_v >= T::one() && self.c_v.is_finite()) {
            return Err(Error::config(format!("harris.C_V must be at least 1, got {}", self.c_v)));
        }
        if !(self.omega_v >= T::zero() && self.omega_v.is_finite()) {
            return Err(Error::config(format!("harris.omega_V must be nonnegative, got {}", self.omega_v)));
        }
        Ok(())
    }

    pub fn at(&self, t: T) -> Self {
        Self { t, ..*self }
    }

    /// Whether the closed forms for `sigma = 2`, `A = 3` apply.
    fn closed_form_family(&self) -> bool {
        self.sigma == T::two() && self.a_level == T::three()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisConstants<T> {
    pub gamma_l: T,
    pub k_lyap: T,
    pub gamma_h: T,
    pub beta: T,
    pub gamma: T,
    pub c_of_t: T,
    pub lambda_of_t: T,
    pub c_limit: T,
    pub lambda_limit: T,
}

/// `(e^{-sigma T}, 2 (1 - e^{-sigma T}))`.
pub fn lyapunov_constants<T: Real>(sigma: T, t: T) -> (T, T) {
    let decay = -(-sigma * t).exp_m1();
    (T::one() - decay, T::two() * decay)
}

/// `(1 + e^{-2T}) / 2`.
pub fn coupling_constant<T: Real>(t: T) -> T {
    T::one() + (-T::two() * t).exp_m1() * T::half()
}

/// Coefficients `(K, c1, c0)` of the quadratic for `beta` at time `t`,
/// each computed without cancellation at small `t`.
fn quadratic<T: Real>(inputs: &HarrisInputs<T>, t: T) -> (T, T, T) {
    let lyap_gap = -(-inputs.sigma * t).exp_m1(); // 1 - gamma_L
    let coup_gap = -(-T::two() * t).exp_m1() * T::half(); // 1 - gamma_H
    let k = T::two() * lyap_gap;
    let term = k * (T::one() - T::one() / inputs.a_level);
    let base = lyap_gap - coup_gap; // gamma_H - gamma_L
    let c1 = match inputs.sign_variant {
        SignVariant::AsTyped => base - term,
        SignVariant::PaperConsistent => base + term,
    };
    (k, c1, -coup_gap)
}

/// Value of the quadratic `K b^2 + c1 b + c0` at `beta`.
pub fn quadratic_residual<T: Real>(k_lyap: T, c1: T, c0: T, beta: T) -> T {
    (k_lyap * beta + c1) * beta + c0
}

/// Positive root of `K b^2 + c1 b + c0` with `c0 < 0`.
///
/// Uses the cancellation-free form of the quadratic formula and confirms it
/// against bisection.
pub fn positive_root<T: Real>(k_lyap: T, c1: T, c0: T) -> Result<T> {
    if !(k_lyap > T::zero()) {
        return Err(Error::domain(format!("degenerate quadratic: K = {k_lyap}")));
    }
    if !(c0 < T::zero()) {
        return Err(Error::domain(format!("no positive root: constant term {c0} is not negative")));
    }
    let disc = c1 * c1 - T::lit(4.0) * k_lyap * c0;
    let sq = disc.sqrt();
    let root = if c1 >= T::zero() {
        let q = -(c1 + sq) * T::half();
        c0 / q
    } else {
        let q = (sq - c1) * T::half();
        q / k_lyap
    };

    // bisection on [0, hi] where p(hi) > 0
    let p = |b: T| quadratic_residual(k_lyap, c1, c0, b);
    let mut hi = T::one();
    while p(hi) <= T::zero() {
        hi = hi * T::two();
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if p(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let bisected = (lo + hi) * T::half();
    let tol = T::lit(1e3) * T::epsilon() * root.max(T::one());
    if (bisected - root).abs() > tol.max(T::lit(1e-9) * root) {
        return Err(Error::Numerical {
            step: 0,
            message: format!("quadratic formula gave {root}, bisection gave {bisected}"),
        });
    }
    Ok(root)
}

/// `beta` from the Lyapunov and coupling constants at one time.
pub fn beta_root<T: Real>(k_lyap: T, gamma_h: T, gamma_l: T, a_level: T, variant: SignVariant) -> Result<T> {
    let term = k_lyap * (T::one() - T::one() / a_level);
    let c1 = match variant {
        SignVariant::AsTyped => gamma_h - gamma_l - term,
        SignVariant::PaperConsistent => gamma_h - gamma_l + term,
    };
    positive_root(k_lyap, c1, gamma_h - T::one())
}

/// The larger of the two contraction branches, minus one.
fn gamma_minus_one<T: Real>(beta: T, inputs: &HarrisInputs<T>, t: T) -> T {
    let lyap_gap = -(-inputs.sigma * t).exp_m1();
    let coup_gap = -(-T::two() * t).exp_m1() * T::half();
    let k = T::two() * lyap_gap;
    let first = beta * k - coup_gap;
    let second = -beta / (T::one() + beta) * (lyap_gap - k / inputs.a_level);
    first.max(second)
}

/// `max{gamma_H + beta K, 1 - beta/(1+beta) (1 - gamma_L - K/A)}`.
pub fn gamma_rate<T: Real>(beta: T, k_lyap: T, gamma_h: T, gamma_l: T, a_level: T) -> Result<T> {
    let first = gamma_h + beta * k_lyap;
    let second = T::one() - beta / (T::one() + beta) * (T::one() - gamma_l - k_lyap / a_level);
    let gamma = first.max(second);
    if !(gamma < T::one()) {
        return Err(Error::NoCertificate(format!(
            "gamma = {gamma} (branches {first}, {second}) with beta = {beta}"
        )));
    }
    Ok(gamma)
}

/// Every constant at `inputs.t`, together with the `T -> 0` limits.
pub fn harris_constants<T: Real>(inputs: &HarrisInputs<T>) -> Result<HarrisConstants<T>> {
    inputs.validate()?;
    let t = inputs.t;
    let (gamma_l, k_lyap) = lyapunov_constants(inputs.sigma, t);
    let gamma_h = coupling_constant(t);
    let (k, c1, c0) = quadratic(inputs, t);
    let beta = positive_root(k, c1, c0)?;
    let gm1 = gamma_minus_one(beta, inputs, t);
    let gamma = T::one() + gm1;
    if !(gm1 < T::zero()) {
        return Err(Error::NoCertificate(format!(
            "gamma = {gamma} >= 1 at T = {t} for the {} variant (beta = {beta})",
            inputs.sign_variant.name()
        )));
    }
    let lambda_of_t = -gm1.ln_1p() / t;
    let c_of_t = inputs.c_v * (inputs.omega_v * t).exp() * (T::one() + beta) / (gamma * beta);
    let lim = limiting_constants(inputs)?;
    Ok(HarrisConstants {
        gamma_l,
        k_lyap,
        gamma_h,
        beta,
        gamma,
        c_of_t,
        lambda_of_t,
        c_limit: lim.c,
        lambda_limit: lim.lambda,
    })
}

/// `(C(T), lambda(T))`.
pub fn constants_at<T: Real>(t: T, inputs: &HarrisInputs<T>) -> Result<(T, T)> {
    let c = harris_constants(&inputs.at(t))?;
    Ok((c.c_of_t, c.lambda_of_t))
}

/// The `T -> 0` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitingConstants<T> {
    pub beta: T,
    pub c: T,
    pub lambda: T,
    /// Whether both contraction branches decay at a positive rate, so that
    /// small `T` gives `gamma < 1`.
    pub certified: bool,
}

/// Limits of `C(T)` and `lambda(T)` as `T -> 0`.
///
/// For `sigma = 2`, `A = 3` the closed forms `C = (1+beta)/beta` and
/// `lambda = 2 beta / (3 (1 + beta))` are used for either sign variant.
/// Otherwise the quadratic is linearized at `T = 0`.
pub fn limiting_constants<T: Real>(inputs: &HarrisInputs<T>) -> Result<LimitingConstants<T>> {
    inputs.validate()?;
    let s = inputs.sigma;
    let frac = T::one() - T::one() / inputs.a_level;
    // dividing the quadratic by T and letting T -> 0
    let term = T::two() * s * frac;
    let c1 = match inputs.sign_variant {
        SignVariant::AsTyped => s - T::one() - term,
        SignVariant::PaperConsistent => s - T::one() + term,
    };
    let beta = positive_root(T::two() * s, c1, -T::one())?;
    let first = T::one() - T::two() * s * beta;
    let second = beta / (T::one() + beta) * s * (T::one() - T::two() / inputs.a_level);
    let certified = first > T::zero() && second > T::zero();
    let c = inputs.c_v * (T::one() + beta) / beta;
    let lambda = if inputs.closed_form_family() {
        T::two() * beta / (T::three() * (T::one() + beta))
    } else {
        first.min(second)
    };
    Ok(LimitingConstants {
        beta,
        c,
        lambda,
        certified,
    })
}

/// One row of the constants table; `c` and `lambda` are absent when
/// `gamma >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisRow<T> {
    pub t: T,
    pub gamma_l: T,
    pub k_lyap: T,
    pub gamma_h: T,
    pub beta: T,
    pub gamma: T,
    pub c: Option<T>,
    pub lambda: Option<T>,
}

pub fn harris_row<T: Real>(inputs: &HarrisInputs<T>, t: T) -> Result<HarrisRow<T>> {
    let inputs = inputs.at(t);
    inputs.validate()?;
    let (gamma_l, k_lyap) = lyapunov_constants(inputs.sigma, t);
    let gamma_h = coupling_constant(t);
    let (k, c1, c0) = quadratic(&inputs, t);
    let beta = positive_root(k, c1, c0)?;
    let gm1 = gamma_minus_one(beta, &inputs, t);
    let gamma = T::one() + gm1;
    let (c, lambda) = if gm1 < T::zero() {
        let c = inputs.c_v * (inputs.omega_v * t).exp() * (T::one() + beta) / (gamma * beta);
        (Some(c), Some(-gm1.ln_1p() / t))
    } else {
        (None, None)
    };
    Ok(HarrisRow {
        t,
        gamma_l,
        k_lyap,
        gamma_h,
        beta,
        gamma,
        c,
        lambda,
    })
}

pub fn constants_table<T: Real>(inputs: &HarrisInputs<T>, ts: &[T]) -> Result<Vec<HarrisRow<T>>> {
    ts.iter().map(|&t| harris_row(inputs, t)).collect()
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn t_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_usize_lossy(n - 1);
            (0..n).map(|i| lo + step * T::from_usize_lossy(i)).collect()
        }
    }
}

/// Largest increase of `lambda(T)` between consecutive grid points; zero or
/// negative means `lambda` is nonincreasing on the grid.
pub fn lambda_max_increase<T: Real>(inputs: &HarrisInputs<T>, ts: &[T]) -> Result<T> {
    let lambdas = ts
        .iter()
        .map(|&t| constants_at(t, inputs).map(|c| c.1))
        .collect::<Result<Vec<_>>>()?;
    Ok(lambdas
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(T::neg_infinity(), T::max))
}

/// Exponential weight `2 ln 2 / (2x + h)` for offset `x`, checked against
/// the three conditions that define it.
pub fn alpha_of_x<T: Real>(x: T, h: T) -> Result<T> {
    if !(x >= T::zero() && x < h) {
        return Err(Error::domain(format!("offset {x} outside [0, {h})")));
    }
    let alpha = T::two() * T::LN_2() / (T::two() * x + h);
    let up = (alpha * x).exp();
    let down = (-alpha * h).exp();
    let slack = T::lit(64.0) * T::epsilon();
    let ok = T::two() >= up * (T::one() - slack)
        && T::one() + down >= up * (T::one() - slack)
        && T::two() * down < up;
    if !ok {
        return Err(Error::domain(format!("alpha = {alpha} fails its defining conditions at x = {x}")));
    }
    Ok(alpha)
}
