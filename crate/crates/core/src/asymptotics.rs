//! Large-time limit of the nonlinear flow and the quantities built on it.

use crate::measure::{flat_norm, AtomicMeasure, FlatConvention, FlatWeight, GridMeasure};
use crate::real::Real;

/// Folds every level onto `[0, h)`: `(mu P_h)(A) = sum_k mu(A + k h)`.
pub fn project_ph<T: Real>(mu: &GridMeasure<T>) -> GridMeasure<T> {
    let spec = *mu.spec();
    let mut out = GridMeasure::zeros(spec);
    for j in 0..spec.m {
        let folded: T = mu.class(j).iter().copied().sum();
        out.set(j, 0, folded);
    }
    out
}

/// All mass moved to a single atom at the origin.
pub fn project_p0<T: Real>(mu: &GridMeasure<T>) -> AtomicMeasure<T> {
    AtomicMeasure::dirac(T::zero(), mu.total_mass())
}

/// Right-hand side of the subgeometric decay inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisEnvelope<T> {
    pub c: T,
    pub lambda: T,
    pub eta: T,
    /// Initial mass above `h`.
    pub b0: T,
    /// Initial distance to the limit.
    pub d0: T,
}

impl<T: Real> HarrisEnvelope<T> {
    pub fn new(c: T, lambda: T, eta: T, b0: T, d0: T) -> crate::Result<Self> {
        if !(c >= T::one() && lambda > T::zero() && b0 >= T::zero() && d0 >= T::zero() && eta > T::zero()) {
            return Err(crate::Error::config(format!(
                "invalid envelope: C = {c}, lambda = {lambda}, eta = {eta}, B0 = {b0}, d0 = {d0}"
            )));
        }
        Ok(Self { c, lambda, eta, b0, d0 })
    }
}

/// `C d0 / (1 + eta B0 t / 3)^lambda`.
pub fn decay_envelope<T: Real>(t: T, env: &HarrisEnvelope<T>) -> T {
    let base = T::one() + env.eta * env.b0 * t / T::three();
    env.c * env.d0 / base.powf(env.lambda)
}

/// Wealth that ends up with the vanishing rich fraction: `h sum_k k mu(level k)`.
pub fn wealth_loss<T: Real>(mu: &GridMeasure<T>) -> T {
    let h = mu.spec().h;
    mu.classes()
        .map(|cls| {
            cls.iter()
                .enumerate()
                .map(|(k, &w)| T::from_usize_lossy(k) * w)
                .sum::<T>()
        })
        .sum::<T>()
        * h
}

/// Flat distance between the two projections, with the ratio to the flat
/// norm of `mu` itself (`None` when that norm vanishes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionGap<T> {
    pub distance: T,
    pub mu_norm: T,
    pub ratio: Option<T>,
}

pub fn ph_p0_distance<T: Real>(
    mu: &GridMeasure<T>,
    weight: FlatWeight<T>,
    convention: FlatConvention,
) -> ProjectionGap<T> {
    let diff = project_ph(mu).to_atoms().sub(&project_p0(mu));
    let distance = flat_norm(&diff, weight, convention);
    let mu_norm = flat_norm(&mu.to_atoms(), weight, convention);
    let ratio = (mu_norm > T::zero()).then(|| distance / mu_norm);
    ProjectionGap {
        distance,
        mu_norm,
        ratio,
    }
}

/// Closed-form `P_h` mass of `[a, b)` for the `Exp(alpha)` density.
pub fn exponential_limit_mass<T: Real>(alpha: T, h: T, a: T, b: T) -> T {
    ((-alpha * a).exp() - (-alpha * b).exp()) / (-(-alpha * h).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{ingest_density, Density, GridSpec, QuadratureRule};
    use approx::assert_relative_eq;

    fn spec() -> GridSpec<f64> {
        GridSpec::new(0.5, 4, 10).unwrap()
    }

    #[test]
    fn squares_fold_to_uniform() {
        for k0 in [0, 1, 3, 10] {
            let mu = ingest_density(&Density::Square { k0 }, spec(), QuadratureRule::Simpson).unwrap();
            let lim = project_ph(&mu);
            for j in 0..4 {
                assert_eq!(lim.get(j, 0), 0.25);
            }
            assert_eq!(lim.mass_above_h(), 0.0);
        }
    }

    #[test]
    fn atom_folds_to_its_offset() {
        let mu = GridMeasure::point(spec(), 2, 7, 1.0);
        assert_eq!(project_ph(&mu), GridMeasure::point(spec(), 2, 0, 1.0));
        assert_relative_eq!(wealth_loss(&mu), 3.5);
    }

    #[test]
    fn p0_carries_total_mass() {
        let mut mu = GridMeasure::zeros(spec());
        assert_eq!(project_p0(&mu).total_mass(), 0.0);
        mu.set(1, 1, 0.25);
        mu.set(3, 2, -0.75);
        assert_eq!(project_p0(&mu).atoms(), &[(0.0, -0.5)]);
    }

    #[test]
    fn wealth_loss_at_two_h() {
        let s = GridSpec::new(0.5, 1, 4).unwrap();
        assert_relative_eq!(wealth_loss(&GridMeasure::point(s, 0, 2, 1.0)), 1.0);
        assert_eq!(wealth_loss(&GridMeasure::point(s, 0, 0, 3.0)), 0.0);
    }

    #[test]
    fn envelope_values() {
        let env = HarrisEnvelope::new(5.5465, 0.1202, 3.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(decay_envelope(0.0, &env), 5.5465 * 2.0);
        assert_relative_eq!(decay_envelope(9.0, &env), 5.5465 * 2.0 * 10f64.powf(-0.1202), epsilon = 1e-12);
        assert_relative_eq!(decay_envelope(9.0, &env) / 2.0, 4.205, epsilon = 1e-3);
        let frozen = HarrisEnvelope::new(5.5465, 0.1202, 3.0, 0.0, 2.0).unwrap();
        assert_eq!(decay_envelope(1e6, &frozen), 5.5465 * 2.0);
        assert!(HarrisEnvelope::new(0.5, 0.1, 3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn base_level_projection_gap_is_zero() {
        let s = GridSpec::new(0.5, 1, 3).unwrap();
        // a single cell at level 0 has its midpoint at h/2, not at 0
        let mu = GridMeasure::point(s, 0, 0, 1.0);
        let gap = ph_p0_distance(&mu, FlatWeight::Unit, FlatConvention::Max);
        assert_relative_eq!(gap.distance, 0.25, epsilon = 1e-12);
        let zero = ph_p0_distance(&GridMeasure::zeros(s), FlatWeight::Unit, FlatConvention::Max);
        assert_eq!(zero.distance, 0.0);
        assert_eq!(zero.ratio, None);
    }
}
