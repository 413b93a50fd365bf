use super::{AtomicMeasure, GridMeasure, GridSpec};
use crate::error::{Error, Result};
use crate::real::Real;

/// Per-cell quadrature used when ingesting a continuous density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    Midpoint,
    #[default]
    Simpson,
}

impl std::str::FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(Self::Midpoint),
            "simpson" => Ok(Self::Simpson),
            other => Err(Error::config(format!("unknown quadrature rule `{other}`"))),
        }
    }
}

/// Initial densities with respect to Lebesgue measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Density<T> {
    /// `(1/h) 1_[k0 h, (k0+1) h)`.
    Square { k0: usize },
    /// `alpha exp(-alpha y)`.
    Exponential { alpha: T },
    /// Tabulated `(y, f(y))` pairs, linearly interpolated, zero outside.
    Samples { points: Vec<(T, T)> },
}

impl<T: Real> Density<T> {
    fn eval(&self, y: T) -> T {
        match self {
            Density::Square { .. } => unreachable!("square densities are integrated exactly"),
            Density::Exponential { alpha } => *alpha * (-*alpha * y).exp(),
            Density::Samples { points } => interpolate(points, y),
        }
    }
}

fn interpolate<T: Real>(points: &[(T, T)], y: T) -> T {
    let (first, last) = match (points.first(), points.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return T::zero(),
    };
    if y < first.0 || y > last.0 {
        return T::zero();
    }
    let i = points.partition_point(|p| p.0 <= y);
    if i == 0 {
        return first.1;
    }
    if i >= points.len() {
        return last.1;
    }
    let (x0, f0) = points[i - 1];
    let (x1, f1) = points[i];
    if x1 == x0 {
        return f1;
    }
    f0 + (f1 - f0) * (y - x0) / (x1 - x0)
}

/// Integrates `density` over every grid cell.
///
/// Square densities are aligned with the grid and integrated exactly; the
/// others use `rule` on each cell.
pub fn ingest_density<T: Real>(
    density: &Density<T>,
    spec: GridSpec<T>,
    rule: QuadratureRule,
) -> Result<GridMeasure<T>> {
    let mut mu = GridMeasure::zeros(spec);
    match density {
        Density::Square { k0 } => {
            if *k0 > spec.k_max {
                return Err(Error::config(format!(
                    "square level {k0} lies beyond the truncation level {}",
                    spec.k_max
                )));
            }
            let mass = T::one() / T::from_usize_lossy(spec.m);
            for j in 0..spec.m {
                mu.set(j, *k0, mass);
            }
        }
        Density::Exponential { alpha } if !(*alpha > T::zero()) => {
            return Err(Error::config(format!("exponential rate must be positive, got {alpha}")));
        }
        Density::Samples { points } if points.windows(2).any(|w| w[1].0 < w[0].0) => {
            return Err(Error::config("density samples must be sorted by location"));
        }
        _ => {
            for j in 0..spec.m {
                for k in 0..spec.levels() {
                    let (a, b) = spec.bounds(j, k);
                    let mid = (a + b) * T::half();
                    let value = match rule {
                        QuadratureRule::Midpoint => density.eval(mid) * (b - a),
                        QuadratureRule::Simpson => {
                            (b - a) / T::lit(6.0)
                                * (density.eval(a)
                                    + T::lit(4.0) * density.eval(mid)
                                    + density.eval(b))
                        }
                    };
                    mu.set(j, k, value);
                }
            }
        }
    }
    Ok(mu)
}

/// Bins atoms into the cells that contain them.
pub fn bin_atoms<T: Real>(atoms: &AtomicMeasure<T>, spec: GridSpec<T>) -> Result<GridMeasure<T>> {
    let mut mu = GridMeasure::zeros(spec);
    for &(y, w) in atoms.atoms() {
        let (j, k) = spec.locate(y).ok_or_else(|| {
            Error::domain(format!("atom at {y} lies outside the grid [0, {})", spec.h * T::from_usize_lossy(spec.levels())))
        })?;
        let i = spec.index(j, k);
        mu.masses_mut()[i] += w;
    }
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_is_exact_per_cell() {
        let spec = GridSpec::new(0.5, 2, 4).unwrap();
        for rule in [QuadratureRule::Midpoint, QuadratureRule::Simpson] {
            let mu = ingest_density(&Density::Square { k0: 1 }, spec, rule).unwrap();
            assert_eq!(mu.get(0, 1), 0.5);
            assert_eq!(mu.get(1, 1), 0.5);
            assert_eq!(mu.total_mass(), 1.0);
            assert_eq!(mu.mass_above_h(), 1.0);
            assert_eq!(mu.norm_tv(), 1.0);
        }
        let fine = GridSpec::new(0.5, 256, 3).unwrap();
        let mu = ingest_density(&Density::Square { k0: 1 }, fine, QuadratureRule::Simpson).unwrap();
        assert_relative_eq!(mu.first_moment(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn square_beyond_truncation_is_rejected() {
        let spec = GridSpec::new(0.5, 2, 4).unwrap();
        assert!(ingest_density(&Density::Square { k0: 5 }, spec, QuadratureRule::Midpoint).is_err());
    }

    #[test]
    fn exponential_mass_matches_truncated_integral() {
        let alpha = 1.0;
        let spec = GridSpec::new(0.5, 64, 60).unwrap();
        let mu = ingest_density(&Density::Exponential { alpha }, spec, QuadratureRule::Simpson).unwrap();
        let exact = 1.0 - (-alpha * 61.0 * 0.5f64).exp();
        assert_relative_eq!(mu.total_mass(), exact, epsilon = 1e-10);
        assert_relative_eq!(mu.mass_above_h(), (-0.5f64).exp(), epsilon = 1e-10);
        let mid = ingest_density(&Density::Exponential { alpha }, spec, QuadratureRule::Midpoint).unwrap();
        assert_relative_eq!(mid.mass_above_h(), (-0.5f64).exp(), epsilon = 1e-5);
    }

    #[test]
    fn samples_interpolate_linearly() {
        let spec = GridSpec::new(1.0, 4, 1).unwrap();
        let d = Density::Samples {
            points: vec![(0.0, 1.0), (2.0, 1.0)],
        };
        let mu = ingest_density(&d, spec, QuadratureRule::Simpson).unwrap();
        assert_relative_eq!(mu.total_mass(), 2.0, epsilon = 1e-14);
        let unsorted = Density::Samples {
            points: vec![(1.0, 1.0), (0.0, 1.0)],
        };
        assert!(ingest_density(&unsorted, spec, QuadratureRule::Simpson).is_err());
    }

    #[test]
    fn atoms_land_in_their_cells() {
        let spec = GridSpec::new(0.5, 4, 3).unwrap();
        let atoms = AtomicMeasure::new(vec![(0.0, 1.0), (1.3, -2.0), (1.31, 0.5)]).unwrap();
        let mu = bin_atoms(&atoms, spec).unwrap();
        assert_eq!(mu.get(0, 0), 1.0);
        assert_eq!(mu.get(2, 2), -1.5);
        let far = AtomicMeasure::dirac(10.0, 1.0);
        assert!(bin_atoms(&far, spec).is_err());
    }
}
