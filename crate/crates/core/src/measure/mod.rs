//! Signed measures on the half-line discretized on an `h`-aligned grid.
//!
//! A [`GridSpec`] cuts every period `[kh, (k+1)h)` into `m` cells of width
//! `h/m`, for levels `k = 0..=K`. Cell `(j, k)` therefore always belongs to
//! the wealth class of offset `(j + 1/2) h/m`, so shifting a measure by `h`
//! is an index shift and never interpolates between classes.

mod density;
mod flat;

pub use density::{bin_atoms, ingest_density, Density, QuadratureRule};
pub use flat::{flat_norm, FlatConvention, FlatWeight};

use crate::error::{Error, Result};
use crate::real::Real;

/// Interaction rate `eta` and exchange quantum `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    pub eta: T,
    pub h: T,
}

impl<T: Real> ModelParams<T> {
    pub fn new(eta: T, h: T) -> Result<Self> {
        if !(eta > T::zero() && eta.is_finite()) {
            return Err(Error::config(format!("eta must be positive, got {eta}")));
        }
        if !(h > T::zero() && h.is_finite()) {
            return Err(Error::config(format!("h must be positive, got {h}")));
        }
        Ok(Self { eta, h })
    }

    /// Rate multiplying the generator when the mass above `h` is `b`.
    #[inline]
    pub fn rate(&self, b: T) -> T {
        self.eta / T::three() * b
    }
}

/// Grid layout: `m` cells per period of length `h`, levels `0..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub h: T,
    pub m: usize,
    pub k_max: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(h: T, m: usize, k_max: usize) -> Result<Self> {
        if !(h > T::zero() && h.is_finite()) {
            return Err(Error::config(format!("grid h must be positive, got {h}")));
        }
        if m < 1 {
            return Err(Error::config("grid.m must be at least 1"));
        }
        if k_max < 1 {
            return Err(Error::config("grid.K must be at least 1"));
        }
        Ok(Self { h, m, k_max })
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.k_max + 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m * self.levels()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell width `h/m`.
    #[inline]
    pub fn delta(&self) -> T {
        self.h / T::from_usize_lossy(self.m)
    }

    /// Storage is class-major: all levels of offset `j` are contiguous.
    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        debug_assert!(j < self.m && k <= self.k_max);
        j * self.levels() + k
    }

    #[inline]
    pub fn cell_of(&self, idx: usize) -> (usize, usize) {
        (idx / self.levels(), idx % self.levels())
    }

    /// Offset of class `j` (midpoint of its cell inside `[0, h)`).
    #[inline]
    pub fn offset(&self, j: usize) -> T {
        (T::from_usize_lossy(j) + T::half()) * self.delta()
    }

    /// Representative point of cell `(j, k)`.
    #[inline]
    pub fn midpoint(&self, j: usize, k: usize) -> T {
        T::from_usize_lossy(k) * self.h + self.offset(j)
    }

    /// Cell `[lo, hi)` bounds.
    #[inline]
    pub fn bounds(&self, j: usize, k: usize) -> (T, T) {
        let base = T::from_usize_lossy(k) * self.h;
        let d = self.delta();
        (
            base + T::from_usize_lossy(j) * d,
            base + T::from_usize_lossy(j + 1) * d,
        )
    }

    /// Locates the cell containing `y`; `None` when `y` is negative or
    /// beyond `(K + 1) h`.
    pub fn locate(&self, y: T) -> Option<(usize, usize)> {
        if y < T::zero() || !y.is_finite() {
            return None;
        }
        let k = (y / self.h).floor().to_usize()?;
        if k > self.k_max {
            return None;
        }
        let x = y - T::from_usize_lossy(k) * self.h;
        let j = (x / self.delta()).floor().to_usize()?.min(self.m - 1);
        Some((j, k))
    }

    /// `V` evaluated at every cell midpoint, in storage order.
    pub fn v_weights(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.m {
            let x = self.offset(j);
            let alpha = alpha_bar_at_offset(x, self.h);
            for k in 0..self.levels() {
                let y = x + T::from_usize_lossy(k) * self.h;
                out.push(T::two() - (-alpha * y).exp());
            }
        }
        out
    }
}

fn alpha_bar_at_offset<T: Real>(x: T, h: T) -> T {
    T::two() * T::LN_2() / (T::two() * x + h)
}

/// Class-dependent exponent `2 ln 2 / (2 (y mod h) + h)`.
pub fn alpha_bar<T: Real>(y: T, h: T) -> T {
    let x = y - (y / h).floor() * h;
    alpha_bar_at_offset(x, h)
}

/// Lyapunov weight `V(y) = 2 - exp(-alpha_bar(y) y)`, valued in `[1, 2)`.
pub fn weight_v<T: Real>(y: T, h: T) -> T {
    T::two() - (-alpha_bar(y, h) * y).exp()
}

/// Signed measure stored as one mass per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure<T> {
    spec: GridSpec<T>,
    w: Vec<T>,
}

impl<T: Real> GridMeasure<T> {
    pub fn zeros(spec: GridSpec<T>) -> Self {
        Self {
            spec,
            w: vec![T::zero(); spec.len()],
        }
    }

    pub fn from_vec(spec: GridSpec<T>, w: Vec<T>) -> Result<Self> {
        if w.len() != spec.len() {
            return Err(Error::config(format!(
                "mass array has {} entries, grid needs {}",
                w.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, w })
    }

    /// Unit (or weighted) point mass at cell `(j, k)`.
    pub fn point(spec: GridSpec<T>, j: usize, k: usize, weight: T) -> Self {
        let mut mu = Self::zeros(spec);
        mu.w[spec.index(j, k)] = weight;
        mu
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    #[inline]
    pub fn masses(&self) -> &[T] {
        &self.w
    }

    #[inline]
    pub fn masses_mut(&mut self) -> &mut [T] {
        &mut self.w
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> T {
        self.w[self.spec.index(j, k)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: T) {
        let i = self.spec.index(j, k);
        self.w[i] = v;
    }

    /// Level profile of class `j`.
    #[inline]
    pub fn class(&self, j: usize) -> &[T] {
        let l = self.spec.levels();
        &self.w[j * l..(j + 1) * l]
    }

    #[inline]
    pub fn class_mut(&mut self, j: usize) -> &mut [T] {
        let l = self.spec.levels();
        &mut self.w[j * l..(j + 1) * l]
    }

    pub fn classes(&self) -> impl Iterator<Item = &[T]> {
        self.w.chunks(self.spec.levels())
    }

    pub fn total_mass(&self) -> T {
        self.w.iter().copied().sum()
    }

    /// `mu([h, inf))`; exact on the aligned grid.
    pub fn mass_above_h(&self) -> T {
        self.classes().map(|c| c[1..].iter().copied().sum::<T>()).sum()
    }

    /// `mu([0, h))`.
    pub fn mass_level0(&self) -> T {
        self.classes().map(|c| c[0]).sum()
    }

    /// Mass sitting on the truncation level `K`.
    pub fn top_level_mass(&self) -> T {
        self.classes().map(|c| c[self.spec.k_max]).sum()
    }

    pub fn first_moment(&self) -> T {
        self.w
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let (j, k) = self.spec.cell_of(i);
                self.spec.midpoint(j, k) * w
            })
            .sum()
    }

    pub fn norm_tv(&self) -> T {
        self.w.iter().map(|w| w.abs()).sum()
    }

    pub fn norm_v(&self) -> T {
        let v = self.spec.v_weights();
        weighted_abs_sum(&self.w, &v)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.w.iter().all(|&w| w >= T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|w| w.is_finite())
    }

    fn check_same_grid(&self, other: &Self) {
        assert_eq!(self.spec, other.spec, "measures live on different grids");
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_same_grid(other);
        let w = self.w.iter().zip(&other.w).map(|(&a, &b)| a - b).collect();
        Self { spec: self.spec, w }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_same_grid(other);
        let w = self.w.iter().zip(&other.w).map(|(&a, &b)| a + b).collect();
        Self { spec: self.spec, w }
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            spec: self.spec,
            w: self.w.iter().map(|&x| a * x).collect(),
        }
    }

    /// `<mu, f>` for a test function sampled at cell midpoints.
    pub fn pair_with(&self, f: impl Fn(T) -> T) -> T {
        self.w
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let (j, k) = self.spec.cell_of(i);
                w * f(self.spec.midpoint(j, k))
            })
            .sum()
    }

    /// Nonzero cells as atoms at their midpoints.
    pub fn to_atoms(&self) -> AtomicMeasure<T> {
        let atoms = self
            .w
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != T::zero())
            .map(|(i, &w)| {
                let (j, k) = self.spec.cell_of(i);
                (self.spec.midpoint(j, k), w)
            })
            .collect();
        AtomicMeasure::new_unchecked(atoms)
    }
}

/// `sum_i v_i |w_i|`.
pub(crate) fn weighted_abs_sum<T: Real>(w: &[T], v: &[T]) -> T {
    w.iter().zip(v).map(|(&w, &v)| v * w.abs()).sum()
}

/// Finite combination of weighted Dirac masses on `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicMeasure<T> {
    atoms: Vec<(T, T)>,
}

impl<T: Real> AtomicMeasure<T> {
    pub fn new(atoms: Vec<(T, T)>) -> Result<Self> {
        for &(y, w) in &atoms {
            if !(y >= T::zero() && y.is_finite()) {
                return Err(Error::domain(format!("atom location {y} is not in [0, inf)")));
            }
            if !w.is_finite() {
                return Err(Error::domain(format!("atom weight {w} is not finite")));
            }
        }
        Ok(Self::new_unchecked(atoms))
    }

    fn new_unchecked(atoms: Vec<(T, T)>) -> Self {
        Self { atoms }
    }

    pub fn dirac(y: T, weight: T) -> Self {
        Self {
            atoms: vec![(y, weight)],
        }
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> T {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn norm_tv(&self) -> T {
        self.normalized().atoms.iter().map(|a| a.1.abs()).sum()
    }

    /// Sorted by location, coincident atoms merged, zero weights dropped.
    pub fn normalized(&self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite atom locations"));
        let mut out: Vec<(T, T)> = Vec::with_capacity(atoms.len());
        for (y, w) in atoms {
            match out.last_mut() {
                Some(last) if last.0 == y => last.1 += w,
                _ => out.push((y, w)),
            }
        }
        out.retain(|a| a.1 != T::zero());
        Self { atoms: out }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|&(y, w)| (y, -w)));
        Self { atoms }.normalized()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self { atoms }.normalized()
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            atoms: self.atoms.iter().map(|&(y, w)| (y, a * w)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(m: usize, k: usize) -> GridSpec<f64> {
        GridSpec::new(0.5, m, k).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0.0, 0.5).is_err());
        assert!(ModelParams::new(3.0, -1.0).is_err());
        assert!(GridSpec::new(0.5, 0, 3).is_err());
        assert!(GridSpec::<f64>::new(0.5, 2, 0).is_err());
    }

    #[test]
    fn hand_summed_masses() {
        let mut mu = GridMeasure::zeros(spec(2, 4));
        mu.set(0, 0, 0.25);
        mu.set(1, 3, -0.75);
        assert_relative_eq!(mu.total_mass(), -0.5);
        assert_relative_eq!(mu.norm_tv(), 1.0);
        assert_relative_eq!(mu.mass_above_h(), -0.75);
        assert_eq!(GridMeasure::zeros(spec(2, 4)).total_mass(), 0.0);
    }

    #[test]
    fn cell_geometry_is_aligned() {
        let s = spec(4, 3);
        let (lo, hi) = s.bounds(3, 2);
        assert_relative_eq!(lo, 1.375);
        assert_relative_eq!(hi, 1.5);
        assert_eq!(s.locate(1.4), Some((3, 2)));
        assert_eq!(s.locate(2.0), None);
        assert_eq!(s.locate(-0.1), None);
        assert_relative_eq!(s.midpoint(0, 2), 1.0 + 0.0625);
    }

    #[test]
    fn unit_atom_first_moment() {
        let s = spec(1, 4);
        // single cell per period: midpoint of level 2 is 2h + h/2
        let mu = GridMeasure::point(s, 0, 2, 1.0);
        assert_relative_eq!(mu.first_moment(), 1.25);
    }

    #[test]
    fn weight_v_values() {
        assert_eq!(weight_v(0.0, 0.5), 1.0);
        assert_relative_eq!(weight_v(0.5, 0.5), 1.75, epsilon = 1e-15);
        let far = weight_v(0.1 + 200.0 * 0.5, 0.5);
        assert!(far <= 2.0 && far > 2.0 - 1e-12);
    }

    #[test]
    fn v_weights_match_pointwise_formula() {
        let s = spec(3, 5);
        let v = s.v_weights();
        for (i, &vi) in v.iter().enumerate() {
            let (j, k) = s.cell_of(i);
            assert_relative_eq!(vi, weight_v(s.midpoint(j, k), s.h), epsilon = 1e-13);
            assert!((1.0..2.0).contains(&vi));
        }
    }

    #[test]
    fn atomic_normalization_merges() {
        let a = AtomicMeasure::new(vec![(1.0, 0.5), (0.2, 1.0), (1.0, -0.5)]).unwrap();
        let n = a.normalized();
        assert_eq!(n.atoms(), &[(0.2, 1.0)]);
        assert!(AtomicMeasure::new(vec![(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn point_pair_tv_is_two() {
        let s = spec(2, 3);
        let mu = GridMeasure::point(s, 0, 1, 1.0).sub(&GridMeasure::point(s, 1, 2, 1.0));
        assert_eq!(mu.norm_tv(), 2.0);
    }
}
