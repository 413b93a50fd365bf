//! Dual bounded-Lipschitz (flat) norm of finitely supported measures.
//!
//! On sorted support points `y_1 < ... < y_n` the norm is the linear program
//!
//! ```text
//! max  sum_i f_i mu_i
//! s.t. |f_i| <= a V(y_i),  |f_{i+1} - f_i| <= b (y_{i+1} - y_i),  a, b >= 0,
//!      a + b <= 1 (sum convention)   or   max(a, b) <= 1 (max convention).
//! ```
//!
//! For fixed `(a, b)` the inner problem is a chain and is solved exactly by
//! dynamic programming over concave piecewise-linear value functions. The
//! optimal value is concave in `a` along `a + b = 1`, so the sum convention
//! adds a golden-section search over `a`.

use super::{weight_v, AtomicMeasure};
use crate::real::Real;

/// Weight bounding `|f|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlatWeight<T> {
    Unit,
    /// The class-dependent Lyapunov weight for exchange quantum `h`.
    V { h: T },
}

impl<T: Real> FlatWeight<T> {
    fn at(&self, y: T) -> T {
        match self {
            FlatWeight::Unit => T::one(),
            FlatWeight::V { h } => weight_v(y, *h),
        }
    }
}

/// How the sup-norm and Lipschitz budgets `a`, `b` combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlatConvention {
    /// `a + b <= 1`.
    Sum,
    /// `max(a, b) <= 1`.
    #[default]
    Max,
}

impl std::str::FromStr for FlatConvention {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "max" => Ok(Self::Max),
            other => Err(crate::error::Error::config(format!(
                "unknown flat-norm convention `{other}`"
            ))),
        }
    }
}

/// Concave piecewise-linear function given by its breakpoints.
#[derive(Debug, Clone)]
struct ConcavePl<T> {
    pts: Vec<(T, T)>,
}

impl<T: Real> ConcavePl<T> {
    fn linear_on(bound: T, slope: T) -> Self {
        if bound == T::zero() {
            Self {
                pts: vec![(T::zero(), T::zero())],
            }
        } else {
            Self {
                pts: vec![(-bound, -slope * bound), (bound, slope * bound)],
            }
        }
    }

    fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.pts.iter().enumerate() {
            if p.1 > self.pts[best].1 {
                best = i;
            }
        }
        best
    }

    fn max(&self) -> T {
        self.pts[self.argmax()].1
    }

    /// `y -> max_{|x - y| <= l} g(x)`.
    fn dilate(&mut self, l: T) {
        if l == T::zero() {
            return;
        }
        let p = self.argmax();
        let mut out = Vec::with_capacity(self.pts.len() + 1);
        for (i, &(x, v)) in self.pts.iter().enumerate() {
            match i.cmp(&p) {
                std::cmp::Ordering::Less => out.push((x - l, v)),
                std::cmp::Ordering::Equal => {
                    out.push((x - l, v));
                    out.push((x + l, v));
                }
                std::cmp::Ordering::Greater => out.push((x + l, v)),
            }
        }
        self.pts = out;
    }

    fn add_linear(&mut self, slope: T) {
        for p in &mut self.pts {
            p.1 += slope * p.0;
        }
    }

    fn eval_on_segment(a: (T, T), b: (T, T), x: T) -> T {
        if b.0 == a.0 {
            return a.1.max(b.1);
        }
        a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
    }

    /// Restricts the domain to `[-bound, bound]`; the domain always contains 0.
    fn clip(&mut self, bound: T) {
        let lo = -bound;
        let hi = bound;
        let pts = &self.pts;
        let mut out = Vec::with_capacity(pts.len() + 2);
        if pts[0].0 < lo {
            let i = pts.partition_point(|p| p.0 < lo);
            out.push((lo, Self::eval_on_segment(pts[i - 1], pts[i], lo)));
        }
        out.extend(pts.iter().copied().filter(|p| p.0 >= lo && p.0 <= hi));
        let last = pts[pts.len() - 1];
        if last.0 > hi {
            let i = pts.partition_point(|p| p.0 <= hi);
            out.push((hi, Self::eval_on_segment(pts[i - 1], pts[i], hi)));
        }
        out.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = a.1.max(b.1);
                true
            } else {
                false
            }
        });
        self.pts = out;
    }
}

/// Inner chain problem with fixed sup bounds `u_i` and step bounds `l_i`.
fn chain_value<T: Real>(mass: &[T], u: &[T], l: &[T]) -> T {
    let mut g = ConcavePl::linear_on(u[0], mass[0]);
    for i in 1..mass.len() {
        g.dilate(l[i - 1]);
        g.add_linear(mass[i]);
        g.clip(u[i]);
    }
    g.max()
}

/// Flat norm of an atomic measure.
pub fn flat_norm<T: Real>(mu: &AtomicMeasure<T>, weight: FlatWeight<T>, convention: FlatConvention) -> T {
    let atoms = mu.normalized();
    let atoms = atoms.atoms();
    if atoms.is_empty() {
        return T::zero();
    }
    let mass: Vec<T> = atoms.iter().map(|a| a.1).collect();
    let v: Vec<T> = atoms.iter().map(|a| weight.at(a.0)).collect();
    let d: Vec<T> = atoms.windows(2).map(|w| w[1].0 - w[0].0).collect();

    let value_at = |a: T| -> T {
        let b = T::one() - a;
        let u: Vec<T> = v.iter().map(|&vi| a * vi).collect();
        let l: Vec<T> = d.iter().map(|&di| b * di).collect();
        chain_value(&mass, &u, &l)
    };

    match convention {
        FlatConvention::Max => chain_value(&mass, &v, &d),
        FlatConvention::Sum => {
            let inv_phi = T::lit(0.618_033_988_749_894_8);
            let tol = T::epsilon() * T::lit(8.0);
            let (mut lo, mut hi) = (T::zero(), T::one());
            let mut x1 = hi - inv_phi * (hi - lo);
            let mut x2 = lo + inv_phi * (hi - lo);
            let mut f1 = value_at(x1);
            let mut f2 = value_at(x2);
            let mut best = value_at(T::zero()).max(value_at(T::one())).max(f1).max(f2);
            while hi - lo > tol {
                if f1 < f2 {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + inv_phi * (hi - lo);
                    f2 = value_at(x2);
                    best = best.max(f2);
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - inv_phi * (hi - lo);
                    f1 = value_at(x1);
                    best = best.max(f1);
                }
            }
            best
        }
    }
}
