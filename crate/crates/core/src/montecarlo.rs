//! Agent-based simulation of the pairwise game.
//!
//! Encounters arrive at total rate `eta N / 2`; each picks an unordered pair
//! uniformly. When both players hold at least `h`, each of "first wins",
//! "second wins" and "draw" has probability 1/3 and the winner takes `h`.
//! Wealths are stored as an offset in `[0, h)` plus an integer level, so
//! the class of every agent is preserved exactly.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::dynamics::{solve_nonlinear, SolverConfig};
use crate::error::{Error, Result};
use crate::measure::{GridMeasure, GridSpec, ModelParams};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct AgentPopulation<T> {
    offsets: Vec<T>,
    levels: Vec<u32>,
    params: ModelParams<T>,
    seed: u64,
    rng: ChaCha8Rng,
    /// Number of agents holding at least `h`.
    rich: usize,
    pub t: T,
    pub events: u64,
}

/// Outcome of one encounter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encounter {
    /// At least one player was below `h`.
    Idle,
    Draw,
    Transfer { winner: usize, loser: usize },
}

impl<T: Real> AgentPopulation<T> {
    /// Builds a population from explicit wealths. Offsets are taken modulo
    /// `h`.
    pub fn from_wealths(wealths: &[T], params: ModelParams<T>, seed: u64) -> Result<Self> {
        if wealths.len() < 2 {
            return Err(Error::config("a population needs at least two agents"));
        }
        let h = params.h;
        let mut offsets = Vec::with_capacity(wealths.len());
        let mut levels = Vec::with_capacity(wealths.len());
        for &w in wealths {
            if !(w >= T::zero() && w.is_finite()) {
                return Err(Error::domain(format!("wealth {w} is negative or not finite")));
            }
            let k = (w / h).floor();
            let mut off = w - k * h;
            let mut k = k.to_u32().ok_or_else(|| Error::domain(format!("wealth {w} too large")))?;
            if off >= h {
                off -= h;
                k += 1;
            }
            offsets.push(off.max(T::zero()));
            levels.push(k);
        }
        Ok(Self::assemble(offsets, levels, params, seed))
    }

    /// Draws `n` agents i.i.d. from a nonnegative grid measure, placing each
    /// at the midpoint of its cell.
    pub fn sample(init: &GridMeasure<T>, n: usize, params: ModelParams<T>, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::config("a population needs at least two agents"));
        }
        if !init.is_nonnegative() || !init.is_finite() {
            return Err(Error::domain("initial measure must be nonnegative and finite"));
        }
        let spec = *init.spec();
        check_spec(&spec, &params)?;
        let total = init.total_mass();
        if !(total > T::zero()) {
            return Err(Error::domain("initial measure has no mass"));
        }
        let mut cdf = Vec::with_capacity(spec.len());
        let mut acc = 0.0f64;
        for &w in init.masses() {
            acc += w.to_f64_lossy();
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offsets = Vec::with_capacity(n);
        let mut levels = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.random::<f64>() * acc;
            let idx = cdf.partition_point(|&c| c <= u).min(spec.len() - 1);
            let (j, k) = spec.cell_of(idx);
            offsets.push(spec.midpoint(j, 0));
            levels.push(k as u32);
        }
        let mut pop = Self::assemble(offsets, levels, params, seed);
        pop.rng = rng;
        Ok(pop)
    }

    fn assemble(offsets: Vec<T>, levels: Vec<u32>, params: ModelParams<T>, seed: u64) -> Self {
        let rich = levels.iter().filter(|&&k| k >= 1).count();
        Self {
            offsets,
            levels,
            params,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rich,
            t: T::zero(),
            events: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn wealth(&self, i: usize) -> T {
        self.offsets[i] + T::from_usize_lossy(self.levels[i] as usize) * self.params.h
    }

    pub fn wealths(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.wealth(i)).collect()
    }

    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Sum of wealths, computed in integer units of `h` plus offsets.
    pub fn total_wealth(&self) -> T {
        let units: u64 = self.levels.iter().map(|&k| k as u64).sum();
        self.offsets.iter().copied().sum::<T>() + T::from_u64(units).expect("representable") * self.params.h
    }

    /// Total level count; constant under every exchange.
    pub fn total_levels(&self) -> u64 {
        self.levels.iter().map(|&k| k as u64).sum()
    }

    pub fn rich_count(&self) -> usize {
        self.rich
    }

    fn event_rate(&self) -> f64 {
        self.params.eta.to_f64_lossy() * self.len() as f64 / 2.0
    }

    /// Advances the clock by one holding time and resolves one encounter.
    pub fn step(&mut self) -> Encounter {
        let hold = Exp::new(self.event_rate()).expect("positive rate").sample(&mut self.rng);
        self.t += T::lit(hold);
        self.encounter()
    }

    fn encounter(&mut self) -> Encounter {
        self.events += 1;
        let n = self.len();
        let a = self.rng.random_range(0..n);
        let mut b = self.rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        if self.levels[a] == 0 || self.levels[b] == 0 {
            return Encounter::Idle;
        }
        let (winner, loser) = match self.rng.random_range(0..3u8) {
            0 => (a, b),
            1 => (b, a),
            _ => return Encounter::Draw,
        };
        self.levels[winner] += 1;
        self.levels[loser] -= 1;
        if self.levels[loser] == 0 {
            self.rich -= 1;
        }
        Encounter::Transfer { winner, loser }
    }

    /// Runs events until the clock passes `t_end`; the clock is then set to
    /// `t_end` exactly. Once fewer than two agents can play, the state is
    /// frozen and the clock jumps to `t_end`.
    pub fn run_until(&mut self, t_end: T) {
        let exp = Exp::new(self.event_rate()).expect("positive rate");
        while self.t < t_end {
            if self.rich < 2 {
                self.t = t_end;
                break;
            }
            let hold = T::lit(exp.sample(&mut self.rng));
            if self.t + hold > t_end {
                self.t = t_end;
                break;
            }
            self.t += hold;
            self.encounter();
        }
    }

    /// Each agent contributes `1/N` to its cell; agents above the top level
    /// are counted in it.
    pub fn empirical_measure(&self, spec: GridSpec<T>) -> Result<GridMeasure<T>> {
        check_spec(&spec, &self.params)?;
        let mut mu = GridMeasure::zeros(spec);
        let unit = T::one() / T::from_usize_lossy(self.len());
        let delta = spec.delta();
        let mut overflow = 0usize;
        for (&off, &k) in self.offsets.iter().zip(&self.levels) {
            let j = ((off / delta).floor().to_usize().unwrap_or(0)).min(spec.m - 1);
            let mut k = k as usize;
            if k > spec.k_max {
                overflow += 1;
                k = spec.k_max;
            }
            let i = spec.index(j, k);
            mu.masses_mut()[i] += unit;
        }
        if overflow > 0 {
            warn!("{overflow} agents lie above the top grid level {}", spec.k_max);
        }
        Ok(mu)
    }
}

fn check_spec<T: Real>(spec: &GridSpec<T>, params: &ModelParams<T>) -> Result<()> {
    let tol = T::lit(1e-12) * params.h;
    if (spec.h - params.h).abs() > tol {
        return Err(Error::config(format!(
            "grid quantum {} differs from model quantum {}",
            spec.h, params.h
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct McReport<T> {
    pub n: usize,
    pub t_end: T,
    /// TV distance of each replicate's empirical measure to the mean-field
    /// solution.
    pub distances: Vec<T>,
    pub mean: T,
    /// Sample standard deviation over `sqrt(replicates)`.
    pub stderr: T,
    /// TV distance of the replicate-averaged empirical measure.
    pub averaged_distance: T,
    pub events: u64,
}

/// Simulates `replicates` independent populations of size `n` drawn from
/// `init` and compares each with the mean-field solution at `t_end`.
///
/// Replicate `r` is seeded with `seed + r`; replicates run in parallel and
/// the report lists them in index order.
pub fn mc_compare<T: Real>(
    init: &GridMeasure<T>,
    params: &ModelParams<T>,
    solver: &SolverConfig<T>,
    n: usize,
    t_end: T,
    replicates: usize,
    seed: u64,
) -> Result<McReport<T>> {
    if replicates == 0 {
        return Err(Error::config("at least one replicate is required"));
    }
    if !(t_end >= T::zero()) {
        return Err(Error::config("t_end must be nonnegative"));
    }
    let spec = *init.spec();
    let target = mean_field(init, params, solver, t_end)?;
    let runs = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<(GridMeasure<T>, u64)> {
            let mut pop = AgentPopulation::sample(init, n, *params, seed.wrapping_add(r as u64))?;
            pop.run_until(t_end);
            Ok((pop.empirical_measure(spec)?, pop.events))
        })
        .collect::<Result<Vec<_>>>()?;

    let distances: Vec<T> = runs.iter().map(|(mu, _)| mu.sub(&target).norm_tv()).collect();
    let r = T::from_usize_lossy(replicates);
    let mean = distances.iter().copied().sum::<T>() / r;
    let stderr = if replicates > 1 {
        let var = distances.iter().map(|&d| (d - mean) * (d - mean)).sum::<T>() / (r - T::one());
        (var / r).sqrt()
    } else {
        T::zero()
    };
    let mut avg = GridMeasure::zeros(spec);
    for (mu, _) in &runs {
        avg = avg.add(mu);
    }
    let averaged_distance = avg.scale(T::one() / r).sub(&target).norm_tv();
    Ok(McReport {
        n,
        t_end,
        distances,
        mean,
        stderr,
        averaged_distance,
        events: runs.iter().map(|r| r.1).sum(),
    })
}

/// Probability-normalized mean-field solution at `t_end`.
fn mean_field<T: Real>(
    init: &GridMeasure<T>,
    params: &ModelParams<T>,
    solver: &SolverConfig<T>,
    t_end: T,
) -> Result<GridMeasure<T>> {
    let total = init.total_mass();
    if !(total > T::zero()) {
        return Err(Error::domain("initial measure has no mass"));
    }
    let mu0 = init.scale(T::one() / total);
    let config = SolverConfig {
        t_end,
        stop_frac: None,
        snapshot_every: usize::MAX,
        keep_measures: false,
        ..solver.clone()
    };
    let limit = crate::asymptotics::project_ph(&mu0);
    Ok(solve_nonlinear(&mu0, params, &config, &limit)?.final_measure)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = T::from_usize_lossy(xs.len());
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let sxy: T = lx.iter().zip(&ly).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    let sxx: T = lx.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ModelParams<f64> {
        ModelParams::new(3.0, 0.5).unwrap()
    }

    #[test]
    fn poor_pair_is_frozen() {
        let mut pop = AgentPopulation::from_wealths(&[0.1, 0.4], params(), 7).unwrap();
        for _ in 0..100 {
            assert_eq!(pop.step(), Encounter::Idle);
        }
        assert!(pop.t > 0.0);
        assert_eq!(pop.wealths(), vec![0.1, 0.4]);
        pop.run_until(1e6);
        assert_eq!(pop.t, 1e6);
    }

    #[test]
    fn exchanges_conserve_wealth_and_class() {
        let w: Vec<f64> = (0..50).map(|i| 0.03 * i as f64 + 0.5).collect();
        let mut pop = AgentPopulation::from_wealths(&w, params(), 1).unwrap();
        let offsets = pop.offsets().to_vec();
        let units = pop.total_levels();
        let mut draws = 0;
        for _ in 0..5000 {
            let before = pop.wealths();
            match pop.step() {
                Encounter::Draw => {
                    draws += 1;
                    assert_eq!(pop.wealths(), before);
                }
                Encounter::Idle => assert_eq!(pop.wealths(), before),
                Encounter::Transfer { .. } => {}
            }
            assert_eq!(pop.total_levels(), units);
            assert_eq!(pop.offsets(), &offsets[..]);
        }
        assert!(draws > 0);
        assert!(pop.wealths().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn same_seed_same_path() {
        let w = vec![1.0; 20];
        let mut a = AgentPopulation::from_wealths(&w, params(), 42).unwrap();
        let mut b = AgentPopulation::from_wealths(&w, params(), 42).unwrap();
        a.run_until(3.0);
        b.run_until(3.0);
        assert_eq!(a.levels(), b.levels());
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn empirical_binning() {
        let spec = GridSpec::new(0.5, 4, 3).unwrap();
        let zero = AgentPopulation::from_wealths(&[0.0; 5], params(), 0).unwrap();
        let mu = zero.empirical_measure(spec).unwrap();
        assert_relative_eq!(mu.get(0, 0), 1.0);
        let pop = AgentPopulation::from_wealths(&[0.1, 0.6, 0.1, 0.6], params(), 0).unwrap();
        let mu = pop.empirical_measure(spec).unwrap();
        assert_eq!(mu.get(0, 0), 0.5);
        assert_eq!(mu.get(0, 1), 0.5);
        assert_eq!(mu.mass_above_h(), 0.5);
        let far = AgentPopulation::from_wealths(&[10.0, 0.0], params(), 0).unwrap();
        assert_eq!(far.empirical_measure(spec).unwrap().get(0, 3), 0.5);
        let other = GridSpec::new(0.25, 4, 3).unwrap();
        assert!(pop.empirical_measure(other).is_err());
    }

    #[test]
    fn sampling_follows_the_cells() {
        let spec = GridSpec::new(0.5, 2, 3).unwrap();
        let mut init = GridMeasure::zeros(spec);
        init.set(1, 2, 1.0);
        let pop = AgentPopulation::sample(&init, 10, params(), 3).unwrap();
        assert!(pop.levels().iter().all(|&k| k == 2));
        assert!(pop.offsets().iter().all(|&o| o == 0.375));
    }

    #[test]
    fn poor_initial_data_matches_exactly() {
        let spec = GridSpec::new(0.5, 1, 4).unwrap();
        let init = GridMeasure::point(spec, 0, 0, 1.0);
        let rep = mc_compare(&init, &params(), &SolverConfig::default(), 100, 1.0, 3, 9).unwrap();
        assert!(rep.mean < 1e-14);
        assert!(rep.averaged_distance < 1e-14);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 4.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert_relative_eq!(log_log_slope(&xs, &ys), -0.5, epsilon = 1e-12);
    }
}
