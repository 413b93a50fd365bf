use proptest::prelude::*;
use rps_kinetic::dual::{apply_a, picard_gamma, ClassFunction, PicardProblem, RateFunction};
use rps_kinetic::dynamics::{apply_generator, solve_nonlinear, step_euler, SolverConfig};
use rps_kinetic::measure::{flat_norm, weight_v, AtomicMeasure, FlatConvention, FlatWeight, GridMeasure, GridSpec, ModelParams};
use rps_kinetic::asymptotics;

/// Brute-force LP optimum by enumerating vertices of the feasible polytope.
///
/// Variables are `f_1..f_n, a, b`; constraints are written as `row . x <= rhs`.
fn lp_flat_norm(atoms: &[(f64, f64)], v: &[f64], convention: FlatConvention) -> f64 {
    let n = atoms.len();
    let nv = n + 2;
    let (ia, ib) = (n, n + 1);
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let unit = |i: usize, s: f64| {
        let mut r = vec![0.0; nv];
        r[i] = s;
        r
    };
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut r = unit(i, s);
            r[ia] = -v[i];
            rows.push((r, 0.0));
        }
    }
    for i in 0..n.saturating_sub(1) {
        let d = atoms[i + 1].0 - atoms[i].0;
        for s in [1.0, -1.0] {
            let mut r = vec![0.0; nv];
            r[i + 1] = s;
            r[i] = -s;
            r[ib] = -d;
            rows.push((r, 0.0));
        }
    }
    rows.push((unit(ia, -1.0), 0.0));
    rows.push((unit(ib, -1.0), 0.0));
    match convention {
        FlatConvention::Sum => {
            let mut r = vec![0.0; nv];
            r[ia] = 1.0;
            r[ib] = 1.0;
            rows.push((r, 1.0));
        }
        FlatConvention::Max => {
            rows.push((unit(ia, 1.0), 1.0));
            rows.push((unit(ib, 1.0), 1.0));
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut pick = Vec::with_capacity(nv);
    choose(rows.len(), nv, 0, &mut pick, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve(a, rhs) {
            let feasible = rows
                .iter()
                .all(|(r, c)| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= c + 1e-9);
            if feasible {
                let val: f64 = (0..n).map(|i| x[i] * atoms[i].1).sum();
                best = best.max(val);
            }
        }
    });
    best
}

fn choose(total: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..total {
        pick.push(i);
        choose(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let m = a[r][c] / a[c][c];
                if m != 0.0 {
                    for q in c..n {
                        a[r][q] -= m * a[c][q];
                    }
                    b[r] -= m * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn atoms_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    // Positions on a lattice of hundredths so that they are distinct after sorting.
    (1usize..=3).prop_flat_map(|n| {
        (
            proptest::sample::subsequence((0u32..400).collect::<Vec<_>>(), n),
            proptest::collection::vec(-2.0f64..2.0, n),
        )
            .prop_map(|(ys, ws)| ys.into_iter().zip(ws).map(|(y, w)| (y as f64 / 100.0, w)).collect())
    })
}

fn grid(m: usize, k: usize) -> GridSpec<f64> {
    GridSpec::new(0.5, m, k).unwrap()
}

fn measure_strategy(m: usize, k: usize) -> impl Strategy<Value = GridMeasure<f64>> {
    proptest::collection::vec(0.0f64..1.0, m * (k + 1))
        .prop_map(move |w| GridMeasure::from_vec(grid(m, k), w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flat_norm_matches_lp_vertices(atoms in atoms_strategy(), use_v in any::<bool>(), sum in any::<bool>()) {
        let h = 0.5;
        let mu = AtomicMeasure::new(atoms).unwrap().normalized();
        let (weight, v): (FlatWeight<f64>, Vec<f64>) = if use_v {
            (FlatWeight::V { h }, mu.atoms().iter().map(|a| weight_v(a.0, h)).collect())
        } else {
            (FlatWeight::Unit, vec![1.0; mu.atoms().len()])
        };
        let convention = if sum { FlatConvention::Sum } else { FlatConvention::Max };
        let fast = flat_norm(&mu, weight, convention);
        let oracle = lp_flat_norm(mu.atoms(), &v, convention);
        prop_assert!((fast - oracle).abs() <= 1e-7 * (1.0 + oracle.abs()), "dp {fast} vs lp {oracle}");
    }

    #[test]
    fn flat_norm_is_a_seminorm(x in atoms_strategy(), y in atoms_strategy(), s in -3.0f64..3.0) {
        let (x, y) = (AtomicMeasure::new(x).unwrap(), AtomicMeasure::new(y).unwrap());
        let w = FlatWeight::V { h: 0.5 };
        for c in [FlatConvention::Sum, FlatConvention::Max] {
            let nx = flat_norm(&x, w, c);
            let ny = flat_norm(&y, w, c);
            let nxy = flat_norm(&x.add(&y), w, c);
            prop_assert!(nxy <= nx + ny + 1e-9);
            let ns = flat_norm(&x.scale(s), w, c);
            prop_assert!((ns - s.abs() * nx).abs() <= 1e-9 * (1.0 + nx));
            let tv_weighted: f64 = x.normalized().atoms().iter().map(|a| a.1.abs() * weight_v(a.0, 0.5)).sum();
            prop_assert!(nx <= tv_weighted + 1e-12);
        }
    }

    #[test]
    fn generator_conserves_mass_exactly(mu in measure_strategy(3, 12), c in 0.0f64..2.0) {
        let d = apply_generator(&mu, c);
        for j in 0..3 {
            let s: f64 = d.class(j).iter().sum();
            prop_assert!(s.abs() <= 1e-14);
        }
    }

    #[test]
    fn euler_step_keeps_positivity(mu in measure_strategy(2, 15), frac in 0.0f64..1.0) {
        let c = 1.0;
        let dt = frac / (2.0 * c);
        let next = step_euler(&mu, c, dt);
        prop_assert!(next.is_nonnegative());
        prop_assert!((next.total_mass() - mu.total_mass()).abs() <= 1e-13 * mu.total_mass().max(1.0));
    }

    #[test]
    fn generator_and_dual_are_transposes(mu in measure_strategy(1, 10), f in proptest::collection::vec(-1.0f64..1.0, 11)) {
        let g = ClassFunction::new(0.0, f).unwrap();
        let lhs: f64 = apply_generator(&mu, 1.0).class(0).iter().zip(&g.values).map(|(a, b)| a * b).sum();
        let rhs: f64 = mu.class(0).iter().zip(&apply_a(&g).values).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn gamma_is_a_contraction(
        f in proptest::collection::vec(-1.0f64..1.0, 9),
        g in proptest::collection::vec(-1.0f64..1.0, 9),
        window in 0.05f64..0.45,
    ) {
        let params = ModelParams::new(3.0, 0.5).unwrap();
        let b = RateFunction::Constant(1.0);
        let f0 = ClassFunction::new(0.0, f.clone()).unwrap();
        let problem = PicardProblem::new(&f0, &b, window, &params, 17).unwrap();
        let pf = vec![f; 17];
        let pg = vec![g; 17];
        let dist = |p: &[Vec<f64>], q: &[Vec<f64>]| {
            p.iter().zip(q).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max)
        };
        let before = dist(&pf, &pg);
        let after = dist(&problem.gamma(&pf), &problem.gamma(&pg));
        prop_assert!(after <= problem.contraction * before + 1e-12);
    }

    #[test]
    fn projection_keeps_mass_and_kills_upper_levels(mu in measure_strategy(4, 8)) {
        let p = asymptotics::project_ph(&mu);
        prop_assert!((p.total_mass() - mu.total_mass()).abs() <= 1e-12);
        prop_assert_eq!(p.mass_above_h(), 0.0);
        let q = asymptotics::project_ph(&p);
        prop_assert_eq!(q.masses(), p.masses());
    }
}

#[test]
fn lp_oracle_handles_a_known_pair() {
    // Unit weight, max convention: two opposite unit atoms at distance d give min(2, d).
    for d in [0.3, 1.0, 1.7, 2.5] {
        let v = lp_flat_norm(&[(0.0, 1.0), (d, -1.0)], &[1.0, 1.0], FlatConvention::Max);
        assert!((v - f64::min(2.0, d)).abs() < 1e-12, "d={d}: {v}");
    }
}

#[test]
fn nonlinear_run_from_square_profile() {
    let params = ModelParams::new(3.0, 0.5).unwrap();
    let spec = grid(8, 150);
    let mut mu = GridMeasure::zeros(spec);
    for j in 0..8 {
        mu.set(j, 1, 0.25);
    }
    let limit = asymptotics::project_ph(&mu);
    let config = SolverConfig { t_end: 20.0, stop_frac: None, ..SolverConfig::default() };
    let traj = solve_nonlinear(&mu, &params, &config, &limit).unwrap();
    let end = &traj.final_measure;
    assert!((end.total_mass() - mu.total_mass()).abs() <= 1e-10 * mu.total_mass());
    assert!(end.is_nonnegative());
    assert!(traj.b.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(traj.theta.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(traj.theta[0], 0.0);
    // Lower bound on the surviving rich mass, with slack for the time step.
    let b0 = traj.b[0];
    for (t, b) in traj.times.iter().zip(&traj.b) {
        assert!(b * (1.0 + b0 * t) >= b0 * 0.9);
    }
}

#[test]
fn picard_keeps_constants() {
    let params = ModelParams::new(3.0, 0.5).unwrap();
    let f0 = ClassFunction::constant(0.2, 30, 1.0);
    let rep = picard_gamma(&f0, &RateFunction::Constant(1.0), 0.3, &params, 5).unwrap();
    assert!(rep.value.values.iter().all(|v| (v - 1.0f64).abs() < 1e-14));
}

#[test]
fn single_precision_grid_runs() {
    let params = ModelParams::<f32>::new(3.0, 0.5).unwrap();
    let spec = GridSpec::<f32>::new(0.5, 2, 60).unwrap();
    let mu = GridMeasure::point(spec, 1, 2, 1.0f32);
    let limit = asymptotics::project_ph(&mu);
    let config = SolverConfig::<f32> { t_end: 5.0, stop_frac: None, ..SolverConfig::default() };
    let traj = solve_nonlinear(&mu, &params, &config, &limit).unwrap();
    assert!((traj.final_measure.total_mass() - 1.0).abs() < 1e-5);
    assert!(traj.final_measure.is_nonnegative());
}
