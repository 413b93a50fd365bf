use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rps_kinetic::asymptotics::{
    decay_envelope, exponential_limit_mass, ph_p0_distance, project_ph, wealth_loss, HarrisEnvelope,
};
use rps_kinetic::dynamics::solve_nonlinear;
use rps_kinetic::harris::{constants_table, lambda_max_increase, limiting_constants, t_grid, SignVariant};
use rps_kinetic::io;
use rps_kinetic::measure::{bin_atoms, flat_norm, ingest_density, Density, FlatWeight};
use rps_kinetic::montecarlo::mc_compare;
use rps_kinetic::{AtomicMeasure64, Error, GridMeasure64, Result};

use crate::config::{ExperimentConfig, FlatWeightKind, InitKind};
use crate::svg;

type Meta = Vec<(String, String)>;

fn open_out(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn initial_measure(cfg: &ExperimentConfig) -> Result<GridMeasure64> {
    match &cfg.init {
        InitKind::Square { k0 } => ingest_density(&Density::Square { k0: *k0 }, cfg.grid, cfg.rule),
        InitKind::Exponential { alpha } => ingest_density(&Density::Exponential { alpha: *alpha }, cfg.grid, cfg.rule),
        InitKind::Atoms(atoms) => bin_atoms(&AtomicMeasure64::new(atoms.clone())?, cfg.grid),
        InitKind::Csv(path) => {
            let file = File::open(path).map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
            io::read_measure(BufReader::new(file), cfg.grid)
        }
        InitKind::Samples(path) => {
            let file = File::open(path).map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
            let points = io::read_pairs(BufReader::new(file))?;
            ingest_density(&Density::Samples { points }, cfg.grid, cfg.rule)
        }
    }
}

fn with(meta: &Meta, extra: &[(&str, String)]) -> Meta {
    let mut m = meta.clone();
    m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

pub fn simulate(cfg: &ExperimentConfig, want_svg: bool) -> Result<()> {
    let mu0 = initial_measure(cfg)?;
    let limit = project_ph(&mu0);
    let traj = solve_nonlinear(&mu0, &cfg.model, &cfg.solver, &limit)?;
    let b0 = mu0.mass_above_h();
    let d0 = traj.initial_v_dist();
    let lim = limiting_constants(&cfg.harris)?;

    let envelope = if !lim.certified {
        warn!(
            "the {} constants give no decay certificate; envelope column left empty",
            cfg.harris.sign_variant.name()
        );
        None
    } else if !mu0.is_nonnegative() {
        warn!("initial measure has negative cells; envelope column left empty");
        None
    } else {
        Some(HarrisEnvelope::new(lim.c, lim.lambda, cfg.model.eta, b0, d0)?)
    };

    let meta = with(
        &cfg.resolved,
        &[
            ("harris.C_limit", io::fmt(lim.c)),
            ("harris.lambda_limit", io::fmt(lim.lambda)),
            ("init.total_mass", io::fmt(mu0.total_mass())),
            ("init.B0", io::fmt(b0)),
            ("init.d0", io::fmt(d0)),
            ("run.steps", traj.steps.to_string()),
            ("run.stopped_early", traj.stopped_early.to_string()),
            ("run.max_top_mass", io::fmt(traj.max_top_mass)),
        ],
    );
    let dir = &cfg.outputs;
    let mut w = open_out(dir, "trajectory.csv")?;
    io::write_trajectory(&mut w, &traj, envelope.as_ref(), &meta)?;
    finish(w)?;
    let mut w = open_out(dir, "rate_table.csv")?;
    io::write_rate_table(&mut w, &traj.rate_table, &meta)?;
    finish(w)?;
    let mut w = open_out(dir, "final_measure.csv")?;
    io::write_measure(&mut w, &traj.final_measure, &meta)?;
    finish(w)?;

    if want_svg {
        let measured: Vec<(f64, f64)> = traj.times.iter().zip(&traj.diagnostics).map(|(t, d)| (*t, d.v_dist)).collect();
        let mut series = vec![svg::Series {
            label: "weighted distance to limit",
            points: measured,
            color: "#1f4e9c",
            markers: true,
        }];
        if let Some(env) = &envelope {
            series.push(svg::Series {
                label: "decay envelope",
                points: traj.times.iter().map(|&t| (t, decay_envelope(t, env))).collect(),
                color: "#c0392b",
                markers: false,
            });
        }
        let plot = svg::loglog("Decay to the large-time limit", "t", "distance", &series);
        let mut w = open_out(dir, "trajectory.svg")?;
        w.write_all(plot.as_bytes())?;
        finish(w)?;
    }

    let violations = envelope.map_or(0, |env| {
        traj.times
            .iter()
            .zip(&traj.diagnostics)
            .filter(|(t, d)| d.v_dist > decay_envelope(**t, &env))
            .count()
    });
    println!(
        "steps {}  t_final {:.6e}  rows {}  stopped_early {}  v_dist {:.6e} -> {:.6e}  envelope violations {}",
        traj.steps,
        traj.times.last().copied().unwrap_or(0.0),
        traj.len(),
        traj.stopped_early,
        d0,
        traj.diagnostics.last().map_or(0.0, |d| d.v_dist),
        violations
    );
    if let Some(step) = traj.truncation_step {
        println!("warning: top level occupied from step {step}; consider a larger grid.K");
    }
    Ok(())
}

pub fn limit(cfg: &ExperimentConfig) -> Result<()> {
    let mu0 = initial_measure(cfg)?;
    let lim = project_ph(&mu0);
    let loss = wealth_loss(&mu0);
    let mut extra = vec![
        ("init.total_mass", io::fmt(mu0.total_mass())),
        ("init.mass_above_h", io::fmt(mu0.mass_above_h())),
        ("init.first_moment", io::fmt(mu0.first_moment())),
        ("limit.first_moment", io::fmt(lim.first_moment())),
        ("limit.wealth_loss", io::fmt(loss)),
    ];
    if let InitKind::Exponential { alpha } = cfg.init {
        let above = (-alpha * cfg.model.h).exp();
        extra.push(("init.mass_above_h_exact", io::fmt(above)));
        extra.push(("init.mass_below_h_exact", io::fmt(1.0 - above)));
    }
    let meta = with(&cfg.resolved, &extra);
    let mut w = open_out(&cfg.outputs, "limit.csv")?;
    io::write_measure(&mut w, &lim, &meta)?;
    finish(w)?;
    println!("wealth_loss {loss:.10e}  limit mass {:.10e}", lim.total_mass());

    if let InitKind::Exponential { alpha } = cfg.init {
        let spec = cfg.grid;
        let mut exact = GridMeasure64::zeros(spec);
        let mut worst = 0.0f64;
        for j in 0..spec.m {
            let (a, b) = spec.bounds(j, 0);
            let v = exponential_limit_mass(alpha, spec.h, a, b);
            exact.set(j, 0, v);
            worst = worst.max((v - lim.get(j, 0)).abs());
        }
        let mut w = open_out(&cfg.outputs, "limit_exact.csv")?;
        io::write_measure(&mut w, &exact, &meta)?;
        finish(w)?;
        println!(
            "mass above h: grid {:.10e}  exact {:.10e}  complement {:.10e}",
            mu0.mass_above_h(),
            (-alpha * spec.h).exp(),
            -(-alpha * spec.h).exp_m1()
        );
        println!("max cell difference to closed form {worst:.3e}");
    }
    Ok(())
}

pub fn harris(cfg: &ExperimentConfig) -> Result<()> {
    let (lo, hi, n) = cfg.harris_grid;
    let ts = t_grid(lo, hi, n);
    for variant in SignVariant::ALL {
        let inputs = rps_kinetic::HarrisInputs64 {
            sign_variant: variant,
            ..cfg.harris
        };
        let rows = constants_table(&inputs, &ts)?;
        let lim = limiting_constants(&inputs)?;
        let monotone = if rows.iter().all(|r| r.lambda.is_some()) {
            let inc = lambda_max_increase(&inputs, &ts)?;
            format!("{}", inc <= 1e-12)
        } else {
            "n/a".to_string()
        };
        let meta = with(
            &cfg.resolved,
            &[
                ("variant", variant.name().to_string()),
                ("beta_limit", io::fmt(lim.beta)),
                ("C_limit", io::fmt(lim.c)),
                ("lambda_limit", io::fmt(lim.lambda)),
                ("certified", lim.certified.to_string()),
                ("lambda_nonincreasing", monotone.clone()),
            ],
        );
        let mut w = open_out(&cfg.outputs, &format!("harris_{}.csv", variant.name()))?;
        io::write_harris(&mut w, &rows, &meta)?;
        finish(w)?;

        println!("{}", variant.name());
        println!(
            "{:>10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "T", "gamma_L", "K", "gamma_H", "beta", "gamma", "C", "lambda"
        );
        let stride = (rows.len() / 10).max(1);
        let shown = rows.iter().enumerate().filter(|(i, _)| i % stride == 0 || *i + 1 == rows.len());
        for (_, r) in shown {
            let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            println!(
                "{:>10.4} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12} {:>12}",
                r.t,
                r.gamma_l,
                r.k_lyap,
                r.gamma_h,
                r.beta,
                r.gamma,
                opt(r.c),
                opt(r.lambda)
            );
        }
        println!(
            "limit: beta {:.6}  C {:.6}  lambda {:.6}  certified {}  lambda nonincreasing {}\n",
            lim.beta, lim.c, lim.lambda, lim.certified, monotone
        );
    }
    Ok(())
}

pub fn mc(cfg: &ExperimentConfig) -> Result<()> {
    let mu0 = initial_measure(cfg)?;
    let report = mc_compare(
        &mu0,
        &cfg.model,
        &cfg.solver,
        cfg.mc_n,
        cfg.mc_t_end,
        cfg.mc_replicates,
        cfg.mc_seed,
    )?;
    let mut w = open_out(&cfg.outputs, "mc.csv")?;
    io::write_mc(&mut w, &report, &cfg.resolved)?;
    finish(w)?;
    println!(
        "N {}  replicates {}  mean TV {:.6e} +- {:.2e}  averaged-measure TV {:.6e}",
        report.n,
        report.distances.len(),
        report.mean,
        report.stderr,
        report.averaged_distance
    );
    Ok(())
}

pub fn flatnorm(cfg: &ExperimentConfig) -> Result<()> {
    let weight = match cfg.flat_weight {
        FlatWeightKind::Unit => FlatWeight::Unit,
        FlatWeightKind::V => FlatWeight::V { h: cfg.model.h },
    };
    let mut rows: Vec<(&str, f64)> = Vec::new();
    match &cfg.flat_atoms {
        Some(atoms) => {
            let mu = AtomicMeasure64::new(atoms.clone())?;
            rows.push(("flat_norm", flat_norm(&mu, weight, cfg.flat_convention)));
        }
        None => {
            let mu0 = initial_measure(cfg)?;
            let gap = ph_p0_distance(&mu0, weight, cfg.flat_convention);
            rows.push(("flat_norm", gap.mu_norm));
            rows.push(("ph_p0_distance", gap.distance));
            if let Some(r) = gap.ratio {
                rows.push(("ph_p0_ratio", r));
            }
        }
    }
    let mut w = open_out(&cfg.outputs, "flatnorm.csv")?;
    io::write_header(&mut w, &cfg.resolved)?;
    writeln!(w, "quantity,value")?;
    for (name, v) in &rows {
        writeln!(w, "{name},{}", io::fmt(*v))?;
        println!("{name} {v:.12e}");
    }
    finish(w)
}
