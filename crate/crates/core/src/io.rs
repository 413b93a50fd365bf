//! CSV formats.
//!
//! Every file starts with `# key = value` comment lines describing the run,
//! followed by a header row and data rows. Reals are written in scientific
//! notation with enough digits for an exact round trip.

use std::io::{BufRead, Write};

use crate::asymptotics::{decay_envelope, HarrisEnvelope};
use crate::dual::ClassFunction;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::harris::HarrisRow;
use crate::measure::{GridMeasure, GridSpec};
use crate::montecarlo::McReport;
use crate::real::{fmt_sig, Real};

/// Round-trip formatting of a real.
pub fn fmt<T: Real>(x: T) -> String {
    fmt_sig(x, T::ROUND_TRIP_DIGITS)
}

fn fmt_opt<T: Real>(x: Option<T>) -> String {
    x.map_or_else(|| "nan".to_string(), fmt)
}

pub fn write_header<W: Write>(w: &mut W, meta: &[(String, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

/// `j,k,y_mid,mass`, nonzero cells only.
pub fn write_measure<W: Write, T: Real>(w: &mut W, mu: &GridMeasure<T>, meta: &[(String, String)]) -> Result<()> {
    write_header(w, meta)?;
    writeln!(w, "j,k,y_mid,mass")?;
    let spec = mu.spec();
    for j in 0..spec.m {
        for (k, &mass) in mu.class(j).iter().enumerate() {
            if mass != T::zero() {
                writeln!(w, "{j},{k},{},{}", fmt(spec.midpoint(j, k)), fmt(mass))?;
            }
        }
    }
    Ok(())
}

fn parse_field<F: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<F> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot read {what} from `{}`", s.trim()),
    })
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines<R: BufRead>(r: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push((i + 1, t.to_string()));
    }
    Ok(out)
}

fn expect_header(lines: &[(usize, String)], header: &str) -> Result<()> {
    match lines.first() {
        Some((_, h)) if h == header => Ok(()),
        Some((n, h)) => Err(Error::Parse {
            line: *n,
            message: format!("expected header `{header}`, found `{h}`"),
        }),
        None => Err(Error::Parse {
            line: 0,
            message: format!("missing header `{header}`"),
        }),
    }
}

/// Reads a measure written by [`write_measure`] onto `spec`.
pub fn read_measure<R: BufRead, T: Real>(r: R, spec: GridSpec<T>) -> Result<GridMeasure<T>> {
    let lines = data_lines(r)?;
    expect_header(&lines, "j,k,y_mid,mass")?;
    let mut mu = GridMeasure::zeros(spec);
    for (n, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: *n,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let j: usize = parse_field(fields[0], *n, "class index")?;
        let k: usize = parse_field(fields[1], *n, "level")?;
        let mass: T = parse_field(fields[3], *n, "mass")?;
        if j >= spec.m || k > spec.k_max {
            return Err(Error::Parse {
                line: *n,
                message: format!("cell ({j}, {k}) outside the grid"),
            });
        }
        let i = spec.index(j, k);
        mu.masses_mut()[i] += mass;
    }
    Ok(mu)
}

/// Reads two-column numeric data (`x,y`) after a header row.
pub fn read_pairs<R: BufRead, T: Real>(r: R) -> Result<Vec<(T, T)>> {
    let lines = data_lines(r)?;
    let mut out = Vec::with_capacity(lines.len());
    for (idx, (n, line)) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: *n,
                message: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        match (fields[0].trim().parse::<T>(), fields[1].trim().parse::<T>()) {
            (Ok(x), Ok(y)) => out.push((x, y)),
            // a non-numeric first row is a header
            _ if idx == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    line: *n,
                    message: format!("cannot read numbers from `{line}`"),
                })
            }
        }
    }
    Ok(out)
}

/// `t,B,theta,tv_dist,v_dist,envelope`; the envelope column is `nan`
/// without one.
pub fn write_trajectory<W: Write, T: Real>(
    w: &mut W,
    traj: &Trajectory<T>,
    envelope: Option<&HarrisEnvelope<T>>,
    meta: &[(String, String)],
) -> Result<()> {
    write_header(w, meta)?;
    writeln!(w, "t,B,theta,tv_dist,v_dist,envelope")?;
    for i in 0..traj.len() {
        let t = traj.times[i];
        let d = traj.diagnostics[i];
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt(t),
            fmt(traj.b[i]),
            fmt(traj.theta[i]),
            fmt(d.tv_dist),
            fmt(d.v_dist),
            fmt_opt(envelope.map(|e| decay_envelope(t, e)))
        )?;
    }
    Ok(())
}

/// `k,f_k`.
pub fn write_class_function<W: Write, T: Real>(w: &mut W, f: &ClassFunction<T>, meta: &[(String, String)]) -> Result<()> {
    write_header(w, meta)?;
    writeln!(w, "# offset = {}", fmt(f.offset))?;
    writeln!(w, "k,f_k")?;
    for (k, v) in f.values.iter().enumerate() {
        writeln!(w, "{k},{}", fmt(*v))?;
    }
    Ok(())
}

/// `t,B`.
pub fn write_rate_table<W: Write, T: Real>(w: &mut W, table: &[(T, T)], meta: &[(String, String)]) -> Result<()> {
    write_header(w, meta)?;
    writeln!(w, "t,B")?;
    for (t, b) in table {
        writeln!(w, "{},{}", fmt(*t), fmt(*b))?;
    }
    Ok(())
}

/// `T,gamma_L,K,gamma_H,beta,gamma,C,lambda`; `C` and `lambda` are `nan`
/// where no certificate exists.
pub fn write_harris<W: Write, T: Real>(w: &mut W, rows: &[HarrisRow<T>], meta: &[(String, String)]) -> Result<()> {
    write_header(w, meta)?;
    writeln!(w, "T,gamma_L,K,gamma_H,beta,gamma,C,lambda")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.gamma_l),
            fmt(r.k_lyap),
            fmt(r.gamma_h),
            fmt(r.beta),
            fmt(r.gamma),
            fmt_opt(r.c),
            fmt_opt(r.lambda)
        )?;
    }
    Ok(())
}

/// `replicate,t_end,tv_distance`, then `mean` and `stderr` summary rows.
pub fn write_mc<W: Write, T: Real>(w: &mut W, report: &McReport<T>, meta: &[(String, String)]) -> Result<()> {
    write_header(w, meta)?;
    writeln!(w, "# averaged_tv_distance = {}", fmt(report.averaged_distance))?;
    writeln!(w, "replicate,t_end,tv_distance")?;
    for (r, d) in report.distances.iter().enumerate() {
        writeln!(w, "{r},{},{}", fmt(report.t_end), fmt(*d))?;
    }
    writeln!(w, "mean,{},{}", fmt(report.t_end), fmt(report.mean))?;
    writeln!(w, "stderr,{},{}", fmt(report.t_end), fmt(report.stderr))?;
    Ok(())
}
