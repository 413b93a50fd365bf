//! Flat `key = value` experiment files.
//!
//! Keys carry a section prefix (`model.eta`, `grid.m`, ...). Lines starting
//! with `#` and blank lines are ignored. Unknown keys are an error so that
//! typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rps_kinetic::harris::SignVariant;
use rps_kinetic::measure::{FlatConvention, QuadratureRule};
use rps_kinetic::{Error, GridSpec64, HarrisInputs64, ModelParams64, Result, SolverConfig64};

/// Every accepted key with its default, in the order used for report headers.
const KEYS: &[(&str, &str)] = &[
    ("model.eta", "3"),
    ("model.h", "0.5"),
    ("grid.m", "16"),
    ("grid.K", "200"),
    ("solver.dt0", "0.25"),
    ("solver.theta_max", "0.5"),
    ("solver.t_end", "1e7"),
    ("solver.stop_frac", "0.05"),
    ("solver.snapshot_every", "1"),
    ("solver.cap_factor", "100"),
    ("solver.trapezoid_theta", "false"),
    ("init.kind", "square"),
    ("init.k0", "1"),
    ("init.alpha", "1"),
    ("init.atoms", ""),
    ("init.path", ""),
    ("init.rule", "simpson"),
    ("harris.sigma", "2"),
    ("harris.T", "1"),
    ("harris.A", "3"),
    ("harris.C_V", "1"),
    ("harris.omega_V", "0"),
    ("harris.sign_variant", "paper_consistent"),
    ("harris.T_min", "0.01"),
    ("harris.T_max", "10"),
    ("harris.T_points", "1000"),
    ("outputs.dir", "out"),
    ("mc.n", "10000"),
    ("mc.replicates", "16"),
    ("mc.t_end", "1"),
    ("mc.seed", "0"),
    ("flat.weight", "unit"),
    ("flat.convention", "max"),
    ("flat.atoms", ""),
];

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    Square { k0: usize },
    Exponential { alpha: f64 },
    Atoms(Vec<(f64, f64)>),
    /// Measure CSV in the `j,k,y_mid,mass` format.
    Csv(PathBuf),
    /// Tabulated density `y,f` pairs.
    Samples(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatWeightKind {
    Unit,
    V,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelParams64,
    pub grid: GridSpec64,
    pub solver: SolverConfig64,
    pub init: InitKind,
    pub rule: QuadratureRule,
    pub harris: HarrisInputs64,
    pub harris_grid: (f64, f64, usize),
    pub outputs: PathBuf,
    pub mc_n: usize,
    pub mc_replicates: usize,
    pub mc_t_end: f64,
    pub mc_seed: u64,
    pub flat_weight: FlatWeightKind,
    pub flat_convention: FlatConvention,
    pub flat_atoms: Option<Vec<(f64, f64)>>,
    /// Every key with its resolved value, for report headers.
    pub resolved: Vec<(String, String)>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

/// `y:w, y:w, ...`
pub fn parse_atoms(key: &str, value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (y, w) = item
                .split_once(':')
                .ok_or_else(|| Error::config(format!("{key}: atom `{item}` is not of the form y:w")))?;
            Ok((parse(key, y.trim())?, parse(key, w.trim())?))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse_str(&text, base)
    }

    /// Parses config text; relative input paths resolve against `base`.
    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let mut given: BTreeMap<String, String> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::config(format!("line {}: unknown key `{key}`", n + 1)));
            }
            if given.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        let get = |key: &str| -> String {
            given.get(key).cloned().unwrap_or_else(|| {
                KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| d.to_string()).unwrap_or_default()
            })
        };
        let num = |key: &str| -> Result<f64> { parse(key, &get(key)) };
        let count = |key: &str| -> Result<usize> { parse(key, &get(key)) };

        let model = ModelParams64::new(num("model.eta")?, num("model.h")?)?;
        let grid = GridSpec64::new(model.h, count("grid.m")?, count("grid.K")?)?;

        let stop = get("solver.stop_frac");
        let solver = SolverConfig64 {
            dt0: num("solver.dt0")?,
            theta_max: num("solver.theta_max")?,
            t_end: num("solver.t_end")?,
            stop_frac: if stop == "none" { None } else { Some(parse("solver.stop_frac", &stop)?) },
            snapshot_every: count("solver.snapshot_every")?,
            cap_factor: num("solver.cap_factor")?,
            trapezoid_theta: parse_bool("solver.trapezoid_theta", &get("solver.trapezoid_theta"))?,
            keep_measures: false,
        };
        solver.validate()?;

        let resolve = |p: String| -> Result<PathBuf> {
            if p.is_empty() {
                return Err(Error::config("init.path is required for this init.kind"));
            }
            let p = PathBuf::from(p);
            Ok(if p.is_absolute() { p } else { base.join(p) })
        };
        let init = match get("init.kind").as_str() {
            "square" => InitKind::Square { k0: count("init.k0")? },
            "exponential" => InitKind::Exponential { alpha: num("init.alpha")? },
            "atoms" => {
                let atoms = parse_atoms("init.atoms", &get("init.atoms"))?;
                if atoms.is_empty() {
                    return Err(Error::config("init.atoms is empty"));
                }
                InitKind::Atoms(atoms)
            }
            "csv" => InitKind::Csv(resolve(get("init.path"))?),
            "samples" => InitKind::Samples(resolve(get("init.path"))?),
            other => return Err(Error::config(format!("init.kind: unknown kind `{other}`"))),
        };
        let rule: QuadratureRule = get("init.rule").parse()?;

        let harris = HarrisInputs64 {
            sigma: num("harris.sigma")?,
            t: num("harris.T")?,
            a_level: num("harris.A")?,
            c_v: num("harris.C_V")?,
            omega_v: num("harris.omega_V")?,
            sign_variant: get("harris.sign_variant").parse::<SignVariant>()?,
        };
        harris.validate()?;
        let harris_grid = (num("harris.T_min")?, num("harris.T_max")?, count("harris.T_points")?);
        if !(harris_grid.0 > 0.0 && harris_grid.1 >= harris_grid.0 && harris_grid.2 >= 1) {
            return Err(Error::config("harris T grid needs 0 < T_min <= T_max and T_points >= 1"));
        }

        let flat_weight = match get("flat.weight").as_str() {
            "unit" => FlatWeightKind::Unit,
            "v" => FlatWeightKind::V,
            other => return Err(Error::config(format!("flat.weight: unknown weight `{other}`"))),
        };
        let flat_atoms = match get("flat.atoms") {
            s if s.is_empty() => None,
            s => Some(parse_atoms("flat.atoms", &s)?),
        };

        let resolved = KEYS.iter().map(|(k, _)| (k.to_string(), get(k))).collect();
        Ok(Self {
            model,
            grid,
            solver,
            init,
            rule,
            harris,
            harris_grid,
            outputs: PathBuf::from(get("outputs.dir")),
            mc_n: count("mc.n")?,
            mc_replicates: count("mc.replicates")?,
            mc_t_end: num("mc.t_end")?,
            mc_seed: parse("mc.seed", &get("mc.seed"))?,
            flat_weight,
            flat_convention: get("flat.convention").parse()?,
            flat_atoms,
            resolved,
        })
    }

    /// Records a command-line override in the report header.
    pub fn note_override(&mut self, key: &str, value: String) {
        if let Some(entry) = self.resolved.iter_mut().find(|(k, _)| k == key) {
            entry.1 = value;
        }
    }
}
