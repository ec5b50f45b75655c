//! TOML experiment manifests.
//!
//! ```toml
//! name = "example"
//! engines = ["de", "mc"]
//! trials = 1000
//! seed = 1
//!
//! [system]
//! antennas = 100
//! users = 2
//! block_len = 500
//! rho = "20dB"
//!
//! [impairments]
//! delta = 1e-4
//!
//! [grid]
//! strategies = ["nors", "rs"]
//!
//! [[sweep]]
//! param = "rho"
//! range = { from = "0dB", to = "30dB", points = 7 }
//! ```
//!
//! Strings ending in `dB` are converted to linear at parse time; bare numbers
//! are taken as linear.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::config::{db_to_linear, validate, Csit, Engine, Geometry, ImpairmentProfile, Strategy, SystemConfig, Topology};
use crate::error::{Error, Result};
use crate::precoding::SplitRule;
use crate::rmt::{DeOptions, QVariant};

pub const MAX_AXES: usize = 2;

/// A scalar that may be written in dB.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Num(f64),
    Text(String),
}

impl Level {
    pub fn linear(&self) -> Result<f64> {
        match self {
            Level::Num(x) => Ok(*x),
            Level::Text(s) => parse_level(s),
        }
    }
}

/// `"20dB"` becomes 100, `"0.5"` stays 0.5.
pub fn parse_level(s: &str) -> Result<f64> {
    let t = s.trim();
    let (num, db) = match t.len().checked_sub(2).filter(|&i| t.is_char_boundary(i)) {
        Some(i) if t[i..].eq_ignore_ascii_case("db") => (t[..i].trim(), true),
        _ => (t, false),
    };
    let x: f64 = num
        .parse()
        .map_err(|_| Error::Parse(format!("cannot read {s:?} as a number or dB value")))?;
    Ok(if db { db_to_linear(x) } else { x })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Rho,
    RhoUp,
    /// Total phase-noise increment variance, split evenly between BS and UE.
    Delta,
    /// Common EVM factor of all four additive distortions.
    Kappa2,
    /// Amplified thermal noise at both link ends.
    Xi,
    Antennas,
    Users,
    BlockLen,
    PilotLen,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Rho => "rho",
            Param::RhoUp => "rho_up",
            Param::Delta => "delta",
            Param::Kappa2 => "kappa2",
            Param::Xi => "xi",
            Param::Antennas => "antennas",
            Param::Users => "users",
            Param::BlockLen => "block_len",
            Param::PilotLen => "pilot_len",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, Param::Antennas | Param::Users | Param::BlockLen | Param::PilotLen)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    from: Level,
    to: Level,
    points: usize,
    /// Geometric spacing in linear units.
    #[serde(default)]
    log: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    param: Param,
    values: Option<Vec<Level>>,
    range: Option<RawRange>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    antennas: usize,
    users: usize,
    block_len: usize,
    pilot_len: Option<usize>,
    rho: Level,
    rho_up: Option<Level>,
    #[serde(default)]
    geometry: GeometryKind,
    side_m: Option<f64>,
    user_distance_m: Option<f64>,
    shadow_var: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum GeometryKind {
    #[default]
    Iid,
    Cell,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImpairments {
    delta: Option<f64>,
    kappa2: Option<f64>,
    xi: Option<Level>,
    sigma_phi2: Option<f64>,
    sigma_varphi2: Option<f64>,
    kappa_t2_bs: Option<f64>,
    kappa_r2_bs: Option<f64>,
    kappa_t2_ue: Option<f64>,
    kappa_r2_ue: Option<f64>,
    xi_bs: Option<Level>,
    xi_ue: Option<Level>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    strategies: Option<Vec<Strategy>>,
    topologies: Option<Vec<Topology>>,
    csit: Option<Vec<Csit>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDe {
    q_variant: Option<String>,
    split_rule: Option<String>,
    alpha_reg: Option<f64>,
    fixed_t: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaTolerance {
    pub antennas: usize,
    pub pct: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawXval {
    tol_pct: Option<f64>,
    #[serde(default)]
    tolerance: Vec<AntennaTolerance>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    name: Option<String>,
    engines: Option<Vec<Engine>>,
    trials: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    system: RawSystem,
    #[serde(default)]
    impairments: RawImpairments,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    sweep: Vec<RawAxis>,
    #[serde(default)]
    de: RawDe,
    #[serde(default)]
    xval: RawXval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: Param,
    /// Linear values, or counts for integer parameters.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub base: SystemConfig,
    pub impairments: ImpairmentProfile,
    pub axes: Vec<Axis>,
    pub strategies: Vec<Strategy>,
    pub topologies: Vec<Topology>,
    pub csit: Vec<Csit>,
    pub engines: Vec<Engine>,
    pub trials: usize,
    pub output: Option<PathBuf>,
    pub de: DeOptions,
    pub tol_pct: f64,
    pub tolerances: Vec<AntennaTolerance>,
    /// `pilot_len` was given, so it does not follow `users`.
    pilot_len_fixed: bool,
}

/// One point of the Cartesian product, before strategy/CSIT/topology are chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub values: Vec<(Param, f64)>,
    pub config: SystemConfig,
    pub impairments: ImpairmentProfile,
}

/// One (strategy, CSIT, topology) combination at a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub strategy: Strategy,
    pub csit: Csit,
    pub topology: Topology,
}

impl GridPoint {
    pub fn specialize(&self, v: Variant) -> (SystemConfig, ImpairmentProfile) {
        let mut c = self.config.clone();
        c.strategy = v.strategy;
        c.csit = v.csit;
        let mut imp = self.impairments.clone();
        imp.topology = v.topology;
        (c, imp)
    }
}

fn parse_variant(kind: &str, s: Option<&str>) -> Result<Option<bool>> {
    match s {
        None => Ok(None),
        Some("derived") => Ok(Some(false)),
        Some("literal") => Ok(Some(true)),
        Some(other) => Err(Error::Parse(format!("{kind} must be \"derived\" or \"literal\", got {other:?}"))),
    }
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut m = Self::from_toml(&text)?;
        if m.name.is_empty() {
            m.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "results".into());
        }
        Ok(m)
    }

    fn resolve(raw: RawManifest) -> Result<Self> {
        let s = &raw.system;
        let geometry = match s.geometry {
            GeometryKind::Iid => Geometry::Iid,
            GeometryKind::Cell => {
                let Geometry::Cell { side_m, user_distance_m, shadow_var } = Geometry::default_cell() else {
                    unreachable!()
                };
                Geometry::Cell {
                    side_m: s.side_m.unwrap_or(side_m),
                    user_distance_m: s.user_distance_m.unwrap_or(user_distance_m),
                    shadow_var: s.shadow_var.unwrap_or(shadow_var),
                }
            }
        };
        let mut base = SystemConfig::new(s.antennas, s.users, s.block_len, s.rho.linear()?);
        if let Some(tau) = s.pilot_len {
            base.pilot_len = tau;
        }
        if let Some(r) = &s.rho_up {
            base.rho_up = r.linear()?;
        }
        base.geometry = geometry;
        base.seed = raw.seed.unwrap_or(0);

        let im = &raw.impairments;
        let xi = im.xi.as_ref().map(Level::linear).transpose()?.unwrap_or(1.0);
        let mut imp = ImpairmentProfile::uniform(im.delta.unwrap_or(0.0), im.kappa2.unwrap_or(0.0), xi, Topology::Clo);
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut imp.sigma_phi2, im.sigma_phi2);
        set(&mut imp.sigma_varphi2, im.sigma_varphi2);
        set(&mut imp.kappa_t2_bs, im.kappa_t2_bs);
        set(&mut imp.kappa_r2_bs, im.kappa_r2_bs);
        set(&mut imp.kappa_t2_ue, im.kappa_t2_ue);
        set(&mut imp.kappa_r2_ue, im.kappa_r2_ue);
        set(&mut imp.xi_bs, im.xi_bs.as_ref().map(Level::linear).transpose()?);
        set(&mut imp.xi_ue, im.xi_ue.as_ref().map(Level::linear).transpose()?);

        if raw.sweep.len() > MAX_AXES {
            return Err(Error::Parse(format!("{} sweep axes given, at most {MAX_AXES} allowed", raw.sweep.len())));
        }
        let mut axes = Vec::with_capacity(raw.sweep.len());
        for a in &raw.sweep {
            if axes.iter().any(|x: &Axis| x.param == a.param) {
                return Err(Error::Parse(format!("parameter {} swept twice", a.param.name())));
            }
            axes.push(resolve_axis(a)?);
        }

        let mut de = DeOptions::default();
        if parse_variant("q_variant", raw.de.q_variant.as_deref())? == Some(true) {
            de.q_variant = QVariant::Literal;
        }
        if parse_variant("split_rule", raw.de.split_rule.as_deref())? == Some(true) {
            de.split_rule = SplitRule::Literal;
        }
        de.alpha_reg = raw.de.alpha_reg;
        de.fixed_t = raw.de.fixed_t;
        if let Some(t) = raw.de.tol {
            de.solver.tol = t;
        }
        if let Some(n) = raw.de.max_iter {
            de.solver.max_iter = n;
        }

        let nonempty = |what: &str, n: usize| {
            if n == 0 {
                Err(Error::Parse(format!("{what} list is empty")))
            } else {
                Ok(())
            }
        };
        let strategies = raw.grid.strategies.unwrap_or_else(|| vec![Strategy::NoRs, Strategy::Rs]);
        let topologies = raw.grid.topologies.unwrap_or_else(|| vec![Topology::Clo, Topology::Slo]);
        let csit = raw.grid.csit.unwrap_or_else(|| vec![Csit::Perfect, Csit::Imperfect]);
        let engines = raw.engines.unwrap_or_else(|| vec![Engine::De]);
        nonempty("strategies", strategies.len())?;
        nonempty("topologies", topologies.len())?;
        nonempty("csit", csit.len())?;
        nonempty("engines", engines.len())?;
        let trials = raw.trials.unwrap_or(1000);
        if trials == 0 {
            return Err(Error::Parse("trials must be positive".into()));
        }

        Ok(Manifest {
            name: raw.name.unwrap_or_default(),
            base,
            impairments: imp,
            axes,
            strategies,
            topologies,
            csit,
            engines,
            trials,
            output: raw.output,
            de,
            tol_pct: raw.xval.tol_pct.unwrap_or(5.0),
            tolerances: raw.xval.tolerance,
            pilot_len_fixed: s.pilot_len.is_some(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.base.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.base.seed = seed;
    }

    /// Cross-validation tolerance for a point with `antennas` BS antennas.
    pub fn tolerance_for(&self, antennas: usize) -> f64 {
        self.tolerances
            .iter()
            .find(|t| t.antennas == antennas)
            .map(|t| t.pct)
            .unwrap_or(self.tol_pct)
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &csit in &self.csit {
            for &topology in &self.topologies {
                for &strategy in &self.strategies {
                    out.push(Variant { strategy, csit, topology });
                }
            }
        }
        out
    }

    /// Cartesian product of the axes, first axis outermost.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut combos: Vec<Vec<(Param, f64)>> = vec![Vec::new()];
        for axis in &self.axes {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((axis.param, v));
                        p
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .enumerate()
            .map(|(index, values)| {
                let mut config = self.base.clone();
                let mut imp = self.impairments.clone();
                for &(p, v) in &values {
                    apply(p, v, &mut config, &mut imp);
                }
                if !self.pilot_len_fixed {
                    config.pilot_len = config.users;
                }
                GridPoint { index, values, config, impairments: imp }
            })
            .collect()
    }

    /// Checks every configuration the run would evaluate.
    pub fn validate(&self) -> Result<()> {
        for p in self.points() {
            for v in self.variants() {
                let (c, imp) = p.specialize(v);
                validate(c, imp).map_err(|e| Error::Parse(format!("grid point {}: {e}", p.index)))?;
            }
        }
        Ok(())
    }
}

fn apply(p: Param, v: f64, c: &mut SystemConfig, imp: &mut ImpairmentProfile) {
    let n = v.round() as usize;
    match p {
        Param::Rho => c.rho = v,
        Param::RhoUp => c.rho_up = v,
        Param::Delta => {
            imp.sigma_phi2 = 0.5 * v;
            imp.sigma_varphi2 = 0.5 * v;
        }
        Param::Kappa2 => {
            imp.kappa_t2_bs = v;
            imp.kappa_r2_bs = v;
            imp.kappa_t2_ue = v;
            imp.kappa_r2_ue = v;
        }
        Param::Xi => {
            imp.xi_bs = v;
            imp.xi_ue = v;
        }
        Param::Antennas => c.antennas = n,
        Param::Users => c.users = n,
        Param::BlockLen => c.block_len = n,
        Param::PilotLen => c.pilot_len = n,
    }
}

fn resolve_axis(a: &RawAxis) -> Result<Axis> {
    let name = a.param.name();
    let values = match (&a.values, &a.range) {
        (Some(v), None) => v.iter().map(Level::linear).collect::<Result<Vec<_>>>()?,
        (None, Some(r)) => {
            if r.points == 0 {
                return Err(Error::Parse(format!("range for {name} has no points")));
            }
            // Spacing is uniform in the unit the endpoints are written in.
            let db = matches!((&r.from, &r.to), (Level::Text(a), Level::Text(b))
                if a.trim().to_ascii_lowercase().ends_with("db") && b.trim().to_ascii_lowercase().ends_with("db"));
            let (lo, hi) = (r.from.linear()?, r.to.linear()?);
            let step = |i: usize| if r.points == 1 { 0.0 } else { i as f64 / (r.points - 1) as f64 };
            if db {
                let (a, b) = (10.0 * lo.log10(), 10.0 * hi.log10());
                (0..r.points).map(|i| db_to_linear(a + (b - a) * step(i))).collect()
            } else if r.log {
                if !(lo > 0.0 && hi > 0.0) {
                    return Err(Error::Parse(format!("log range for {name} needs positive endpoints")));
                }
                let (a, b) = (lo.ln(), hi.ln());
                (0..r.points).map(|i| (a + (b - a) * step(i)).exp()).collect()
            } else {
                (0..r.points).map(|i| lo + (hi - lo) * step(i)).collect()
            }
        }
        _ => return Err(Error::Parse(format!("axis {name} needs exactly one of `values` or `range`"))),
    };
    if values.is_empty() {
        return Err(Error::Parse(format!("axis {name} has no values")));
    }
    for &v in &values {
        if !v.is_finite() {
            return Err(Error::Parse(format!("axis {name} has non-finite value {v}")));
        }
        if a.param.is_integer() && (v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Parse(format!("axis {name} needs non-negative integers, got {v}")));
        }
    }
    Ok(Axis { param: a.param, values })
}
