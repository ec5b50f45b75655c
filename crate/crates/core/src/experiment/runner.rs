//! Grid execution and the tab-separated result format.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::manifest::{GridPoint, Manifest, Variant};
use crate::config::{linear_to_db, Csit, Engine, Strategy, Topology};
use crate::error::{Error, Result};
use crate::link_sim::{run_monte_carlo_with, McOptions};
use crate::rmt::{de_rates_with, Statistics};

pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 22] = [
    "point",
    "antennas",
    "users",
    "block_len",
    "pilot_len",
    "rho_db",
    "rho_up_db",
    "delta",
    "kappa2",
    "xi",
    "strategy",
    "csit",
    "topology",
    "engine",
    "sum_rate",
    "common_rate",
    "private_rates",
    "ci95",
    "t",
    "de_iterations",
    "de_residual",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point: usize,
    pub antennas: usize,
    pub users: usize,
    pub block_len: usize,
    pub pilot_len: usize,
    pub rho_db: f64,
    pub rho_up_db: f64,
    /// Total phase-noise increment variance.
    pub delta: f64,
    pub kappa2: f64,
    pub xi: f64,
    pub strategy: Strategy,
    pub csit: Csit,
    pub topology: Topology,
    pub engine: Engine,
    pub sum_rate: f64,
    pub common_rate: f64,
    pub private_rates: Vec<f64>,
    pub ci95: Option<f64>,
    pub t: Option<f64>,
    pub de_iterations: Option<usize>,
    pub de_residual: Option<f64>,
    /// `None` when the engine succeeded.
    pub error: Option<String>,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Curve label, e.g. `rs/imperfect/slo`.
    pub fn curve(&self) -> String {
        format!("{}/{}/{}", self.strategy, self.csit, self.topology)
    }

    fn skeleton(p: &GridPoint, v: Variant, engine: Engine) -> Self {
        let (c, imp) = p.specialize(v);
        ResultRow {
            point: p.index,
            antennas: c.antennas,
            users: c.users,
            block_len: c.block_len,
            pilot_len: c.pilot_len,
            rho_db: linear_to_db(c.rho),
            rho_up_db: linear_to_db(c.rho_up),
            delta: imp.total_pn(),
            kappa2: imp.kappa_t2_bs,
            xi: imp.xi_ue,
            strategy: v.strategy,
            csit: v.csit,
            topology: v.topology,
            engine,
            sum_rate: f64::NAN,
            common_rate: f64::NAN,
            private_rates: Vec::new(),
            ci95: None,
            t: None,
            de_iterations: None,
            de_residual: None,
            error: None,
        }
    }

    pub fn to_tsv(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_else(|| "NA".into());
        let rates = if self.private_rates.is_empty() {
            "NA".to_string()
        } else {
            self.private_rates.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>().join(";")
        };
        let status = match &self.error {
            None => "ok".to_string(),
            Some(e) => format!("error: {}", e.replace(['\t', '\n', '\r'], " ")),
        };
        [
            self.point.to_string(),
            self.antennas.to_string(),
            self.users.to_string(),
            self.block_len.to_string(),
            self.pilot_len.to_string(),
            format!("{:.6}", self.rho_db),
            format!("{:.6}", self.rho_up_db),
            format!("{:e}", self.delta),
            format!("{:e}", self.kappa2),
            format!("{:.6}", self.xi),
            self.strategy.to_string(),
            self.csit.to_string(),
            self.topology.to_string(),
            self.engine.to_string(),
            format!("{:.6}", self.sum_rate),
            format!("{:.6}", self.common_rate),
            rates,
            opt(self.ci95.map(|x| format!("{x:.6}"))),
            opt(self.t.map(|x| format!("{x:.6}"))),
            opt(self.de_iterations.map(|x| x.to_string())),
            opt(self.de_residual.map(|x| format!("{x:.3e}"))),
            status,
        ]
        .join("\t")
    }

    pub fn from_tsv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != COLUMNS.len() {
            return Err(Error::Parse(format!("expected {} columns, found {}", COLUMNS.len(), f.len())));
        }
        let bad = |i: usize| Error::Parse(format!("column {} has bad value {:?}", COLUMNS[i], f[i]));
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(i));
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad(i));
        let opt = |i: usize| if f[i] == "NA" { Ok(None) } else { num(i).map(Some) };
        let private_rates = if f[16] == "NA" {
            Vec::new()
        } else {
            f[16].split(';').map(|s| s.parse::<f64>().map_err(|_| bad(16))).collect::<Result<_>>()?
        };
        let error = match f[21] {
            "ok" => None,
            s => Some(s.strip_prefix("error: ").unwrap_or(s).to_string()),
        };
        Ok(ResultRow {
            point: int(0)?,
            antennas: int(1)?,
            users: int(2)?,
            block_len: int(3)?,
            pilot_len: int(4)?,
            rho_db: num(5)?,
            rho_up_db: num(6)?,
            delta: num(7)?,
            kappa2: num(8)?,
            xi: num(9)?,
            strategy: serde_plain(f[10]).ok_or_else(|| bad(10))?,
            csit: serde_plain(f[11]).ok_or_else(|| bad(11))?,
            topology: serde_plain(f[12]).ok_or_else(|| bad(12))?,
            engine: serde_plain(f[13]).ok_or_else(|| bad(13))?,
            sum_rate: num(14)?,
            common_rate: num(15)?,
            private_rates,
            ci95: opt(17)?,
            t: opt(18)?,
            de_iterations: if f[19] == "NA" { None } else { Some(int(19)?) },
            de_residual: opt(20)?,
            error,
        })
    }
}

/// Reads one of the lowercase enum names used in the result table.
fn serde_plain<T: serde::de::DeserializeOwned>(s: &str) -> Option<T> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).ok()
}

pub fn write_header<W: Write>(w: &mut W) -> Result<()> {
    writeln!(w, "# schema-version: {SCHEMA_VERSION}")?;
    writeln!(w, "{}", COLUMNS.join("\t"))?;
    Ok(())
}

pub fn read_results<R: BufRead>(r: R) -> Result<Vec<ResultRow>> {
    let mut lines = r.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    let version = first
        .strip_prefix("# schema-version:")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Parse("missing schema-version header".into()))?;
    if version != SCHEMA_VERSION {
        return Err(Error::Parse(format!("schema version {version}, expected {SCHEMA_VERSION}")));
    }
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != COLUMNS.join("\t") {
        return Err(Error::Parse("column header does not match the schema".into()));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(ResultRow::from_tsv(&line)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    /// Grid points evaluated concurrently; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<ResultRow>,
    pub failures: usize,
}

/// Every row of one grid point, variants outer and engines inner.
pub fn evaluate_point(m: &Manifest, p: &GridPoint) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    let variants = m.variants();
    // Statistics depend only on the CSIT mode and the impairments, not on the strategy.
    let mut cache: Vec<(Csit, Topology, Result<Statistics>)> = Vec::new();
    for v in variants {
        let (cfg, imp) = p.specialize(v);
        if !cache.iter().any(|(c, t, _)| *c == v.csit && *t == v.topology) {
            let stats = crate::config::validate(cfg.clone(), imp.clone()).and_then(|_| Statistics::build(&cfg, &imp));
            cache.push((v.csit, v.topology, stats));
        }
        let stats = &cache.iter().find(|(c, t, _)| *c == v.csit && *t == v.topology).expect("cached").2;
        for &engine in &m.engines {
            let mut row = ResultRow::skeleton(p, v, engine);
            let outcome = stats.as_ref().map_err(Clone::clone).and_then(|s| match engine {
                Engine::De => de_rates_with(s, &cfg, &imp, &m.de).map(|d| {
                    row.t = Some(d.t);
                    row.de_iterations = Some(d.iterations);
                    row.de_residual = Some(d.residual);
                    d.report
                }),
                Engine::Mc => {
                    let opts = McOptions { trials: m.trials, workers: None, point: p.index as u32, de: m.de.clone() };
                    run_monte_carlo_with(s, &cfg, &imp, &opts).map(|r| {
                        row.t = Some(r.t);
                        r.report
                    })
                }
            });
            match outcome {
                Ok(rep) => {
                    row.sum_rate = rep.sum_rate;
                    row.common_rate = rep.common_rate;
                    row.private_rates = rep.private_rates;
                    row.ci95 = rep.ci_half_width;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            rows.push(row);
        }
    }
    rows
}

/// Runs the whole grid, writing rows to `sink` in grid order and flushing
/// after every batch of points. Engine errors are recorded in their rows.
pub fn run_manifest<W: Write>(m: &Manifest, opts: &RunOptions, sink: &mut W) -> Result<RunSummary> {
    m.validate()?;
    let points = m.points();
    let batch = opts.workers.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = match opts.workers {
        Some(w) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    write_header(sink)?;
    let mut all = Vec::new();
    for chunk in points.chunks(batch) {
        let eval = || chunk.par_iter().map(|p| evaluate_point(m, p)).collect::<Vec<_>>();
        let results = match &pool {
            Some(pool) => pool.install(eval),
            None => eval(),
        };
        for row in results.into_iter().flatten() {
            writeln!(sink, "{}", row.to_tsv())?;
            all.push(row);
        }
        sink.flush()?;
    }
    let failures = all.iter().filter(|r| !r.is_ok()).count();
    Ok(RunSummary { rows: all, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(extra: &str) -> Manifest {
        Manifest::from_toml(&format!(
            "engines = [\"de\", \"mc\"]\ntrials = 4\nseed = 5\n[system]\nantennas = 6\nusers = 2\nblock_len = 20\nrho = \"10dB\"\n[impairments]\ndelta = 1e-3\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn row_round_trip() {
        let m = manifest("");
        let mut buf = Vec::new();
        let s = run_manifest(&m, &RunOptions::default(), &mut buf).unwrap();
        assert_eq!(s.failures, 0);
        assert_eq!(s.rows.len(), 16);
        let back = read_results(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back.len(), 16);
        for (a, b) in s.rows.iter().zip(&back) {
            assert_eq!(a.to_tsv(), b.to_tsv());
        }
    }

    #[test]
    fn engine_errors_are_recorded() {
        // A non-converging solver fails every row without aborting the run.
        let m = manifest("[de]\nmax_iter = 1\n");
        let mut buf = Vec::new();
        let s = run_manifest(&m, &RunOptions::default(), &mut buf).unwrap();
        assert!(s.failures > 0);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\terror: "));
        assert!(read_results(std::io::Cursor::new(text.as_bytes())).unwrap().iter().any(|r| !r.is_ok()));
    }

    #[test]
    fn rejects_wrong_schema() {
        assert!(read_results(std::io::Cursor::new(b"# schema-version: 9\n")).is_err());
        assert!(read_results(std::io::Cursor::new(b"point\n")).is_err());
    }
}
