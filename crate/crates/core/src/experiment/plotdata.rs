//! Figure-ready series extracted from a result table.

use std::io::Write;

use super::runner::ResultRow;
use crate::config::Engine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    RhoDb,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Figure {
    pub id: &'static str,
    pub x: XAxis,
    /// Series are further split by the number of users.
    pub by_users: bool,
}

pub const FIGURES: [Figure; 9] = [
    Figure { id: "fig1", x: XAxis::RhoDb, by_users: false },
    Figure { id: "fig2", x: XAxis::RhoDb, by_users: false },
    Figure { id: "fig3", x: XAxis::RhoDb, by_users: false },
    Figure { id: "fig4", x: XAxis::Delta, by_users: false },
    Figure { id: "fig5", x: XAxis::Delta, by_users: false },
    Figure { id: "fig6", x: XAxis::RhoDb, by_users: false },
    Figure { id: "fig7", x: XAxis::RhoDb, by_users: false },
    Figure { id: "fig8", x: XAxis::RhoDb, by_users: false },
    Figure { id: "fig9", x: XAxis::RhoDb, by_users: true },
];

pub fn figure(id: &str) -> Result<Figure> {
    FIGURES
        .iter()
        .find(|f| f.id == id)
        .copied()
        .ok_or_else(|| Error::Parse(format!("unknown figure id {id:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub x: f64,
    pub series: String,
    pub engine: Engine,
    pub y: f64,
    /// Monte Carlo confidence half-width; absent for DE rows.
    pub ci: Option<f64>,
}

/// Sum-rate series for a figure, ordered by series, engine, then `x`.
/// Failed rows are skipped.
pub fn emit_plotdata(rows: &[ResultRow], id: &str) -> Result<Vec<PlotRow>> {
    let fig = figure(id)?;
    let mut out: Vec<PlotRow> = rows
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| PlotRow {
            x: match fig.x {
                XAxis::RhoDb => r.rho_db,
                XAxis::Delta => r.delta,
            },
            series: if fig.by_users { format!("K={}/{}", r.users, r.curve()) } else { r.curve() },
            engine: r.engine,
            y: r.sum_rate,
            ci: r.ci95,
        })
        .collect();
    out.sort_by(|a, b| {
        a.series
            .cmp(&b.series)
            .then((a.engine as u8).cmp(&(b.engine as u8)))
            .then(a.x.total_cmp(&b.x))
    });
    Ok(out)
}

pub fn series_names(rows: &[PlotRow]) -> Vec<String> {
    let mut names: Vec<String> = rows.iter().map(|r| r.series.clone()).collect();
    names.dedup();
    names
}

pub fn write_plotdata<W: Write>(rows: &[PlotRow], w: &mut W) -> Result<()> {
    writeln!(w, "x\tseries\tengine\ty\tci")?;
    for r in rows {
        let ci = r.ci.map(|c| format!("{c:.6}")).unwrap_or_else(|| "NA".into());
        writeln!(w, "{}\t{}\t{}\t{:.6}\t{}", r.x, r.series, r.engine, r.y, ci)?;
    }
    Ok(())
}
