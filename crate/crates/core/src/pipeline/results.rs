//! Result tables, CSV output and plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::config::{Mode, Setting};

pub const CSV_HEADER: &str = "mode,model,n_train,rep,accuracy,alpha,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub setting: Setting,
    pub model: String,
    pub n_train: usize,
    /// `None` marks the aggregate row.
    pub rep: Option<usize>,
    pub accuracy: f64,
    pub alpha: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    /// Appends per-repetition rows followed by their mean row.
    pub fn push_group(&mut self, reps: Vec<ResultRow>) {
        let Some(first) = reps.first().cloned() else { return };
        let n = reps.len() as f64;
        let accuracy = reps.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let alpha = if reps.iter().all(|r| r.alpha.is_some()) {
            Some(reps.iter().filter_map(|r| r.alpha).sum::<f64>() / n)
        } else {
            None
        };
        let seconds = if reps.iter().all(|r| r.seconds.is_some()) {
            Some(reps.iter().filter_map(|r| r.seconds).sum::<f64>())
        } else {
            None
        };
        self.rows.extend(reps);
        self.rows.push(ResultRow {
            rep: None,
            accuracy,
            alpha,
            seconds,
            ..first
        });
    }

    pub fn extend(&mut self, other: ResultsTable) {
        self.rows.extend(other.rows);
    }

    /// Aggregate rows only.
    pub fn means(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.rep.is_none())
    }

    /// Mean accuracy of the aggregate row matching `label` and `n_train`.
    pub fn mean_accuracy(&self, label: &str, n_train: usize) -> Option<f64> {
        self.means()
            .find(|r| r.setting.label() == label && r.n_train == n_train)
            .map(|r| r.accuracy)
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::InvalidArgument("cannot write an empty results table".into()));
        }
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let rep = r.rep.map(|v| v.to_string()).unwrap_or_else(|| "mean".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{}",
                r.setting.label(),
                r.model,
                r.n_train,
                rep,
                r.accuracy,
                opt(r.alpha),
                opt(r.seconds)
            );
        }
        Ok(out)
    }
}

pub fn emit_results_csv(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_csv()?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    KeepFraction,
    NTrain,
}

impl std::str::FromStr for PlotAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep" | "keep_fraction" => Ok(PlotAxis::KeepFraction),
            "ntrain" | "n_train" => Ok(PlotAxis::NTrain),
            _ => Err(Error::Config(format!("unknown plot axis {s:?} (expected keep or ntrain)"))),
        }
    }
}

/// Plot data as text: one block per series (`# <series>` then `x accuracy`
/// lines sorted by x), blocks separated by two blank lines.
pub fn plot_data(tables: &[ResultsTable], axis: PlotAxis) -> Result<String> {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in tables.iter().flat_map(|t| t.means()) {
        let (name, x) = match axis {
            PlotAxis::NTrain => (format!("{} {}", row.setting.label(), row.model), row.n_train as f64),
            PlotAxis::KeepFraction => {
                if row.setting.mode != Mode::Prune {
                    return Err(Error::InvalidArgument(format!(
                        "keep-fraction plot given a {} row",
                        row.setting.label()
                    )));
                }
                (
                    format!("prune {} n_train={}", row.model, row.n_train),
                    row.setting.keep.unwrap_or(1.0),
                )
            }
        };
        let points = series.entry(name.clone()).or_default();
        if points.iter().any(|p| p.0 == x) {
            return Err(Error::InvalidArgument(format!(
                "series {name:?} has two points at x = {x}; tables mix axes"
            )));
        }
        points.push((x, row.accuracy));
    }
    if series.is_empty() {
        return Err(Error::InvalidArgument("no aggregate rows to plot".into()));
    }
    let mut out = String::new();
    for (i, (name, mut points)) in series.into_iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let _ = writeln!(out, "# {name}");
        for (x, y) in points {
            let _ = writeln!(out, "{x} {y:.6}");
        }
    }
    Ok(out)
}

pub fn emit_plot_data(tables: &[ResultsTable], axis: PlotAxis, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, plot_data(tables, axis)?).map_err(|e| Error::io(path, e))
}
