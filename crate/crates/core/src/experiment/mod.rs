//! Seeded experiment harness: realization sweeps over graphs and plants,
//! training and evaluation of every controller on a shared test set,
//! normalization by the Riccati cost, aggregation and file output.

mod config;
mod run;

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{ExperimentConfig, ExperimentKind};
pub use run::{controller_spec, graph_seed, run_records, system_seed, ResultRecord};

use crate::error::{Error, Result};
use crate::network::Structure;
use crate::training::{fmt_cost, sample_std};

/// Describes the denominator of every `normalized_cost`.
pub const NORMALIZATION_NOTE: &str = "normalized_cost = mean test cost / mean test cost of the centralized \
finite-horizon Riccati controller on the same test states";

pub const RESULT_COLUMNS: [&str; 18] = [
    "experiment",
    "controller",
    "F",
    "K",
    "mu",
    "n_train",
    "n_test_graph",
    "graph_seed",
    "system_seed",
    "norm_a",
    "structure",
    "raw_cost",
    "normalized_cost",
    "traj_std",
    "divergences",
    "stability_simplified",
    "stability_prop1",
    "wall_ms",
];

/// Mean and spread of one group of values; non-finite values are counted
/// but excluded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    /// Infinite when every value is non-finite.
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub divergent: usize,
}

pub fn summarize(values: &[f64]) -> Stats {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Stats {
        mean,
        std: sample_std(&finite),
        count: values.len(),
        divergent: values.len() - finite.len(),
    }
}

/// Key identifying one table cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellKey {
    pub experiment: ExperimentKind,
    pub controller: String,
    #[serde(rename = "F")]
    pub features: Option<usize>,
    #[serde(rename = "K")]
    pub taps: Option<usize>,
    pub mu: Option<f64>,
    pub n_train: usize,
    pub n_test_graph: usize,
    pub norm_a: f64,
    pub structure: Structure,
}

impl CellKey {
    fn of(r: &ResultRecord) -> Self {
        CellKey {
            experiment: r.experiment,
            controller: r.controller.clone(),
            features: r.features,
            taps: r.taps,
            mu: r.mu,
            n_train: r.n_train,
            n_test_graph: r.n_test_graph,
            norm_a: r.norm_a,
            structure: r.structure,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    #[serde(flatten)]
    pub key: CellKey,
    pub normalized: Stats,
    pub raw: Stats,
    /// Divergent test trajectories summed over the cell's records.
    pub divergences: usize,
    /// Records whose simplified stability verdict holds.
    pub certified: usize,
}

/// Groups records by cell, in order of first appearance.
pub fn aggregate(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<CellKey> = Vec::new();
    let mut groups: Vec<Vec<&ResultRecord>> = Vec::new();
    for r in records {
        let k = CellKey::of(r);
        match keys.iter().position(|x| *x == k) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(k);
                groups.push(vec![r]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|(key, rs)| {
            let norm: Vec<f64> = rs.iter().map(|r| r.normalized_cost).collect();
            let raw: Vec<f64> = rs.iter().map(|r| r.raw_cost).collect();
            SummaryRow {
                key,
                normalized: summarize(&norm),
                raw: summarize(&raw),
                divergences: rs.iter().map(|r| r.divergences).sum(),
                certified: rs.iter().filter(|r| r.stability_simplified == Some(true)).count(),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub records: Vec<ResultRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    /// True when some cell diverged or failed.
    pub fn partial_failure(&self) -> bool {
        self.records.iter().any(ResultRecord::is_divergent)
    }

    pub fn write_results_csv<W: Write>(&self, out: W) -> Result<()> {
        write_results_csv(&self.records, out)
    }

    pub fn write_summary_json<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Failure<'a> {
            controller: &'a str,
            graph_seed: u64,
            system_seed: u64,
            n_test_graph: usize,
            error: &'a str,
        }
        #[derive(Serialize)]
        struct Row<'a> {
            #[serde(flatten)]
            key: &'a CellKey,
            count: usize,
            divergent_records: usize,
            mean_normalized_cost: Option<f64>,
            std_normalized_cost: f64,
            mean_raw_cost: Option<f64>,
            std_raw_cost: f64,
            divergences: usize,
            certified: usize,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            experiment: ExperimentKind,
            seed: u64,
            normalization: &'static str,
            config: ExperimentConfig,
            cells: Vec<Row<'a>>,
            failures: Vec<Failure<'a>>,
        }
        let finite = |v: f64| v.is_finite().then_some(v);
        let summary = Summary {
            experiment: self.config.experiment,
            seed: self.config.seed,
            normalization: NORMALIZATION_NOTE,
            config: ExperimentConfig {
                output_dir: None,
                ..self.config.clone()
            },
            cells: self
                .summary
                .iter()
                .map(|s| Row {
                    key: &s.key,
                    count: s.normalized.count,
                    divergent_records: s.normalized.divergent,
                    mean_normalized_cost: finite(s.normalized.mean),
                    std_normalized_cost: s.normalized.std,
                    mean_raw_cost: finite(s.raw.mean),
                    std_raw_cost: s.raw.std,
                    divergences: s.divergences,
                    certified: s.certified,
                })
                .collect(),
            failures: self
                .records
                .iter()
                .filter_map(|r| {
                    r.error.as_deref().map(|error| Failure {
                        controller: &r.controller,
                        graph_seed: r.graph_seed,
                        system_seed: r.system_seed,
                        n_test_graph: r.n_test_graph,
                        error,
                    })
                })
                .collect(),
        };
        serde_json::to_writer_pretty(&mut out, &summary)?;
        writeln!(out)?;
        Ok(())
    }

    /// Long-format plot data: mean normalized cost against `‖A‖` for the
    /// system-matrix study and against `N` for the transfer study. Other
    /// experiments produce no curve.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<bool> {
        let (curve, x_of): (&str, fn(&CellKey) -> f64) = match self.config.experiment {
            ExperimentKind::SystemMatrixStudy => ("cost_vs_norm_a", |k| k.norm_a),
            ExperimentKind::TransferStudy => ("cost_vs_n", |k| k.n_test_graph as f64),
            _ => return Ok(false),
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "curve",
            "controller",
            "F",
            "K",
            "structure",
            "x",
            "mean_normalized_cost",
            "std_normalized_cost",
            "count",
        ])?;
        for s in &self.summary {
            w.write_record([
                curve.to_string(),
                s.key.controller.clone(),
                opt(s.key.features),
                opt(s.key.taps),
                s.key.structure.as_str().to_string(),
                x_of(&s.key).to_string(),
                fmt_cost(s.normalized.mean),
                s.normalized.std.to_string(),
                s.normalized.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(true)
    }

    /// Writes `<experiment>_results.csv`, `<experiment>_summary.json` and,
    /// where applicable, `<experiment>_curve.csv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let stem = self.config.experiment.as_str();
        let mut written = Vec::new();
        let results = dir.join(format!("{stem}_results.csv"));
        self.write_results_csv(fs::File::create(&results)?)?;
        written.push(results);
        let summary = dir.join(format!("{stem}_summary.json"));
        self.write_summary_json(fs::File::create(&summary)?)?;
        written.push(summary);
        let mut curve = Vec::new();
        if self.write_curve_csv(&mut curve)? {
            let path = dir.join(format!("{stem}_curve.csv"));
            fs::write(&path, curve)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The results table with the fixed column order of [`RESULT_COLUMNS`].
pub fn write_results_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in records {
        w.write_record([
            r.experiment.as_str().to_string(),
            r.controller.clone(),
            opt(r.features),
            opt(r.taps),
            opt(r.mu),
            r.n_train.to_string(),
            r.n_test_graph.to_string(),
            r.graph_seed.to_string(),
            r.system_seed.to_string(),
            r.norm_a.to_string(),
            r.structure.as_str().to_string(),
            fmt_cost(r.raw_cost),
            fmt_cost(r.normalized_cost),
            r.traj_std.to_string(),
            r.divergences.to_string(),
            opt(r.stability_simplified),
            opt(r.stability_prop1),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a table written by [`write_results_csv`]. Stability reports and
/// error strings are not part of the table and come back as `None`.
pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(RESULT_COLUMNS) {
        return Err(Error::InvalidArgument(format!(
            "unexpected results header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut records = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let bad = |col: usize| Error::InvalidArgument(format!("row {}: bad {} {:?}", line + 1, RESULT_COLUMNS[col], &row[col]));
        fn num<T: std::str::FromStr>(s: &str) -> Option<T> {
            s.parse().ok()
        }
        fn maybe<T: std::str::FromStr>(s: &str) -> Option<Option<T>> {
            if s.is_empty() {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        }
        records.push(ResultRecord {
            experiment: row[0].parse().map_err(|_| bad(0))?,
            controller: row[1].to_string(),
            features: maybe(&row[2]).ok_or_else(|| bad(2))?,
            taps: maybe(&row[3]).ok_or_else(|| bad(3))?,
            mu: maybe(&row[4]).ok_or_else(|| bad(4))?,
            n_train: num(&row[5]).ok_or_else(|| bad(5))?,
            n_test_graph: num(&row[6]).ok_or_else(|| bad(6))?,
            graph_seed: num(&row[7]).ok_or_else(|| bad(7))?,
            system_seed: num(&row[8]).ok_or_else(|| bad(8))?,
            norm_a: num(&row[9]).ok_or_else(|| bad(9))?,
            structure: row[10].parse().map_err(|_| bad(10))?,
            raw_cost: num(&row[11]).ok_or_else(|| bad(11))?,
            normalized_cost: num(&row[12]).ok_or_else(|| bad(12))?,
            traj_std: num(&row[13]).ok_or_else(|| bad(13))?,
            divergences: num(&row[14]).ok_or_else(|| bad(14))?,
            stability_simplified: maybe(&row[15]).ok_or_else(|| bad(15))?,
            stability_prop1: maybe(&row[16]).ok_or_else(|| bad(16))?,
            wall_ms: num(&row[17]).ok_or_else(|| bad(17))?,
            stability: None,
            error: None,
        });
    }
    Ok(records)
}

/// Runs the configured experiment and, when `output_dir` is set, writes
/// its files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let records = run_records(cfg)?;
    let summary = aggregate(&records);
    let out = ExperimentOutput {
        config: cfg.clone(),
        records,
        summary,
    };
    if let Some(dir) = &cfg.output_dir {
        out.write_all(dir)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
