use std::path::Path;

use rayon::prelude::*;

use super::config::{ExperimentConfig, Variant};
use super::train::{load_datasets, run_on, AbortDiagnostic, RunOutcome};
use crate::error::{Error, Result};

/// Mean and sample standard deviation of the test metric at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub iteration: u64,
    pub mean: f64,
    /// Uses the `n − 1` divisor; NaN when `n < 2`.
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortedRun {
    pub variant: String,
    pub diagnostic: AbortDiagnostic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    /// Rows ordered by variant (config order), then iteration.
    pub rows: Vec<SummaryRow>,
    /// Seeds excluded from the statistics because their run aborted.
    pub aborted: Vec<AbortedRun>,
}

impl SummaryTable {
    pub fn row(&self, variant: &str, iteration: u64) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.iteration == iteration)
    }
}

/// Mean and `n − 1` standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Aggregates completed runs of each variant at every checkpoint. Aborted
/// runs are listed separately and contribute nothing to the statistics.
pub fn summarize(variant_runs: &[(String, Vec<RunOutcome>)], checkpoints: &[u64]) -> SummaryTable {
    let mut rows = Vec::new();
    let mut aborted = Vec::new();
    for (variant, runs) in variant_runs {
        let complete: Vec<&RunOutcome> = runs.iter().filter(|r| r.abort.is_none()).collect();
        for run in runs {
            if let Some(d) = &run.abort {
                aborted.push(AbortedRun {
                    variant: variant.clone(),
                    diagnostic: d.clone(),
                });
            }
        }
        for &it in checkpoints {
            let values: Vec<f64> = complete
                .iter()
                .filter_map(|r| r.records.iter().find(|m| m.iteration == it))
                .map(|m| m.test_metric)
                .collect();
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                variant: variant.clone(),
                iteration: it,
                mean,
                std,
                n: values.len(),
            });
        }
    }
    SummaryTable { rows, aborted }
}

/// Raw outcomes of each variant, in seed order.
pub type VariantRuns = Vec<(String, Vec<RunOutcome>)>;

/// Runs every configured variant over `seeds` and summarizes.
///
/// Runs execute in parallel; results are ordered by variant and seed, so
/// the table does not depend on scheduling.
pub fn repeat_runs(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<(SummaryTable, VariantRuns)> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!(
            "summaries need at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let variant_cfgs: Vec<(Variant, ExperimentConfig)> = cfg
        .variants
        .iter()
        .map(|&v| Ok((v, cfg.for_variant(v)?)))
        .collect::<Result<_>>()?;
    let (train, test) = load_datasets(cfg)?;
    let jobs: Vec<(usize, u64)> = (0..variant_cfgs.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(v, seed)| run_on(&variant_cfgs[v].1, seed, &train, &test))
        .collect::<Result<_>>()?;
    let mut per_variant: Vec<(String, Vec<RunOutcome>)> = variant_cfgs
        .iter()
        .map(|(v, _)| (v.to_string(), Vec::with_capacity(seeds.len())))
        .collect();
    for (&(v, _), outcome) in jobs.iter().zip(outcomes) {
        per_variant[v].1.push(outcome);
    }
    Ok((summarize(&per_variant, &cfg.checkpoints), per_variant))
}

pub const SUMMARY_HEADER: &str = "variant,iteration,mean,std,n";

/// `v` with 6 significant digits, trailing zeros trimmed.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..6).contains(&exp) {
        trim(&format!("{:.*}", (5 - exp).max(0) as usize, v))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

pub fn write_summary_csv<W: std::io::Write>(table: &SummaryTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "<summary csv>".into(),
        source: e.into(),
    };
    w.write_record(SUMMARY_HEADER.split(',')).map_err(io)?;
    for r in &table.rows {
        w.write_record([
            r.variant.clone(),
            r.iteration.to_string(),
            format_sig6(r.mean),
            format_sig6(r.std),
            r.n.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<summary csv>".into(),
        source: e,
    })
}

/// Writes the summary CSV to `path`.
pub fn emit_csv(table: &SummaryTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary_csv(table, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| format(e.to_string()))?;
    let header = r.headers().map_err(|e| format(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != SUMMARY_HEADER {
        return Err(format(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| format(format!("cannot parse `{}` in {rec:?}", field(i)));
        rows.push(SummaryRow {
            variant: field(0).to_string(),
            iteration: field(1).parse().map_err(|_| bad(1))?,
            mean: field(2).parse().map_err(|_| bad(2))?,
            std: field(3).parse().map_err(|_| bad(3))?,
            n: field(4).parse().map_err(|_| bad(4))?,
        });
    }
    Ok(rows)
}

/// Per-checkpoint records of single runs:
/// `seed,iteration,train_loss,test_metric,wall_ms`.
pub fn write_records_csv<W: std::io::Write>(outcome: &RunOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "<records csv>".into(),
        source: e.into(),
    };
    w.write_record(["seed", "iteration", "train_loss", "test_metric", "wall_ms"])
        .map_err(io)?;
    for m in &outcome.records {
        w.write_record([
            m.seed.to_string(),
            m.iteration.to_string(),
            format_sig6(m.train_loss),
            format_sig6(m.test_metric),
            format!("{:.0}", m.wall_ms),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<records csv>".into(),
        source: e,
    })
}
