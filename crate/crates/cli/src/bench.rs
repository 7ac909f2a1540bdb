//! ESS-per-second comparison of IS-pred, IS-prior and HMC.

use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wppl::derive_seed;
use wppl::lang::Program;
use wppl::samplers::{ess_chains, ess_weights, hmc, snis_prior, HmcConfig};
use wppl::whitebox::{is_pred, NetworkBank, ScanCounter};
use wppl::Model;

use crate::stats::{geometric_mean, quantile};
use crate::CliError;

pub const METHODS: [&str; 3] = ["hmc", "is_pred", "is_prior"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub program: String,
    pub method: String,
    pub ess: f64,
    /// `None` when timing is disabled.
    pub time_ms: Option<f64>,
}

impl BenchRow {
    pub fn ess_per_sec(&self) -> Option<f64> {
        self.time_ms.map(|t| self.ess / (t / 1000.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Program scans made by IS-pred, per program.
    pub is_pred_scans: Vec<u64>,
}

pub struct BenchConfig {
    pub samples: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Record wall-clock times.
    pub timed: bool,
    /// Timed runs per method and program; the fastest is reported. Every
    /// run uses the same seed, so the ESS does not depend on this.
    pub repeats: usize,
}

impl BenchConfig {
    fn measure<T>(&self, mut f: impl FnMut() -> Result<T, CliError>) -> Result<(T, Option<f64>), CliError> {
        let t = Instant::now();
        let out = f()?;
        let mut best = t.elapsed().as_secs_f64();
        if !self.timed {
            return Ok((out, None));
        }
        for _ in 1..self.repeats {
            let t = Instant::now();
            f()?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        Ok((out, Some(best * 1000.0)))
    }
}

/// Run the three methods on every program with `samples` draws each.
/// HMC runs one chain with `warmup` extra transitions; its ESS is the
/// smallest over coordinates. Times include building the density.
pub fn run_bench(bank: &NetworkBank, programs: &[(String, Program)], cfg: &BenchConfig) -> Result<BenchResult, CliError> {
    let mut rows = Vec::new();
    let mut scans = Vec::new();
    for (i, (label, p)) in programs.iter().enumerate() {
        let seed = derive_seed(cfg.seed, i as u64);
        let row = |method: &str, ess: f64, time_ms| BenchRow {
            program: label.clone(),
            method: method.to_string(),
            ess,
            time_ms,
        };

        let mut counts = Vec::new();
        let ((_, ws), t) = cfg.measure(|| {
            let counter = ScanCounter::new();
            let out = is_pred(bank, p, cfg.samples, derive_seed(seed, 0), &counter)?;
            counts.push(counter.get());
            Ok(out)
        })?;
        scans.push(counts[0]);
        let pred = row("is_pred", ess_weights(&ws)?, t);

        let (ws, t) = cfg.measure(|| Ok(snis_prior(&Model::new(p)?, cfg.samples, derive_seed(seed, 1))?))?;
        let prior = row("is_prior", ess_weights(&ws)?, t);

        let hcfg = HmcConfig {
            warmup: cfg.warmup,
            samples: cfg.samples,
            chains: 1,
            seed: derive_seed(seed, 2),
            serial: true,
            ..HmcConfig::default()
        };
        let (out, t) = cfg.measure(|| Ok(hmc(&Model::new(p)?, &hcfg)?))?;
        let mut ess = f64::INFINITY;
        for k in 0..p.latent_count() {
            ess = ess.min(ess_chains(&out.traces(k))?);
        }
        rows.push(row("hmc", ess, t));
        rows.push(pred);
        rows.push(prior);
    }
    Ok(BenchResult {
        rows,
        is_pred_scans: scans,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_rows_csv<W: Write>(rows: &[BenchRow], mut w: W) -> io::Result<()> {
    writeln!(w, "program,method,ess,time_ms,ess_per_sec")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.program, r.method, r.ess, opt(r.time_ms), opt(r.ess_per_sec()))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    /// `gm`, `q1`, `median` or `q3`.
    pub stat: String,
    pub ess: f64,
    pub time_ms: Option<f64>,
    pub ess_per_sec: Option<f64>,
}

/// Geometric mean and interpolated quartiles per method.
pub fn summarise(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for method in METHODS {
        let of = |f: &dyn Fn(&BenchRow) -> Option<f64>| -> Option<Vec<f64>> {
            rows.iter().filter(|r| r.method == method).map(f).collect()
        };
        let ess = of(&|r| Some(r.ess)).unwrap_or_default();
        if ess.is_empty() {
            continue;
        }
        let time = of(&|r| r.time_ms);
        let eps = of(&|r| r.ess_per_sec());
        let stats: [(&str, &dyn Fn(&[f64]) -> f64); 4] = [
            ("gm", &geometric_mean),
            ("q1", &|x| quantile(x, 0.25)),
            ("median", &|x| quantile(x, 0.5)),
            ("q3", &|x| quantile(x, 0.75)),
        ];
        for (stat, f) in stats {
            out.push(SummaryRow {
                method: method.to_string(),
                stat: stat.to_string(),
                ess: f(&ess),
                time_ms: time.as_deref().map(f),
                ess_per_sec: eps.as_deref().map(f),
            });
        }
    }
    out
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> io::Result<()> {
    writeln!(w, "method,stat,ess,time_ms,ess_per_sec")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.method, r.stat, r.ess, opt(r.time_ms), opt(r.ess_per_sec))?;
    }
    Ok(())
}
