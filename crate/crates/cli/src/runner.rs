//! `gradflow run`: the flow sweep and its artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gradflow::analysis::{render_slope_table, write_slopes_csv};
use gradflow::{
    run, slope, slope_additivity_report, theory_residual, AdditivityReport, CumulantTable, FlowKind, FlowTrace,
    Grid, LogDensity, SlopeEntry, SlopeEstimate, TraceMeta,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Job, Plan};
use crate::{create_file, file_stem, CliError};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub order: usize,
    pub file: PathBuf,
    /// `max |residual| e^{3t}` over recorded `t >= 3`.
    pub scaled_max: Option<f64>,
    pub scaled_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub flow: FlowKind,
    pub target: String,
    pub init: String,
    /// Relative to the output directory.
    pub trace: PathBuf,
    pub meta: TraceMeta,
    pub rows: usize,
    pub failed: Option<String>,
    pub window: Option<(f64, f64)>,
    pub slope: Option<SlopeEstimate>,
    pub slope_error: Option<String>,
    pub residual: Option<ResidualSummary>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditivityRow {
    pub init: String,
    pub report: AdditivityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: crate::ExperimentConfig,
    pub n: usize,
    pub h: f64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub runs: Vec<RunRecord>,
    pub additivity: Vec<AdditivityRow>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn slope_entries(&self) -> Vec<SlopeEntry> {
        self.runs
            .iter()
            .filter_map(|r| {
                r.slope.map(|estimate| SlopeEntry {
                    target: r.target.clone(),
                    init: r.init.clone(),
                    kind: r.flow,
                    estimate,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: usize,
}

/// Outcome of a sweep; `failures` lists runs that diverged.
#[derive(Debug)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub failures: Vec<String>,
}

fn execute(job: &Job, plan: &Plan, out: &Path) -> Result<RunRecord, CliError> {
    let start = Instant::now();
    let cfg = &job.run;
    info!("{} {}/{}: starting", cfg.kind, cfg.target_label, cfg.init_label);
    let (trace, failed) = match run(cfg) {
        Ok(t) => (t, None),
        Err(f) => match f.partial {
            Some(t) => (t, Some(f.error.to_string())),
            None => return Err(f.error.into()),
        },
    };
    let stem = file_stem(&[cfg.kind.label(), &cfg.target_label, &cfg.init_label]);
    let rel = PathBuf::from("traces").join(format!("{stem}.csv"));
    trace.write_csv(create_file(&out.join(&rel))?)?;

    let (mut slope_est, mut slope_error) = (None, None);
    if let Some((t1, t2)) = job.window {
        match slope(&trace, t1, t2) {
            Ok(s) => slope_est = Some(s),
            Err(e) => slope_error = Some(e.to_string()),
        }
    }

    let mut residual = None;
    if matches!(cfg.kind, FlowKind::FisherRao | FlowKind::FisherRaoExact) && failed.is_none() {
        let grid = Grid::new(cfg.n)?;
        let pi = LogDensity::from_potential(&plan.target, &grid)?;
        let rho0 = LogDensity::from_potential(&plan.inits[job.init_index], &grid)?;
        let order = plan.config.cumulant_order;
        let table = CumulantTable::build(&rho0, &pi, order)?;
        let report = theory_residual(&trace, &table, 2)?;
        let rel = PathBuf::from("residuals").join(format!("{stem}.csv"));
        report.write_csv(create_file(&out.join(&rel))?)?;
        residual = Some(ResidualSummary {
            order: 2,
            file: rel,
            scaled_max: report.scaled_max,
            scaled_min: report.scaled_min,
        });
    }

    let wall = start.elapsed().as_secs_f64();
    match &failed {
        Some(e) => warn!("{} {}/{}: failed after {wall:.1}s: {e}", cfg.kind, cfg.target_label, cfg.init_label),
        None => info!("{} {}/{}: done in {wall:.1}s", cfg.kind, cfg.target_label, cfg.init_label),
    }
    Ok(RunRecord {
        flow: cfg.kind,
        target: cfg.target_label.clone(),
        init: cfg.init_label.clone(),
        trace: rel,
        meta: trace.meta.clone(),
        rows: trace.rows.len(),
        failed,
        window: job.window,
        slope: slope_est,
        slope_error,
        residual,
        wall_time_s: wall,
    })
}

fn additivity(runs: &[RunRecord]) -> Vec<AdditivityRow> {
    let mut inits: Vec<&str> = Vec::new();
    for r in runs {
        if !inits.contains(&r.init.as_str()) {
            inits.push(&r.init);
        }
    }
    inits
        .into_iter()
        .filter_map(|init| {
            let s = |k: FlowKind| runs.iter().find(|r| r.init == init && r.flow == k)?.slope.map(|s| s.slope);
            let report = slope_additivity_report(
                s(FlowKind::FisherRao)?,
                s(FlowKind::Wasserstein)?,
                s(FlowKind::WassersteinFisherRao)?,
            );
            Some(AdditivityRow { init: init.to_string(), report })
        })
        .collect()
}

fn report_text(manifest: &Manifest) -> String {
    let mut out = String::new();
    let entries = manifest.slope_entries();
    out.push_str("Large-time slopes of log KL\n\n");
    out.push_str(&render_slope_table(&entries));
    out.push_str("\nSlope windows (requested -> recorded rows)\n");
    for r in &manifest.runs {
        match (&r.slope, &r.slope_error) {
            (Some(s), _) => out.push_str(&format!(
                "  {:<8} {:<8} {:<8} ({}, {}) -> ({}, {})  slope {:.4}\n",
                r.flow.label(),
                r.target,
                r.init,
                s.t1,
                s.t2,
                s.t1_snapped,
                s.t2_snapped,
                s.slope
            )),
            (None, Some(e)) => {
                out.push_str(&format!("  {:<8} {:<8} {:<8} no slope: {e}\n", r.flow.label(), r.target, r.init))
            }
            (None, None) => {}
        }
    }
    if !manifest.additivity.is_empty() {
        out.push_str("\nWFR versus FR + W\n");
        for a in &manifest.additivity {
            let r = &a.report;
            out.push_str(&format!(
                "  {:<8} fr {:.4}  w {:.4}  wfr {:.4}  wfr - (fr + w) = {:+.4} (relative {:+.4})\n",
                a.init, r.fr, r.w, r.wfr, r.discrepancy, r.relative
            ));
        }
    }
    let residuals: Vec<&RunRecord> = manifest.runs.iter().filter(|r| r.residual.is_some()).collect();
    if !residuals.is_empty() {
        out.push_str("\nKL minus (kappa_2/2) e^(-2t), scaled by e^(3t) over t >= 3\n");
        for r in residuals {
            let s = r.residual.as_ref().expect("filtered");
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4e}"));
            out.push_str(&format!(
                "  {:<8} {:<8} min {}  max {}\n",
                r.flow.label(),
                r.init,
                fmt(s.scaled_min),
                fmt(s.scaled_max)
            ));
        }
    }
    for r in manifest.runs.iter().filter(|r| r.failed.is_some()) {
        out.push_str(&format!(
            "\nFAILED {} {}/{}: {}\n",
            r.flow.label(),
            r.target,
            r.init,
            r.failed.as_deref().unwrap_or("")
        ));
    }
    out
}

pub fn cmd_run(plan: &Plan, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let out = &opts.out;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let runs = pool.install(|| {
        plan.jobs
            .par_iter()
            .map(|job| execute(job, plan, out))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let grid = Grid::new(plan.config.n)?;
    let manifest = Manifest {
        config_hash: plan.config.hash(),
        config: plan.config.clone(),
        n: grid.len(),
        h: grid.spacing(),
        workers: opts.workers.max(1),
        wall_time_s: start.elapsed().as_secs_f64(),
        additivity: additivity(&runs),
        runs,
    };

    let entries = manifest.slope_entries();
    write_slopes_csv(&entries, create_file(&out.join("slopes.csv"))?)?;
    create_file(&out.join("slopes.txt"))?.write_all(report_text(&manifest).as_bytes())?;
    let mut f = create_file(&out.join(MANIFEST))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.flush()?;

    let failures = manifest
        .runs
        .iter()
        .filter_map(|r| r.failed.as_ref().map(|e| format!("{} {}/{}: {e}", r.flow, r.target, r.init)))
        .collect();
    Ok(RunSummary { manifest, failures })
}

/// Re-reads the manifest and every trace it lists, then recomputes the slopes.
pub fn reload_slopes(dir: &Path) -> Result<Vec<SlopeEntry>, CliError> {
    let manifest = Manifest::read(dir)?;
    let mut out = Vec::new();
    for r in &manifest.runs {
        let Some((t1, t2)) = r.window else { continue };
        let path = dir.join(&r.trace);
        let file = fs::File::open(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let trace = FlowTrace::read_csv(std::io::BufReader::new(file), r.meta.clone())?;
        if let Ok(estimate) = slope(&trace, t1, t2) {
            out.push(SlopeEntry { target: r.target.clone(), init: r.init.clone(), kind: r.flow, estimate });
        }
    }
    Ok(out)
}
