//! `gradflow predict`: cumulant tables and the large-time KL prediction.

use std::io::Write;
use std::path::{Path, PathBuf};

use gradflow::{check_assumptions, AssumptionReport, CumulantTable, Grid, LogDensity};
use serde::Serialize;

use crate::config::Plan;
use crate::{create_file, file_stem, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub target: String,
    pub init: String,
    pub kappa2: f64,
    pub kappas: Vec<f64>,
    pub fingerprint: String,
    pub assumptions: AssumptionReport,
    /// Files written for this pair, relative to the output directory.
    pub cumulants: PathBuf,
    pub prediction: PathBuf,
}

/// Writes, for every initialization, the cumulant CSV, the prediction curve
/// `t, leading, series, closed_form` on `[0, T]`, and a diagnostics JSON.
pub fn cmd_predict(plan: &Plan, out: &Path) -> Result<Vec<Diagnostics>, CliError> {
    let cfg = &plan.config;
    let grid = Grid::new(cfg.n)?;
    let pi = LogDensity::from_potential(&plan.target, &grid)?;
    let target = cfg.target.display_name();
    let mut all = Vec::new();
    for (spec, init) in cfg.inits.iter().zip(&plan.inits) {
        let label = spec.display_name();
        let rho0 = LogDensity::from_potential(init, &grid)?;
        let table = CumulantTable::build(&rho0, &pi, cfg.cumulant_order)?;
        let stem = file_stem(&[&target, &label]);
        let dir = PathBuf::from("predict");

        let cumulants = dir.join(format!("cumulants__{stem}.csv"));
        table.write_csv(create_file(&out.join(&cumulants))?)?;

        let prediction = dir.join(format!("prediction__{stem}.csv"));
        let mut f = create_file(&out.join(&prediction))?;
        writeln!(f, "t,leading,series,closed_form")?;
        let steps = (cfg.horizon / cfg.record_dt).round() as usize;
        let kappa2 = table.kappa(2);
        for j in 0..=steps {
            let t = (j as f64 * cfg.record_dt).min(cfg.horizon);
            let leading = kappa2 / 2.0 * (-2.0 * t).exp();
            let series = table.kl_series(t, table.max_order())?;
            let closed = table.kl_closed_form(-(-t).exp_m1())?;
            writeln!(f, "{:.16e},{:.16e},{:.16e},{:.16e}", t, leading, series, closed)?;
        }
        f.flush()?;

        let d = Diagnostics {
            target: target.clone(),
            init: label,
            kappa2,
            kappas: table.kappas().to_vec(),
            fingerprint: table.fingerprint().to_string(),
            assumptions: check_assumptions(&rho0, &pi, 0.0)?,
            cumulants,
            prediction,
        };
        let mut f = create_file(&out.join(dir.join(format!("diagnostics__{stem}.json"))))?;
        serde_json::to_writer_pretty(&mut f, &d)?;
        f.flush()?;
        all.push(d);
    }
    Ok(all)
}
