//! `gradflow plot`: KL decay and energy figures as SVG.

use std::fs;
use std::path::{Path, PathBuf};

use gradflow::analysis::parse_trace_csv;
use gradflow::{CumulantTable, FlowKind, Grid, LogDensity, Potential};

use crate::config::{ExperimentConfig, Plan};
use crate::runner::{Manifest, MANIFEST};
use crate::svg::{Dash, Figure, Series, PALETTE};
use crate::{file_stem, CliError};

#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub out: PathBuf,
    pub width: u32,
    pub height: u32,
    pub linear: bool,
    pub overlay: bool,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { out: PathBuf::from("out/plots"), width: 720, height: 480, linear: false, overlay: true }
    }
}

fn dash(kind: FlowKind) -> (Dash, f64) {
    match kind {
        FlowKind::FisherRao => (Dash::Solid, 1.8),
        FlowKind::WassersteinFisherRao => (Dash::DashDot, 1.8),
        FlowKind::Wasserstein => (Dash::Dashed, 1.8),
        FlowKind::FisherRaoExact => (Dash::Solid, 0.8),
    }
}

fn figure(opts: &PlotOptions, title: String, x: &str, y: &str, log_y: bool) -> Figure {
    let mut f = Figure::new(title, x, y, log_y);
    f.width = opts.width;
    f.height = opts.height;
    f
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let parsed = parse_trace_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if parsed.rows.is_empty() {
        return Err(CliError::Runtime(format!("{}: trace has no rows", path.display())));
    }
    Ok(parsed.rows.iter().map(|r| (r.t, r.kl)).collect())
}

fn write_svg(path: &Path, fig: &Figure) -> Result<PathBuf, CliError> {
    let svg = fig.render()?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, svg).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

/// Dotted `(κ₂/2) e^{-2t}` for each initialization of a config.
fn overlays(plan: &Plan, t_max: f64, colors: &[String]) -> Result<Vec<Series>, CliError> {
    let grid = Grid::new(plan.config.n)?;
    let pi = LogDensity::from_potential(&plan.target, &grid)?;
    let mut out = Vec::new();
    for (i, init) in plan.inits.iter().enumerate() {
        let rho0 = LogDensity::from_potential(init, &grid)?;
        let k2 = CumulantTable::build(&rho0, &pi, 2)?.kappa(2);
        let points = (0..=200).map(|j| t_max * j as f64 / 200.0).map(|t| (t, k2 / 2.0 * (-2.0 * t).exp())).collect();
        out.push(Series {
            name: format!("kappa2/2 e^(-2t), {}", plan.config.inits[i].display_name()),
            points,
            color: colors[i % colors.len()].clone(),
            dash: Dash::Dotted,
            width: 1.4,
        });
    }
    Ok(out)
}

/// `V(x)` for the target and every initialization.
pub fn energy_figure(plan: &Plan, opts: &PlotOptions) -> Result<Figure, CliError> {
    let grid = Grid::new(plan.config.n)?;
    let mut fig = figure(opts, format!("Energies, target {}", plan.config.target.display_name()), "x", "V(x)", false);
    let stride = (grid.len() / 500).max(1);
    let mut add = |p: &Potential, name: String, color: &str, dash: Dash| -> Result<(), CliError> {
        let v = p.eval(&grid)?;
        let points = grid.points().iter().zip(&v).step_by(stride).map(|(x, y)| (*x, *y)).collect();
        fig.series.push(Series { name, points, color: color.into(), dash, width: 1.8 });
        Ok(())
    };
    add(&plan.target, plan.config.target.display_name(), "black", Dash::Solid)?;
    for (i, p) in plan.inits.iter().enumerate() {
        add(p, plan.config.inits[i].display_name(), PALETTE[i % PALETTE.len()], Dash::Dashed)?;
    }
    Ok(fig)
}

/// Figures for one `gradflow run` output directory: KL curves of every run
/// with the leading-order overlays, and the energies.
pub fn plot_run_dir(dir: &Path, opts: &PlotOptions) -> Result<Vec<PathBuf>, CliError> {
    let manifest = Manifest::read(dir)?;
    let plan = manifest.config.validate(true)?;
    let target = manifest.config.target.display_name();
    let inits: Vec<String> = manifest.config.inits.iter().map(|s| s.display_name()).collect();
    let colors: Vec<String> = PALETTE.iter().map(|c| c.to_string()).collect();

    let mut fig = figure(opts, format!("KL divergence to {target}"), "t", "KL(rho_t | pi)", !opts.linear);
    let mut t_max: f64 = 0.0;
    for r in &manifest.runs {
        let points = read_points(&dir.join(&r.trace))?;
        t_max = points.iter().fold(t_max, |m, p| m.max(p.0));
        let i = inits.iter().position(|n| *n == r.init).unwrap_or(0);
        let (d, w) = dash(r.flow);
        fig.series.push(Series {
            name: format!("{} {}", r.flow.label(), r.init),
            points,
            color: colors[i % colors.len()].clone(),
            dash: d,
            width: w,
        });
    }
    if opts.overlay {
        fig.series.extend(overlays(&plan, t_max, &colors)?);
    }
    let stem = file_stem(&[&target]);
    let mut written = vec![write_svg(&opts.out.join(format!("kl__{stem}.svg")), &fig)?];
    written.push(write_svg(&opts.out.join(format!("energies__{stem}.svg")), &energy_figure(&plan, opts)?)?);
    Ok(written)
}

/// One figure with the KL column of each trace CSV; legends come from the file names.
pub fn plot_traces(paths: &[PathBuf], opts: &PlotOptions, name: &str) -> Result<PathBuf, CliError> {
    let mut fig = figure(opts, "KL divergence".to_string(), "t", "KL(rho_t | pi)", !opts.linear);
    for (i, p) in paths.iter().enumerate() {
        let label = p.file_stem().map(|s| s.to_string_lossy().replace("__", " ")).unwrap_or_default();
        let kind = label.split(' ').next().and_then(|k| k.parse::<FlowKind>().ok());
        let (d, w) = kind.map(dash).unwrap_or((Dash::Solid, 1.8));
        fig.series.push(Series {
            name: label,
            points: read_points(p)?,
            color: PALETTE[i % PALETTE.len()].into(),
            dash: d,
            width: w,
        });
    }
    write_svg(&opts.out.join(format!("{name}.svg")), &fig)
}

/// Run directories, trace CSVs, or both; `config` adds an energy plot.
pub fn cmd_plot(inputs: &[PathBuf], config: Option<&ExperimentConfig>, opts: &PlotOptions) -> Result<Vec<PathBuf>, CliError> {
    if inputs.is_empty() && config.is_none() {
        return Err(CliError::Config(vec!["plot needs at least one run directory, trace CSV or --config".into()]));
    }
    let mut written = Vec::new();
    let mut csvs = Vec::new();
    for p in inputs {
        if p.is_dir() {
            if !p.join(MANIFEST).exists() {
                return Err(CliError::Runtime(format!("{}: no {MANIFEST} in directory", p.display())));
            }
            written.extend(plot_run_dir(p, opts)?);
        } else {
            csvs.push(p.clone());
        }
    }
    if !csvs.is_empty() {
        written.push(plot_traces(&csvs, opts, "kl")?);
    }
    if let Some(cfg) = config {
        let plan = cfg.validate(true)?;
        let stem = file_stem(&[&cfg.target.display_name()]);
        written.push(write_svg(&opts.out.join(format!("energies__{stem}.svg")), &energy_figure(&plan, opts)?)?);
    }
    Ok(written)
}
