//! Explicit Euler integrators for the W, FR and WFR gradient flows of
//! `KL(·‖π)`, plus the exact FR solution along the annealing path.
//!
//! All integrators advance the log-density `x = log ρ` on the grid:
//!
//! * FR:  `x̃ = x + ε(-v - x)`, then `x = x̃ - log(h Σ e^{x̃})`
//! * W:   `x = x + ε(Δv + Δx + (∇v + ∇x)∇x)` with periodic central stencils
//! * WFR: both right-hand sides summed, then the FR renormalization
//!
//! The W update carries no renormalization of its own; the drift of its total
//! mass is tracked instead.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::{FlowTrace, TraceMeta, TraceRow};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measure::{self, log_integral_exp, LogDensity};
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlowKind {
    #[serde(rename = "FR")]
    FisherRao,
    #[serde(rename = "W")]
    Wasserstein,
    #[serde(rename = "WFR")]
    WassersteinFisherRao,
    #[serde(rename = "FR_exact")]
    FisherRaoExact,
}

impl FlowKind {
    pub const ALL: [FlowKind; 4] = [
        FlowKind::FisherRao,
        FlowKind::Wasserstein,
        FlowKind::WassersteinFisherRao,
        FlowKind::FisherRaoExact,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FlowKind::FisherRao => "FR",
            FlowKind::Wasserstein => "W",
            FlowKind::WassersteinFisherRao => "WFR",
            FlowKind::FisherRaoExact => "FR_exact",
        }
    }

    /// Whether the flow has a diffusion term subject to the explicit step limit.
    pub fn has_transport(self) -> bool {
        matches!(self, FlowKind::Wasserstein | FlowKind::WassersteinFisherRao)
    }

    pub fn is_pde(self) -> bool {
        self != FlowKind::FisherRaoExact
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FlowKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown flow kind {s:?}")))
    }
}

/// Largest stable explicit Euler step for the 3-point diffusion stencil.
pub fn cfl_limit(grid: &Grid) -> f64 {
    let h = grid.spacing();
    h * h / 2.0
}

/// `v`, `∇v` and `Δv` of the target potential on the grid.
#[derive(Debug, Clone)]
pub struct TargetFields {
    pub v: Vec<f64>,
    pub grad: Vec<f64>,
    pub lap: Vec<f64>,
}

impl TargetFields {
    pub fn new(target: &Potential, grid: &Grid) -> Result<Self> {
        Ok(Self {
            v: target.eval(grid)?,
            grad: target.eval_grad(grid)?,
            lap: target.eval_laplacian(grid)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    kind: FlowKind,
    grid: Grid,
    x: Vec<f64>,
    steps: u64,
    step_size: f64,
    renormalize: bool,
    drift: f64,
    grad_x: Vec<f64>,
    lap_x: Vec<f64>,
}

impl FlowState {
    pub fn new(kind: FlowKind, init: &LogDensity, step_size: f64) -> Result<Self> {
        if !kind.is_pde() {
            return Err(Error::InvalidParameter(
                "FR_exact has no time stepping; use fr_exact".into(),
            ));
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stepsize must be positive, got {step_size}"
            )));
        }
        let n = init.grid().len();
        Ok(Self {
            kind,
            grid: init.grid().clone(),
            x: init.logp().to_vec(),
            steps: 0,
            step_size,
            renormalize: kind != FlowKind::Wasserstein,
            drift: 0.0,
            grad_x: vec![0.0; n],
            lap_x: vec![0.0; n],
        })
    }

    /// Renormalize the W flow after each step (FR/WFR always renormalize).
    pub fn with_renormalization(mut self, on: bool) -> Self {
        if self.kind == FlowKind::Wasserstein {
            self.renormalize = on;
        }
        self
    }

    /// Refuses stepsizes above [`cfl_limit`] for flows with diffusion.
    pub fn check_cfl(&self) -> Result<()> {
        let limit = cfl_limit(&self.grid);
        if self.kind.has_transport() && self.step_size > limit {
            return Err(Error::CflViolation {
                eps: self.step_size,
                limit,
                h: self.grid.spacing(),
            });
        }
        Ok(())
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Flow time `k ε` after `k` steps.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.step_size
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// Current iterate; unnormalized for the W flow without renormalization.
    pub fn log_values(&self) -> &[f64] {
        &self.x
    }

    pub fn mass(&self) -> f64 {
        log_integral_exp(&self.grid, &self.x).exp()
    }

    /// Cumulative `|1 - ∫ e^x|` seen before each renormalization, or the
    /// current mass defect when the iterate is never renormalized.
    pub fn mass_drift(&self) -> f64 {
        if self.renormalize {
            self.drift
        } else {
            (1.0 - self.mass()).abs()
        }
    }

    /// The iterate as a probability density (renormalized copy for W).
    pub fn density(&self) -> Result<LogDensity> {
        LogDensity::from_unnormalized(&self.grid, self.x.clone())
            .map_err(|e| self.diverged(e.to_string()))
    }

    fn diverged(&self, reason: impl Into<String>) -> Error {
        Error::Diverged { t: self.time(), reason: reason.into() }
    }

    fn require(&self, kind: FlowKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidParameter(format!(
                "{kind} step called on a {} state",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn fr_step(&mut self, v_star: &[f64]) -> Result<()> {
        self.require(FlowKind::FisherRao)?;
        self.grid.check_len(v_star)?;
        self.advance(Some(v_star), None, 1.0)
    }

    pub fn w_step(&mut self, grad_v: &[f64], lap_v: &[f64]) -> Result<()> {
        self.require(FlowKind::Wasserstein)?;
        self.grid.check_len(grad_v)?;
        self.grid.check_len(lap_v)?;
        self.advance(None, Some((grad_v, lap_v)), 1.0)
    }

    pub fn wfr_step(&mut self, v_star: &[f64], grad_v: &[f64], lap_v: &[f64]) -> Result<()> {
        self.require(FlowKind::WassersteinFisherRao)?;
        self.grid.check_len(v_star)?;
        self.grid.check_len(grad_v)?;
        self.grid.check_len(lap_v)?;
        self.advance(Some(v_star), Some((grad_v, lap_v)), 1.0)
    }

    /// One step of whichever flow this state integrates.
    pub fn step(&mut self, target: &TargetFields) -> Result<()> {
        match self.kind {
            FlowKind::FisherRao => self.fr_step(&target.v),
            FlowKind::Wasserstein => self.w_step(&target.grad, &target.lap),
            FlowKind::WassersteinFisherRao => self.wfr_step(&target.v, &target.grad, &target.lap),
            FlowKind::FisherRaoExact => unreachable!("rejected in FlowState::new"),
        }
    }

    /// `x += ε (birth_death + transport_weight · transport)` and, when the
    /// state renormalizes, the log-space mass correction.
    fn advance(
        &mut self,
        v_star: Option<&[f64]>,
        fields: Option<(&[f64], &[f64])>,
        transport_weight: f64,
    ) -> Result<()> {
        let eps = self.step_size;
        let mut check = 0.0;
        match (v_star, fields) {
            (Some(v), None) => {
                for (x, v) in self.x.iter_mut().zip(v) {
                    *x += eps * (-v - *x);
                }
            }
            (v, Some((grad_v, lap_v))) => {
                self.grid.gradient_into(&self.x, &mut self.grad_x);
                self.grid.laplacian_into(&self.x, &mut self.lap_x);
                for i in 0..self.x.len() {
                    let gx = self.grad_x[i];
                    let transport = lap_v[i] + self.lap_x[i] + (grad_v[i] + gx) * gx;
                    let rate = match v {
                        Some(v) => (-v[i] - self.x[i]) + transport_weight * transport,
                        None => transport,
                    };
                    self.x[i] += eps * rate;
                    check += rate;
                }
            }
            (None, None) => unreachable!(),
        }
        self.steps += 1;
        if !check.is_finite() {
            return Err(self.diverged("non-finite update (stepsize too large for the grid?)"));
        }
        if self.renormalize {
            let log_mass = log_integral_exp(&self.grid, &self.x);
            if !log_mass.is_finite() {
                return Err(self.diverged("non-finite normalization"));
            }
            self.drift += log_mass.exp_m1().abs();
            self.x.iter_mut().for_each(|x| *x -= log_mass);
        }
        Ok(())
    }
}

/// The linear-scaling annealing path `μ_τ ∝ ρ₀^{1-τ} π^τ`.
pub fn annealing_path(rho0: &LogDensity, pi: &LogDensity, tau: f64) -> Result<LogDensity> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1], got {tau}")));
    }
    geometric_mixture(rho0, pi, 1.0 - tau, tau)
}

/// Exact Fisher-Rao flow: `ρ_t = μ_{1 - e^{-t}}`.
pub fn fr_exact(rho0: &LogDensity, pi: &LogDensity, t: f64) -> Result<LogDensity> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("flow time must be >= 0, got {t}")));
    }
    geometric_mixture(rho0, pi, (-t).exp(), -(-t).exp_m1())
}

fn geometric_mixture(rho0: &LogDensity, pi: &LogDensity, w0: f64, w1: f64) -> Result<LogDensity> {
    if rho0.grid() != pi.grid() {
        return Err(Error::GridMismatch(rho0.grid().len(), pi.grid().len()));
    }
    if w1 == 0.0 {
        return Ok(rho0.clone());
    }
    if w0 == 0.0 {
        return Ok(pi.clone());
    }
    let mix = rho0
        .logp()
        .iter()
        .zip(pi.logp())
        .map(|(a, b)| w0 * a + w1 * b)
        .collect();
    LogDensity::from_unnormalized(rho0.grid(), mix)
}

/// Birth-death rate `α = log(ρ/π) - KL(ρ‖π)` driving the FR flow.
pub fn birth_death_rate(rho: &LogDensity, pi: &LogDensity) -> Result<Vec<f64>> {
    let k = measure::kl(rho, pi)?;
    Ok(rho.logp().iter().zip(pi.logp()).map(|(a, b)| a - b - k).collect())
}

/// Everything needed to reproduce one flow trajectory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kind: FlowKind,
    pub target: Potential,
    pub init: Potential,
    pub target_label: String,
    pub init_label: String,
    pub n: usize,
    /// Ignored for `FR_exact`.
    pub step_size: f64,
    pub horizon: f64,
    pub record_dt: f64,
    pub q_list: Vec<f64>,
    pub renormalize_w: bool,
    pub force_cfl: bool,
}

pub const DEFAULT_RECORD_DT: f64 = 0.01;

impl RunConfig {
    pub fn new(kind: FlowKind, target: Potential, init: Potential) -> Self {
        let target_label = target.name().unwrap_or("target").to_string();
        let init_label = init.name().unwrap_or("init").to_string();
        Self {
            kind,
            target,
            init,
            target_label,
            init_label,
            n: 2000,
            step_size: 1e-6,
            horizon: 1.0,
            record_dt: DEFAULT_RECORD_DT,
            q_list: Vec::new(),
            renormalize_w: false,
            force_cfl: false,
        }
    }

    fn steps_per_record(&self) -> u64 {
        (self.record_dt / self.step_size).round() as u64
    }

    /// Every violated precondition, or an empty list.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < crate::grid::MIN_POINTS {
            out.push(format!("n must be >= {}, got {}", crate::grid::MIN_POINTS, self.n));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            out.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.record_dt > 0.0 && self.record_dt.is_finite()) {
            out.push(format!("record_dt must be positive, got {}", self.record_dt));
        }
        for q in &self.q_list {
            if !(*q > 1.0 && q.is_finite()) {
                out.push(format!("Renyi orders must satisfy q > 1, got {q}"));
            }
        }
        if self.kind.is_pde() {
            if !(self.step_size > 0.0 && self.step_size.is_finite()) {
                out.push(format!("{}: stepsize must be positive, got {}", self.kind, self.step_size));
            } else if self.record_dt > 0.0 {
                let spr = self.steps_per_record();
                let err = (spr as f64 * self.step_size - self.record_dt).abs();
                if spr == 0 || err > 1e-9 * self.record_dt {
                    out.push(format!(
                        "{}: record_dt {} is not a multiple of the stepsize {}",
                        self.kind, self.record_dt, self.step_size
                    ));
                }
                if self.kind.has_transport() && !self.force_cfl && self.n >= crate::grid::MIN_POINTS {
                    if let Ok(g) = Grid::new(self.n) {
                        let limit = cfl_limit(&g);
                        if self.step_size > limit {
                            out.push(format!(
                                "{}: stepsize {:e} exceeds the diffusion limit h^2/2 = {:e}",
                                self.kind, self.step_size, limit
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

/// A run that stopped early; `partial` holds every row recorded before the failure.
#[derive(Debug, Clone)]
pub struct FlowFailure {
    pub error: Error,
    pub partial: Option<FlowTrace>,
}

impl fmt::Display for FlowFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for FlowFailure {}

impl From<Error> for FlowFailure {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

fn record(t: f64, rho: &LogDensity, pi: &LogDensity, q_list: &[f64], drift: f64) -> Result<TraceRow> {
    let renyi = q_list
        .iter()
        .map(|q| measure::renyi(*q, rho, pi))
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceRow {
        t,
        kl: measure::kl(rho, pi)?,
        renyi,
        chi2: measure::chi2(rho, pi)?,
        mass_drift: drift,
    })
}

/// Integrates one flow and samples the divergences every `record_dt`.
pub fn run(cfg: &RunConfig) -> std::result::Result<FlowTrace, FlowFailure> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidParameter(problems.join("; ")).into());
    }
    let grid = Grid::new(cfg.n)?;
    let pi = LogDensity::from_potential(&cfg.target, &grid)?;
    let rho0 = LogDensity::from_potential(&cfg.init, &grid)?;
    let meta = TraceMeta {
        kind: cfg.kind,
        target: cfg.target_label.clone(),
        init: cfg.init_label.clone(),
        step_size: cfg.kind.is_pde().then_some(cfg.step_size),
        n: cfg.n,
        record_dt: cfg.record_dt,
        q_list: cfg.q_list.clone(),
        renormalized: cfg.kind != FlowKind::Wasserstein || cfg.renormalize_w,
        fingerprint: measure::pair_fingerprint(&rho0, &pi),
    };
    let mut trace = FlowTrace::new(meta);

    if cfg.kind == FlowKind::FisherRaoExact {
        let records = (cfg.horizon / cfg.record_dt).round() as u64;
        for j in 0..=records {
            let t = (j as f64 * cfg.record_dt).min(cfg.horizon);
            let rho = fr_exact(&rho0, &pi, t)?;
            trace.rows.push(record(t, &rho, &pi, &cfg.q_list, 0.0)?);
        }
        return Ok(trace);
    }

    let fields = TargetFields::new(&cfg.target, &grid)?;
    let mut state = FlowState::new(cfg.kind, &rho0, cfg.step_size)?.with_renormalization(cfg.renormalize_w);
    let spr = cfg.steps_per_record();
    let total = (cfg.horizon / cfg.step_size).round() as u64;

    let fail = |trace: &mut FlowTrace, error: Error| {
        let t = match &error {
            Error::Diverged { t, .. } => *t,
            _ => trace.rows.last().map_or(0.0, |r| r.t),
        };
        trace.failed = Some((t, error.to_string()));
        FlowFailure { error, partial: Some(trace.clone()) }
    };

    let sample = |state: &FlowState| -> Result<TraceRow> {
        let rho = state.density()?;
        record(state.time(), &rho, &pi, &cfg.q_list, state.mass_drift())
            .map_err(|e| Error::Diverged { t: state.time(), reason: e.to_string() })
    };

    match sample(&state) {
        Ok(row) => trace.rows.push(row),
        Err(e) => return Err(fail(&mut trace, e)),
    }
    while state.steps() < total {
        let chunk = spr.min(total - state.steps());
        for _ in 0..chunk {
            if let Err(e) = state.step(&fields) {
                return Err(fail(&mut trace, e));
            }
        }
        match sample(&state) {
            Ok(row) => trace.rows.push(row),
            Err(e) => return Err(fail(&mut trace, e)),
        }
    }
    Ok(trace)
}
