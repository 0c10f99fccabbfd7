//! Post-processing of flow traces: large-time slopes, residuals against the
//! cumulant series, and the FR + W ≈ WFR slope comparison.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cumulant::CumulantTable;
use crate::error::{Error, Result};
use crate::flow::FlowKind;
use crate::measure::fmt_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub kind: FlowKind,
    pub target: String,
    pub init: String,
    pub step_size: Option<f64>,
    pub n: usize,
    pub record_dt: f64,
    pub q_list: Vec<f64>,
    pub renormalized: bool,
    /// Digest of the `(ρ₀, π)` pair on the grid.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub kl: f64,
    /// One entry per `meta.q_list`.
    pub renyi: Vec<f64>,
    pub chi2: f64,
    pub mass_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
    /// `(t, reason)` when the run stopped early.
    pub failed: Option<(f64, String)>,
}

const FAILED_MARKER: &str = "FAILED";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Column name of the Rényi divergence of order `q`.
pub fn renyi_column(q: f64) -> String {
    format!("renyi_q{q}")
}

/// Rows of a trace CSV without the metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub q_list: Vec<f64>,
    pub rows: Vec<TraceRow>,
    pub failed: Option<(f64, String)>,
}

pub fn parse_trace_csv<R: Read>(input: R) -> Result<ParsedTrace> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let n = cols.len();
    if n < 4 || cols[0] != "t" || cols[1] != "kl" || cols[n - 2] != "chi2" || cols[n - 1] != "mass_drift" {
        return Err(Error::Parse(format!("unexpected trace header {cols:?}")));
    }
    let q_list = cols[2..n - 2]
        .iter()
        .map(|c| {
            c.strip_prefix("renyi_q")
                .and_then(|q| q.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("bad column {c:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));

    let mut rows = Vec::new();
    let mut failed = None;
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.get(0) == Some(FAILED_MARKER) {
            let t = num(rec.get(1).unwrap_or("nan"))?;
            failed = Some((t, rec.get(2).unwrap_or("").to_string()));
            break;
        }
        if rec.len() != n {
            return Err(Error::Parse(format!("row has {} fields, expected {n}", rec.len())));
        }
        let f: Vec<f64> = rec.iter().map(num).collect::<Result<_>>()?;
        rows.push(TraceRow {
            t: f[0],
            kl: f[1],
            renyi: f[2..n - 2].to_vec(),
            chi2: f[n - 2],
            mass_drift: f[n - 1],
        });
    }
    Ok(ParsedTrace { q_list, rows, failed })
}

impl FlowTrace {
    pub fn new(meta: TraceMeta) -> Self {
        Self { meta, rows: Vec::new(), failed: None }
    }

    /// Header `t,kl,renyi_q<q>...,chi2,mass_drift`, values to 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let mut header = vec!["t".to_string(), "kl".to_string()];
        header.extend(self.meta.q_list.iter().map(|q| renyi_column(*q)));
        header.extend(["chi2".to_string(), "mass_drift".to_string()]);
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![fmt_f64(r.t), fmt_f64(r.kl)];
            rec.extend(r.renyi.iter().map(|v| fmt_f64(*v)));
            rec.extend([fmt_f64(r.chi2), fmt_f64(r.mass_drift)]);
            w.write_record(&rec).map_err(csv_err)?;
        }
        if let Some((t, reason)) = &self.failed {
            w.write_record([FAILED_MARKER, &fmt_f64(*t), reason]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, meta: TraceMeta) -> Result<Self> {
        let parsed = parse_trace_csv(input)?;
        if parsed.q_list != meta.q_list {
            return Err(Error::Parse(format!(
                "trace columns {:?} do not match metadata {:?}",
                parsed.q_list, meta.q_list
            )));
        }
        Ok(Self { meta, rows: parsed.rows, failed: parsed.failed })
    }

    fn nearest_row(&self, t: f64) -> Option<&TraceRow> {
        self.rows.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// Multiplies every divergence column by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.kl *= c;
            r.chi2 *= c;
            r.renyi.iter_mut().for_each(|v| *v *= c);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    /// Requested window.
    pub t1: f64,
    pub t2: f64,
    /// Recorded rows actually used.
    pub t1_snapped: f64,
    pub t2_snapped: f64,
}

/// `(log KL(t₂) - log KL(t₁)) / (t₂ - t₁)` on the recorded rows nearest to `t₁`, `t₂`.
pub fn slope(trace: &FlowTrace, t1: f64, t2: f64) -> Result<SlopeEstimate> {
    if !(t1 < t2) {
        return Err(Error::InvalidParameter(format!("slope window needs t1 < t2, got ({t1}, {t2})")));
    }
    let (first, last) = match (trace.rows.first(), trace.rows.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::InvalidParameter("empty trace".into())),
    };
    let slack = 0.5 * trace.meta.record_dt;
    if t1 < first - slack || t2 > last + slack {
        return Err(Error::InvalidParameter(format!(
            "slope window ({t1}, {t2}) outside trace range [{first}, {last}]"
        )));
    }
    let a = trace.nearest_row(t1).expect("non-empty");
    let b = trace.nearest_row(t2).expect("non-empty");
    if a.t >= b.t {
        return Err(Error::InvalidParameter(format!(
            "window ({t1}, {t2}) collapses onto one recorded row"
        )));
    }
    for r in [a, b] {
        if !(r.kl > 0.0) {
            return Err(Error::NonPositiveDivergence { t: r.t, value: r.kl });
        }
    }
    Ok(SlopeEstimate {
        slope: (b.kl.ln() - a.kl.ln()) / (b.t - a.t),
        t1,
        t2,
        t1_snapped: a.t,
        t2_snapped: b.t,
    })
}

/// Start of the window used to summarize `|residual| e^{3t}`.
pub const RESIDUAL_WINDOW_START: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub order: usize,
    /// `(t, KL_sim(t) - kl_series(t))`.
    pub rows: Vec<(f64, f64)>,
    /// `max |residual| e^{3t}` over recorded `t ≥ 3`, if any rows fall there.
    pub scaled_max: Option<f64>,
    pub scaled_min: Option<f64>,
}

impl ResidualReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "residual", "residual_e3t"]).map_err(csv_err)?;
        for (t, r) in &self.rows {
            w.write_record([fmt_f64(*t), fmt_f64(*r), fmt_f64(r.abs() * (3.0 * t).exp())])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulated KL minus the truncated cumulant series, row by row.
pub fn theory_residual(trace: &FlowTrace, table: &CumulantTable, order: usize) -> Result<ResidualReport> {
    if !matches!(trace.meta.kind, FlowKind::FisherRao | FlowKind::FisherRaoExact) {
        return Err(Error::InvalidParameter(format!(
            "the cumulant series describes FR flows, not {}",
            trace.meta.kind
        )));
    }
    if trace.meta.fingerprint != table.fingerprint() {
        return Err(Error::FingerprintMismatch);
    }
    let rows = trace
        .rows
        .iter()
        .map(|r| Ok((r.t, r.kl - table.kl_series(r.t, order)?)))
        .collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = rows
        .iter()
        .filter(|(t, _)| *t >= RESIDUAL_WINDOW_START)
        .map(|(t, r)| r.abs() * (3.0 * t).exp())
        .collect();
    let scaled_max = scaled.iter().copied().reduce(f64::max);
    let scaled_min = scaled.iter().copied().reduce(f64::min);
    Ok(ResidualReport { order, rows, scaled_max, scaled_min })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub fr: f64,
    pub w: f64,
    pub wfr: f64,
    /// `wfr - (fr + w)`.
    pub discrepancy: f64,
    /// `discrepancy / |fr + w|`, zero when both slopes vanish.
    pub relative: f64,
}

pub fn slope_additivity_report(fr: f64, w: f64, wfr: f64) -> AdditivityReport {
    let sum = fr + w;
    let discrepancy = wfr - sum;
    let relative = if sum == 0.0 { 0.0 } else { discrepancy / sum.abs() };
    AdditivityReport { fr, w, wfr, discrepancy, relative }
}

/// One cell of the slope table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEntry {
    pub target: String,
    pub init: String,
    pub kind: FlowKind,
    pub estimate: SlopeEstimate,
}

pub fn write_slopes_csv<W: Write>(entries: &[SlopeEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "init", "flow", "t1", "t2", "t1_snapped", "t2_snapped", "slope"])
        .map_err(csv_err)?;
    for e in entries {
        let s = &e.estimate;
        w.write_record([
            e.target.clone(),
            e.init.clone(),
            e.kind.label().to_string(),
            fmt_f64(s.t1),
            fmt_f64(s.t2),
            fmt_f64(s.t1_snapped),
            fmt_f64(s.t2_snapped),
            fmt_f64(s.slope),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Flows as rows, `(target, init)` pairs as columns.
pub fn render_slope_table(entries: &[SlopeEntry]) -> String {
    let mut columns: Vec<(String, String)> = Vec::new();
    let mut cells: BTreeMap<(FlowKind, usize), &SlopeEntry> = BTreeMap::new();
    for e in entries {
        let key = (e.target.clone(), e.init.clone());
        let col = match columns.iter().position(|c| *c == key) {
            Some(i) => i,
            None => {
                columns.push(key);
                columns.len() - 1
            }
        };
        cells.insert((e.kind, col), e);
    }
    let kinds: Vec<FlowKind> = FlowKind::ALL
        .into_iter()
        .filter(|k| entries.iter().any(|e| e.kind == *k))
        .collect();

    let width = 22;
    let mut out = String::new();
    out.push_str(&format!("{:<10}", ""));
    for (t, _) in &columns {
        out.push_str(&format!("| {:<width$}", format!("Target {t}")));
    }
    out.push('\n');
    out.push_str(&format!("{:<10}", ""));
    for (_, i) in &columns {
        out.push_str(&format!("| {:<width$}", format!("Init. {i}")));
    }
    out.push('\n');
    out.push_str(&"-".repeat(10 + columns.len() * (width + 2)));
    out.push('\n');
    for k in kinds {
        out.push_str(&format!("{:<10}", k.label()));
        for c in 0..columns.len() {
            let cell = match cells.get(&(k, c)) {
                Some(e) => format!(
                    "{:.4} [{:.3},{:.3}]",
                    e.estimate.slope, e.estimate.t1_snapped, e.estimate.t2_snapped
                ),
                None => "-".to_string(),
            };
            out.push_str(&format!("| {cell:<width$}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulant::DEFAULT_ORDER;
    use crate::flow::{annealing_path, run, RunConfig};
    use crate::grid::Grid;
    use crate::measure::{self, LogDensity};
    use crate::potential::{Builtin, Potential};

    fn meta(kind: FlowKind) -> TraceMeta {
        TraceMeta {
            kind,
            target: "V2".into(),
            init: "Vd".into(),
            step_size: None,
            n: 2000,
            record_dt: 0.01,
            q_list: vec![2.0],
            renormalized: true,
            fingerprint: String::new(),
        }
    }

    fn exact_trace(init: Builtin, target: Builtin, horizon: f64, record_dt: f64) -> FlowTrace {
        let mut cfg = RunConfig::new(FlowKind::FisherRaoExact, Potential::builtin(target), Potential::builtin(init));
        cfg.horizon = horizon;
        cfg.record_dt = record_dt;
        cfg.q_list = vec![2.0];
        run(&cfg).unwrap()
    }

    /// Exact FR trace started from `μ_{0.99}` on the (V2, Vd) path.
    fn late_start_trace() -> FlowTrace {
        let g = Grid::new(2000).unwrap();
        let pi = LogDensity::from_potential(&Potential::builtin(Builtin::V2), &g).unwrap();
        let u = LogDensity::uniform(&g);
        let rho0 = annealing_path(&u, &pi, 0.99).unwrap();
        let mut trace = FlowTrace::new(meta(FlowKind::FisherRaoExact));
        for j in 0..=700 {
            let t = j as f64 * 0.01;
            let rho = crate::flow::fr_exact(&rho0, &pi, t).unwrap();
            trace.rows.push(TraceRow {
                t,
                kl: measure::kl(&rho, &pi).unwrap(),
                renyi: vec![measure::renyi(2.0, &rho, &pi).unwrap()],
                chi2: measure::chi2(&rho, &pi).unwrap(),
                mass_drift: 0.0,
            });
        }
        trace
    }

    #[test]
    fn pure_exponential_decay_has_slope_minus_two() {
        let trace = late_start_trace();
        let s = slope(&trace, 5.0, 6.0).unwrap();
        assert!((s.slope + 2.0).abs() < 1e-3, "{}", s.slope);
        assert_eq!((s.t1_snapped, s.t2_snapped), (5.0, 6.0));
        // rescaling KL leaves the slope unchanged
        let s7 = slope(&trace.scaled(7.0), 5.0, 6.0).unwrap();
        assert!((s7.slope - s.slope).abs() < 1e-12);
    }

    #[test]
    fn exact_slopes_tend_to_minus_two() {
        for (i, p) in [(Builtin::Va, Builtin::V1), (Builtin::Vb, Builtin::V1), (Builtin::Vc, Builtin::V2), (Builtin::Vd, Builtin::V2)] {
            let trace = exact_trace(i, p, 8.5, 0.01);
            let s = slope(&trace, 8.0, 8.5).unwrap();
            assert!((s.slope + 2.0).abs() <= 0.01, "{i}: {}", s.slope);
        }
    }

    #[test]
    fn slope_insensitive_to_record_cadence() {
        let coarse = exact_trace(Builtin::Va, Builtin::V1, 7.5, 0.01);
        let fine = exact_trace(Builtin::Va, Builtin::V1, 7.5, 0.005);
        let a = slope(&coarse, 7.0, 7.5).unwrap().slope;
        let b = slope(&fine, 7.0, 7.5).unwrap().slope;
        assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn slope_errors() {
        let trace = late_start_trace();
        assert!(slope(&trace, 6.0, 5.0).is_err());
        assert!(slope(&trace, 5.0, 9.0).is_err());
        assert!(slope(&trace, 5.0, 5.001).is_err());
        let mut zeroed = trace.clone();
        zeroed.rows[600].kl = 0.0;
        assert!(matches!(slope(&zeroed, 5.0, 6.0), Err(Error::NonPositiveDivergence { .. })));
        assert!(slope(&FlowTrace::new(meta(FlowKind::FisherRao)), 0.0, 1.0).is_err());
    }

    #[test]
    fn residual_of_exact_trace_follows_series_tail() {
        let trace = exact_trace(Builtin::Va, Builtin::V1, 8.0, 0.01);
        let g = Grid::new(2000).unwrap();
        let rho0 = LogDensity::from_potential(&Potential::builtin(Builtin::Va), &g).unwrap();
        let pi = LogDensity::from_potential(&Potential::builtin(Builtin::V1), &g).unwrap();
        let table = CumulantTable::build(&rho0, &pi, DEFAULT_ORDER).unwrap();
        // oracle for the first omitted coefficient κ₉ / (9 · 7!)
        let wider = CumulantTable::build(&rho0, &pi, DEFAULT_ORDER + 1).unwrap();
        let c9 = wider.kl_series_tail(0.0, DEFAULT_ORDER).unwrap().abs();
        let report = theory_residual(&trace, &table, DEFAULT_ORDER).unwrap();
        assert!(report.scaled_max.unwrap() <= 2.0 * c9, "{:?} vs {c9}", report.scaled_max);

        let lead = theory_residual(&trace, &table, 2).unwrap();
        let (lo, hi) = (lead.scaled_min.unwrap(), lead.scaled_max.unwrap());
        assert!(hi / lo <= 50.0);
    }

    #[test]
    fn residual_zero_when_started_at_target() {
        let trace = exact_trace(Builtin::V1, Builtin::V1, 4.0, 0.1);
        let g = Grid::new(2000).unwrap();
        let pi = LogDensity::from_potential(&Potential::builtin(Builtin::V1), &g).unwrap();
        let table = CumulantTable::build(&pi, &pi, DEFAULT_ORDER).unwrap();
        let report = theory_residual(&trace, &table, DEFAULT_ORDER).unwrap();
        assert!(report.rows.iter().all(|(_, r)| r.abs() <= 1e-15));
    }

    #[test]
    fn residual_checks_kind_and_fingerprint() {
        let trace = exact_trace(Builtin::Vd, Builtin::V2, 1.0, 0.1);
        let g = Grid::new(2000).unwrap();
        let pi = LogDensity::from_potential(&Potential::builtin(Builtin::V2), &g).unwrap();
        let other = LogDensity::from_potential(&Potential::builtin(Builtin::Vc), &g).unwrap();
        let table = CumulantTable::build(&other, &pi, DEFAULT_ORDER).unwrap();
        assert_eq!(theory_residual(&trace, &table, 4).unwrap_err(), Error::FingerprintMismatch);
        let mut w = trace.clone();
        w.meta.kind = FlowKind::Wasserstein;
        assert!(theory_residual(&w, &table, 4).is_err());
    }

    #[test]
    fn additivity_examples() {
        let r = slope_additivity_report(-2.00, -10.78, -12.82);
        assert!((r.discrepancy + 0.04).abs() < 1e-9);
        let r = slope_additivity_report(-2.00, -0.081, -2.077);
        assert!((r.discrepancy - 0.004).abs() < 1e-9);
        let r = slope_additivity_report(0.0, 0.0, 0.0);
        assert_eq!((r.discrepancy, r.relative), (0.0, 0.0));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let trace = exact_trace(Builtin::Vc, Builtin::V2, 1.0, 0.05);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,kl,renyi_q2,chi2,mass_drift\n"));
        let back = FlowTrace::read_csv(buf.as_slice(), trace.meta.clone()).unwrap();
        assert_eq!(back, trace);

        let mut failed = trace.clone();
        failed.failed = Some((0.5, "boom".into()));
        let mut buf = Vec::new();
        failed.write_csv(&mut buf).unwrap();
        let back = FlowTrace::read_csv(buf.as_slice(), failed.meta.clone()).unwrap();
        assert_eq!(back, failed);

        let mut wrong = trace.meta.clone();
        wrong.q_list = vec![3.0];
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert!(FlowTrace::read_csv(buf.as_slice(), wrong).is_err());
        assert!(parse_trace_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn table_layout() {
        let est = SlopeEstimate { slope: -2.0016, t1: 7.0, t2: 7.5, t1_snapped: 7.0, t2_snapped: 7.5 };
        let entries = vec![
            SlopeEntry { target: "V1".into(), init: "a".into(), kind: FlowKind::FisherRao, estimate: est },
            SlopeEntry { target: "V1".into(), init: "b".into(), kind: FlowKind::Wasserstein, estimate: SlopeEstimate { slope: -0.0811, ..est } },
        ];
        let text = render_slope_table(&entries);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("Target V1"));
        assert!(lines[1].contains("Init. a") && lines[1].contains("Init. b"));
        assert!(lines[3].starts_with("FR") && lines[3].contains("-2.0016"));
        assert!(lines[4].starts_with("W") && lines[4].contains("-0.0811"));
        let mut buf = Vec::new();
        write_slopes_csv(&entries, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
