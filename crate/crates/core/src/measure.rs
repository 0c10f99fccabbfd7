//! Normalized log-densities and the divergences between them.
//!
//! Everything is stored as `log p` and every integral of an exponential goes
//! through a max-shifted log-sum-exp, so `e^{±12}` dynamic ranges (and their
//! squares in Rényi-4) never overflow.

use std::io::Write;

use serde::Serialize;

use crate::error::{check_finite, Error, Result};
use crate::grid::Grid;
use crate::potential::Potential;

/// Slack allowed on the normalization `∫ e^{logp} = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Negative KL values above `-KL_CLAMP` are round-off and get clamped to zero.
pub const KL_CLAMP: f64 = 1e-12;

/// `log Σ_i e^{a_i}` with the maximum factored out.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log ∫ e^{a(x)} dx` on the grid.
pub(crate) fn log_integral_exp(grid: &Grid, a: &[f64]) -> f64 {
    grid.spacing().ln() + log_sum_exp(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogDensity {
    grid: Grid,
    logp: Vec<f64>,
}

impl LogDensity {
    /// Normalizes an arbitrary log-density (defined up to an additive constant).
    pub fn from_unnormalized(grid: &Grid, mut logq: Vec<f64>) -> Result<Self> {
        grid.check_len(&logq)?;
        check_finite(&logq)?;
        let log_z = log_integral_exp(grid, &logq);
        logq.iter_mut().for_each(|v| *v -= log_z);
        let out = Self { grid: grid.clone(), logp: logq };
        if !out.is_normalized() {
            return Err(Error::InvalidParameter(format!(
                "log-density cannot be normalized (mass {} after rescaling)",
                out.mass()
            )));
        }
        Ok(out)
    }

    /// `π ∝ e^{-V}` on the grid.
    pub fn from_potential(p: &Potential, grid: &Grid) -> Result<Self> {
        let v = p.eval(grid)?;
        Self::from_unnormalized(grid, v.into_iter().map(|x| -x).collect())
    }

    pub fn uniform(grid: &Grid) -> Self {
        let c = -(2.0 * std::f64::consts::PI).ln();
        Self { grid: grid.clone(), logp: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn logp(&self) -> &[f64] {
        &self.logp
    }

    pub fn into_logp(self) -> Vec<f64> {
        self.logp
    }

    pub fn density(&self) -> Vec<f64> {
        self.logp.iter().map(|v| v.exp()).collect()
    }

    pub fn mass(&self) -> f64 {
        self.log_mass().exp()
    }

    pub fn log_mass(&self) -> f64 {
        log_integral_exp(&self.grid, &self.logp)
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// Writes columns `x, logp, p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["x", "logp", "p"]).map_err(err)?;
        for (x, lp) in self.grid.points().iter().zip(&self.logp) {
            w.write_record([fmt_f64(*x), fmt_f64(*lp), fmt_f64(lp.exp())])
                .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub(crate) fn same_grid(&self, other: &LogDensity) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid.len(), other.grid.len()));
        }
        Ok(())
    }
}

/// Seventeen significant digits, enough for a bit-exact `f64` round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Short hex digest identifying a `(ρ₀, π)` pair bit-for-bit.
pub fn pair_fingerprint(rho0: &LogDensity, pi: &LogDensity) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for v in rho0.logp.iter().chain(&pi.logp) {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// `log Z = log ∫ e^{-V}`.
pub fn log_normalizer(p: &Potential, grid: &Grid) -> Result<f64> {
    let v = p.eval(grid)?;
    let neg: Vec<f64> = v.into_iter().map(|x| -x).collect();
    check_finite(&neg)?;
    Ok(log_integral_exp(grid, &neg))
}

/// `KL(ρ‖π) = ∫ log(ρ/π) dρ`.
pub fn kl(rho: &LogDensity, pi: &LogDensity) -> Result<f64> {
    rho.same_grid(pi)?;
    let h = rho.grid.spacing();
    let v = h * rho
        .logp
        .iter()
        .zip(&pi.logp)
        .map(|(a, b)| (a - b) * a.exp())
        .sum::<f64>();
    clamp_divergence(v)
}

fn clamp_divergence(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite { index: 0, value: v });
    }
    if v >= 0.0 {
        Ok(v)
    } else if v >= -KL_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NegativeDivergence(v))
    }
}

/// `R_q(ρ‖π) = (q-1)^{-1} log ∫ ρ^q π^{1-q}` for `q > 1`.
pub fn renyi(q: f64, rho: &LogDensity, pi: &LogDensity) -> Result<f64> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("Renyi order must satisfy 1 < q < inf, got {q}")));
    }
    rho.same_grid(pi)?;
    let e: Vec<f64> = rho
        .logp
        .iter()
        .zip(&pi.logp)
        .map(|(a, b)| q * a - (q - 1.0) * b)
        .collect();
    Ok(log_integral_exp(&rho.grid, &e) / (q - 1.0))
}

/// `χ²(ρ‖π) = ∫ ρ²/π - 1`.
pub fn chi2(rho: &LogDensity, pi: &LogDensity) -> Result<f64> {
    rho.same_grid(pi)?;
    let e: Vec<f64> = rho
        .logp
        .iter()
        .zip(&pi.logp)
        .map(|(a, b)| 2.0 * a - b)
        .collect();
    Ok(log_integral_exp(&rho.grid, &e).exp_m1())
}

/// Margins of the integrability conditions on `(ρ₀, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub alpha: f64,
    /// `min_i (log ρ₀ - (1+α) log π)`; (A2) holds when this is finite.
    pub a2_log_margin: f64,
    pub a2_holds: bool,
    /// `∫ V_* dπ` with `V_* = -log π` (normalized), i.e. the entropy of `π`.
    pub a1_potential_mean: f64,
    pub a1_holds: bool,
    /// `M = -min_i log(ρ₀/π)`, so that `ρ₀ ≥ e^{-M} π`.
    pub m_constant: f64,
}

pub fn check_assumptions(rho0: &LogDensity, pi: &LogDensity, alpha: f64) -> Result<AssumptionReport> {
    rho0.same_grid(pi)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let min_over = |f: &dyn Fn(f64, f64) -> f64| {
        rho0.logp
            .iter()
            .zip(&pi.logp)
            .map(|(a, b)| f(*a, *b))
            .fold(f64::INFINITY, f64::min)
    };
    let a2 = min_over(&|a, b| a - (1.0 + alpha) * b);
    let m = -min_over(&|a, b| a - b);
    let h = pi.grid.spacing();
    let a1 = -h * pi.logp.iter().map(|b| b * b.exp()).sum::<f64>();
    Ok(AssumptionReport {
        alpha,
        a2_log_margin: a2,
        a2_holds: a2.is_finite(),
        a1_potential_mean: a1,
        a1_holds: a1.is_finite(),
        m_constant: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Builtin, TrigTerm};
    use crate::testutil::random_trig;
    use rand::{rngs::StdRng, SeedableRng};
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(2000).unwrap()
    }

    fn density(b: Builtin) -> LogDensity {
        LogDensity::from_potential(&Potential::builtin(b), &grid()).unwrap()
    }

    /// Independent fine-grid evaluation of `∫ f(x) dx` over the torus.
    fn fine_quadrature(f: impl Fn(f64) -> f64) -> f64 {
        let n = 1_000_000;
        let h = 2.0 * PI / n as f64;
        h * (0..n).map(|i| f(-PI + i as f64 * h)).sum::<f64>()
    }

    #[test]
    fn uniform_from_zero_potential() {
        let d = density(Builtin::Vd);
        let c = -(2.0 * PI).ln();
        assert!(d.logp().iter().all(|v| (v - c).abs() < 1e-14));
        assert!(d.is_normalized());
        assert_eq!(d.logp(), LogDensity::uniform(&grid()).logp());
    }

    #[test]
    fn v2_normalizer_is_bessel() {
        // I0(6) = (1/π) ∫_0^π e^{6 cos θ} dθ, by a midpoint rule on 10^6 cells
        let i0 = {
            let n = 1_000_000;
            let h = PI / n as f64;
            h * (0..n).map(|i| (6.0 * ((i as f64 + 0.5) * h).cos()).exp()).sum::<f64>() / PI
        };
        let log_z = log_normalizer(&Potential::builtin(Builtin::V2), &grid()).unwrap();
        assert!((log_z - (2.0 * PI * i0).ln()).abs() < 1e-8);
        assert!((log_normalizer(&Potential::builtin(Builtin::Vd), &grid()).unwrap() - (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn large_potentials_do_not_overflow() {
        let p = Potential::trig(vec![TrigTerm::cos(-700.0, 1)]).unwrap();
        let d = LogDensity::from_potential(&p, &grid()).unwrap();
        assert!(d.logp().iter().all(|v| v.is_finite()));
        assert!(d.is_normalized());
    }

    #[test]
    fn pi1_has_two_unequal_modes() {
        let d = density(Builtin::V1);
        let lp = d.logp();
        let n = lp.len();
        let maxima: Vec<usize> = (0..n)
            .filter(|&i| lp[i] > lp[(i + n - 1) % n] && lp[i] > lp[(i + 1) % n])
            .collect();
        assert_eq!(maxima.len(), 2);
        let x = grid().points()[maxima[0]];
        let y = grid().points()[maxima[1]];
        // deeper well at -π/2
        assert!((x + PI / 2.0).abs() < 0.2 && (y - PI / 2.0).abs() < 0.2);
        assert!(lp[maxima[0]] > lp[maxima[1]]);
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let p = density(Builtin::V1);
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
        assert!(chi2(&p, &p).unwrap().abs() < 1e-12);
        for q in [1.5, 2.0, 4.0] {
            assert!(renyi(q, &p, &p).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn divergences_against_refined_oracle() {
        // π₂ ∝ e^{6 cos x}, ρ = uniform
        let z = fine_quadrature(|x| (6.0 * x.cos()).exp());
        let log_pi = |x: f64| 6.0 * x.cos() - z.ln();
        let log_u = -(2.0 * PI).ln();
        let kl_oracle = fine_quadrature(|x| (log_u - log_pi(x)) * log_u.exp());
        let chi2_oracle = fine_quadrature(|x| (2.0 * log_u - log_pi(x)).exp()) - 1.0;

        let u = LogDensity::uniform(&grid());
        let pi2 = density(Builtin::V2);
        let k = kl(&u, &pi2).unwrap();
        assert!(((k - kl_oracle) / kl_oracle).abs() < 1e-8, "{k} vs {kl_oracle}");
        let c = chi2(&u, &pi2).unwrap();
        assert!(((c - chi2_oracle) / chi2_oracle).abs() < 1e-8, "{c} vs {chi2_oracle}");

        let near_one = renyi(1.0 + 1e-6, &u, &pi2).unwrap();
        assert!(((near_one - k) / k).abs() < 1e-4);
    }

    #[test]
    fn renyi2_is_log_chi2() {
        let pairs = [(Builtin::Va, Builtin::V1), (Builtin::Vd, Builtin::V2), (Builtin::Vc, Builtin::V2)];
        for (r, p) in pairs {
            let (r, p) = (density(r), density(p));
            let lhs = renyi(2.0, &r, &p).unwrap();
            let rhs = chi2(&r, &p).unwrap().ln_1p();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = density(Builtin::V1);
        let b = LogDensity::uniform(&Grid::new(100).unwrap());
        assert!(matches!(kl(&a, &b), Err(Error::GridMismatch(2000, 100))));
        assert!(renyi(2.0, &a, &b).is_err());
        assert!(chi2(&a, &b).is_err());
        assert!(renyi(1.0, &a, &a).is_err());
        assert!(renyi(0.5, &a, &a).is_err());
        // a density that was never normalized gives a large negative "KL"
        let g = grid();
        let bogus = LogDensity { grid: g.clone(), logp: vec![-10.0; 2000] };
        assert!(matches!(kl(&bogus, &a), Err(Error::NegativeDivergence(_))));
    }

    #[test]
    fn gibbs_and_monotone_in_q() {
        let mut rng = StdRng::seed_from_u64(7);
        let g = Grid::new(400).unwrap();
        for _ in 0..100 {
            let r = LogDensity::from_potential(&random_trig(&mut rng), &g).unwrap();
            let p = LogDensity::from_potential(&random_trig(&mut rng), &g).unwrap();
            let k = kl(&r, &p).unwrap();
            assert!(k >= 0.0);
            assert!(chi2(&r, &p).unwrap() >= 0.0);
            let qs = [1.2, 1.5, 2.0, 3.0, 4.0];
            let vals: Vec<f64> = qs.iter().map(|q| renyi(*q, &r, &p).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{vals:?}");
            assert!(k <= vals[0] + 1e-12);
        }
    }

    #[test]
    fn divergence_zero_iff_identical() {
        let p = density(Builtin::V2);
        let mut shifted = p.logp().to_vec();
        shifted[17] += 1e-3;
        let q = LogDensity::from_unnormalized(&grid(), shifted).unwrap();
        assert!(kl(&q, &p).unwrap() > 0.0);
        assert!(chi2(&q, &p).unwrap() > 0.0);
        assert!(renyi(2.0, &q, &p).unwrap() > 0.0);
    }

    #[test]
    fn assumptions_report() {
        let p = density(Builtin::V1);
        let r = check_assumptions(&p, &p, 0.0).unwrap();
        assert!(r.a2_log_margin.abs() < 1e-15 && r.m_constant.abs() < 1e-15);
        assert!(r.a1_holds && r.a2_holds);

        let a = density(Builtin::Va);
        let r = check_assumptions(&a, &p, 0.0).unwrap();
        let scan = a
            .logp()
            .iter()
            .zip(p.logp())
            .map(|(x, y)| y - x)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(r.m_constant > 0.0 && r.m_constant == scan);
        assert!(r.a2_holds);

        let r = check_assumptions(&a, &p, 0.5).unwrap();
        assert!(r.a2_holds && r.alpha == 0.5);
        assert!(check_assumptions(&a, &p, -1.0).is_err());
    }

    #[test]
    fn csv_export() {
        let g = Grid::new(8).unwrap();
        let d = LogDensity::uniform(&g);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,logp,p"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(first[0], -PI);
        assert_eq!(first[1], d.logp()[0]);
        assert_eq!(text.lines().count(), 9);
    }
}
