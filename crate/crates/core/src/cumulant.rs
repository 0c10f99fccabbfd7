//! Cumulants of `Y = log(ρ₀/π)` under `π` and the closed forms they feed.
//!
//! Along the Fisher-Rao flow `ρ_t` is the geometric mixture
//! `ρ₀^{e^{-t}} π^{1-e^{-t}}`, so every divergence to `π` is a function of the
//! cumulant generating function `K_Y(z) = log E_π e^{zY}` at `z = e^{-t}`:
//!
//! ```text
//! KL(ρ_t‖π)  = z K'(z) - K(z)               = Σ_{n≥2} κ_n / (n (n-2)!) zⁿ
//! R_q(ρ_t‖π) = (K(qz) - q K(z)) / (q - 1)    = Σ_{n≥2} (qⁿ - q)/(q - 1) κ_n/n! zⁿ
//! ```
//!
//! The closed forms are evaluated by direct quadrature of the tilted measure;
//! the series are truncations of the power expansions above.

use std::io::Write;

use crate::error::{Error, Result};
use crate::measure::{fmt_f64, LogDensity};

pub const DEFAULT_ORDER: usize = 8;
pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantTable {
    /// `kappas[n - 1] = κ_n`.
    kappas: Vec<f64>,
    y_values: Vec<f64>,
    pi_weights: Vec<f64>,
    /// `Σ pi_weights`, 1 up to round-off.
    weight_total: f64,
    y_mean: f64,
    /// `Y_i - Ȳ`; every evaluator works on the centered variable.
    centered: Vec<f64>,
    fingerprint: String,
}

impl CumulantTable {
    pub fn build(rho0: &LogDensity, pi: &LogDensity, max_order: usize) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&max_order) {
            return Err(Error::InvalidParameter(format!(
                "cumulant order must lie in 2..={MAX_ORDER}, got {max_order}"
            )));
        }
        if rho0.grid() != pi.grid() {
            return Err(Error::GridMismatch(rho0.grid().len(), pi.grid().len()));
        }
        let h = pi.grid().spacing();
        let y_values: Vec<f64> = rho0.logp().iter().zip(pi.logp()).map(|(a, b)| a - b).collect();
        let mut pi_weights: Vec<f64> = pi.logp().iter().map(|b| b.exp() * h).collect();
        // quadrature(π) = 1 up to round-off; force it so that K(0) = 0 exactly
        let total: f64 = pi_weights.iter().sum();
        pi_weights.iter_mut().for_each(|w| *w /= total);
        let weight_total: f64 = pi_weights.iter().sum();

        let y_mean: f64 = pi_weights.iter().zip(&y_values).map(|(w, y)| w * y).sum();
        let centered: Vec<f64> = y_values.iter().map(|y| y - y_mean).collect();

        // central moments m̄_0..m̄_N
        let mut moments = vec![0.0; max_order + 1];
        for (w, c) in pi_weights.iter().zip(&centered) {
            let mut p = *w;
            for m in moments.iter_mut() {
                *m += p;
                p *= c;
            }
        }
        moments[1] = 0.0;

        let mut kappas = vec![0.0; max_order];
        kappas[0] = y_mean;
        for n in 2..=max_order {
            let mut k = moments[n];
            for j in 1..=n - 2 {
                k -= binomial(n - 1, j) * kappas[j] * moments[n - 1 - j];
            }
            kappas[n - 1] = k;
        }

        Ok(Self {
            kappas,
            y_values,
            pi_weights,
            weight_total,
            y_mean,
            centered,
            fingerprint: crate::measure::pair_fingerprint(rho0, pi),
        })
    }

    pub fn max_order(&self) -> usize {
        self.kappas.len()
    }

    /// `κ_n` for `1 ≤ n ≤ max_order`.
    pub fn kappa(&self, n: usize) -> f64 {
        self.kappas[n - 1]
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y_values
    }

    pub fn pi_weights(&self) -> &[f64] {
        &self.pi_weights
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// `log Σ w_i e^{z c_i}` for the centered variable `c = Y - Ȳ`.
    fn centered_cgf(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        let m = self
            .centered
            .iter()
            .fold(f64::NEG_INFINITY, |m, c| m.max(z * c));
        let s: f64 = self
            .pi_weights
            .iter()
            .zip(&self.centered)
            .map(|(w, c)| w * (z * c - m).exp())
            .sum();
        // dividing by the summed weights keeps K ≡ 0 exact when Y is constant
        m + (s / self.weight_total).ln()
    }

    /// Mean of the centered variable under the tilt `e^{z c}`.
    fn centered_tilted_mean(&self, z: f64) -> f64 {
        let m = self
            .centered
            .iter()
            .fold(f64::NEG_INFINITY, |m, c| m.max(z * c));
        let (mut num, mut den) = (0.0, 0.0);
        for (w, c) in self.pi_weights.iter().zip(&self.centered) {
            let e = w * (z * c - m).exp();
            num += e * c;
            den += e;
        }
        num / den
    }

    /// `K_Y(z) = log E_π e^{zY}` by quadrature.
    pub fn cgf(&self, z: f64) -> f64 {
        z * self.y_mean + self.centered_cgf(z)
    }

    /// `K'_Y(z)`, the mean of `Y` under the tilted measure.
    pub fn cgf_derivative(&self, z: f64) -> f64 {
        self.y_mean + self.centered_tilted_mean(z)
    }

    /// `KL(μ_τ‖π) = (1-τ) K'(1-τ) - K(1-τ)`.
    pub fn kl_closed_form(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let z = 1.0 - tau;
        // shift-invariant, so the centered variable avoids cancellation in Ȳ
        Ok(z * self.centered_tilted_mean(z) - self.centered_cgf(z))
    }

    /// `R_q(μ_τ‖π) = K(q(1-τ))/(q-1) - q K(1-τ)/(q-1)`.
    pub fn renyi_closed_form(&self, q: f64, tau: f64) -> Result<f64> {
        check_q(q)?;
        check_tau(tau)?;
        let z = 1.0 - tau;
        Ok((self.centered_cgf(q * z) - q * self.centered_cgf(z)) / (q - 1.0))
    }

    fn check_order(&self, order: usize) -> Result<()> {
        if !(2..=self.max_order()).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "series order must lie in 2..={}, got {order}",
                self.max_order()
            )));
        }
        Ok(())
    }

    fn kl_coefficient(&self, n: usize) -> f64 {
        self.kappa(n) / (n as f64 * factorial(n - 2))
    }

    fn renyi_coefficient(&self, q: f64, n: usize) -> f64 {
        (q.powi(n as i32) - q) / (q - 1.0) * self.kappa(n) / factorial(n)
    }

    /// `Σ_{n=2}^{order} κ_n / (n (n-2)!) e^{-nt}`.
    pub fn kl_series(&self, t: f64, order: usize) -> Result<f64> {
        self.check_order(order)?;
        let z = (-t).exp();
        Ok((2..=order).map(|n| self.kl_coefficient(n) * z.powi(n as i32)).sum())
    }

    /// First omitted term of [`kl_series`](Self::kl_series), when the table
    /// holds `κ_{order+1}`.
    pub fn kl_series_tail(&self, t: f64, order: usize) -> Option<f64> {
        let n = order + 1;
        (n <= self.max_order()).then(|| self.kl_coefficient(n) * (-(n as f64) * t).exp())
    }

    /// `Σ_{n=2}^{order} (qⁿ - q)/(q - 1) κ_n/n! e^{-nt}`.
    pub fn renyi_series(&self, q: f64, t: f64, order: usize) -> Result<f64> {
        check_q(q)?;
        self.check_order(order)?;
        let z = (-t).exp();
        Ok((2..=order)
            .map(|n| self.renyi_coefficient(q, n) * z.powi(n as i32))
            .sum())
    }

    pub fn renyi_series_tail(&self, q: f64, t: f64, order: usize) -> Option<f64> {
        let n = order + 1;
        (n <= self.max_order()).then(|| self.renyi_coefficient(q, n) * (-(n as f64) * t).exp())
    }

    /// Rows `n, kappa_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["n", "kappa_n"]).map_err(err)?;
        for (i, k) in self.kappas.iter().enumerate() {
            w.write_record([(i + 1).to_string(), fmt_f64(*k)]).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("Renyi order must satisfy 1 < q < inf, got {q}")));
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}
