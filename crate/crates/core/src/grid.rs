//! Uniform periodic discretization of `[-π, π)`.
//!
//! Point `i` sits at `x_i = -π + i h` with `h = 2π / n`; index `0` and
//! index `n - 1` are neighbours. Quadrature is the rectangle rule, which on a
//! uniform periodic grid coincides with the trapezoid rule and is spectrally
//! accurate for smooth periodic integrands.

use std::f64::consts::PI;

use crate::error::{check_finite, Error, Result};

/// Smallest grid accepted; below this the 3-point stencils degenerate.
pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    h: f64,
    points: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        // the domain is fixed, so the size determines everything else
        self.n == other.n
    }
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::GridTooSmall(n));
        }
        let h = 2.0 * PI / n as f64;
        let points = (0..n).map(|i| -PI + i as f64 * h).collect();
        Ok(Self { n, h, points })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub(crate) fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: values.len(),
            });
        }
        Ok(())
    }

    /// `h Σ_i values_i`.
    pub fn quadrature(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values)?;
        check_finite(values)?;
        Ok(self.h * values.iter().sum::<f64>())
    }

    /// Central difference `(f[i+1] - f[i-1]) / 2h` with wrap-around.
    pub fn periodic_gradient(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let mut out = vec![0.0; self.n];
        self.gradient_into(f, &mut out);
        Ok(out)
    }

    /// Three-point Laplacian `(f[i+1] + f[i-1] - 2 f[i]) / h²` with wrap-around.
    pub fn periodic_laplacian(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let mut out = vec![0.0; self.n];
        self.laplacian_into(f, &mut out);
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        let inv = 1.0 / (2.0 * self.h);
        out[0] = (f[1] - f[n - 1]) * inv;
        for i in 1..n - 1 {
            out[i] = (f[i + 1] - f[i - 1]) * inv;
        }
        out[n - 1] = (f[0] - f[n - 2]) * inv;
    }

    pub(crate) fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        let inv = 1.0 / (self.h * self.h);
        out[0] = (f[1] + f[n - 1] - 2.0 * f[0]) * inv;
        for i in 1..n - 1 {
            out[i] = (f[i + 1] + f[i - 1] - 2.0 * f[i]) * inv;
        }
        out[n - 1] = (f[0] + f[n - 2] - 2.0 * f[n - 1]) * inv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn spacing_and_points() {
        let g = Grid::new(2000).unwrap();
        assert!((g.spacing() - PI / 1000.0).abs() < 1e-18);
        assert!((g.spacing() * 2000.0 - 2.0 * PI).abs() <= 4.0 * f64::EPSILON);

        let g = Grid::new(8).unwrap();
        let expected: Vec<f64> = (0..8).map(|i| -PI + i as f64 * PI / 4.0).collect();
        assert!(sup(g.points(), &expected) < 1e-15);
        assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        assert!(*g.points().last().unwrap() < PI);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert_eq!(Grid::new(7).unwrap_err(), Error::GridTooSmall(7));
        assert!(Grid::new(0).is_err());
    }

    #[test]
    fn quadrature_basics() {
        for n in [8, 100, 2000] {
            let g = Grid::new(n).unwrap();
            let q = g.quadrature(&vec![1.0; n]).unwrap();
            assert!((q - 2.0 * PI).abs() < 1e-12);
        }
        let g = Grid::new(2000).unwrap();
        let c: Vec<f64> = g.points().iter().map(|x| x.cos()).collect();
        assert!(g.quadrature(&c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_refined_oracle() {
        // oracle: the same integral on a 10^6-point grid
        let oracle = {
            let n = 1_000_000;
            let h = 2.0 * PI / n as f64;
            h * (0..n)
                .map(|i| (6.0 * (-PI + i as f64 * h).cos()).exp())
                .sum::<f64>()
        };
        let g = Grid::new(2000).unwrap();
        let v: Vec<f64> = g.points().iter().map(|x| (6.0 * x.cos()).exp()).collect();
        let q = g.quadrature(&v).unwrap();
        assert!(((q - oracle) / oracle).abs() < 1e-10, "{q} vs {oracle}");
    }

    #[test]
    fn quadrature_rejects_bad_input() {
        let g = Grid::new(8).unwrap();
        let mut v = vec![1.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(g.quadrature(&v), Err(Error::NonFinite { index: 3, .. })));
        v[3] = f64::INFINITY;
        assert!(g.quadrature(&v).is_err());
        assert!(matches!(
            g.quadrature(&[1.0; 7]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn gradient_of_single_modes() {
        let g = Grid::new(2000).unwrap();
        let h = g.spacing();
        let zero = g.periodic_gradient(&vec![3.5; 2000]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));

        let s: Vec<f64> = g.points().iter().map(|x| x.sin()).collect();
        let d = g.periodic_gradient(&s).unwrap();
        let exact: Vec<f64> = g.points().iter().map(|x| x.cos() * h.sin() / h).collect();
        assert!(sup(&d, &exact) < 1e-12);
        let cos: Vec<f64> = g.points().iter().map(|x| x.cos()).collect();
        assert!(sup(&d, &cos) < h * h);
    }

    #[test]
    fn gradient_of_sawtooth_interior() {
        let g = Grid::new(64).unwrap();
        let d = g.periodic_gradient(g.points()).unwrap();
        for v in &d[1..63] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // the seam sees the 2π jump
        assert!(d[0] < 0.0 && d[63] < 0.0);
    }

    #[test]
    fn laplacian_of_single_modes() {
        let g = Grid::new(2000).unwrap();
        let h = g.spacing();
        let zero = g.periodic_laplacian(&vec![-1.25; 2000]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));

        let c: Vec<f64> = g.points().iter().map(|x| x.cos()).collect();
        let l = g.periodic_laplacian(&c).unwrap();
        let eig = (2.0 - 2.0 * h.cos()) / (h * h);
        let exact: Vec<f64> = c.iter().map(|v| -v * eig).collect();
        assert!(sup(&l, &exact) < 1e-7);
        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        assert!(sup(&l, &neg) < h * h);
    }

    #[test]
    fn laplacian_cos2x_against_doubled_resolution() {
        let g = Grid::new(2000).unwrap();
        let fine = Grid::new(4000).unwrap();
        let f = |g: &Grid| -> Vec<f64> { g.points().iter().map(|x| (2.0 * x).cos()).collect() };
        let l = g.periodic_laplacian(&f(&g)).unwrap();
        let lf = fine.periodic_laplacian(&f(&fine)).unwrap();
        // fine grid contains every coarse point at even indices
        let lf_on_coarse: Vec<f64> = lf.iter().step_by(2).copied().collect();
        let exact: Vec<f64> = f(&g).iter().map(|v| -4.0 * v).collect();
        let coarse_err = sup(&l, &exact);
        let fine_err = sup(&lf_on_coarse, &exact);
        // truncation error 16 h²/12 ≈ 1.3e-5 at n = 2000, quartered by halving h
        assert!(coarse_err < 16.0 * g.spacing().powi(2) / 12.0 * 1.01, "{coarse_err}");
        assert!((coarse_err / fine_err - 4.0).abs() < 0.05);
        let h = g.spacing();
        let eig = (2.0 - 2.0 * (2.0 * h).cos()) / (h * h);
        let discrete: Vec<f64> = f(&g).iter().map(|v| -eig * v).collect();
        assert!(sup(&l, &discrete) < 1e-7);
    }

    #[test]
    fn stencils_are_linear_and_conservative() {
        let g = Grid::new(257).unwrap();
        let f: Vec<f64> = g.points().iter().map(|x| (3.0 * x).sin() + x.cos().exp()).collect();
        let k: Vec<f64> = g.points().iter().map(|x| (x * 0.7).cos() - x.sin()).collect();
        let (a, b) = (1.7, -0.3);
        let comb: Vec<f64> = f.iter().zip(&k).map(|(u, v)| a * u + b * v).collect();
        for op in [Grid::periodic_gradient, Grid::periodic_laplacian] {
            let lhs = op(&g, &comb).unwrap();
            let (of, ok) = (op(&g, &f).unwrap(), op(&g, &k).unwrap());
            let rhs: Vec<f64> = of.iter().zip(&ok).map(|(u, v)| a * u + b * v).collect();
            let scale = rhs.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            assert!(sup(&lhs, &rhs) < 1e-12 * scale);
        }
        let lap = g.periodic_laplacian(&f).unwrap();
        let scale = lap.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        assert!(lap.iter().sum::<f64>().abs() < 1e-11 * scale * 257.0);
    }

    proptest::proptest! {
        #[test]
        fn gradient_integrates_to_zero(f in proptest::collection::vec(-50.0f64..50.0, 8..300)) {
            let g = Grid::new(f.len()).unwrap();
            let d = g.periodic_gradient(&f).unwrap();
            let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            proptest::prop_assert!(g.quadrature(&d).unwrap().abs() <= 1e-10 * norm.max(1.0));
        }
    }
}
