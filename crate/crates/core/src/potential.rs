//! Energy functions `V(x)` on the periodic domain.
//!
//! The analytic path is a finite trigonometric sum `Σ a_j cos(k_j x)` /
//! `a_j sin(k_j x)`, closed under differentiation, which covers every target
//! and initialization used in the experiments. A tabulated fallback takes raw
//! values on a grid and differentiates them with the periodic stencils; such
//! potentials report [`Potential::is_numeric`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigKind {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    #[serde(rename = "a")]
    pub amplitude: f64,
    pub kind: TrigKind,
    #[serde(rename = "k")]
    pub frequency: u32,
}

impl TrigTerm {
    pub fn cos(amplitude: f64, frequency: u32) -> Self {
        Self { amplitude, kind: TrigKind::Cos, frequency }
    }

    pub fn sin(amplitude: f64, frequency: u32) -> Self {
        Self { amplitude, kind: TrigKind::Sin, frequency }
    }

    fn value(&self, x: f64) -> f64 {
        let kx = self.frequency as f64 * x;
        match self.kind {
            TrigKind::Cos => self.amplitude * kx.cos(),
            TrigKind::Sin => self.amplitude * kx.sin(),
        }
    }

    fn derivative(&self) -> Self {
        let k = self.frequency as f64;
        match self.kind {
            TrigKind::Cos => Self::sin(-self.amplitude * k, self.frequency),
            TrigKind::Sin => Self::cos(self.amplitude * k, self.frequency),
        }
    }
}

/// The six potentials of the reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Builtin {
    V1,
    V2,
    Va,
    Vb,
    Vc,
    Vd,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::V1,
        Builtin::V2,
        Builtin::Va,
        Builtin::Vb,
        Builtin::Vc,
        Builtin::Vd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::V1 => "V1",
            Builtin::V2 => "V2",
            Builtin::Va => "Va",
            Builtin::Vb => "Vb",
            Builtin::Vc => "Vc",
            Builtin::Vd => "Vd",
        }
    }

    fn terms(self) -> Vec<TrigTerm> {
        let v1 = vec![TrigTerm::cos(2.5, 2), TrigTerm::sin(0.5, 1)];
        let neg = |ts: Vec<TrigTerm>| {
            ts.into_iter()
                .map(|t| TrigTerm { amplitude: -t.amplitude, ..t })
                .collect()
        };
        match self {
            Builtin::V1 => v1,
            Builtin::V2 => vec![TrigTerm::cos(-6.0, 1)],
            Builtin::Va => neg(v1),
            Builtin::Vb => vec![TrigTerm::cos(2.5, 2)],
            Builtin::Vc => vec![TrigTerm::cos(6.0, 1)],
            Builtin::Vd => Vec::new(),
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownPotential(s.to_string()))
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Trig(Vec<TrigTerm>),
    Tabulated(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    shape: Shape,
    name: Option<String>,
}

impl Potential {
    pub fn trig(terms: Vec<TrigTerm>) -> Result<Self> {
        for t in &terms {
            if t.frequency == 0 {
                return Err(Error::InvalidParameter(
                    "trig term frequency must be positive".into(),
                ));
            }
            if !t.amplitude.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "trig term amplitude {} is not finite",
                    t.amplitude
                )));
            }
        }
        Ok(Self { shape: Shape::Trig(terms), name: None })
    }

    /// Values sampled on a grid; derivatives come from the periodic stencils.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.len() < crate::grid::MIN_POINTS {
            return Err(Error::GridTooSmall(values.len()));
        }
        Ok(Self { shape: Shape::Tabulated(values), name: None })
    }

    pub fn builtin(b: Builtin) -> Self {
        Self { shape: Shape::Trig(b.terms()), name: Some(b.name().to_string()) }
    }

    pub fn zero() -> Self {
        Self { shape: Shape::Trig(Vec::new()), name: None }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.shape, Shape::Tabulated(_))
    }

    pub fn terms(&self) -> Option<&[TrigTerm]> {
        match &self.shape {
            Shape::Trig(t) => Some(t),
            Shape::Tabulated(_) => None,
        }
    }

    /// Pointwise value; `None` for tabulated potentials.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.terms().map(|ts| ts.iter().map(|t| t.value(x)).sum())
    }

    /// Symbolic derivative of a trigonometric potential.
    pub fn derivative(&self) -> Option<Potential> {
        self.terms().map(|ts| Potential {
            shape: Shape::Trig(ts.iter().map(TrigTerm::derivative).collect()),
            name: self.name.as_ref().map(|n| format!("{n}'")),
        })
    }

    /// `(1 - tau) * v0 + tau * vstar`, the exponent of the linear annealing path.
    pub fn interpolate(v0: &Potential, vstar: &Potential, tau: f64) -> Result<Potential> {
        match (&v0.shape, &vstar.shape) {
            (Shape::Trig(a), Shape::Trig(b)) => {
                let scale = |ts: &[TrigTerm], c: f64| {
                    ts.iter()
                        .map(|t| TrigTerm { amplitude: c * t.amplitude, ..*t })
                        .collect::<Vec<_>>()
                };
                let mut terms = scale(a, 1.0 - tau);
                terms.extend(scale(b, tau));
                Potential::trig(terms)
            }
            (Shape::Tabulated(a), Shape::Tabulated(b)) if a.len() == b.len() => {
                Potential::tabulated(
                    a.iter().zip(b).map(|(x, y)| (1.0 - tau) * x + tau * y).collect(),
                )
            }
            _ => Err(Error::InvalidParameter(
                "cannot interpolate between trig and tabulated potentials of different sizes"
                    .into(),
            )),
        }
    }

    pub fn eval(&self, grid: &Grid) -> Result<Vec<f64>> {
        match &self.shape {
            Shape::Trig(ts) => Ok(grid
                .points()
                .iter()
                .map(|&x| ts.iter().map(|t| t.value(x)).sum())
                .collect()),
            Shape::Tabulated(v) => {
                grid.check_len(v)?;
                Ok(v.clone())
            }
        }
    }

    pub fn eval_grad(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self.derivative() {
            Some(d) => d.eval(grid),
            None => grid.periodic_gradient(&self.eval(grid)?),
        }
    }

    pub fn eval_laplacian(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self.derivative().and_then(|d| d.derivative()) {
            Some(d) => d.eval(grid),
            None => grid.periodic_laplacian(&self.eval(grid)?),
        }
    }
}

/// Config-file form of a potential:
/// `{"builtin": "V1"}`, `{"terms": [{"a": 2.5, "kind": "cos", "k": 2}]}` or
/// `{"values": [...]}`, each with an optional `"label"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub source: PotentialSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSource {
    Builtin { builtin: String },
    Terms { terms: Vec<TrigTerm> },
    Values { values: Vec<f64> },
}

impl PotentialSpec {
    pub fn builtin(b: Builtin) -> Self {
        Self {
            source: PotentialSource::Builtin { builtin: b.name().to_string() },
            label: None,
        }
    }

    pub fn build(&self) -> Result<Potential> {
        let p = match &self.source {
            PotentialSource::Builtin { builtin } => Potential::builtin(builtin.parse()?),
            PotentialSource::Terms { terms } => Potential::trig(terms.clone())?,
            PotentialSource::Values { values } => Potential::tabulated(values.clone())?,
        };
        Ok(match &self.label {
            Some(l) => p.with_name(l.clone()),
            None => p,
        })
    }

    /// Label used in file names and legends.
    pub fn display_name(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match &self.source {
            PotentialSource::Builtin { builtin } => builtin.clone(),
            PotentialSource::Terms { .. } => "terms".into(),
            PotentialSource::Values { .. } => "values".into(),
        }
    }
}
