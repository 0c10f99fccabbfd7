//! Experiment configuration: TOML schema, validation and the canonical hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gradflow::cumulant::MAX_ORDER;
use gradflow::flow::DEFAULT_RECORD_DT;
use gradflow::potential::PotentialSource;
use gradflow::{Builtin, FlowKind, Potential, PotentialSpec, RunConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const BUNDLED: [(&str, &str); 2] = [
    ("paper_pi1", include_str!("../configs/paper_pi1.toml")),
    ("paper_pi2", include_str!("../configs/paper_pi2.toml")),
];

fn default_n() -> usize {
    2000
}

fn default_record_dt() -> f64 {
    DEFAULT_RECORD_DT
}

fn default_order() -> usize {
    gradflow::cumulant::DEFAULT_ORDER
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub target: PotentialSpec,
    pub inits: Vec<PotentialSpec>,
    pub flows: Vec<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Stepsize per flow label; not needed for `FR_exact`.
    #[serde(default)]
    pub eps: BTreeMap<String, f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Per-flow overrides of `T`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub horizons: BTreeMap<String, f64>,
    #[serde(default = "default_record_dt")]
    pub record_dt: f64,
    #[serde(default)]
    pub q_list: Vec<f64>,
    #[serde(default)]
    pub slope_windows: BTreeMap<String, [f64; 2]>,
    #[serde(default = "default_order")]
    pub cumulant_order: usize,
    #[serde(default)]
    pub renormalize_w: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

/// One (flow, init) run after validation.
#[derive(Debug, Clone)]
pub struct Job {
    pub init_index: usize,
    pub run: RunConfig,
    pub window: Option<(f64, f64)>,
}

/// A validated config, ready to execute.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub target: Potential,
    pub inits: Vec<Potential>,
    pub flows: Vec<FlowKind>,
    pub jobs: Vec<Job>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| CliError::Config(vec![format!("cannot parse config: {e}")]))?;
        cfg.normalize_flow_names();
        Ok(cfg)
    }

    /// Rewrites recognised flow names (any case) to their canonical labels.
    fn normalize_flow_names(&mut self) {
        let canon = |s: &String| s.parse::<FlowKind>().map(|k| k.label().to_string()).unwrap_or_else(|_| s.clone());
        self.flows = self.flows.iter().map(canon).collect();
        self.eps = std::mem::take(&mut self.eps).into_iter().map(|(k, v)| (canon(&k), v)).collect();
        self.horizons = std::mem::take(&mut self.horizons).into_iter().map(|(k, v)| (canon(&k), v)).collect();
        self.slope_windows =
            std::mem::take(&mut self.slope_windows).into_iter().map(|(k, v)| (canon(&k), v)).collect();
    }

    /// A file path, or the name of a bundled config.
    pub fn load(arg: &str) -> Result<Self, CliError> {
        let path = Path::new(arg);
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(vec![format!("cannot read {arg}: {e}")]))?;
            return Self::from_toml(&text);
        }
        match BUNDLED.iter().find(|(name, _)| *name == arg) {
            Some((_, text)) => Self::from_toml(text),
            None => Err(CliError::Config(vec![format!(
                "no config file at {arg} and no bundled config of that name (bundled: {})",
                BUNDLED.map(|b| b.0).join(", ")
            )])),
        }
    }

    pub fn horizon_for(&self, kind: FlowKind) -> f64 {
        self.horizons.get(kind.label()).copied().unwrap_or(self.horizon)
    }

    /// Checks every field and returns all violations at once.
    pub fn validate(&self, force_cfl: bool) -> Result<Plan, CliError> {
        let mut problems = Vec::new();

        let mut flows = Vec::new();
        if self.flows.is_empty() {
            problems.push("flows must be non-empty".to_string());
        }
        for f in &self.flows {
            match f.parse::<FlowKind>() {
                Ok(k) if flows.contains(&k) => problems.push(format!("flow {f} listed twice")),
                Ok(k) => flows.push(k),
                Err(_) => problems.push(format!("unknown flow '{f}' (expected FR, W, WFR or FR_exact)")),
            }
        }
        for (what, keys) in [
            ("eps", self.eps.keys().collect::<Vec<_>>()),
            ("horizons", self.horizons.keys().collect()),
            ("slope_windows", self.slope_windows.keys().collect()),
        ] {
            for k in keys {
                if k.parse::<FlowKind>().is_err() {
                    problems.push(format!("{what}: unknown flow '{k}'"));
                }
            }
        }

        let target = match self.target.build() {
            Ok(p) => Some(p),
            Err(e) => {
                problems.push(format!("target: {e}"));
                None
            }
        };
        if self.inits.is_empty() {
            problems.push("inits must be non-empty".to_string());
        }
        let mut inits = Vec::new();
        for (i, spec) in self.inits.iter().enumerate() {
            match spec.build() {
                Ok(p) => inits.push(p),
                Err(e) => problems.push(format!("inits[{i}]: {e}")),
            }
        }
        for (what, spec) in std::iter::once(("target".to_string(), &self.target))
            .chain(self.inits.iter().enumerate().map(|(i, s)| (format!("inits[{i}]"), s)))
        {
            if let PotentialSource::Values { values } = &spec.source {
                if values.len() != self.n {
                    problems.push(format!("{what}: {} tabulated values but n = {}", values.len(), self.n));
                }
            }
        }
        let labels: Vec<String> = self.inits.iter().map(PotentialSpec::display_name).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                problems.push(format!("inits[{i}]: label '{l}' is used twice; set distinct labels"));
            }
        }

        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            problems.push(format!("T must be positive, got {}", self.horizon));
        }
        if !(2..=MAX_ORDER).contains(&self.cumulant_order) {
            problems.push(format!("cumulant_order must be in 2..={MAX_ORDER}, got {}", self.cumulant_order));
        }
        for &kind in &flows {
            if kind.is_pde() && !self.eps.contains_key(kind.label()) {
                problems.push(format!("eps.{} is required for flow {}", kind.label(), kind.label()));
            }
            let horizon = self.horizon_for(kind);
            if let Some([t1, t2]) = self.slope_windows.get(kind.label()) {
                if !(0.0 <= *t1 && t1 < t2) {
                    problems.push(format!("slope_windows.{}: need 0 <= t1 < t2, got ({t1}, {t2})", kind.label()));
                } else if *t2 > horizon + 1e-12 {
                    problems.push(format!(
                        "slope_windows.{}: t2 = {t2} is past the horizon {horizon}",
                        kind.label()
                    ));
                }
            }
        }

        let mut jobs = Vec::new();
        if let Some(target) = &target {
            if inits.len() == self.inits.len() {
                for &kind in &flows {
                    for (i, init) in inits.iter().enumerate() {
                        let mut run = RunConfig::new(kind, target.clone(), init.clone());
                        run.target_label = self.target.display_name();
                        run.init_label = labels[i].clone();
                        run.n = self.n;
                        run.step_size = self.eps.get(kind.label()).copied().unwrap_or(f64::NAN);
                        run.horizon = self.horizon_for(kind);
                        run.record_dt = self.record_dt;
                        run.q_list = self.q_list.clone();
                        run.renormalize_w = self.renormalize_w;
                        run.force_cfl = force_cfl;
                        if kind.is_pde() && !self.eps.contains_key(kind.label()) {
                            run.step_size = 1.0;
                        }
                        for p in run.validate() {
                            if !problems.contains(&p) {
                                problems.push(p);
                            }
                        }
                        let window = self.slope_windows.get(kind.label()).map(|w| (w[0], w[1]));
                        jobs.push(Job { init_index: i, run, window });
                    }
                }
            }
        }

        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        Ok(Plan {
            config: self.clone(),
            target: target.expect("checked"),
            inits,
            flows,
            jobs,
        })
    }

    /// SHA-256 over the fields that change results. Labels, the config name
    /// and the output directory are presentation only; flow order and TOML
    /// formatting do not matter.
    pub fn hash(&self) -> String {
        let mut flows: Vec<String> = self
            .flows
            .iter()
            .map(|f| f.parse::<FlowKind>().map(|k| k.label().to_string()).unwrap_or_else(|_| f.clone()))
            .collect();
        flows.sort();
        flows.dedup();
        let per_flow = |f: &String| {
            let kind = f.parse::<FlowKind>().ok();
            serde_json::json!({
                "flow": f,
                "eps": kind.filter(|k| k.is_pde()).and_then(|k| self.eps.get(k.label())),
                "horizon": kind.map(|k| self.horizon_for(k)),
                "window": self.slope_windows.get(f),
            })
        };
        let canonical = serde_json::json!({
            "target": canonical_source(&self.target),
            "inits": self.inits.iter().map(canonical_source).collect::<Vec<_>>(),
            "flows": flows.iter().map(per_flow).collect::<Vec<_>>(),
            "n": self.n,
            "record_dt": self.record_dt,
            "q_list": self.q_list,
            "cumulant_order": self.cumulant_order,
            "renormalize_w": self.renormalize_w && flows.iter().any(|f| f == "W"),
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn canonical_source(spec: &PotentialSpec) -> serde_json::Value {
    match &spec.source {
        PotentialSource::Builtin { builtin } => match builtin.parse::<Builtin>() {
            Ok(b) => serde_json::json!({ "builtin": b.name() }),
            Err(_) => serde_json::json!({ "builtin": builtin }),
        },
        other => serde_json::to_value(other).expect("plain data"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        target = { builtin = "V2" }
        inits = [{ builtin = "Vd" }]
        flows = ["FR", "FR_exact"]
        n = 64
        T = 1.0
        record_dt = 0.01
        q_list = [2.0]
        [eps]
        FR = 1e-4
    "#;

    #[test]
    fn bundled_configs_validate() {
        for (name, _) in BUNDLED {
            let cfg = ExperimentConfig::load(name).unwrap();
            let plan = cfg.validate(false).unwrap();
            assert_eq!(plan.jobs.len(), plan.flows.len() * plan.inits.len());
        }
    }

    #[test]
    fn empty_flows_are_reported_with_everything_else() {
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.flows.clear();
        cfg.q_list = vec![0.5];
        cfg.horizon = -1.0;
        let Err(CliError::Config(p)) = cfg.validate(false) else { panic!() };
        assert!(p.contains(&"flows must be non-empty".to_string()), "{p:?}");
        assert!(p.iter().any(|m| m.contains("T must be positive")));
        assert!(p.len() >= 2);
    }

    #[test]
    fn missing_eps_and_bad_window() {
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.flows.push("W".into());
        cfg.slope_windows.insert("FR".into(), [0.5, 2.0]);
        let Err(CliError::Config(p)) = cfg.validate(false) else { panic!() };
        assert!(p.iter().any(|m| m.contains("eps.W is required")), "{p:?}");
        assert!(p.iter().any(|m| m.contains("past the horizon")), "{p:?}");
    }

    #[test]
    fn unknown_fields_and_potentials() {
        assert!(ExperimentConfig::from_toml(&format!("bogus = 1\n{SMALL}")).is_err());
        let bad = SMALL.replace("\"Vd\"", "\"Vz\"");
        let Err(CliError::Config(p)) = ExperimentConfig::from_toml(&bad).unwrap().validate(false) else {
            panic!()
        };
        assert!(p[0].contains("inits[0]"), "{p:?}");
    }

    #[test]
    fn cfl_guard_and_override() {
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.n = 2000;
        cfg.flows = vec!["W".into()];
        cfg.eps.insert("W".into(), 1e-5);
        let Err(CliError::Config(p)) = cfg.validate(false) else { panic!() };
        assert!(p.iter().any(|m| m.contains("diffusion limit")), "{p:?}");
        assert!(cfg.validate(true).is_ok());
    }

    #[test]
    fn hash_ignores_presentation() {
        let a = ExperimentConfig::from_toml(SMALL).unwrap();
        let reformatted = r#"
            flows = [ "FR_exact", "FR" ]   # reordered
            T = 1
            n = 64
            record_dt = 1e-2
            q_list = [ 2 ]
            output_dir = "elsewhere"
            name = "renamed"
            target = { builtin = "v2", label = "pi" }
            inits = [ { builtin = "VD" } ]
            eps = { fr = 0.0001 }
        "#;
        let b = ExperimentConfig::from_toml(reformatted).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn hash_tracks_meaningful_fields() {
        let base = ExperimentConfig::from_toml(SMALL).unwrap();
        let h = base.hash();
        let edits: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.n = 128),
            Box::new(|c| c.horizon = 2.0),
            Box::new(|c| c.record_dt = 0.02),
            Box::new(|c| c.q_list.push(4.0)),
            Box::new(|c| c.cumulant_order = 6),
            Box::new(|c| {
                c.eps.insert("FR".into(), 2e-4);
            }),
            Box::new(|c| {
                c.slope_windows.insert("FR".into(), [0.5, 1.0]);
            }),
            Box::new(|c| {
                c.horizons.insert("FR".into(), 0.5);
            }),
            Box::new(|c| c.flows.pop().map(|_| ()).unwrap_or(())),
            Box::new(|c| c.target = PotentialSpec::builtin(Builtin::V1)),
            Box::new(|c| c.inits.push(PotentialSpec::builtin(Builtin::Vc))),
        ];
        for (i, edit) in edits.iter().enumerate() {
            let mut c = base.clone();
            edit(&mut c);
            assert_ne!(c.hash(), h, "edit {i} left the hash unchanged");
        }
        // stepsize of a flow that is not run does not matter
        let mut c = base.clone();
        c.eps.insert("W".into(), 1.0);
        assert_eq!(c.hash(), h);
    }
}
