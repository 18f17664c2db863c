//! Experiment configuration, default step sizes and sweep grids.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adversary::{generate_delays, CostGenerator, CostSequence, DelayKind, DelaySchedule};
use crate::confidence::CounterKind;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::learners::{Algorithm, DelayedHedge, DelayedOreps, Learner, Tuning, UobFtrl, UobReps};
use crate::mdp::{Dims, MdpJson, MdpSpec};
use crate::occupancy_opt::SolverConfig;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    Inline(MdpJson),
    /// Dirichlet(1) rows, initial state 0. Without a seed the run seed is used.
    LayeredRandom {
        #[serde(rename = "S")]
        states: usize,
        #[serde(rename = "A")]
        actions: usize,
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl MdpSource {
    pub fn build(&self, run_seed: u64) -> Result<MdpSpec> {
        match self {
            Self::Inline(raw) => MdpSpec::try_from(raw.clone()),
            Self::LayeredRandom {
                states,
                actions,
                horizon,
                seed,
            } => {
                let dims = Dims::new(*states, *actions, *horizon)?;
                Ok(MdpSpec::layered_random(dims, &mut stream(seed.unwrap_or(run_seed), "mdp")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    #[serde(flatten)]
    pub generator: CostGenerator,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayConfig {
    #[serde(flatten)]
    pub kind: DelayKind,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_cap() -> usize {
    4096
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Learning rate; the default rate formula when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Implicit exploration; the default rate formula when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Counter family feeding the confidence set. Defaults: immediate for
    /// hedge and uob-ftrl, delayed for uob-reps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_feedback: Option<CounterKind>,
    /// Estimator of the mirror-descent learners.
    #[serde(default = "LearnerConfig::default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default = "default_cap")]
    pub hedge_cap: usize,
}

impl LearnerConfig {
    fn default_estimator() -> EstimatorKind {
        EstimatorKind::DelayAdapted
    }

    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            eta: None,
            gamma: None,
            delta: default_delta(),
            solver: SolverConfig::default(),
            trajectory_feedback: None,
            estimator: Self::default_estimator(),
            hedge_cap: default_cap(),
        }
    }

    pub fn feedback(&self) -> CounterKind {
        self.trajectory_feedback.unwrap_or(match self.algorithm {
            Algorithm::UobReps => CounterKind::Delayed,
            _ => CounterKind::Immediate,
        })
    }

    /// Explicit values where given, default rate formulas otherwise.
    pub fn tuning(&self, dims: Dims, episodes: usize, total_delay: usize) -> Tuning {
        let (eta, gamma) = default_rates(self.algorithm, dims, episodes, total_delay, self.delta);
        Tuning {
            eta: self.eta.unwrap_or(eta),
            gamma: self.gamma.unwrap_or(gamma),
            delta: self.delta,
            episodes,
        }
    }

    pub fn build(&self, mdp: &MdpSpec, tuning: Tuning) -> Result<Box<dyn Learner>> {
        let dims = mdp.dims();
        let s0 = mdp.initial_state();
        let feedback = self.feedback();
        Ok(match self.algorithm {
            Algorithm::Hedge => Box::new(DelayedHedge::new(dims, s0, tuning, feedback, self.hedge_cap)?),
            Algorithm::UobFtrl => Box::new(UobFtrl::new(dims, s0, tuning, self.solver, feedback)?),
            Algorithm::UobReps => Box::new(UobReps::new(dims, s0, tuning, self.solver, self.estimator, feedback)?),
            Algorithm::OrepsKnown => Box::new(DelayedOreps::new(mdp.clone(), tuning, self.solver, self.estimator)?),
        })
    }
}

/// Default `(η, γ)` for each learner, with `K` and `D` known in advance.
pub fn default_rates(algorithm: Algorithm, dims: Dims, episodes: usize, total_delay: usize, delta: f64) -> (f64, f64) {
    let (s, a, h) = (dims.states as f64, dims.actions as f64, dims.horizon as f64);
    let k = episodes as f64;
    let d = total_delay as f64;
    let hsa = h * s * a;
    match algorithm {
        Algorithm::OrepsKnown | Algorithm::UobReps => {
            let log = if algorithm == Algorithm::OrepsKnown {
                (hsa / delta).ln()
            } else {
                (k * hsa / delta).ln()
            };
            let rate = (log / (s * a * k)).sqrt().min((log / (hsa.sqrt() * d)).sqrt());
            (rate, rate)
        }
        Algorithm::Hedge => {
            let iota = (hsa * k / delta).ln();
            let rate = (s * iota / (h * d + hsa * k)).sqrt();
            (rate, rate)
        }
        Algorithm::UobFtrl => {
            let log = (hsa * k / delta).ln();
            let eta = (h * log / (hsa * k + hsa * hsa * d)).sqrt();
            let gamma = (log / (s * a * k)).sqrt();
            (eta, gamma)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "ExperimentConfig::default_name")]
    pub name: String,
    pub mdp: MdpSource,
    pub costs: CostConfig,
    pub delays: DelayConfig,
    pub learner: LearnerConfig,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Report `Σ_π ω(π)⟨q^{π,p}, c⟩` for Hedge instead of the sampled policy's value.
    #[serde(default = "default_true")]
    pub exact_expected_cost: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Everything a single run needs, fixed before the first episode.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub seed: u64,
    pub mdp: MdpSpec,
    pub costs: CostSequence,
    pub delays: DelaySchedule,
    pub tuning: Tuning,
}

impl ExperimentConfig {
    fn default_name() -> String {
        "experiment".into()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let l = &self.learner;
        for (name, value) in [("eta", l.eta), ("gamma", l.gamma)] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if !(l.delta > 0.0 && l.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", l.delta)));
        }
        l.solver.validate()?;
        if let MdpSource::Inline(raw) = &self.mdp {
            MdpSpec::try_from(raw.clone()).map_err(|e| Error::Config(format!("invalid MDP: {e}")))?;
        }
        Ok(())
    }

    /// Materializes the environment of the run with `seed`.
    pub fn setup(&self, seed: u64) -> Result<RunSetup> {
        let mdp = self.mdp.build(seed)?;
        let costs = CostSequence::generate(&self.costs.generator, mdp.dims(), self.episodes, self.costs.seed.unwrap_or(seed))?;
        let delays = generate_delays(&self.delays.kind, self.episodes, self.delays.seed.unwrap_or(seed))?;
        let tuning = self.learner.tuning(mdp.dims(), self.episodes, delays.total());
        tuning.validate()?;
        Ok(RunSetup {
            seed,
            mdp,
            costs,
            delays,
            tuning,
        })
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }
}

/// A base experiment plus a grid of dotted paths to value lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub grid: BTreeMap<String, Vec<Value>>,
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("grid path {path:?} crosses a non-object")))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config("empty grid path".into()))
}

fn label(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.base.validate()?;
        if cfg.grid.values().any(Vec::is_empty) {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Cartesian product of the grid, last axis varying fastest.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let base = serde_json::to_value(&self.base)?;
        let axes: Vec<(&String, &Vec<Value>)> = self.grid.iter().collect();
        let mut points = vec![(base, self.base.name.clone())];
        for (path, values) in axes {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for (doc, name) in &points {
                for v in values {
                    let mut doc = doc.clone();
                    set_path(&mut doc, path, v.clone())?;
                    next.push((doc, format!("{name}_{}={}", path.replace('.', "-"), label(v))));
                }
            }
            points = next;
        }
        points
            .into_iter()
            .map(|(mut doc, name)| {
                set_path(&mut doc, "name", Value::String(name))?;
                let cfg: ExperimentConfig = serde_json::from_value(doc)?;
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "name": "demo",
        "mdp": {"layered_random": {"S": 2, "A": 2, "H": 2, "seed": 3}},
        "costs": {"kind": "switching", "period": 50},
        "delays": {"kind": "constant", "value": 5},
        "learner": {"algorithm": "uob-reps", "eta": 0.1},
        "episodes": 100,
        "seeds": [1, 2]
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.learner.feedback(), CounterKind::Delayed);
        assert_eq!(cfg.learner.estimator, EstimatorKind::DelayAdapted);
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_json(), again.to_json());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = SAMPLE.replace(r#""eta": 0.1"#, r#""gamma": 0.0"#);
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace(r#""eta": 0.1"#, r#""delta": 1.0"#);
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace(r#""seeds": [1, 2]"#, r#""seeds": []"#);
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace("uob-reps", "exp4");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn default_rates_ignore_absent_delay() {
        let d = Dims::new(2, 2, 2).unwrap();
        let (eta, gamma) = default_rates(Algorithm::OrepsKnown, d, 1000, 0, 0.1);
        assert_eq!(eta, gamma);
        assert!((eta - ((80.0f64).ln() / 4000.0).sqrt()).abs() < 1e-15);
        let (slow, _) = default_rates(Algorithm::OrepsKnown, d, 1000, 1_000_000, 0.1);
        assert!(slow < eta);
    }

    #[test]
    fn setup_is_deterministic() {
        let cfg = ExperimentConfig::from_json(SAMPLE).unwrap();
        let a = cfg.setup(7).unwrap();
        let b = cfg.setup(7).unwrap();
        assert_eq!(a.costs, b.costs);
        assert_eq!(a.delays, b.delays);
        assert_eq!(a.mdp, b.mdp);
        assert_eq!(a.delays.total(), 500);
    }

    #[test]
    fn sweep_expands_product() {
        let text = format!(
            r#"{{"base": {SAMPLE}, "grid": {{"delays.value": [0, 50, 200], "learner.algorithm": ["oreps-known", "uob-reps"]}}}}"#
        );
        let sweep = SweepConfig::from_json(&text).unwrap();
        let points = sweep.expand().unwrap();
        assert_eq!(points.len(), 6);
        assert_eq!(points[0].name, "demo_delays-value=0_learner-algorithm=oreps-known");
        assert_eq!(points[5].learner.algorithm, Algorithm::UobReps);
        assert_eq!(points[5].delays.kind, DelayKind::Constant { value: 200 });
    }
}
