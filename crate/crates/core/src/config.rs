//! Run configuration: a sectioned plain-text format with every knob
//! optional, plus the resolution step that materializes defaults into a
//! fully concrete, re-serializable form.
//!
//! Sections: `[problem]` (generator, seed, parameters), `[timer]` (reset
//! bounds, rule, perturbations), `[simulation]` (horizons, sampling,
//! initialization), `[output]` (directory, file prefix). Command-line flags
//! override file values; defaults fill whatever remains. Matrix/vector
//! payloads are plain arrays of numbers; generated problems are recorded by
//! generator name and seed so any consumer can regenerate them exactly.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid::{ResetRule, TimerPolicy};
use crate::objectives::{
    gen_linear_network, gen_logistic, gen_quadratic, gen_quadratic_diagonal,
    quadratic_from_eigenvalues, rosenbrock, ObjectiveError, ProblemInstance,
};
use crate::simulate::{InitEta, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub generator: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub eig_lo: Option<f64>,
    pub eig_hi: Option<f64>,
    pub b_lo: Option<f64>,
    pub b_hi: Option<f64>,
    /// Data rows for the logistic generator.
    pub samples: Option<usize>,
    /// Explicit diagonal spectrum (with `linear`) for hand-specified
    /// quadratics.
    pub eigenvalues: Option<Vec<f64>>,
    pub linear: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimerSection {
    pub tau_max: Option<f64>,
    pub tau_min: Option<f64>,
    /// fixed_max | fixed_min | uniform | sequence
    pub reset: Option<String>,
    pub reset_seed: Option<u64>,
    pub reset_sequence: Option<Vec<f64>>,
    pub kappa: Option<f64>,
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon_t: Option<f64>,
    pub horizon_j: Option<u64>,
    pub sample_period: Option<f64>,
    /// zero | ball | optimum_offset | explicit
    pub init_x: Option<String>,
    pub init_x_values: Option<Vec<f64>>,
    pub init_radius: Option<f64>,
    pub init_seed: Option<u64>,
    /// agree | spread
    pub init_eta: Option<String>,
    pub init_eta_radius: Option<f64>,
    pub init_tau: Option<f64>,
    pub stop_grad_norm: Option<f64>,
    pub certify: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub prefix: Option<String>,
}

/// The on-disk config shape; every field optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub timer: TimerSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    /// Materialize all defaults. Instance-dependent defaults (the step bound
    /// from the smoothness constant) are resolved against the generated
    /// instance.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let generator = self.problem.generator.clone().unwrap_or_else(|| "quadratic".into());
        let seed = self.problem.seed.unwrap_or(0);
        let n = self.problem.n.unwrap_or(10);

        let instance = build_instance(&generator, n, seed, &self.problem)?;
        let dim = instance.partition.dim();

        let tau_max = match self.timer.tau_max {
            Some(v) => v,
            None => instance.benchmark_tau_max(),
        };
        let tau_min = self.timer.tau_min.unwrap_or(tau_max / 5.0);
        let reset = self.timer.reset.clone().unwrap_or_else(|| "fixed_max".into());
        let reset_seed = self.timer.reset_seed.unwrap_or(0);
        let reset_sequence = self.timer.reset_sequence.clone().unwrap_or_default();

        let resolved = Resolved {
            problem: ResolvedProblem {
                generator: generator.clone(),
                n: dim,
                agents: instance.partition.agents(),
                seed,
                eig_lo: self.problem.eig_lo.unwrap_or(2.0),
                eig_hi: self.problem.eig_hi.unwrap_or(4.0),
                b_lo: self.problem.b_lo.unwrap_or(default_b_lo(&generator)),
                b_hi: self.problem.b_hi.unwrap_or(default_b_hi(&generator)),
                samples: self.problem.samples.unwrap_or(5),
                eigenvalues: self.problem.eigenvalues.clone(),
                linear: self.problem.linear.clone(),
                k_smooth: instance.objective.smoothness(),
                pl_constant: instance.objective.gradient_dominance(),
                min_value: instance.objective.min_value(),
                constants_sampled: instance.objective.constants_are_estimates().1,
            },
            timer: ResolvedTimer {
                tau_max,
                tau_min,
                reset,
                reset_seed,
                reset_sequence,
                kappa: self.timer.kappa.unwrap_or(0.0),
                theta_min: self.timer.theta_min.unwrap_or(0.0),
                theta_max: self.timer.theta_max.unwrap_or(0.0),
            },
            simulation: ResolvedSimulation {
                horizon_t: self.simulation.horizon_t.unwrap_or(10.0),
                horizon_j: self.simulation.horizon_j.unwrap_or(0),
                sample_period: self.simulation.sample_period.unwrap_or(0.0),
                init_x: self.simulation.init_x.clone().unwrap_or_else(|| "zero".into()),
                init_x_values: self.simulation.init_x_values.clone().unwrap_or_default(),
                init_radius: self.simulation.init_radius.unwrap_or(1.0),
                init_seed: self.simulation.init_seed.unwrap_or(0),
                init_eta: self.simulation.init_eta.clone().unwrap_or_else(|| "agree".into()),
                init_eta_radius: self.simulation.init_eta_radius.unwrap_or(1.0),
                init_tau: self.simulation.init_tau,
                stop_grad_norm: self.simulation.stop_grad_norm.unwrap_or(0.0),
                certify: self.simulation.certify.unwrap_or(false),
            },
            output: ResolvedOutput {
                dir: self.output.dir.clone().unwrap_or_else(|| "out".into()),
                prefix: self.output.prefix.clone().unwrap_or_else(|| "run".into()),
            },
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

fn default_b_lo(generator: &str) -> f64 {
    match generator {
        "linear_nn" => 0.0,
        _ => 1.0,
    }
}

fn default_b_hi(generator: &str) -> f64 {
    match generator {
        "linear_nn" => 10.0,
        _ => 5.0,
    }
}

fn build_instance(
    generator: &str,
    n: usize,
    seed: u64,
    p: &ProblemSection,
) -> Result<ProblemInstance, ConfigError> {
    let eig_lo = p.eig_lo.unwrap_or(2.0);
    let eig_hi = p.eig_hi.unwrap_or(4.0);
    let b_lo = p.b_lo.unwrap_or(default_b_lo(generator));
    let b_hi = p.b_hi.unwrap_or(default_b_hi(generator));
    match generator {
        "quadratic" => Ok(gen_quadratic(n, eig_lo, eig_hi, b_lo, b_hi, seed)?),
        "quadratic_diag" => {
            if let (Some(eigs), Some(linear)) = (&p.eigenvalues, &p.linear) {
                Ok(quadratic_from_eigenvalues(eigs.clone(), linear.clone())?)
            } else {
                Ok(gen_quadratic_diagonal(n, eig_lo, eig_hi, b_lo, b_hi, seed)?)
            }
        }
        "linear_nn" => Ok(gen_linear_network(n, b_lo, b_hi, seed)?),
        "logistic" => Ok(gen_logistic(n, p.samples.unwrap_or(5), seed)?),
        "rosenbrock" => Ok(rosenbrock()),
        other => Err(ConfigError::UnknownGenerator(other.into())),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedProblem {
    pub generator: String,
    pub n: usize,
    pub agents: usize,
    pub seed: u64,
    pub eig_lo: f64,
    pub eig_hi: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub samples: usize,
    pub eigenvalues: Option<Vec<f64>>,
    pub linear: Option<Vec<f64>>,
    pub k_smooth: f64,
    pub pl_constant: f64,
    pub min_value: f64,
    pub constants_sampled: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedTimer {
    pub tau_max: f64,
    pub tau_min: f64,
    pub reset: String,
    pub reset_seed: u64,
    pub reset_sequence: Vec<f64>,
    pub kappa: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedSimulation {
    pub horizon_t: f64,
    pub horizon_j: u64,
    pub sample_period: f64,
    pub init_x: String,
    pub init_x_values: Vec<f64>,
    pub init_radius: f64,
    pub init_seed: u64,
    pub init_eta: String,
    pub init_eta_radius: f64,
    pub init_tau: Option<f64>,
    pub stop_grad_norm: f64,
    pub certify: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedOutput {
    pub dir: String,
    pub prefix: String,
}

/// Fully materialized configuration: serializable, and sufficient to rebuild
/// the instance, policy, and simulation inputs exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub problem: ResolvedProblem,
    pub timer: ResolvedTimer,
    pub simulation: ResolvedSimulation,
    pub output: ResolvedOutput,
}

impl Resolved {
    fn validate(&self) -> Result<(), ConfigError> {
        match self.simulation.init_x.as_str() {
            "zero" | "ball" | "optimum_offset" | "explicit" => {}
            other => return Err(ConfigError::Invalid(format!("unknown init_x mode `{other}`"))),
        }
        match self.simulation.init_eta.as_str() {
            "agree" | "spread" => {}
            other => return Err(ConfigError::Invalid(format!("unknown init_eta mode `{other}`"))),
        }
        match self.timer.reset.as_str() {
            "fixed_max" | "fixed_min" | "uniform" | "sequence" => {}
            other => return Err(ConfigError::Invalid(format!("unknown reset rule `{other}`"))),
        }
        if self.simulation.init_x == "explicit" && self.simulation.init_x_values.len() != self.problem.n
        {
            return Err(ConfigError::Invalid(format!(
                "explicit initial iterate has {} entries, problem has dimension {}",
                self.simulation.init_x_values.len(),
                self.problem.n
            )));
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<ProblemInstance, ConfigError> {
        let p = ProblemSection {
            generator: Some(self.problem.generator.clone()),
            n: Some(self.problem.n),
            seed: Some(self.problem.seed),
            eig_lo: Some(self.problem.eig_lo),
            eig_hi: Some(self.problem.eig_hi),
            b_lo: Some(self.problem.b_lo),
            b_hi: Some(self.problem.b_hi),
            samples: Some(self.problem.samples),
            eigenvalues: self.problem.eigenvalues.clone(),
            linear: self.problem.linear.clone(),
        };
        build_instance(&self.problem.generator, self.problem.n, self.problem.seed, &p)
    }

    pub fn build_policy(&self) -> Result<TimerPolicy, ConfigError> {
        let reset = match self.timer.reset.as_str() {
            "fixed_max" => ResetRule::FixedMax,
            "fixed_min" => ResetRule::FixedMin,
            "uniform" => ResetRule::Uniform { seed: self.timer.reset_seed },
            "sequence" => ResetRule::Sequence { values: self.timer.reset_sequence.clone() },
            other => return Err(ConfigError::Invalid(format!("unknown reset rule `{other}`"))),
        };
        let policy = TimerPolicy {
            tau_min: self.timer.tau_min,
            tau_max: self.timer.tau_max,
            reset,
            kappa: self.timer.kappa,
            theta_min: self.timer.theta_min,
            theta_max: self.timer.theta_max,
        };
        policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(policy)
    }

    pub fn build_sim_config(&self, inst: &ProblemInstance) -> Result<SimConfig, ConfigError> {
        let n = inst.partition.dim();
        let s = &self.simulation;
        let mut rng = ChaCha8Rng::seed_from_u64(s.init_seed);
        let unit = |rng: &mut ChaCha8Rng| -> DVector<f64> {
            loop {
                let v: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
                let norm = v.norm();
                if norm > 1e-12 {
                    return v / norm;
                }
            }
        };
        let init_x = match s.init_x.as_str() {
            "zero" => DVector::zeros(n),
            "explicit" => DVector::from_vec(s.init_x_values.clone()),
            "ball" => s.init_radius * unit(&mut rng),
            "optimum_offset" => {
                let x_star = inst.objective.project_to_minimizers(&DVector::zeros(n)).clone();
                &x_star + s.init_radius * unit(&mut rng)
            }
            other => return Err(ConfigError::Invalid(format!("unknown init_x mode `{other}`"))),
        };
        let init_eta = match s.init_eta.as_str() {
            "agree" => InitEta::Agree,
            "spread" => InitEta::PerAgent(
                (0..inst.partition.agents())
                    .map(|_| &init_x + s.init_eta_radius * unit(&mut rng))
                    .collect(),
            ),
            other => return Err(ConfigError::Invalid(format!("unknown init_eta mode `{other}`"))),
        };
        Ok(SimConfig {
            horizon_t: s.horizon_t,
            horizon_j: if s.horizon_j == 0 { None } else { Some(s.horizon_j) },
            sample_period: s.sample_period,
            init_x,
            init_eta,
            init_tau: s.init_tau,
            stop_grad_norm: if s.stop_grad_norm > 0.0 { Some(s.stop_grad_norm) } else { None },
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("resolved config serializes")
    }
}

/// Read a config that may be either the optional-field input shape or an
/// already resolved one (the resolved shape parses into the input shape).
pub fn load_resolved(path: &std::path::Path) -> Result<Resolved, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(resolved) = toml::from_str::<Resolved>(&text) {
        resolved.validate()?;
        return Ok(resolved);
    }
    let config: RunConfig = toml::from_str(&text)?;
    config.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_materialize_the_benchmark_step_bound() {
        let config = RunConfig::default();
        let resolved = config.resolve().unwrap();
        assert_eq!(resolved.problem.generator, "quadratic");
        assert_eq!(resolved.problem.k_smooth, 4.0);
        assert!((resolved.timer.tau_max - 1.0 / 4.001).abs() < 1e-15);
        assert!((resolved.timer.tau_min - resolved.timer.tau_max / 5.0).abs() < 1e-15);
        assert_eq!(resolved.timer.reset, "fixed_max");
    }

    #[test]
    fn resolved_config_round_trips_and_rebuilds_identically() {
        let text = r#"
            [problem]
            generator = "quadratic"
            n = 6
            seed = 9

            [timer]
            reset = "uniform"
            reset_seed = 4

            [simulation]
            horizon_t = 3.0
            init_x = "optimum_offset"
            init_radius = 2.0
        "#;
        let config: RunConfig = toml::from_str(text).unwrap();
        let resolved = config.resolve().unwrap();
        let serialized = resolved.to_toml();
        let reparsed: Resolved = toml::from_str(&serialized).unwrap();

        let a = resolved.build_instance().unwrap();
        let b = reparsed.build_instance().unwrap();
        assert_eq!(a.objective.min_value(), b.objective.min_value());
        assert_eq!(
            a.objective.project_to_minimizers(&DVector::zeros(6)),
            b.objective.project_to_minimizers(&DVector::zeros(6))
        );
        let ca = resolved.build_sim_config(&a).unwrap();
        let cb = reparsed.build_sim_config(&b).unwrap();
        assert_eq!(ca.init_x, cb.init_x);
    }

    #[test]
    fn explicit_diagonal_spectrum() {
        let text = r#"
            [problem]
            generator = "quadratic_diag"
            eigenvalues = [2.0, 4.0]
            linear = [1.0, 1.0]

            [simulation]
            horizon_t = 1.0
        "#;
        let config: RunConfig = toml::from_str(text).unwrap();
        let resolved = config.resolve().unwrap();
        let inst = resolved.build_instance().unwrap();
        assert_eq!(inst.objective.smoothness(), 4.0);
        assert_eq!(inst.objective.min_value(), -0.375);
    }

    #[test]
    fn unknown_generator_and_modes_are_rejected() {
        let mut config = RunConfig::default();
        config.problem.generator = Some("bogus".into());
        assert!(matches!(config.resolve(), Err(ConfigError::UnknownGenerator(_))));

        let mut config = RunConfig::default();
        config.simulation.init_x = Some("teleport".into());
        assert!(matches!(config.resolve(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let text = "[problem]\nmystery = 3\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }
}
