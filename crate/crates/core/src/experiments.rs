//! Scripted studies: network-size scaling, step-bound sweeps on the logistic
//! problem, the banana-valley run, and the timer-perturbation study.
//!
//! Every experiment is a pure function of its base seed: instances, initial
//! conditions, and reset streams are all derived from it, so reruns reproduce
//! the full output bit for bit. Summaries carry one record per (parameter,
//! seed) pair plus named pass/fail conclusions; thresholds that the source
//! material leaves qualitative are marked `artifact_chosen` in the detail
//! string.

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    self, check_envelope, fit_decay_rate, make_envelope, EnvelopeKind,
};
use crate::hybrid::{ResetRule, TimerPolicy};
use crate::objectives::{
    gen_linear_network, gen_logistic, gen_quadratic, gen_quadratic_diagonal, rosenbrock,
    ObjectiveError, ProblemInstance,
};
use crate::simulate::{derive_seed, run_batch, InitEta, SimConfig, SimJob};
use crate::trajectory::HybridTrajectory;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("instance generation failed: {0}")]
    Objective(#[from] ObjectiveError),
    #[error("experiment produced no usable runs")]
    NoRuns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkObjective {
    Quadratic,
    /// Diagonal spectrum variant for dimensions where the dense conjugation
    /// would not fit.
    QuadraticDiagonal,
    LinearNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauSweep {
    Max,
    Min,
}

/// One (parameter value, seed) result.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRecord {
    pub label: String,
    pub param: f64,
    pub seed: u64,
    pub agreement_init: bool,
    pub certified: bool,
    pub advisory_constants: bool,
    pub final_dist: Option<f64>,
    pub final_gap: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub envelope_violations: Option<usize>,
    pub tail_residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Conclusion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub experiment: String,
    pub base_seed: u64,
    pub horizon_t: f64,
    pub records: Vec<SweepRecord>,
    pub conclusions: Vec<Conclusion>,
}

impl SweepSummary {
    pub fn all_passed(&self) -> bool {
        self.conclusions.iter().all(|c| c.passed)
    }
}

/// A finished run kept for artifact export.
pub struct SweepRunData {
    pub label: String,
    pub instance: Arc<ProblemInstance>,
    pub policy: TimerPolicy,
    pub trajectory: Option<HybridTrajectory>,
}

pub struct SweepOutput {
    pub summary: SweepSummary,
    pub runs: Vec<SweepRunData>,
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite medians"));
    Some(values[values.len() / 2])
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

struct RunSpec {
    label: String,
    param: f64,
    seed: u64,
    job: SimJob,
    /// Fit window for the decay rate; defaults to the whole run.
    fit_window: (f64, f64),
    /// Tail window for the residual, when requested.
    tail_window: Option<(f64, f64)>,
}

/// Execute the prepared runs, derive per-run metrics, and collect records.
fn execute(specs: Vec<RunSpec>, parallelism: usize) -> (Vec<SweepRecord>, Vec<SweepRunData>) {
    let jobs: Vec<SimJob> = specs.iter().map(|s| s.job.clone()).collect();
    let results = run_batch(&jobs, parallelism);

    let mut records = Vec::with_capacity(specs.len());
    let mut runs = Vec::with_capacity(specs.len());
    for (spec, result) in specs.into_iter().zip(results) {
        let inst = Arc::clone(&spec.job.instance);
        let policy = spec.job.policy.clone();
        let (_, beta_sampled) = inst.objective.constants_are_estimates();
        let certified =
            policy.effective_tau_max() < 1.0 / inst.objective.smoothness() && !beta_sampled;
        let mut record = SweepRecord {
            label: spec.label.clone(),
            param: spec.param,
            seed: spec.seed,
            agreement_init: matches!(spec.job.config.init_eta, InitEta::Agree),
            certified,
            advisory_constants: beta_sampled,
            final_dist: None,
            final_gap: None,
            fitted_rate: None,
            envelope_violations: None,
            tail_residual: None,
            error: None,
        };
        let trajectory = match result {
            Ok(traj) => {
                let last = traj.last_sample();
                record.final_dist = Some(analysis::set_distance(&last.state, &inst));
                record.final_gap = Some(inst.objective.gap(&last.state.x));
                record.fitted_rate = fit_decay_rate(&traj, &inst, spec.fit_window).ok();
                if policy.effective_tau_max() < 1.0 / inst.objective.smoothness() {
                    if let Ok(spec_env) = make_envelope(EnvelopeKind::Thm1, &inst, &policy) {
                        if let Ok(report) = check_envelope(&traj, &spec_env, &inst) {
                            record.envelope_violations = Some(report.violations.len());
                        }
                    }
                }
                if let Some((lo, hi)) = spec.tail_window {
                    let tail = analysis::distance_series(&traj, &inst)
                        .into_iter()
                        .filter(|(time, _)| time.t >= lo && time.t <= hi)
                        .map(|(_, d)| d)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if tail.is_finite() {
                        record.tail_residual = Some(tail);
                    }
                }
                Some(traj)
            }
            Err(err) => {
                record.error = Some(err.to_string());
                None
            }
        };
        records.push(record);
        runs.push(SweepRunData { label: spec.label, instance: inst, policy, trajectory });
    }
    (records, runs)
}

fn median_by_param(records: &[SweepRecord], param: f64, value: impl Fn(&SweepRecord) -> Option<f64>) -> Option<f64> {
    let mut vals: Vec<f64> = records
        .iter()
        .filter(|r| r.param == param)
        .filter_map(&value)
        .collect();
    median(&mut vals)
}

const NETWORK_SEEDS: u64 = 5;
/// Shared horizon for the scaling study, in units of the step bound: long
/// enough for several decades of measured decay, short enough that the final
/// gap stays far above rounding noise at every size.
const NETWORK_HORIZON_STEPS: f64 = 8.5;
const NETWORK_INIT_RADIUS: f64 = 10.0;

/// Scaling study: for each network size run agreement- and
/// disagreement-initialized simulations at the benchmark step bound
/// `1/(K + 0.001)` and verify exponential convergence plus certification.
///
/// Initial iterates sit at a fixed radius from the minimizer so the final
/// gaps are comparable across sizes; the across-size spread conclusion is
/// only asserted for the quadratic family, whose constants are exact.
pub fn network_size(
    kind: NetworkObjective,
    sizes: &[usize],
    base_seed: u64,
    parallelism: usize,
) -> Result<SweepOutput, ExperimentError> {
    let mut instances: Vec<Arc<ProblemInstance>> = Vec::new();
    let mut seeds: Vec<u64> = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        for k in 0..NETWORK_SEEDS {
            let seed = derive_seed(base_seed, (i as u64) * NETWORK_SEEDS + k);
            let inst = match kind {
                NetworkObjective::Quadratic => gen_quadratic(n, 2.0, 4.0, 1.0, 5.0, seed)?,
                NetworkObjective::QuadraticDiagonal => {
                    gen_quadratic_diagonal(n, 2.0, 4.0, 1.0, 5.0, seed)?
                }
                NetworkObjective::LinearNet => gen_linear_network(n, 0.0, 10.0, seed)?,
            };
            instances.push(Arc::new(inst));
            seeds.push(seed);
        }
    }
    // One shared horizon across all sizes, sized by the slowest event cadence.
    let horizon_t = NETWORK_HORIZON_STEPS
        * instances
            .iter()
            .map(|i| i.benchmark_tau_max())
            .fold(0.0f64, f64::max);

    let mut specs = Vec::new();
    for (idx, inst) in instances.iter().enumerate() {
        let n = inst.partition.dim();
        let seed = seeds[idx];
        let k_in_group = (idx as u64) % NETWORK_SEEDS;
        let tau_max = inst.benchmark_tau_max();
        let policy_base = TimerPolicy::nominal(tau_max / 5.0, tau_max)
            .expect("benchmark bounds are valid");
        // Three deterministic agreement runs per size, two uniform-reset
        // disagreement runs.
        let agree = k_in_group < 3;
        let policy = if agree {
            policy_base
        } else {
            policy_base.with_reset(ResetRule::Uniform { seed: derive_seed(seed, 1) })
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
        let x_star = inst.objective.project_to_minimizers(&DVector::zeros(n)).clone();
        // Equal-curvature-weight offsets where available, so the final gaps
        // are comparable across sizes instead of depending on how a random
        // direction happens to load the slowest mode.
        let direction = inst
            .objective
            .balanced_direction()
            .unwrap_or_else(|| unit_vector(n, &mut rng));
        let init_x = &x_star + NETWORK_INIT_RADIUS * direction;
        let mut config = SimConfig::new(horizon_t, init_x);
        config.sample_period = tau_max / 4.0;
        if !agree {
            config.init_eta = InitEta::PerAgent(
                (0..inst.partition.agents())
                    .map(|_| &x_star + NETWORK_INIT_RADIUS * unit_vector(n, &mut rng))
                    .collect(),
            );
        }
        specs.push(RunSpec {
            label: format!(
                "n{n:05}_seed{k_in_group}_{}",
                if agree { "agree" } else { "spread" }
            ),
            param: n as f64,
            seed,
            job: SimJob { instance: Arc::clone(inst), policy, config },
            fit_window: (0.0, horizon_t),
            tail_window: None,
        });
    }

    let (records, runs) = execute(specs, parallelism);
    if records.is_empty() {
        return Err(ExperimentError::NoRuns);
    }

    let mut conclusions = Vec::new();
    let all_completed = records.iter().all(|r| r.error.is_none());
    conclusions.push(Conclusion {
        name: "all_runs_completed".into(),
        passed: all_completed,
        detail: format!("{} runs", records.len()),
    });
    let rates_positive = records
        .iter()
        .all(|r| r.fitted_rate.map(|rate| rate > 0.0).unwrap_or(false));
    conclusions.push(Conclusion {
        name: "fitted_rates_positive".into(),
        passed: rates_positive,
        detail: format!(
            "min fitted rate {:?}",
            records
                .iter()
                .filter_map(|r| r.fitted_rate)
                .fold(f64::INFINITY, f64::min)
        ),
    });
    let zero_violations = records
        .iter()
        .all(|r| r.envelope_violations.map(|v| v == 0).unwrap_or(false));
    conclusions.push(Conclusion {
        name: "global_envelope_zero_violations".into(),
        passed: zero_violations,
        detail: if records.first().map(|r| r.advisory_constants).unwrap_or(false) {
            "advisory: dominance constant is a sampled estimate".into()
        } else {
            "proven constants".into()
        },
    });
    if matches!(kind, NetworkObjective::Quadratic | NetworkObjective::QuadraticDiagonal) {
        let mut medians = Vec::new();
        for &n in sizes {
            if let Some(m) = median_by_param(
                &records
                    .iter()
                    .filter(|r| r.agreement_init)
                    .cloned()
                    .collect::<Vec<_>>(),
                n as f64,
                |r| r.final_gap,
            ) {
                medians.push(m);
            }
        }
        let spread_ok = if medians.len() == sizes.len() && !medians.is_empty() {
            let lo = medians.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            lo > 0.0 && hi / lo < 10.0
        } else {
            false
        };
        conclusions.push(Conclusion {
            name: "final_gap_spread_below_one_decade".into(),
            passed: spread_ok,
            detail: format!("median final gaps per size: {medians:?}"),
        });
    }

    Ok(SweepOutput {
        summary: SweepSummary {
            experiment: match kind {
                NetworkObjective::Quadratic => "network_size".into(),
                NetworkObjective::QuadraticDiagonal => "network_size_diag".into(),
                NetworkObjective::LinearNet => "network_size_linear_nn".into(),
            },
            base_seed,
            horizon_t,
            records,
            conclusions,
        },
        runs,
    })
}

const TAU_SWEEP_AGENTS: usize = 100;
const TAU_SWEEP_ROWS: usize = 5;
const TAU_SWEEP_SEEDS: u64 = 5;
/// Horizon in units of the benchmark step bound. Chosen by pilot runs: late
/// enough that the step-bound ordering is established, early enough that the
/// slow tail has not washed the differences out.
const TAU_SWEEP_HORIZON_STEPS: f64 = 100.0;

/// Step-bound sweeps on the logistic instance: vary the reset ceiling (or
/// floor) with seeded uniform resets and compare final gaps at a shared
/// horizon.
pub fn tau_sweep(
    which: TauSweep,
    base_seed: u64,
    parallelism: usize,
) -> Result<SweepOutput, ExperimentError> {
    let inst = Arc::new(gen_logistic(TAU_SWEEP_AGENTS, TAU_SWEEP_ROWS, derive_seed(base_seed, 1000))?);
    let bench = inst.benchmark_tau_max();
    let horizon_t = TAU_SWEEP_HORIZON_STEPS * bench;
    let init_x = DVector::zeros(TAU_SWEEP_AGENTS);

    let values: Vec<(f64, f64)> = match which {
        // (tau_max, tau_min)
        TauSweep::Max => vec![
            (bench, bench / 5.0),
            (bench / 2.0, bench / 10.0),
            (bench / 4.0, bench / 20.0),
        ],
        TauSweep::Min => vec![
            (bench, bench / 10.0),
            (bench, bench / 5.0),
            (bench, bench / 2.0),
        ],
    };

    let mut specs = Vec::new();
    for (vi, &(tau_max, tau_min)) in values.iter().enumerate() {
        let param = match which {
            TauSweep::Max => tau_max,
            TauSweep::Min => tau_min,
        };
        for k in 0..TAU_SWEEP_SEEDS {
            // Replicate k shares its reset stream across the swept values
            // (the draws scale with the interval), so value comparisons are
            // paired rather than confounded by fresh draw noise.
            let seed = derive_seed(base_seed, 17 + k);
            let policy = TimerPolicy::nominal(tau_min, tau_max)
                .expect("sweep bounds are valid")
                .with_reset(ResetRule::Uniform { seed });
            let config = SimConfig::new(horizon_t, init_x.clone());
            specs.push(RunSpec {
                label: format!("{}_v{vi}_seed{k}", match which {
                    TauSweep::Max => "tau_max",
                    TauSweep::Min => "tau_min",
                }),
                param,
                seed,
                job: SimJob { instance: Arc::clone(&inst), policy, config },
                fit_window: (0.0, horizon_t),
                tail_window: None,
            });
        }
    }

    let (records, runs) = execute(specs, parallelism);
    let mut conclusions = Vec::new();
    let all_completed = records.iter().all(|r| r.error.is_none());
    conclusions.push(Conclusion {
        name: "all_runs_completed".into(),
        passed: all_completed,
        detail: format!("{} runs", records.len()),
    });

    let medians: Vec<(f64, f64)> = values
        .iter()
        .map(|&(tau_max, tau_min)| {
            let param = match which {
                TauSweep::Max => tau_max,
                TauSweep::Min => tau_min,
            };
            (param, median_by_param(&records, param, |r| r.final_gap).unwrap_or(f64::NAN))
        })
        .collect();

    match which {
        TauSweep::Max => {
            // Larger ceilings must do at least as well: medians listed from
            // the largest value down must be nondecreasing.
            let ordered = medians.windows(2).all(|w| w[0].1 <= w[1].1);
            conclusions.push(Conclusion {
                name: "final_gap_nonincreasing_in_tau_max".into(),
                passed: ordered,
                detail: format!("medians by descending tau_max: {medians:?}"),
            });
            let best = medians.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
            let largest_best = medians[0].1 <= best * 1.05;
            conclusions.push(Conclusion {
                name: "largest_tau_max_attains_best_gap".into(),
                passed: largest_best,
                detail: format!(
                    "largest-value median {} vs best {} (5% tie band)",
                    medians[0].1, best
                ),
            });
        }
        TauSweep::Min => {
            let gaps: Vec<f64> = medians.iter().map(|m| m.1).collect();
            let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let spread = (hi - lo) / hi.max(f64::MIN_POSITIVE);
            conclusions.push(Conclusion {
                name: "final_gap_spread_at_most_half".into(),
                passed: spread <= 0.5,
                detail: format!(
                    "relative spread {spread:.4} across floors {medians:?} (threshold 0.5, artifact_chosen)"
                ),
            });
        }
    }

    Ok(SweepOutput {
        summary: SweepSummary {
            experiment: match which {
                TauSweep::Max => "tau_max".into(),
                TauSweep::Min => "tau_min".into(),
            },
            base_seed,
            horizon_t,
            records,
            conclusions,
        },
        runs,
    })
}

const VALLEY_TAU_MAX: f64 = 0.001;
const VALLEY_INIT: [f64; 2] = [-0.5, 0.5];

/// The banana-valley run: fixed-ceiling resets reduce the dynamics to plain
/// descent steps of the step bound, so a centralized pilot with the same step
/// predicts the horizon needed to shrink the optimizer distance below 1%.
pub fn rosenbrock_study(base_seed: u64, parallelism: usize) -> Result<SweepOutput, ExperimentError> {
    let inst = Arc::new(rosenbrock());
    let target = DVector::from_vec(vec![1.0, 1.0]);
    let init_x = DVector::from_vec(vec![VALLEY_INIT[0], VALLEY_INIT[1]]);
    let initial_dist = (&init_x - &target).norm();

    // Pilot: descent with the held-step recursion until 1% of the initial
    // distance, then pad the horizon by 10%.
    let mut x = init_x.clone();
    let mut pilot_steps = 0u64;
    while (&x - &target).norm() > 0.01 * initial_dist {
        let g = inst.objective.gradient(&x);
        x.axpy(-VALLEY_TAU_MAX, &g, 1.0);
        pilot_steps += 1;
        if pilot_steps > 20_000_000 {
            break;
        }
    }
    let horizon_t = (pilot_steps as f64) * VALLEY_TAU_MAX * 1.1;

    let policy = TimerPolicy::nominal(VALLEY_TAU_MAX / 5.0, VALLEY_TAU_MAX)
        .expect("valley bounds are valid");
    let config = SimConfig::new(horizon_t, init_x);
    let specs = vec![RunSpec {
        label: "rosenbrock".into(),
        param: VALLEY_TAU_MAX,
        seed: base_seed,
        job: SimJob { instance: Arc::clone(&inst), policy, config },
        fit_window: (0.5 * horizon_t, horizon_t),
        tail_window: None,
    }];
    let (mut records, runs) = execute(specs, parallelism);
    let record = records.pop().ok_or(ExperimentError::NoRuns)?;

    // Distance of the shared snapshot from the optimizer at the end.
    let final_eta_dist = runs[0]
        .trajectory
        .as_ref()
        .and_then(|t| t.last_sample().state.eta.common().map(|eta| (eta - &target).norm()));

    let mut conclusions = Vec::new();
    conclusions.push(Conclusion {
        name: "run_completed".into(),
        passed: record.error.is_none(),
        detail: format!("pilot steps {pilot_steps}, horizon {horizon_t:.3}"),
    });
    let shrunk = final_eta_dist.map(|d| d <= 0.01 * initial_dist).unwrap_or(false);
    conclusions.push(Conclusion {
        name: "optimizer_distance_below_one_percent".into(),
        passed: shrunk,
        detail: format!("initial {initial_dist:.6}, final snapshot distance {final_eta_dist:?}"),
    });
    conclusions.push(Conclusion {
        name: "fitted_rate_positive".into(),
        passed: record.fitted_rate.map(|r| r > 0.0).unwrap_or(false),
        detail: format!("tail fitted rate {:?}", record.fitted_rate),
    });

    Ok(SweepOutput {
        summary: SweepSummary {
            experiment: "rosenbrock".into(),
            base_seed,
            horizon_t,
            records: vec![record],
            conclusions,
        },
        runs,
    })
}

const PERTURB_AGENTS: usize = 10;
const PERTURB_TAU_MAX: f64 = 0.2;
const PERTURB_HORIZON: f64 = 8.0;
const PERTURB_SEEDS: u64 = 5;
const PERTURB_INIT_RADIUS: f64 = 1.0;
/// Artifact bound standing in for "bounded residual": far above the measured
/// floor of certified runs, far below any meaningful distance scale here.
const PERTURB_RESIDUAL_BOUND: f64 = 1e-3;

/// Timer-perturbation study on a small quadratic: clock skews and a reset
/// ceiling offset that keep the effective step bound certified.
pub fn perturbation_study(
    kappas: &[f64],
    theta_max_values: &[f64],
    base_seed: u64,
    parallelism: usize,
) -> Result<SweepOutput, ExperimentError> {
    let inst = Arc::new(gen_quadratic(
        PERTURB_AGENTS,
        2.0,
        4.0,
        1.0,
        5.0,
        derive_seed(base_seed, 7),
    )?);
    let x_star = inst
        .objective
        .project_to_minimizers(&DVector::zeros(PERTURB_AGENTS))
        .clone();

    // Levels: each skew at zero offset, then each offset at zero skew.
    let mut levels: Vec<(f64, f64)> = kappas.iter().map(|&k| (k, 0.0)).collect();
    levels.extend(theta_max_values.iter().filter(|&&t| t != 0.0).map(|&t| (0.0, t)));

    let mut specs = Vec::new();
    for &(kappa, theta_max) in &levels {
        for k in 0..PERTURB_SEEDS {
            // Replicate k shares its initial direction across the levels, so
            // the level comparisons are paired.
            let seed = derive_seed(base_seed, 101 + k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init_x = &x_star + PERTURB_INIT_RADIUS * unit_vector(PERTURB_AGENTS, &mut rng);
            let policy = TimerPolicy::nominal(PERTURB_TAU_MAX / 5.0, PERTURB_TAU_MAX)
                .expect("perturbation bounds are valid")
                .with_skew(kappa)
                .with_reset_offsets(0.0, theta_max);
            let config = SimConfig::new(PERTURB_HORIZON, init_x);
            specs.push(RunSpec {
                label: format!("kappa{kappa}_theta{theta_max}_seed{k}"),
                param: kappa + theta_max,
                seed,
                job: SimJob { instance: Arc::clone(&inst), policy, config },
                fit_window: (0.0, 0.8 * PERTURB_HORIZON),
                tail_window: Some((0.9 * PERTURB_HORIZON, PERTURB_HORIZON)),
            });
        }
    }

    let (records, runs) = execute(specs, parallelism);
    let mut conclusions = Vec::new();
    conclusions.push(Conclusion {
        name: "all_runs_completed".into(),
        passed: records.iter().all(|r| r.error.is_none()),
        detail: format!("{} runs", records.len()),
    });

    // (a) Unperturbed runs converge to the set itself.
    let nominal_residuals: Vec<f64> = records
        .iter()
        .filter(|r| r.param == 0.0)
        .filter_map(|r| r.tail_residual)
        .collect();
    let nominal_ok = !nominal_residuals.is_empty()
        && nominal_residuals.iter().all(|&r| r <= 1e-6);
    conclusions.push(Conclusion {
        name: "zero_perturbation_residual_below_1e6".into(),
        passed: nominal_ok,
        detail: format!("residuals {nominal_residuals:?}"),
    });

    // (b) Every certified level stays in a bounded neighborhood.
    let bounded = records.iter().all(|r| {
        !r.certified || r.tail_residual.map(|t| t <= PERTURB_RESIDUAL_BOUND).unwrap_or(false)
    });
    conclusions.push(Conclusion {
        name: "certified_residuals_bounded".into(),
        passed: bounded,
        detail: format!("bound {PERTURB_RESIDUAL_BOUND} (artifact_chosen)"),
    });

    // (c) Rate ordering across the skew levels (zero offset): medians must
    // not increase with the skew.
    let mut skew_medians: Vec<(f64, f64)> = Vec::new();
    for &kappa in kappas {
        let mut rates: Vec<f64> = records
            .iter()
            .filter(|r| r.label.starts_with(&format!("kappa{kappa}_theta0")))
            .filter_map(|r| r.fitted_rate)
            .collect();
        if let Some(m) = median(&mut rates) {
            skew_medians.push((kappa, m));
        }
    }
    let rates_nonincreasing = skew_medians.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9));
    conclusions.push(Conclusion {
        name: "fitted_rates_nonincreasing_in_skew".into(),
        passed: rates_nonincreasing,
        detail: format!("median rates by skew: {skew_medians:?}"),
    });

    Ok(SweepOutput {
        summary: SweepSummary {
            experiment: "perturbation".into(),
            base_seed,
            horizon_t: PERTURB_HORIZON,
            records,
            conclusions,
        },
        runs,
    })
}

/// The default level grid of the perturbation study.
pub fn default_perturbation_levels() -> (Vec<f64>, Vec<f64>) {
    let theta_hi = 0.5 * (0.25 - PERTURB_TAU_MAX);
    (vec![0.0, 0.01, 0.05, 0.1], vec![theta_hi])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_scaling_study_passes_and_reproduces() {
        let out = network_size(NetworkObjective::Quadratic, &[2, 5], 42, 2).unwrap();
        assert!(out.summary.all_passed(), "conclusions: {:?}", out.summary.conclusions);
        assert_eq!(out.summary.records.len(), 10);

        let again = network_size(NetworkObjective::Quadratic, &[2, 5], 42, 1).unwrap();
        for (a, b) in out.summary.records.iter().zip(&again.summary.records) {
            assert_eq!(a.final_dist, b.final_dist);
            assert_eq!(a.final_gap, b.final_gap);
            assert_eq!(a.fitted_rate, b.fitted_rate);
        }
    }

    #[test]
    fn single_agent_case_is_certified() {
        let out = network_size(NetworkObjective::Quadratic, &[1], 3, 1).unwrap();
        for r in &out.summary.records {
            assert_eq!(r.error, None);
            assert_eq!(r.envelope_violations, Some(0));
            assert!(r.fitted_rate.unwrap() > 0.0);
        }
    }

    #[test]
    fn diagonal_variant_scales_without_dense_storage() {
        let out = network_size(NetworkObjective::QuadraticDiagonal, &[2000], 9, 2).unwrap();
        assert!(out.summary.all_passed(), "conclusions: {:?}", out.summary.conclusions);
    }

    #[test]
    fn valley_study_converges() {
        let out = rosenbrock_study(1, 1).unwrap();
        assert!(out.summary.all_passed(), "conclusions: {:?}", out.summary.conclusions);
    }

    #[test]
    fn perturbation_levels_are_certified_and_bounded() {
        let (kappas, thetas) = default_perturbation_levels();
        let out = perturbation_study(&kappas, &thetas, 5, 2).unwrap();
        for r in &out.summary.records {
            assert!(r.certified, "{} should be certified", r.label);
            assert_eq!(r.envelope_violations, Some(0), "{}", r.label);
        }
        let named: Vec<&str> = out
            .summary
            .conclusions
            .iter()
            .filter(|c| c.passed)
            .map(|c| c.name.as_str())
            .collect();
        assert!(named.contains(&"zero_perturbation_residual_below_1e6"));
        assert!(named.contains(&"certified_residuals_bounded"));
    }
}
