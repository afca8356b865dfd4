//! Event-driven execution of the sample-and-hold descent dynamics.
//!
//! Because every flow interval is linear in time, the engine never
//! numerically integrates: it computes the time to the jump surface
//! algebraically, records interior samples by advancing from the interval's
//! anchor state, lands on the surface with the timer set exactly to zero,
//! applies the jump, and freezes the next gradient. Interior sampling can
//! therefore never perturb the jump iterates.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::hybrid::{
    flow_advance, jump, EtaState, HybridError, HybridTime, SystemState, TimerPolicy,
};
use crate::objectives::ProblemInstance;
use crate::trajectory::{EtaValues, HybridTrajectory, JumpRecord, Sample, TrajectoryMeta};

/// Iterates with a larger sup-norm are treated as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error("divergence detected at (t = {}, j = {}); partial trajectory retained", at.t, at.j)]
    Diverged { at: HybridTime, trajectory: Box<HybridTrajectory> },
}

/// Snapshot initialization.
#[derive(Clone, Debug)]
pub enum InitEta {
    /// Every snapshot starts equal to the iterate.
    Agree,
    /// Explicit per-agent snapshots.
    PerAgent(Vec<DVector<f64>>),
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Stop once ordinary time reaches this horizon.
    pub horizon_t: f64,
    /// Optional jump-count horizon.
    pub horizon_j: Option<u64>,
    /// Record cadence between events; 0 records at events only.
    pub sample_period: f64,
    pub init_x: DVector<f64>,
    pub init_eta: InitEta,
    /// Initial timer value; defaults to the top of the reset interval, which
    /// maximizes the first flow phase.
    pub init_tau: Option<f64>,
    /// Stop early once the gradient norm at the iterate falls below this.
    pub stop_grad_norm: Option<f64>,
}

impl SimConfig {
    pub fn new(horizon_t: f64, init_x: DVector<f64>) -> Self {
        Self {
            horizon_t,
            horizon_j: None,
            sample_period: 0.0,
            init_x,
            init_eta: InitEta::Agree,
            init_tau: None,
            stop_grad_norm: None,
        }
    }

    fn validate(&self, inst: &ProblemInstance, policy: &TimerPolicy) -> Result<(), SimError> {
        if !(self.horizon_t > 0.0) && self.horizon_j.is_none() {
            return Err(SimError::BadConfig(
                "need a positive time horizon or a jump horizon".into(),
            ));
        }
        if self.horizon_t < 0.0 || !self.horizon_t.is_finite() {
            return Err(SimError::BadConfig(format!("bad time horizon {}", self.horizon_t)));
        }
        if self.sample_period < 0.0 {
            return Err(SimError::BadConfig(format!(
                "sample period must be nonnegative, got {}",
                self.sample_period
            )));
        }
        if self.init_x.len() != inst.partition.dim() {
            return Err(SimError::BadConfig(format!(
                "initial iterate has dimension {}, instance expects {}",
                self.init_x.len(),
                inst.partition.dim()
            )));
        }
        if let Some(tau) = self.init_tau {
            if !(0.0..=policy.reset_hi()).contains(&tau) {
                return Err(SimError::BadConfig(format!(
                    "initial timer {tau} outside [0, {}]",
                    policy.reset_hi()
                )));
            }
        }
        if let InitEta::PerAgent(etas) = &self.init_eta {
            if etas.len() != inst.partition.agents() {
                return Err(SimError::BadConfig(format!(
                    "{} initial snapshots for {} agents",
                    etas.len(),
                    inst.partition.agents()
                )));
            }
            if etas.iter().any(|v| v.len() != inst.partition.dim()) {
                return Err(SimError::BadConfig("initial snapshot dimension mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Run the nominal system. Identical inputs produce bitwise identical
/// trajectories.
pub fn simulate(
    inst: &ProblemInstance,
    policy: &TimerPolicy,
    config: &SimConfig,
) -> Result<HybridTrajectory, SimError> {
    policy.validate()?;
    config.validate(inst, policy)?;
    run_engine(inst, policy, config)
}

/// Run the system with perturbed timer dynamics (clock skew and reset-bound
/// offsets). The optimization dynamics are untouched: only event spacing
/// changes. With zero perturbation this is exactly [`simulate`].
pub fn simulate_perturbed(
    inst: &ProblemInstance,
    policy: &TimerPolicy,
    config: &SimConfig,
) -> Result<HybridTrajectory, SimError> {
    simulate(inst, policy, config)
}

struct Recorder<'a> {
    inst: &'a ProblemInstance,
    samples: Vec<Sample>,
}

impl<'a> Recorder<'a> {
    fn record(
        &mut self,
        time: HybridTime,
        state: &SystemState,
        grad_norm: Option<f64>,
    ) -> Result<(), SimError> {
        let obj = &self.inst.objective;
        if state.x.iter().any(|v| !v.is_finite()) || state.x.amax() > DIVERGENCE_LIMIT {
            return Err(SimError::BadConfig(String::new())); // replaced by caller
        }
        let objective_x = obj.value(&state.x);
        let objective_eta = match &state.eta {
            EtaState::Agreed(eta) => EtaValues::Shared(obj.value(eta)),
            EtaState::PerAgent(etas) => {
                if let Some(common) = state.eta.common() {
                    EtaValues::Shared(obj.value(common))
                } else {
                    EtaValues::PerAgent(etas.iter().map(|e| obj.value(e)).collect())
                }
            }
        };
        let grad_norm = grad_norm.unwrap_or_else(|| obj.gradient(&state.x).norm());
        self.samples.push(Sample { time, state: state.clone(), objective_x, objective_eta, grad_norm });
        Ok(())
    }
}

fn run_engine(
    inst: &ProblemInstance,
    policy: &TimerPolicy,
    config: &SimConfig,
) -> Result<HybridTrajectory, SimError> {
    let mut stream = policy.start_stream();

    let init_eta = match &config.init_eta {
        InitEta::Agree => EtaState::Agreed(config.init_x.clone()),
        InitEta::PerAgent(etas) => EtaState::PerAgent(etas.clone()),
    };
    let agreement_init = init_eta.agrees_with(&config.init_x);
    let init_tau = config.init_tau.unwrap_or_else(|| policy.reset_hi());

    // Anchor of the current flow interval; all in-interval points are
    // computed from it in one closed-form step.
    let mut anchor = SystemState::new(config.init_x.clone(), init_eta, init_tau);
    anchor.validate(&inst.partition)?;
    let mut anchor_t = 0.0f64;
    let mut j = 0u64;

    let mut held = inst.held_gradient(&anchor.eta);
    let init_held = held.clone();

    let meta = TrajectoryMeta {
        generator: inst.meta.generator.clone(),
        instance_seed: inst.meta.seed,
        dim: inst.partition.dim(),
        agents: inst.partition.agents(),
        agreement_init,
        policy: policy.clone(),
        horizon_t: config.horizon_t,
    };
    let mut recorder = Recorder { inst, samples: Vec::new() };
    let mut jumps: Vec<JumpRecord> = Vec::new();

    let diverged = |at: HybridTime, recorder: &Recorder, jumps: &[JumpRecord], init_held: &DVector<f64>| {
        SimError::Diverged {
            at,
            trajectory: Box::new(HybridTrajectory {
                meta: meta.clone(),
                init_held_grad: init_held.clone(),
                samples: recorder.samples.clone(),
                jumps: jumps.to_vec(),
            }),
        }
    };

    // Initial sample. With agreeing snapshots the held gradient is the true
    // gradient at the iterate, so its norm is reused.
    let init_grad_norm = if anchor.eta.agrees_with(&anchor.x) {
        Some(held.norm())
    } else {
        None
    };
    recorder
        .record(HybridTime::new(0.0, 0), &anchor, init_grad_norm)
        .map_err(|_| diverged(HybridTime::new(0.0, 0), &recorder, &jumps, &init_held))?;

    if let Some(stop) = config.stop_grad_norm {
        let g0 = recorder.samples[0].grad_norm;
        if g0 <= stop {
            return Ok(HybridTrajectory {
                meta,
                init_held_grad: init_held,
                samples: recorder.samples,
                jumps,
            });
        }
    }

    let clock_rate = policy.clock_rate();
    let mut next_cadence = if config.sample_period > 0.0 { config.sample_period } else { f64::INFINITY };

    loop {
        if held.iter().any(|g| !g.is_finite()) {
            return Err(diverged(HybridTime::new(anchor_t, j), &recorder, &jumps, &init_held));
        }
        let dt_event = anchor.tau / clock_rate;
        let t_event = anchor_t + dt_event;
        let t_stop = config.horizon_t.min(t_event);

        // Interior cadence samples, each advanced from the anchor.
        while next_cadence < t_stop {
            let dt = next_cadence - anchor_t;
            if dt > 0.0 {
                let state = flow_advance(&anchor, &held, dt, policy.kappa)?;
                let time = HybridTime::new(next_cadence, j);
                recorder
                    .record(time, &state, None)
                    .map_err(|_| diverged(time, &recorder, &jumps, &init_held))?;
            }
            next_cadence += config.sample_period;
        }

        if config.horizon_t < t_event {
            // Horizon falls strictly inside this interval: flow to it and stop.
            let dt = config.horizon_t - anchor_t;
            let time = HybridTime::new(config.horizon_t, j);
            if dt > 0.0 {
                let state = flow_advance(&anchor, &held, dt, policy.kappa)?;
                recorder
                    .record(time, &state, None)
                    .map_err(|_| diverged(time, &recorder, &jumps, &init_held))?;
            }
            break;
        }

        // Land exactly on the jump surface.
        if dt_event > 0.0 {
            let mut surface = flow_advance(&anchor, &held, dt_event, policy.kappa)?;
            surface.tau = 0.0;
            anchor = surface;
            anchor_t = t_event;
            let time = HybridTime::new(anchor_t, j);
            recorder
                .record(time, &anchor, None)
                .map_err(|_| diverged(time, &recorder, &jumps, &init_held))?;
        } else {
            anchor.tau = 0.0;
        }

        if anchor_t >= config.horizon_t {
            // The event coincides with the horizon; the pre-jump sample is
            // the final record.
            break;
        }

        // Communication event.
        anchor = jump(&anchor, policy, &mut stream)?;
        j += 1;
        held = inst.held_gradient(&anchor.eta);
        jumps.push(JumpRecord {
            index: j,
            t: anchor_t,
            reset: anchor.tau,
            held_grad: held.clone(),
            held_near_kink: inst.objective.near_gradient_kink(
                anchor.eta.common().expect("post-event snapshots agree"),
            ),
        });
        let time = HybridTime::new(anchor_t, j);
        // Post-event snapshots equal the iterate, so the held gradient is the
        // true gradient at the iterate.
        recorder
            .record(time, &anchor, Some(held.norm()))
            .map_err(|_| diverged(time, &recorder, &jumps, &init_held))?;

        if let Some(hj) = config.horizon_j {
            if j >= hj {
                break;
            }
        }
        if let Some(stop) = config.stop_grad_norm {
            if held.norm() <= stop {
                break;
            }
        }
    }

    Ok(HybridTrajectory { meta, init_held_grad: init_held, samples: recorder.samples, jumps })
}

/// One unit of batched work.
#[derive(Clone)]
pub struct SimJob {
    pub instance: Arc<ProblemInstance>,
    pub policy: TimerPolicy,
    pub config: SimConfig,
}

/// Derive the seed for run `index` of a batch rooted at `base`. SplitMix64
/// over the combined words, so neighboring indices decorrelate fully.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run independent simulations, optionally in parallel. Results are ordered
/// by input order regardless of execution order, and per-run failures are
/// collected instead of aborting the batch.
pub fn run_batch(jobs: &[SimJob], parallelism: usize) -> Vec<Result<HybridTrajectory, SimError>> {
    if parallelism <= 1 {
        return jobs
            .iter()
            .map(|job| simulate(&job.instance, &job.policy, &job.config))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool construction");
    pool.install(|| {
        jobs.par_iter()
            .map(|job| simulate(&job.instance, &job.policy, &job.config))
            .collect()
    })
}
