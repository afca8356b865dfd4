//! Recorded solutions on hybrid time domains.

use nalgebra::DVector;

use crate::hybrid::{HybridTime, SystemState, TimerPolicy};

/// Objective values at the snapshots of one sample: a single shared value once
/// the agents agree, one value per agent before the first event of a
/// disagreement-initialized run.
#[derive(Clone, Debug, PartialEq)]
pub enum EtaValues {
    Shared(f64),
    PerAgent(Vec<f64>),
}

impl EtaValues {
    pub fn shared(&self) -> Option<f64> {
        match self {
            EtaValues::Shared(v) => Some(*v),
            EtaValues::PerAgent(_) => None,
        }
    }
}

/// One recorded point of a solution. Jumps contribute two samples at the same
/// ordinary time: the pre-jump state at (t, j) and the post-jump state at
/// (t, j+1).
#[derive(Clone, Debug)]
pub struct Sample {
    pub time: HybridTime,
    pub state: SystemState,
    /// Objective at the iterate.
    pub objective_x: f64,
    /// Objective at the snapshot(s).
    pub objective_eta: EtaValues,
    /// Euclidean norm of the true gradient at the iterate.
    pub grad_norm: f64,
}

/// One communication event.
#[derive(Clone, Debug)]
pub struct JumpRecord {
    /// Jump count after the event (1-based).
    pub index: u64,
    /// Ordinary time of the event.
    pub t: f64,
    /// Timer value drawn by the reset rule.
    pub reset: f64,
    /// Gradient frozen at this event and held over the following interval.
    pub held_grad: DVector<f64>,
    /// True when the held gradient was evaluated within 1e-9 of an activation
    /// kink (leaky-ReLU objective only).
    pub held_near_kink: bool,
}

/// Provenance and run parameters carried along with the recorded data.
#[derive(Clone, Debug)]
pub struct TrajectoryMeta {
    pub generator: String,
    pub instance_seed: u64,
    pub dim: usize,
    pub agents: usize,
    /// True when every snapshot equalled the iterate at (0, 0).
    pub agreement_init: bool,
    pub policy: TimerPolicy,
    pub horizon_t: f64,
}

/// A recorded solution: ordered samples over a hybrid time domain plus the
/// event log. The gradient held on the interval following jump `j` lives in
/// `jumps[j-1]`; the gradient held before the first event is `init_held_grad`.
#[derive(Clone, Debug)]
pub struct HybridTrajectory {
    pub meta: TrajectoryMeta,
    pub init_held_grad: DVector<f64>,
    pub samples: Vec<Sample>,
    pub jumps: Vec<JumpRecord>,
}

impl HybridTrajectory {
    pub fn jump_count(&self) -> u64 {
        self.jumps.len() as u64
    }

    pub fn first_sample(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// Gradient held on the interval that starts at jump `j` (0 = initial).
    pub fn held_grad_after(&self, j: u64) -> &DVector<f64> {
        if j == 0 {
            &self.init_held_grad
        } else {
            &self.jumps[(j - 1) as usize].held_grad
        }
    }

    /// Samples grouped per flow interval, in order.
    pub fn samples_in_interval(&self, j: u64) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.time.j == j)
    }
}
