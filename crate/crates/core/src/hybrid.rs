//! Hybrid state, communication timer policy, and the exact flow/jump
//! transition maps of the combined agent system.
//!
//! Between communication events every agent descends its own block of the
//! decision vector along a gradient that was frozen at the last event, so the
//! continuous phase is linear in time and can be advanced in closed form.
//! A shared countdown timer triggers the events: when it hits zero all agents
//! broadcast, every snapshot is overwritten with the current iterate, and the
//! timer is reset into a configured interval.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::HybridTrajectory;

/// Absolute tolerance on the timer when deciding whether a jump is admissible.
pub const JUMP_TOL: f64 = 1e-12;

/// Tolerance used when auditing recorded inter-event intervals.
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("flow duration must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("flow of {dt} overshoots the jump surface: timer {tau} allows at most {max_dt}")]
    FlowPastJump { dt: f64, tau: f64, max_dt: f64 },
    #[error("held gradient contains a nonfinite entry")]
    NonFiniteGradient,
    #[error("jump requires timer = 0 (tolerance {JUMP_TOL}), got {0}")]
    JumpAwayFromSurface(f64),
    #[error("timer reset sequence exhausted after {0} draws")]
    ResetSequenceExhausted(usize),
    #[error("timer reset {value} outside [{lo}, {hi}]")]
    ResetOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid timer policy: {0}")]
    BadPolicy(String),
    #[error("invalid block partition: {0}")]
    BadPartition(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// A point (t, j) of a hybrid time domain: ordinary time plus the cumulative
/// number of jumps performed so far.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridTime {
    pub t: f64,
    pub j: u64,
}

impl HybridTime {
    pub fn new(t: f64, j: u64) -> Self {
        Self { t, j }
    }

    /// Lexicographic order used for domain monotonicity checks.
    pub fn lex_le(&self, other: &HybridTime) -> bool {
        self.t < other.t || (self.t == other.t && self.j <= other.j)
    }
}

/// Partition of the decision vector into per-agent blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self, HybridError> {
        if sizes.is_empty() {
            return Err(HybridError::BadPartition("need at least one block".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(HybridError::BadPartition("block sizes must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0usize;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        Ok(Self { sizes, offsets, total })
    }

    /// One scalar block per agent.
    pub fn scalar(n: usize) -> Self {
        Self::new(vec![1; n.max(1)]).expect("scalar partition is always valid")
    }

    pub fn agents(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.total
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Index range of agent `i`'s block within the full vector.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.offsets[i];
        start..start + self.sizes[i]
    }
}

/// Snapshots held by the agents.
///
/// After the first communication event every agent stores the same vector, so
/// the agreed form avoids keeping one copy per agent. `PerAgent` only occurs
/// before the first jump of a run that was initialized in disagreement.
#[derive(Clone, Debug, PartialEq)]
pub enum EtaState {
    Agreed(DVector<f64>),
    PerAgent(Vec<DVector<f64>>),
}

impl EtaState {
    pub fn agent(&self, i: usize) -> &DVector<f64> {
        match self {
            EtaState::Agreed(v) => v,
            EtaState::PerAgent(vs) => &vs[i],
        }
    }

    pub fn is_agreed(&self) -> bool {
        matches!(self, EtaState::Agreed(_))
    }

    /// The common snapshot if all agents hold the same vector.
    pub fn common(&self) -> Option<&DVector<f64>> {
        match self {
            EtaState::Agreed(v) => Some(v),
            EtaState::PerAgent(vs) => {
                let first = &vs[0];
                if vs.iter().all(|v| v == first) {
                    Some(first)
                } else {
                    None
                }
            }
        }
    }

    /// True when every agent's snapshot equals `x` exactly.
    pub fn agrees_with(&self, x: &DVector<f64>) -> bool {
        match self {
            EtaState::Agreed(v) => v == x,
            EtaState::PerAgent(vs) => vs.iter().all(|v| v == x),
        }
    }
}

/// Full state of the combined system: iterate, snapshots, timer.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub x: DVector<f64>,
    pub eta: EtaState,
    pub tau: f64,
}

impl SystemState {
    pub fn new(x: DVector<f64>, eta: EtaState, tau: f64) -> Self {
        Self { x, eta, tau }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self, partition: &BlockPartition) -> Result<(), HybridError> {
        let n = partition.dim();
        if self.x.len() != n {
            return Err(HybridError::DimensionMismatch(format!(
                "x has dimension {}, partition expects {n}",
                self.x.len()
            )));
        }
        match &self.eta {
            EtaState::Agreed(v) => {
                if v.len() != n {
                    return Err(HybridError::DimensionMismatch(format!(
                        "snapshot has dimension {}, expected {n}",
                        v.len()
                    )));
                }
            }
            EtaState::PerAgent(vs) => {
                if vs.len() != partition.agents() {
                    return Err(HybridError::DimensionMismatch(format!(
                        "{} snapshots for {} agents",
                        vs.len(),
                        partition.agents()
                    )));
                }
                if let Some(v) = vs.iter().find(|v| v.len() != n) {
                    return Err(HybridError::DimensionMismatch(format!(
                        "snapshot has dimension {}, expected {n}",
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rule used to pick the timer value after each jump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ResetRule {
    /// Always reset to the top of the admissible interval. Deterministic
    /// without a seed; the default.
    FixedMax,
    /// Always reset to the bottom of the admissible interval.
    FixedMin,
    /// Seeded uniform draw over the admissible interval.
    Uniform { seed: u64 },
    /// User-supplied values consumed in order; every value must lie in the
    /// admissible interval.
    Sequence { values: Vec<f64> },
}

/// Timer bounds plus the perturbation parameters (clock skew and reset-bound
/// offsets). A nominal policy has `kappa = theta_min = theta_max = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimerPolicy {
    pub tau_min: f64,
    pub tau_max: f64,
    pub reset: ResetRule,
    pub kappa: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl TimerPolicy {
    pub fn nominal(tau_min: f64, tau_max: f64) -> Result<Self, HybridError> {
        let policy = Self {
            tau_min,
            tau_max,
            reset: ResetRule::FixedMax,
            kappa: 0.0,
            theta_min: 0.0,
            theta_max: 0.0,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn with_reset(mut self, reset: ResetRule) -> Self {
        self.reset = reset;
        self
    }

    pub fn with_skew(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_reset_offsets(mut self, theta_min: f64, theta_max: f64) -> Self {
        self.theta_min = theta_min;
        self.theta_max = theta_max;
        self
    }

    pub fn validate(&self) -> Result<(), HybridError> {
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_max) {
            return Err(HybridError::BadPolicy(format!(
                "need 0 < tau_min <= tau_max, got [{}, {}]",
                self.tau_min, self.tau_max
            )));
        }
        if !(self.kappa < 1.0) {
            return Err(HybridError::BadPolicy(format!(
                "skew must satisfy kappa < 1, got {}",
                self.kappa
            )));
        }
        if !(self.reset_lo() > 0.0 && self.reset_lo() <= self.reset_hi()) {
            return Err(HybridError::BadPolicy(format!(
                "need 0 < tau_min + theta_min <= tau_max + theta_max, got [{}, {}]",
                self.reset_lo(),
                self.reset_hi()
            )));
        }
        if let ResetRule::Sequence { values } = &self.reset {
            for &v in values {
                if v < self.reset_lo() - DOMAIN_TOL || v > self.reset_hi() + DOMAIN_TOL {
                    return Err(HybridError::ResetOutOfRange {
                        value: v,
                        lo: self.reset_lo(),
                        hi: self.reset_hi(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Lower end of the admissible reset interval.
    pub fn reset_lo(&self) -> f64 {
        self.tau_min + self.theta_min
    }

    /// Upper end of the admissible reset interval.
    pub fn reset_hi(&self) -> f64 {
        self.tau_max + self.theta_max
    }

    /// Timer decrease per unit of ordinary time.
    pub fn clock_rate(&self) -> f64 {
        1.0 - self.kappa
    }

    /// Longest possible flow interval in ordinary time.
    pub fn max_flow_interval(&self) -> f64 {
        self.reset_hi() / self.clock_rate()
    }

    /// Shortest possible flow interval in ordinary time; positive, so jump
    /// times cannot accumulate.
    pub fn min_flow_interval(&self) -> f64 {
        self.reset_lo() / self.clock_rate()
    }

    /// The step bound that enters the decay-rate formulas: the longest real
    /// time a gradient can be held. Equals `tau_max` for a nominal policy.
    pub fn effective_tau_max(&self) -> f64 {
        self.max_flow_interval()
    }

    /// Create the private draw stream for one run.
    pub fn start_stream(&self) -> ResetStream {
        let rng = match &self.reset {
            ResetRule::Uniform { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        ResetStream { rng, index: 0 }
    }
}

/// Per-run state of the reset rule: RNG stream for the uniform rule, cursor
/// for the sequence rule. Each run owns its stream, so concurrent runs never
/// share randomness.
#[derive(Clone, Debug)]
pub struct ResetStream {
    rng: Option<ChaCha8Rng>,
    index: usize,
}

impl ResetStream {
    pub fn draw(&mut self, policy: &TimerPolicy) -> Result<f64, HybridError> {
        let (lo, hi) = (policy.reset_lo(), policy.reset_hi());
        let value = match &policy.reset {
            ResetRule::FixedMax => hi,
            ResetRule::FixedMin => lo,
            ResetRule::Uniform { .. } => {
                let rng = self.rng.as_mut().expect("uniform rule always has a stream");
                rng.random_range(lo..=hi)
            }
            ResetRule::Sequence { values } => *values
                .get(self.index)
                .ok_or(HybridError::ResetSequenceExhausted(self.index))?,
        };
        self.index += 1;
        if value < lo - DOMAIN_TOL || value > hi + DOMAIN_TOL {
            return Err(HybridError::ResetOutOfRange { value, lo, hi });
        }
        Ok(value)
    }

    pub fn draws(&self) -> usize {
        self.index
    }
}

/// Advance the state through `dt` of flow under a held gradient.
///
/// The continuous phase is exactly linear: the iterate moves at the constant
/// rate `-held_grad`, the snapshots stay fixed, and the timer decreases at
/// rate `1 - kappa`. No integration error is involved; the result is exact up
/// to floating-point rounding.
///
/// Fails if `dt` would push the timer more than [`JUMP_TOL`] below zero, i.e.
/// the flow may not skip over the jump surface.
pub fn flow_advance(
    state: &SystemState,
    held_grad: &DVector<f64>,
    dt: f64,
    kappa: f64,
) -> Result<SystemState, HybridError> {
    if !(dt > 0.0) {
        return Err(HybridError::NonPositiveDt(dt));
    }
    if held_grad.len() != state.x.len() {
        return Err(HybridError::DimensionMismatch(format!(
            "held gradient has dimension {}, state has {}",
            held_grad.len(),
            state.x.len()
        )));
    }
    if held_grad.iter().any(|g| !g.is_finite()) {
        return Err(HybridError::NonFiniteGradient);
    }
    let rate = 1.0 - kappa;
    let tau_after = state.tau - dt * rate;
    if tau_after < -JUMP_TOL {
        return Err(HybridError::FlowPastJump {
            dt,
            tau: state.tau,
            max_dt: state.tau / rate,
        });
    }
    let mut x = state.x.clone();
    x.axpy(-dt, held_grad, 1.0);
    Ok(SystemState {
        x,
        eta: state.eta.clone(),
        // Rounding can leave the timer a few ulps below zero when dt was
        // computed as the exact time-to-surface; snap that to the surface.
        tau: tau_after.max(0.0),
    })
}

/// Apply the communication event: every snapshot becomes a copy of the current
/// iterate, the iterate is untouched, and the timer is reset by the policy.
///
/// Only admissible on the jump surface (timer at zero within [`JUMP_TOL`]).
pub fn jump(
    state: &SystemState,
    policy: &TimerPolicy,
    stream: &mut ResetStream,
) -> Result<SystemState, HybridError> {
    if state.tau.abs() > JUMP_TOL {
        return Err(HybridError::JumpAwayFromSurface(state.tau));
    }
    let reset = stream.draw(policy)?;
    Ok(SystemState {
        x: state.x.clone(),
        eta: EtaState::Agreed(state.x.clone()),
        tau: reset,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DomainViolationKind {
    NonMonotoneTime,
    FirstIntervalTooLong,
    IntervalTooShort,
    IntervalTooLong,
}

#[derive(Clone, Debug, Serialize)]
pub struct DomainViolation {
    pub kind: DomainViolationKind,
    pub at: HybridTime,
    pub detail: String,
}

/// Audit a recorded trajectory against the timing contract.
///
/// Checks that recorded hybrid times are lexicographically monotone with unit
/// jump increments, that the first event occurs no later than the longest
/// admissible interval, and that every later inter-event gap, rescaled by the
/// clock rate, falls inside the reset interval. An empty result means the
/// hybrid time domain is well formed and event times cannot accumulate.
pub fn validate_hybrid_domain(
    traj: &HybridTrajectory,
    policy: &TimerPolicy,
) -> Vec<DomainViolation> {
    let mut violations = Vec::new();

    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0].time, &pair[1].time);
        let ok = if b.j == a.j {
            b.t >= a.t
        } else {
            b.j == a.j + 1 && b.t == a.t
        };
        if !ok {
            violations.push(DomainViolation {
                kind: DomainViolationKind::NonMonotoneTime,
                at: *b,
                detail: format!("({}, {}) followed by ({}, {})", a.t, a.j, b.t, b.j),
            });
        }
    }

    if let Some(first) = traj.jumps.first() {
        let limit = policy.max_flow_interval() + DOMAIN_TOL;
        if first.t > limit {
            violations.push(DomainViolation {
                kind: DomainViolationKind::FirstIntervalTooLong,
                at: HybridTime::new(first.t, first.index),
                detail: format!("first event at {} exceeds {limit}", first.t),
            });
        }
    }

    let rate = policy.clock_rate();
    for pair in traj.jumps.windows(2) {
        let gap = (pair[1].t - pair[0].t) * rate;
        let at = HybridTime::new(pair[1].t, pair[1].index);
        if gap < policy.reset_lo() - DOMAIN_TOL {
            violations.push(DomainViolation {
                kind: DomainViolationKind::IntervalTooShort,
                at,
                detail: format!("rescaled gap {gap} below {}", policy.reset_lo()),
            });
        } else if gap > policy.reset_hi() + DOMAIN_TOL {
            violations.push(DomainViolation {
                kind: DomainViolationKind::IntervalTooLong,
                at,
                detail: format!("rescaled gap {gap} above {}", policy.reset_hi()),
            });
        }
    }

    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    /// Brute-force oracle: integrate the constant-rate flow with tiny Euler
    /// steps and compare against the closed form.
    fn euler_flow(x0: &DVector<f64>, held: &DVector<f64>, dt: f64, steps: usize) -> DVector<f64> {
        let h = dt / steps as f64;
        let mut x = x0.clone();
        for _ in 0..steps {
            x.axpy(-h, held, 1.0);
        }
        x
    }

    #[test]
    fn flow_matches_hand_value_and_euler_oracle() {
        // Quadratic with Q = diag(2, 4), b = (1, 1): gradient at 0 is (1, 1).
        let state = SystemState::new(vec2(0.0, 0.0), EtaState::Agreed(vec2(0.0, 0.0)), 0.2);
        let held = vec2(1.0, 1.0);
        let next = flow_advance(&state, &held, 0.1, 0.0).unwrap();
        assert_relative_eq!(next.x[0], -0.1, max_relative = 1e-15);
        assert_relative_eq!(next.x[1], -0.1, max_relative = 1e-15);
        assert_eq!(next.eta, state.eta);
        assert_relative_eq!(next.tau, 0.1, max_relative = 1e-15);

        let oracle = euler_flow(&state.x, &held, 0.1, 1_000_000);
        assert_relative_eq!(next.x[0], oracle[0], epsilon = 1e-9);
        assert_relative_eq!(next.x[1], oracle[1], epsilon = 1e-9);
    }

    #[test]
    fn zero_gradient_only_drains_timer() {
        let state = SystemState::new(vec2(3.0, -1.0), EtaState::Agreed(vec2(3.0, -1.0)), 0.5);
        let next = flow_advance(&state, &vec2(0.0, 0.0), 0.25, 0.0).unwrap();
        assert_eq!(next.x, state.x);
        assert_relative_eq!(next.tau, 0.25, max_relative = 1e-15);
    }

    #[test]
    fn skewed_clock_stretches_the_interval() {
        // With kappa = 0.5 the timer drains at half speed: flowing 0.4 from
        // tau = 0.2 lands exactly on the jump surface.
        let state = SystemState::new(vec2(0.0, 0.0), EtaState::Agreed(vec2(0.0, 0.0)), 0.2);
        let next = flow_advance(&state, &vec2(0.0, 0.0), 0.4, 0.5).unwrap();
        assert_eq!(next.tau, 0.0);
        // Cross-check the algebra by simulating the skewed clock directly.
        let mut tau = 0.2;
        let h = 1e-6;
        let mut steps = 0u64;
        while tau > 0.0 {
            tau -= h * 0.5;
            steps += 1;
        }
        assert_relative_eq!(steps as f64 * h, 0.4, epsilon = 1e-4);
    }

    #[test]
    fn flow_rejects_overshoot_and_bad_gradients() {
        let state = SystemState::new(vec2(0.0, 0.0), EtaState::Agreed(vec2(0.0, 0.0)), 0.1);
        assert!(matches!(
            flow_advance(&state, &vec2(1.0, 1.0), 0.2, 0.0),
            Err(HybridError::FlowPastJump { .. })
        ));
        assert!(matches!(
            flow_advance(&state, &vec2(f64::NAN, 0.0), 0.05, 0.0),
            Err(HybridError::NonFiniteGradient)
        ));
        assert!(matches!(
            flow_advance(&state, &vec2(1.0, 1.0), 0.0, 0.0),
            Err(HybridError::NonPositiveDt(_))
        ));
    }

    #[test]
    fn jump_copies_iterate_into_snapshots() {
        let policy = TimerPolicy::nominal(0.05, 0.2).unwrap();
        let mut stream = policy.start_stream();
        let state = SystemState::new(
            vec2(-0.1, -0.1),
            EtaState::PerAgent(vec![vec2(0.0, 0.0), vec2(0.0, 0.0)]),
            0.0,
        );
        let next = jump(&state, &policy, &mut stream).unwrap();
        assert_eq!(next.x, state.x);
        assert_eq!(next.eta, EtaState::Agreed(vec2(-0.1, -0.1)));
        assert_eq!(next.tau, 0.2);
    }

    #[test]
    fn jump_is_identity_on_already_agreed_state() {
        let policy = TimerPolicy::nominal(0.05, 0.2).unwrap();
        let mut stream = policy.start_stream();
        let state = SystemState::new(vec2(1.0, 2.0), EtaState::Agreed(vec2(1.0, 2.0)), 0.0);
        let next = jump(&state, &policy, &mut stream).unwrap();
        assert_eq!(next.x, state.x);
        assert!(next.eta.agrees_with(&state.x));
    }

    #[test]
    fn jump_off_surface_is_a_contract_violation() {
        let policy = TimerPolicy::nominal(0.05, 0.2).unwrap();
        let mut stream = policy.start_stream();
        let state = SystemState::new(vec2(0.0, 0.0), EtaState::Agreed(vec2(0.0, 0.0)), 0.05);
        assert!(matches!(
            jump(&state, &policy, &mut stream),
            Err(HybridError::JumpAwayFromSurface(_))
        ));
    }

    #[test]
    fn uniform_resets_replay_identically_and_stay_in_range() {
        let policy = TimerPolicy::nominal(0.05, 0.25)
            .unwrap()
            .with_reset(ResetRule::Uniform { seed: 99 });
        let draw_all = || {
            let mut stream = policy.start_stream();
            (0..64).map(|_| stream.draw(&policy).unwrap()).collect::<Vec<_>>()
        };
        let a = draw_all();
        let b = draw_all();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| (0.05..=0.25).contains(&v)));
    }

    #[test]
    fn sequence_rule_validates_and_exhausts() {
        let policy = TimerPolicy::nominal(0.05, 0.2)
            .unwrap()
            .with_reset(ResetRule::Sequence { values: vec![0.1, 0.2] });
        assert!(policy.validate().is_ok());
        let mut stream = policy.start_stream();
        assert_eq!(stream.draw(&policy).unwrap(), 0.1);
        assert_eq!(stream.draw(&policy).unwrap(), 0.2);
        assert!(matches!(
            stream.draw(&policy),
            Err(HybridError::ResetSequenceExhausted(2))
        ));

        let bad = TimerPolicy::nominal(0.05, 0.2)
            .unwrap()
            .with_reset(ResetRule::Sequence { values: vec![0.5] });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn policy_invariants_are_enforced() {
        assert!(TimerPolicy::nominal(0.0, 0.2).is_err());
        assert!(TimerPolicy::nominal(0.3, 0.2).is_err());
        let skewed = TimerPolicy::nominal(0.1, 0.2).unwrap().with_skew(1.0);
        assert!(skewed.validate().is_err());
        // Offsets must keep the reset interval positive and ordered.
        let shifted = TimerPolicy::nominal(0.1, 0.2)
            .unwrap()
            .with_reset_offsets(-0.1, 0.0);
        assert!(shifted.validate().is_err());
        let ok = TimerPolicy::nominal(0.1, 0.2)
            .unwrap()
            .with_reset_offsets(-0.05, 0.05);
        assert!(ok.validate().is_ok());
        assert_relative_eq!(ok.reset_lo(), 0.05);
        assert_relative_eq!(ok.reset_hi(), 0.25);
    }

    #[test]
    fn partition_prefix_sums() {
        let part = BlockPartition::new(vec![2, 3, 1]).unwrap();
        assert_eq!(part.agents(), 3);
        assert_eq!(part.dim(), 6);
        assert_eq!(part.block(0), 0..2);
        assert_eq!(part.block(1), 2..5);
        assert_eq!(part.block(2), 5..6);
        assert!(BlockPartition::new(vec![]).is_err());
        assert!(BlockPartition::new(vec![1, 0]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Three interior points of one flow segment are collinear: the
            /// displacement is exactly proportional to elapsed time.
            #[test]
            fn flow_is_linear_in_time(
                (x0, g) in (1usize..6).prop_flat_map(|n| (
                    proptest::collection::vec(-10.0f64..10.0, n),
                    proptest::collection::vec(-5.0f64..5.0, n),
                )),
                f1 in 0.05f64..0.45,
                f2 in 0.5f64..0.95,
            ) {
                let n = x0.len();
                let state = SystemState::new(
                    DVector::from_vec(x0),
                    EtaState::Agreed(DVector::zeros(n)),
                    1.0,
                );
                let held = DVector::from_vec(g);
                let a = flow_advance(&state, &held, f1, 0.0).unwrap();
                let b = flow_advance(&state, &held, f2, 0.0).unwrap();
                let c = flow_advance(&state, &held, 1.0, 0.0).unwrap();
                for i in 0..n {
                    let da = a.x[i] - state.x[i];
                    let db = b.x[i] - state.x[i];
                    let dc = c.x[i] - state.x[i];
                    prop_assert!((da - f1 * dc).abs() <= 1e-12 * dc.abs().max(1.0));
                    prop_assert!((db - f2 * dc).abs() <= 1e-12 * dc.abs().max(1.0));
                    // Snapshots never move during flow.
                    prop_assert_eq!(&a.eta, &state.eta);
                }
            }

            /// Every reset drawn by any rule lands inside the admissible
            /// interval, including under reset-bound offsets.
            #[test]
            fn resets_stay_admissible(
                tau_min in 0.01f64..0.2,
                span in 0.0f64..0.5,
                theta in 0.0f64..0.05,
                seed in any::<u64>(),
            ) {
                let tau_max = tau_min + span;
                let policy = TimerPolicy::nominal(tau_min, tau_max).unwrap()
                    .with_reset(ResetRule::Uniform { seed })
                    .with_reset_offsets(-theta.min(tau_min * 0.5), theta);
                prop_assume!(policy.validate().is_ok());
                let mut stream = policy.start_stream();
                for _ in 0..32 {
                    let v = stream.draw(&policy).unwrap();
                    prop_assert!(v >= policy.reset_lo() && v <= policy.reset_hi());
                }
            }
        }
    }
}
