//! Distance to the convergence set, the Lyapunov value, exponential decay
//! envelopes, and the certification checks that compare recorded trajectories
//! against them.
//!
//! The convergence set collects the states whose iterate and snapshots are
//! all minimizers, for any timer value; the timer therefore contributes
//! nothing to the distance. Three envelope variants are supported, differing
//! in prefactor and applicability: one proven for agreement-initialized runs
//! at all hybrid times, one for any run after its first event, and a global
//! one valid for every run and time. All three share the decay rate
//! `rho = beta (1 - K tau) / (N + 1)` where `tau` is the longest real time a
//! gradient can be held.


use serde::Serialize;
use thiserror::Error;

use crate::hybrid::{EtaState, HybridTime, SystemState, TimerPolicy};
use crate::objectives::ProblemInstance;
use crate::trajectory::HybridTrajectory;

/// Relative tolerance absorbing floating-point rounding in closed-form flows.
pub const CHECK_RTOL: f64 = 1e-9;

/// Distances below this are treated as converged noise by the rate fit.
pub const FIT_FLOOR: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("envelope undefined: effective step bound {tau_eff} is not below 1/K = {limit}")]
    CertificationUnavailable { tau_eff: f64, limit: f64 },
    #[error("envelope not applicable: {0}")]
    NotApplicable(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("value gap {0} is significantly negative; recorded minimum value looks wrong")]
    NegativeGap(f64),
}

/// Euclidean distance from a state to the convergence set, ignoring the
/// timer: the root of the squared iterate error plus all squared snapshot
/// errors, each measured to its nearest minimizer.
pub fn set_distance(state: &SystemState, inst: &ProblemInstance) -> f64 {
    let obj = &inst.objective;
    let x_hat = obj.project_to_minimizers(&state.x);
    let mut total = (&state.x - x_hat).norm_squared();
    match &state.eta {
        EtaState::Agreed(eta) => {
            let eta_hat = obj.project_to_minimizers(eta);
            total += inst.partition.agents() as f64 * (eta - eta_hat).norm_squared();
        }
        EtaState::PerAgent(etas) => {
            for eta in etas {
                let eta_hat = obj.project_to_minimizers(eta);
                total += (eta - eta_hat).norm_squared();
            }
        }
    }
    total.sqrt()
}

/// The certified energy of a state: the value gap at the iterate plus the
/// value gaps at all snapshots. Zero exactly on the convergence set.
///
/// Tiny negative gaps (within 1e-12, pure rounding) are clamped to zero; a
/// gap below -1e-9 indicates a wrong recorded minimum value and is an error.
pub fn lyapunov_value(state: &SystemState, inst: &ProblemInstance) -> Result<f64, AnalysisError> {
    let obj = &inst.objective;
    let clamp = |g: f64| -> Result<f64, AnalysisError> {
        if g < -1e-9 {
            Err(AnalysisError::NegativeGap(g))
        } else if g < 0.0 && g >= -1e-12 {
            Ok(0.0)
        } else {
            Ok(g)
        }
    };
    let mut v = clamp(obj.gap(&state.x))?;
    match &state.eta {
        EtaState::Agreed(eta) => {
            v += inst.partition.agents() as f64 * clamp(obj.gap(eta))?;
        }
        EtaState::PerAgent(etas) => {
            for eta in etas {
                v += clamp(obj.gap(eta))?;
            }
        }
    }
    Ok(v)
}

/// Which recorded points an envelope claims to bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeValidity {
    /// Every hybrid time, but only for runs whose snapshots started equal to
    /// the iterate.
    AgreementInitOnly,
    /// Every hybrid time after the first event, for any initialization.
    AfterFirstJump,
    /// Every hybrid time of every run.
    AllTime,
}

/// Envelope variant. The serialized labels (`prop1`, `prop2`, `thm1`) are
/// part of the report and CSV interfaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    Prop1,
    Prop2,
    Thm1,
}

impl EnvelopeKind {
    pub fn label(&self) -> &'static str {
        match self {
            EnvelopeKind::Prop1 => "prop1",
            EnvelopeKind::Prop2 => "prop2",
            EnvelopeKind::Thm1 => "thm1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prop1" => Some(EnvelopeKind::Prop1),
            "prop2" => Some(EnvelopeKind::Prop2),
            "thm1" => Some(EnvelopeKind::Thm1),
            _ => None,
        }
    }

    pub fn validity(&self) -> EnvelopeValidity {
        match self {
            EnvelopeKind::Prop1 => EnvelopeValidity::AgreementInitOnly,
            EnvelopeKind::Prop2 => EnvelopeValidity::AfterFirstJump,
            EnvelopeKind::Thm1 => EnvelopeValidity::AllTime,
        }
    }
}

/// A concrete exponential bound `prefactor * exp(-rho t) * d0`.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeSpec {
    pub kind: EnvelopeKind,
    pub rho: f64,
    pub prefactor: f64,
    /// True when the dominance constant behind `rho` is a sampled estimate:
    /// violations are advisory rather than disproofs.
    pub advisory: bool,
}

impl EnvelopeSpec {
    pub fn bound(&self, t: f64, initial_distance: f64) -> f64 {
        self.prefactor * (-self.rho * t).exp() * initial_distance
    }

    fn applies_to(&self, time: &HybridTime) -> bool {
        match self.kind.validity() {
            EnvelopeValidity::AfterFirstJump => time.j >= 1,
            _ => true,
        }
    }
}

/// Shared decay rate of all three envelopes.
pub fn decay_rate(inst: &ProblemInstance, policy: &TimerPolicy) -> f64 {
    let beta = inst.objective.gradient_dominance();
    let k = inst.objective.smoothness();
    let agents = inst.partition.agents() as f64;
    beta * (1.0 - k * policy.effective_tau_max()) / (agents + 1.0)
}

/// Build an envelope for the instance/policy pair.
///
/// Requires the effective step bound below `1/K`; otherwise the rate is not
/// positive and no exponential envelope exists.
pub fn make_envelope(
    kind: EnvelopeKind,
    inst: &ProblemInstance,
    policy: &TimerPolicy,
) -> Result<EnvelopeSpec, AnalysisError> {
    let k = inst.objective.smoothness();
    let beta = inst.objective.gradient_dominance();
    let tau_eff = policy.effective_tau_max();
    if !(tau_eff < 1.0 / k) {
        return Err(AnalysisError::CertificationUnavailable { tau_eff, limit: 1.0 / k });
    }
    let agents = inst.partition.agents() as f64;
    let rho = decay_rate(inst, policy);
    let post_jump_prefactor = (2.0 * k * (agents + 1.0) / beta).sqrt();
    let prefactor = match kind {
        EnvelopeKind::Prop1 => (k / beta).sqrt(),
        EnvelopeKind::Prop2 => post_jump_prefactor,
        EnvelopeKind::Thm1 => {
            let stretch = (rho * tau_eff).exp();
            let first_interval_a = 2.0f64.sqrt() * stretch;
            let first_interval_b = (1.0 + 2.0 * k * k * tau_eff * tau_eff).sqrt() * stretch;
            first_interval_a.max(first_interval_b).max(post_jump_prefactor)
        }
    };
    let (_, beta_sampled) = inst.objective.constants_are_estimates();
    Ok(EnvelopeSpec { kind, rho, prefactor, advisory: beta_sampled })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeViolation {
    pub time: HybridTime,
    pub measured: f64,
    pub bound: f64,
}

/// Result of checking one envelope against one trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeReport {
    pub kind: EnvelopeKind,
    pub rho: f64,
    pub prefactor: f64,
    pub initial_distance: f64,
    pub n_checked: usize,
    /// Smallest observed `bound - measured`; negative means a violation.
    pub worst_margin: f64,
    pub violations: Vec<EnvelopeViolation>,
    /// Least-squares decay rate of the measured distances, when enough
    /// samples sit above the noise floor.
    pub fitted_rate: Option<f64>,
    pub advisory: bool,
}

impl EnvelopeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// The summary object of the report interface.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind.label(),
            "rho": self.rho,
            "prefactor": self.prefactor,
            "worst_margin": self.worst_margin,
            "n_violations": self.violations.len(),
            "fitted_rate": self.fitted_rate,
            "advisory": self.advisory,
        })
    }
}

/// Check an envelope against a precomputed distance series.
///
/// The reference distance is taken from the first recorded point, which must
/// be the initial condition (0, 0). A point violates when its distance
/// exceeds the bound by more than the relative tolerance.
pub fn check_envelope_series(
    series: &[(HybridTime, f64)],
    spec: &EnvelopeSpec,
    agreement_init: bool,
) -> Result<EnvelopeReport, AnalysisError> {
    if spec.kind.validity() == EnvelopeValidity::AgreementInitOnly && !agreement_init {
        return Err(AnalysisError::NotApplicable(
            "this envelope requires snapshots initialized equal to the iterate".into(),
        ));
    }
    let first = series
        .first()
        .ok_or_else(|| AnalysisError::InsufficientData("empty trajectory".into()))?;
    if first.0.t != 0.0 || first.0.j != 0 {
        return Err(AnalysisError::InsufficientData(
            "series must start at the initial condition (0, 0)".into(),
        ));
    }
    let d0 = first.1;
    let mut report = EnvelopeReport {
        kind: spec.kind,
        rho: spec.rho,
        prefactor: spec.prefactor,
        initial_distance: d0,
        n_checked: 0,
        worst_margin: f64::INFINITY,
        violations: Vec::new(),
        fitted_rate: fit_decay_series(series, (f64::NEG_INFINITY, f64::INFINITY)).ok(),
        advisory: spec.advisory,
    };
    for (time, measured) in series {
        if !spec.applies_to(time) {
            continue;
        }
        let bound = spec.bound(time.t, d0);
        let margin = bound - measured;
        report.n_checked += 1;
        if margin < report.worst_margin {
            report.worst_margin = margin;
        }
        if margin < -CHECK_RTOL * bound {
            report.violations.push(EnvelopeViolation { time: *time, measured: *measured, bound });
        }
    }
    if report.n_checked == 0 {
        return Err(AnalysisError::InsufficientData("no applicable samples".into()));
    }
    Ok(report)
}

/// Check an envelope against a recorded trajectory, computing distances from
/// the stored states.
pub fn check_envelope(
    traj: &HybridTrajectory,
    spec: &EnvelopeSpec,
    inst: &ProblemInstance,
) -> Result<EnvelopeReport, AnalysisError> {
    let series = distance_series(traj, inst);
    check_envelope_series(&series, spec, traj.meta.agreement_init)
}

/// Distance to the convergence set at every recorded sample.
pub fn distance_series(traj: &HybridTrajectory, inst: &ProblemInstance) -> Vec<(HybridTime, f64)> {
    traj.samples
        .iter()
        .map(|s| (s.time, set_distance(&s.state, inst)))
        .collect()
}

/// Lyapunov value at every recorded sample.
pub fn lyapunov_series(
    traj: &HybridTrajectory,
    inst: &ProblemInstance,
) -> Result<Vec<(HybridTime, f64)>, AnalysisError> {
    traj.samples
        .iter()
        .map(|s| Ok((s.time, lyapunov_value(&s.state, inst)?)))
        .collect()
}

fn fit_decay_series(
    series: &[(HybridTime, f64)],
    window: (f64, f64),
) -> Result<f64, AnalysisError> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .filter(|(time, d)| time.t >= window.0 && time.t <= window.1 && *d > FIT_FLOOR)
        .map(|(time, d)| (time.t, d.ln()))
        .collect();
    if points.len() < 10 {
        return Err(AnalysisError::InsufficientData(format!(
            "need at least 10 samples above the noise floor in the window, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (t, y) in &points {
        cov += (t - mean_t) * (y - mean_y);
        var += (t - mean_t) * (t - mean_t);
    }
    if var == 0.0 {
        return Err(AnalysisError::InsufficientData("degenerate time window".into()));
    }
    // Positive result = decay.
    Ok(-cov / var)
}

/// Least-squares decay rate of the set distance over `window` (as a positive
/// rate). Refuses when fewer than 10 samples lie above the noise floor, e.g.
/// on a stationary trajectory.
pub fn fit_decay_rate(
    traj: &HybridTrajectory,
    inst: &ProblemInstance,
    window: (f64, f64),
) -> Result<f64, AnalysisError> {
    fit_decay_series(&distance_series(traj, inst), window)
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityViolation {
    pub from: HybridTime,
    pub to: HybridTime,
    pub value_from: f64,
    pub value_to: f64,
    /// Largest value the bound allowed at `to`.
    pub allowed: f64,
    pub during_flow: bool,
}

/// Verify that the Lyapunov value never increases: along flows it must decay
/// at least like `exp(-2 rho dt)` (with the rate floored at zero when the
/// step bound exceeds `1/K`, where no decay is guaranteed), and across each
/// event it must not grow.
///
/// Proven for agreement-initialized runs only; other runs are rejected.
pub fn check_v_monotonic(
    traj: &HybridTrajectory,
    inst: &ProblemInstance,
    policy: &TimerPolicy,
) -> Result<Vec<MonotonicityViolation>, AnalysisError> {
    if !traj.meta.agreement_init {
        return Err(AnalysisError::NotApplicable(
            "monotonicity is proven for agreement-initialized runs".into(),
        ));
    }
    let series = lyapunov_series(traj, inst)?;
    let rho = decay_rate(inst, policy).max(0.0);
    Ok(check_v_monotonic_series(&series, rho))
}

/// Series form of the monotonicity check (used for recorded CSV data).
pub fn check_v_monotonic_series(
    series: &[(HybridTime, f64)],
    rho: f64,
) -> Vec<MonotonicityViolation> {
    let mut violations = Vec::new();
    for pair in series.windows(2) {
        let ((t_a, v_a), (t_b, v_b)) = (pair[0], pair[1]);
        let during_flow = t_b.j == t_a.j;
        let allowed = if during_flow {
            v_a * (-2.0 * rho * (t_b.t - t_a.t)).exp()
        } else {
            v_a
        };
        if v_b > allowed * (1.0 + CHECK_RTOL) {
            violations.push(MonotonicityViolation {
                from: t_a,
                to: t_b,
                value_from: v_a,
                value_to: v_b,
                allowed,
                during_flow,
            });
        }
    }
    violations
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichViolation {
    pub time: HybridTime,
    pub distance: f64,
    pub lyapunov: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Verify the two-sided comparison at every sample:
/// `(beta/2) d^2 <= V <= (K/2) d^2`.
pub fn check_value_sandwich(
    traj: &HybridTrajectory,
    inst: &ProblemInstance,
) -> Result<Vec<SandwichViolation>, AnalysisError> {
    let beta = inst.objective.gradient_dominance();
    let k = inst.objective.smoothness();
    let mut violations = Vec::new();
    for sample in &traj.samples {
        let d = set_distance(&sample.state, inst);
        let v = lyapunov_value(&sample.state, inst)?;
        let lower = 0.5 * beta * d * d;
        let upper = 0.5 * k * d * d;
        if v < lower * (1.0 - CHECK_RTOL) || v > upper * (1.0 + CHECK_RTOL) {
            violations.push(SandwichViolation {
                time: sample.time,
                distance: d,
                lyapunov: v,
                lower,
                upper,
            });
        }
    }
    Ok(violations)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientBoundViolation {
    pub time: HybridTime,
    pub grad_norm_sq: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Verify the gradient-norm sandwich at every sample:
/// `2 beta (L(x) - L*) <= ||grad L(x)||^2 <= K^2 ||x - x_hat||^2`.
pub fn check_gradient_norm_bounds(
    traj: &HybridTrajectory,
    inst: &ProblemInstance,
) -> Vec<GradientBoundViolation> {
    let beta = inst.objective.gradient_dominance();
    let k = inst.objective.smoothness();
    let mut violations = Vec::new();
    for sample in &traj.samples {
        let g_sq = sample.grad_norm * sample.grad_norm;
        let gap = inst.objective.gap(&sample.state.x);
        let x_hat = inst.objective.project_to_minimizers(&sample.state.x);
        let err = (&sample.state.x - x_hat).norm_squared();
        let lower = 2.0 * beta * gap;
        let upper = k * k * err;
        if g_sq < lower * (1.0 - CHECK_RTOL) - 1e-300
            || g_sq > upper * (1.0 + CHECK_RTOL) + 1e-300
        {
            violations.push(GradientBoundViolation {
                time: sample.time,
                grad_norm_sq: g_sq,
                lower,
                upper,
            });
        }
    }
    violations
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderingViolation {
    pub time: HybridTime,
    pub gap_x: f64,
    pub gap_eta: f64,
}

/// For agreement-initialized certified runs the iterate's value never exceeds
/// the snapshot's value strictly inside a flow interval. Checked on samples
/// recorded after the interval start where the snapshots agree.
pub fn check_iterate_below_snapshot(
    traj: &HybridTrajectory,
    inst: &ProblemInstance,
) -> Vec<OrderingViolation> {
    let mut violations = Vec::new();
    for sample in &traj.samples {
        let j = sample.time.j;
        let interval_start = if j == 0 { 0.0 } else { traj.jumps[(j - 1) as usize].t };
        if sample.time.t <= interval_start {
            continue;
        }
        let Some(eta) = sample.state.eta.common() else { continue };
        let gap_x = inst.objective.gap(&sample.state.x);
        let gap_eta = inst.objective.gap(eta);
        if gap_x > gap_eta * (1.0 + CHECK_RTOL) + 1e-300 {
            violations.push(OrderingViolation { time: sample.time, gap_x, gap_eta });
        }
    }
    violations
}

/// Expected jump-count window for a run of length `horizon_t`: between
/// `floor(horizon / longest interval) - 1` and
/// `ceil(horizon / shortest interval) + 1`.
pub fn jump_count_window(policy: &TimerPolicy, horizon_t: f64) -> (u64, u64) {
    let lo = (horizon_t / policy.max_flow_interval()).floor() as u64;
    let hi = (horizon_t / policy.min_flow_interval()).ceil() as u64;
    (lo.saturating_sub(1), hi + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{EtaState, SystemState, TimerPolicy};
    use crate::objectives::quadratic_from_eigenvalues as quadratic_from_parts;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn two_agent_instance() -> ProblemInstance {
        quadratic_from_parts(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap()
    }

    fn zero_state() -> SystemState {
        SystemState::new(DVector::zeros(2), EtaState::Agreed(DVector::zeros(2)), 0.2)
    }

    /// Hand arithmetic with the minimizer (-1/2, -1/4): the squared distance
    /// is 3 * 0.3125 = 0.9375.
    #[test]
    fn distance_example() {
        let inst = two_agent_instance();
        let d = set_distance(&zero_state(), &inst);
        assert_relative_eq!(d, 0.9375f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(d, 0.96824583655185426, max_relative = 1e-10);
    }

    #[test]
    fn distance_ignores_timer_and_vanishes_on_the_set() {
        let inst = two_agent_instance();
        let mut state = zero_state();
        let d1 = set_distance(&state, &inst);
        state.tau = 0.0;
        assert_eq!(set_distance(&state, &inst), d1);

        let x_star = inst.objective.project_to_minimizers(&state.x).clone();
        let in_set = SystemState::new(x_star.clone(), EtaState::Agreed(x_star), 0.1);
        assert_eq!(set_distance(&in_set, &inst), 0.0);
    }

    #[test]
    fn lyapunov_example_and_zero_on_set() {
        let inst = two_agent_instance();
        let v = lyapunov_value(&zero_state(), &inst).unwrap();
        assert_relative_eq!(v, 1.125, max_relative = 1e-12);

        let x_star = inst.objective.project_to_minimizers(&DVector::zeros(2)).clone();
        let in_set = SystemState::new(x_star.clone(), EtaState::Agreed(x_star), 0.2);
        assert_eq!(lyapunov_value(&in_set, &inst).unwrap(), 0.0);
    }

    #[test]
    fn lyapunov_sandwich_on_random_states() {
        use rand::{Rng, SeedableRng};
        let inst = two_agent_instance();
        let beta = inst.objective.gradient_dominance();
        let k = inst.objective.smoothness();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            let eta = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            let state = SystemState::new(x, EtaState::Agreed(eta), 0.1);
            let d = set_distance(&state, &inst);
            let v = lyapunov_value(&state, &inst).unwrap();
            assert!(v >= 0.5 * beta * d * d * (1.0 - 1e-9));
            assert!(v <= 0.5 * k * d * d * (1.0 + 1e-9));
        }
    }

    #[test]
    fn lyapunov_rejects_wrong_minimum() {
        let mut inst = crate::objectives::gen_logistic(3, 2, 9).unwrap();
        inst.objective.override_min_value_for_tests(10.0);
        let state = SystemState::new(DVector::zeros(3), EtaState::Agreed(DVector::zeros(3)), 0.1);
        assert!(matches!(
            lyapunov_value(&state, &inst),
            Err(AnalysisError::NegativeGap(_))
        ));
    }

    /// Arithmetic from the constants beta = 2, K = 4, tau = 0.2, N = 2:
    /// rho = (2/3)(1 - 0.8) = 0.13333..., and the three global-prefactor
    /// candidates evaluate to about 1.4524, 1.5508, and sqrt(12) = 3.4641.
    #[test]
    fn envelope_prefactors_match_hand_arithmetic() {
        let inst = two_agent_instance();
        let policy = TimerPolicy::nominal(0.04, 0.2).unwrap();
        let rho_expect = (2.0 / 3.0) * (1.0 - 4.0 * 0.2);

        let p1 = make_envelope(EnvelopeKind::Prop1, &inst, &policy).unwrap();
        assert_relative_eq!(p1.rho, rho_expect, max_relative = 1e-12);
        assert_relative_eq!(p1.prefactor, 2.0f64.sqrt(), max_relative = 1e-12);

        let p2 = make_envelope(EnvelopeKind::Prop2, &inst, &policy).unwrap();
        assert_relative_eq!(p2.prefactor, 12.0f64.sqrt(), max_relative = 1e-12);

        let t1 = make_envelope(EnvelopeKind::Thm1, &inst, &policy).unwrap();
        // Independent evaluation of each candidate term.
        let stretch = (rho_expect * 0.2f64).exp();
        let c1 = 2.0f64.sqrt() * stretch;
        let c2 = (1.0f64 + 2.0 * 16.0 * 0.04).sqrt() * stretch;
        let c3 = 12.0f64.sqrt();
        assert_relative_eq!(c1, 1.4524, max_relative = 1e-4);
        assert_relative_eq!(c2, 1.5508, max_relative = 1e-4);
        assert_relative_eq!(t1.prefactor, c1.max(c2).max(c3), max_relative = 1e-12);
        assert_relative_eq!(t1.prefactor, 3.4641, max_relative = 1e-4);
        assert!(!t1.advisory);
    }

    #[test]
    fn envelope_requires_certified_step_bound() {
        let inst = two_agent_instance();
        let policy = TimerPolicy::nominal(0.05, 0.25).unwrap();
        assert!(matches!(
            make_envelope(EnvelopeKind::Thm1, &inst, &policy),
            Err(AnalysisError::CertificationUnavailable { .. })
        ));
        // Approaching the limit degenerates the rate toward zero.
        let near = TimerPolicy::nominal(0.05, 0.2499999).unwrap();
        let spec = make_envelope(EnvelopeKind::Thm1, &inst, &near).unwrap();
        assert!(spec.rho > 0.0 && spec.rho < 1e-5);
    }

    #[test]
    fn skew_and_offsets_enter_the_effective_step_bound() {
        let inst = two_agent_instance();
        // tau_max + theta_max = 0.21, stretched by 1/(1-kappa) = 2.
        let policy = TimerPolicy::nominal(0.04, 0.2)
            .unwrap()
            .with_skew(0.5)
            .with_reset_offsets(0.0, 0.01);
        assert_relative_eq!(policy.effective_tau_max(), 0.42, max_relative = 1e-12);
        // 0.42 > 1/4: no certification.
        assert!(make_envelope(EnvelopeKind::Thm1, &inst, &policy).is_err());
    }

    #[test]
    fn envelope_detects_injected_corruption() {
        let inst = two_agent_instance();
        let policy = TimerPolicy::nominal(0.04, 0.2).unwrap();
        let spec = make_envelope(EnvelopeKind::Prop1, &inst, &policy).unwrap();
        // A clean exponential trace passes.
        let clean: Vec<(HybridTime, f64)> = (0..40)
            .map(|i| {
                let t = 0.05 * i as f64;
                (HybridTime::new(t, (t / 0.2) as u64), 0.9 * (-2.0 * t).exp())
            })
            .collect();
        let report = check_envelope_series(&clean, &spec, true).unwrap();
        assert!(report.passed());
        assert_eq!(report.n_checked, 40);

        // Doubling the measured distances (past the reference point) exceeds
        // the sqrt(2) prefactor early in the trace.
        let corrupted: Vec<_> = clean
            .iter()
            .enumerate()
            .map(|(i, (t, d))| (*t, if i == 0 { *d } else { 2.0 * d }))
            .collect();
        let report = check_envelope_series(&corrupted, &spec, true).unwrap();
        assert!(!report.passed());
        assert!(report.worst_margin < 0.0);
    }

    #[test]
    fn agreement_only_envelope_refuses_disagreeing_runs() {
        let inst = two_agent_instance();
        let policy = TimerPolicy::nominal(0.04, 0.2).unwrap();
        let spec = make_envelope(EnvelopeKind::Prop1, &inst, &policy).unwrap();
        let series = vec![(HybridTime::new(0.0, 0), 1.0)];
        assert!(matches!(
            check_envelope_series(&series, &spec, false),
            Err(AnalysisError::NotApplicable(_))
        ));
    }

    #[test]
    fn stationary_series_refuses_rate_fit() {
        let series: Vec<(HybridTime, f64)> =
            (0..30).map(|i| (HybridTime::new(0.1 * i as f64, 0), 1e-15)).collect();
        assert!(matches!(
            fit_decay_series(&series, (f64::NEG_INFINITY, f64::INFINITY)),
            Err(AnalysisError::InsufficientData(_))
        ));
    }

    #[test]
    fn monotonic_check_flags_growth() {
        let rho = 0.1;
        let decaying: Vec<(HybridTime, f64)> = (0..20)
            .map(|i| (HybridTime::new(0.1 * i as f64, i), (-(0.3 * 0.1) * i as f64).exp()))
            .collect();
        // Alternating j means every step is "across a jump": plain
        // nonincrease is enough and holds.
        assert!(check_v_monotonic_series(&decaying, rho).is_empty());

        let mut growing = decaying.clone();
        growing[10].1 = growing[9].1 * 1.5;
        assert_eq!(check_v_monotonic_series(&growing, rho).len(), 1);
    }

    #[test]
    fn jump_count_window_bounds() {
        let policy = TimerPolicy::nominal(0.05, 0.25).unwrap();
        let (lo, hi) = jump_count_window(&policy, 10.0);
        assert_eq!(lo, 39); // floor(10/0.25) - 1
        assert_eq!(hi, 201); // ceil(10/0.05) + 1

        let skewed = TimerPolicy::nominal(0.05, 0.25).unwrap().with_skew(0.5);
        let (lo, hi) = jump_count_window(&skewed, 10.0);
        assert_eq!(lo, 19); // intervals stretch by 2
        assert_eq!(hi, 101);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// The three prefactors are ordered, so the three bounds are
            /// ordered at every time they share.
            #[test]
            fn envelope_ordering(
                beta in 0.1f64..4.0,
                k_extra in 0.001f64..6.0,
                agents in 1usize..50,
                tau_frac in 0.05f64..0.95,
            ) {
                let k = beta + k_extra;
                let tau_max = tau_frac / k;
                let linears = vec![1.0; agents];
                let mut eigs = vec![beta; agents];
                eigs[0] = beta;
                *eigs.last_mut().unwrap() = k;
                let inst = quadratic_from_parts(eigs, linears).unwrap();
                let policy = TimerPolicy::nominal(tau_max / 5.0, tau_max).unwrap();
                let p1 = make_envelope(EnvelopeKind::Prop1, &inst, &policy).unwrap();
                let p2 = make_envelope(EnvelopeKind::Prop2, &inst, &policy).unwrap();
                let t1 = make_envelope(EnvelopeKind::Thm1, &inst, &policy).unwrap();
                prop_assert_eq!(p1.rho, p2.rho);
                prop_assert_eq!(p2.rho, t1.rho);
                prop_assert!(p1.prefactor <= p2.prefactor + 1e-12);
                prop_assert!(p2.prefactor <= t1.prefactor + 1e-12);
            }
        }
    }
}
