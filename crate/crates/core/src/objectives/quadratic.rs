//! Strongly convex quadratic benchmark: `L(x) = x'Qx/2 + b'x` with a seeded
//! symmetric positive definite `Q` whose extreme eigenvalues are placed
//! exactly, so the smoothness and dominance constants are known in closed
//! form rather than estimated.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{InstanceMeta, Objective, ObjectiveError, ObjectiveKind, ProblemInstance};
use crate::hybrid::BlockPartition;

/// `Q` kept in factored form. The conjugated variant never materializes the
/// dense matrix: applying `Q` is two matvecs and a scale, and the spectrum
/// stays exact by construction. The diagonal variant scales to large
/// dimensions with O(n) storage.
#[derive(Clone, Debug)]
pub(crate) enum QuadraticShape {
    Diagonal,
    Conjugated { basis: DMatrix<f64> },
}

#[derive(Clone, Debug)]
pub(crate) struct QuadraticModel {
    shape: QuadraticShape,
    eigs: DVector<f64>,
    linear: DVector<f64>,
    x_star: DVector<f64>,
}

impl QuadraticModel {
    /// `Q v`
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.shape {
            QuadraticShape::Diagonal => v.component_mul(&self.eigs),
            QuadraticShape::Conjugated { basis } => {
                let w = basis.transpose() * v;
                basis * w.component_mul(&self.eigs)
            }
        }
    }

    pub(crate) fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.apply(x)) + self.linear.dot(x)
    }

    pub(crate) fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply(x) + &self.linear
    }

    /// `L(x) - L*` as the quadratic form of the error, which is nonnegative
    /// by construction and free of the cancellation the raw difference hits
    /// once the error is tiny.
    pub(crate) fn gap(&self, x: &DVector<f64>) -> f64 {
        let e = x - &self.x_star;
        match &self.shape {
            QuadraticShape::Diagonal => {
                0.5 * e.iter().zip(self.eigs.iter()).map(|(ei, li)| li * ei * ei).sum::<f64>()
            }
            QuadraticShape::Conjugated { basis } => {
                let w = basis.transpose() * e;
                0.5 * w.iter().zip(self.eigs.iter()).map(|(wi, li)| li * wi * wi).sum::<f64>()
            }
        }
    }

    /// Unit direction with equal weight in every curvature mode.
    pub(crate) fn balanced_direction(&self) -> DVector<f64> {
        let n = self.eigs.len();
        let flat = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        match &self.shape {
            QuadraticShape::Diagonal => flat,
            QuadraticShape::Conjugated { basis } => basis * flat,
        }
    }

    #[cfg(test)]
    pub(crate) fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigs
    }

    #[cfg(test)]
    pub(crate) fn linear_term(&self) -> &DVector<f64> {
        &self.linear
    }
}

fn draw_eigenvalues(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Endpoints are always present so the reported constants are exact; a
    // single-agent problem only has room for one, where we keep the upper
    // endpoint so the smoothness constant (which gates the step bound) stays
    // exact.
    let mut eigs = match n {
        1 => vec![hi],
        _ => {
            let mut v = vec![lo, hi];
            v.extend((0..n - 2).map(|_| rng.random_range(lo..=hi)));
            v
        }
    };
    eigs.shuffle(rng);
    eigs
}

fn draw_linear(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..=hi))
}

fn build_instance(
    generator: &str,
    shape: QuadraticShape,
    eigs: Vec<f64>,
    linear: DVector<f64>,
    seed: u64,
    params: BTreeMap<String, f64>,
) -> ProblemInstance {
    let n = eigs.len();
    let eigs = DVector::from_vec(eigs);
    let beta = eigs.min();
    let k = eigs.max();
    // Unique minimizer of the strongly convex quadratic: Q x* = -b.
    let x_star = match &shape {
        QuadraticShape::Diagonal => -linear.component_div(&eigs),
        QuadraticShape::Conjugated { basis } => {
            let w = basis.transpose() * &linear;
            -(basis * w.component_div(&eigs))
        }
    };
    let model = QuadraticModel { shape, eigs, linear, x_star: x_star.clone() };
    let l_star = model.value(&x_star);
    let objective = Objective::new(
        ObjectiveKind::Quadratic(model),
        n,
        k,
        beta,
        l_star,
        x_star,
        false,
        false,
    );
    ProblemInstance {
        objective,
        partition: BlockPartition::scalar(n),
        meta: InstanceMeta { generator: generator.into(), seed, params },
    }
}

fn check_eig_range(lo: f64, hi: f64) -> Result<(), ObjectiveError> {
    if !(lo > 0.0) {
        return Err(ObjectiveError::BadParameter(format!(
            "eigenvalue lower bound must be positive, got {lo}"
        )));
    }
    if !(lo <= hi) {
        return Err(ObjectiveError::BadParameter(format!(
            "eigenvalue range is empty: [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Quadratic with `Q` built from a seeded random orthogonal conjugation of
/// eigenvalues in `[eig_lo, eig_hi]`; each agent owns one scalar block.
pub fn gen_quadratic(
    agents: usize,
    eig_lo: f64,
    eig_hi: f64,
    b_lo: f64,
    b_hi: f64,
    seed: u64,
) -> Result<ProblemInstance, ObjectiveError> {
    check_eig_range(eig_lo, eig_hi)?;
    if agents == 0 {
        return Err(ObjectiveError::BadParameter("need at least one agent".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigs = draw_eigenvalues(agents, eig_lo, eig_hi, &mut rng);
    let gaussian = DMatrix::from_fn(agents, agents, |_, _| rng.sample(StandardNormal));
    let basis = gaussian.qr().q();
    let linear = draw_linear(agents, b_lo, b_hi, &mut rng);
    let params = BTreeMap::from([
        ("eig_lo".into(), eig_lo),
        ("eig_hi".into(), eig_hi),
        ("b_lo".into(), b_lo),
        ("b_hi".into(), b_hi),
    ]);
    Ok(build_instance(
        "quadratic",
        QuadraticShape::Conjugated { basis },
        eigs,
        linear,
        seed,
        params,
    ))
}

/// Diagonal-`Q` variant: same spectrum scheme with O(n) storage, usable at
/// dimensions where a dense conjugation would not fit.
pub fn gen_quadratic_diagonal(
    agents: usize,
    eig_lo: f64,
    eig_hi: f64,
    b_lo: f64,
    b_hi: f64,
    seed: u64,
) -> Result<ProblemInstance, ObjectiveError> {
    check_eig_range(eig_lo, eig_hi)?;
    if agents == 0 {
        return Err(ObjectiveError::BadParameter("need at least one agent".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigs = draw_eigenvalues(agents, eig_lo, eig_hi, &mut rng);
    let linear = draw_linear(agents, b_lo, b_hi, &mut rng);
    let params = BTreeMap::from([
        ("eig_lo".into(), eig_lo),
        ("eig_hi".into(), eig_hi),
        ("b_lo".into(), b_lo),
        ("b_hi".into(), b_hi),
    ]);
    Ok(build_instance("quadratic_diag", QuadraticShape::Diagonal, eigs, linear, seed, params))
}

/// Explicit diagonal quadratic from given eigenvalues and linear term; used
/// by oracle tests and hand-specified configs.
pub fn quadratic_from_eigenvalues(
    eigs: Vec<f64>,
    linear: Vec<f64>,
) -> Result<ProblemInstance, ObjectiveError> {
    if eigs.len() != linear.len() || eigs.is_empty() {
        return Err(ObjectiveError::BadParameter(
            "eigenvalue and linear-term arrays must have equal positive length".into(),
        ));
    }
    if eigs.iter().any(|&l| !(l > 0.0)) {
        return Err(ObjectiveError::BadParameter("eigenvalues must be positive".into()));
    }
    Ok(build_instance(
        "quadratic_diag",
        QuadraticShape::Diagonal,
        eigs,
        DVector::from_vec(linear),
        0,
        BTreeMap::new(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// The N = 2 instance with Q = diag(2, 4), b = (1, 1) has the hand-solved
    /// minimizer (-1/2, -1/4) and minimum value -3/8.
    #[test]
    fn hand_solved_two_agent_instance() {
        let inst = quadratic_from_eigenvalues(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap();
        let obj = &inst.objective;
        let x_star = obj.project_to_minimizers(&DVector::zeros(2));
        assert_relative_eq!(x_star[0], -0.5, max_relative = 1e-14);
        assert_relative_eq!(x_star[1], -0.25, max_relative = 1e-14);
        assert_relative_eq!(obj.min_value(), -0.375, max_relative = 1e-14);
        // First-order optimality at the oracle point.
        assert!(obj.gradient(x_star).norm() <= 1e-14);
        assert_relative_eq!(obj.smoothness(), 4.0);
        assert_relative_eq!(obj.gradient_dominance(), 2.0);
    }

    #[test]
    fn generator_reports_exact_extreme_eigenvalues() {
        for seed in [0u64, 1, 42] {
            let inst = gen_quadratic(8, 2.0, 4.0, 1.0, 5.0, seed).unwrap();
            assert_eq!(inst.objective.gradient_dominance(), 2.0);
            assert_eq!(inst.objective.smoothness(), 4.0);
            assert_eq!(inst.objective.constants_are_estimates(), (false, false));
            // Gradient vanishes at the reported minimizer.
            let g = inst.objective.gradient(inst.objective.project_to_minimizers(&DVector::zeros(8)));
            assert!(g.norm() <= 1e-8, "gradient norm {} at minimizer", g.norm());
        }
    }

    #[test]
    fn conjugated_form_matches_dense_reference() {
        let inst = gen_quadratic(5, 2.0, 4.0, 1.0, 5.0, 9).unwrap();
        let ObjectiveKind::Quadratic(model) = &inst.objective.kind else { unreachable!() };
        // Dense reconstruction oracle.
        let QuadraticShape::Conjugated { basis } = &model.shape else { unreachable!() };
        let q_dense = basis * DMatrix::from_diagonal(model.eigenvalues()) * basis.transpose();
        let x = DVector::from_fn(5, |i, _| 0.5 - 0.2 * i as f64);
        let dense_value = 0.5 * x.dot(&(&q_dense * &x)) + model.linear_term().dot(&x);
        assert_relative_eq!(inst.objective.value(&x), dense_value, max_relative = 1e-12);
        let dense_grad = &q_dense * &x + model.linear_term();
        let grad = inst.objective.gradient(&x);
        for i in 0..5 {
            assert_relative_eq!(grad[i], dense_grad[i], max_relative = 1e-11, epsilon = 1e-12);
        }
    }

    #[test]
    fn gap_is_stable_near_the_minimizer() {
        let inst = gen_quadratic(4, 2.0, 4.0, 1.0, 5.0, 5).unwrap();
        let x_star = inst.objective.project_to_minimizers(&DVector::zeros(4)).clone();
        let e = DVector::from_fn(4, |i, _| if i == 0 { 1e-10 } else { 0.0 });
        let gap = inst.objective.gap(&(x_star + e));
        assert!(gap > 0.0);
        assert!(gap >= 0.5 * 2.0 * 1e-20 * (1.0 - 1e-9));
        assert!(gap <= 0.5 * 4.0 * 1e-20 * (1.0 + 1e-9));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gen_quadratic(3, 0.0, 4.0, 1.0, 5.0, 0).is_err());
        assert!(gen_quadratic(3, -1.0, 4.0, 1.0, 5.0, 0).is_err());
        assert!(gen_quadratic(3, 5.0, 4.0, 1.0, 5.0, 0).is_err());
        assert!(gen_quadratic(0, 2.0, 4.0, 1.0, 5.0, 0).is_err());
    }

    #[test]
    fn single_agent_keeps_the_upper_endpoint() {
        let inst = gen_quadratic(1, 2.0, 4.0, 1.0, 5.0, 0).unwrap();
        assert_eq!(inst.objective.smoothness(), 4.0);
        assert_eq!(inst.objective.gradient_dominance(), 4.0);
    }
}
