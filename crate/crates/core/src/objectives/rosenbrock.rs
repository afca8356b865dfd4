//! The two-dimensional banana-valley benchmark:
//! `L(x) = (1 - x1)^2 + 100 (x2 - x1^2)^2`.
//!
//! Nonconvex, with the unique global minimum at (1, 1) and value 0. The
//! smoothness and dominance constants only hold on a bounded region; both are
//! calibrated on `[-1, 1]^2` with a fixed internal seed and flagged as
//! sampled estimates.

use std::collections::BTreeMap;

use nalgebra::DVector;

use super::calibrate::{calibrate_constants, Region};
use super::{InstanceMeta, Objective, ObjectiveKind, ProblemInstance};
use crate::hybrid::BlockPartition;

pub(crate) fn value(x: &DVector<f64>) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    (1.0 - x1).powi(2) + 100.0 * (x2 - x1 * x1).powi(2)
}

pub(crate) fn gradient(x: &DVector<f64>) -> DVector<f64> {
    let (x1, x2) = (x[0], x[1]);
    let valley = x2 - x1 * x1;
    DVector::from_vec(vec![-2.0 * (1.0 - x1) - 400.0 * x1 * valley, 200.0 * valley])
}

/// The region on which the constants are calibrated.
pub fn calibration_box() -> Region {
    Region::Box {
        lo: DVector::from_vec(vec![-1.0, -1.0]),
        hi: DVector::from_vec(vec![1.0, 1.0]),
    }
}

/// Two agents, one coordinate each.
pub fn rosenbrock() -> ProblemInstance {
    let x_star = DVector::from_vec(vec![1.0, 1.0]);
    let probe = Objective::new(
        ObjectiveKind::Rosenbrock,
        2,
        f64::NAN,
        f64::NAN,
        0.0,
        x_star.clone(),
        true,
        true,
    );
    let (k_est, beta_est) = calibrate_constants(&probe, &calibration_box(), 10_000, 0x05eb_a11e)
        .expect("calibration on the unit box always finds valid samples");
    let objective = Objective::new(
        ObjectiveKind::Rosenbrock,
        2,
        k_est,
        beta_est,
        0.0,
        x_star,
        true,
        true,
    );
    ProblemInstance {
        objective,
        partition: BlockPartition::scalar(2),
        meta: InstanceMeta {
            generator: "rosenbrock".into(),
            seed: 0,
            params: BTreeMap::new(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_and_origin_values() {
        let inst = rosenbrock();
        let opt = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(inst.objective.value(&opt), 0.0);
        assert_eq!(inst.objective.gradient(&opt).norm(), 0.0);

        let origin = DVector::zeros(2);
        assert_eq!(inst.objective.value(&origin), 1.0);
        let g = inst.objective.gradient(&origin);
        assert_eq!(g[0], -2.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = rosenbrock();
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let g = inst.objective.gradient(&x);
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (inst.objective.value(&xp) - inst.objective.value(&xm)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(1.0);
            assert!(rel <= 1e-5, "component {i}: rel err {rel}");
        }
    }

    #[test]
    fn nonnegative_everywhere_sampled() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let inst = rosenbrock();
        for _ in 0..1000 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            assert!(inst.objective.value(&x) >= 0.0);
        }
    }

    #[test]
    fn calibrated_constants_are_positive_estimates() {
        let inst = rosenbrock();
        assert!(inst.objective.smoothness() > 100.0);
        assert!(inst.objective.gradient_dominance() > 0.0);
        assert_eq!(inst.objective.constants_are_estimates(), (true, true));
        // Repeatable: the calibration seed is fixed.
        let again = rosenbrock();
        assert_eq!(inst.objective.smoothness(), again.objective.smoothness());
        assert_eq!(inst.objective.gradient_dominance(), again.objective.gradient_dominance());
    }
}
