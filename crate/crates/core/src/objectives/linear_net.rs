//! Single-layer network benchmark with a leaky rectifier:
//! `L(x) = ||sigma(Ax) - b||^2 / 2` for a seeded full-rank square `A`.
//!
//! The activation is piecewise linear with slope 1 on the positive side and
//! 1/4 otherwise; the slope at zero is fixed to 1/4 so gradient evaluation is
//! deterministic, and evaluations within 1e-9 of a kink are flagged on the
//! trajectory record. Because the activation is a bijection and `A` has full
//! rank, `sigma(Ax) = b` is solvable and the minimum value is exactly zero.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::calibrate::{calibrate_constants, Region};
use super::{InstanceMeta, Objective, ObjectiveError, ObjectiveKind, ProblemInstance};
use crate::hybrid::BlockPartition;

const NEGATIVE_SLOPE: f64 = 0.25;
const KINK_TOL: f64 = 1e-9;
const MAX_RESAMPLES: usize = 100;
const MIN_SINGULAR_VALUE: f64 = 1e-3;

fn activate(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        NEGATIVE_SLOPE * z
    }
}

fn slope(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        NEGATIVE_SLOPE
    }
}

fn activate_inverse(y: f64) -> f64 {
    if y > 0.0 {
        y
    } else {
        y / NEGATIVE_SLOPE
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LeakyLayer {
    weights: DMatrix<f64>,
    targets: DVector<f64>,
}

impl LeakyLayer {
    pub(crate) fn value(&self, x: &DVector<f64>) -> f64 {
        let z = &self.weights * x;
        0.5 * z
            .iter()
            .zip(self.targets.iter())
            .map(|(zi, bi)| {
                let r = activate(*zi) - bi;
                r * r
            })
            .sum::<f64>()
    }

    pub(crate) fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = &self.weights * x;
        let weighted = DVector::from_fn(z.len(), |i, _| {
            slope(z[i]) * (activate(z[i]) - self.targets[i])
        });
        self.weights.transpose() * weighted
    }

    pub(crate) fn near_kink(&self, x: &DVector<f64>) -> bool {
        let z = &self.weights * x;
        z.iter().any(|zi| zi.abs() <= KINK_TOL)
    }
}

/// Leaky-rectifier layer benchmark; each agent owns one scalar block.
///
/// `A` is redrawn (up to 100 times) until its smallest singular value exceeds
/// 1e-3, targets are uniform in `[b_lo, b_hi]`. The smoothness constant is
/// the exact bound `sigma_max(A)^2` (unit top slope); the dominance constant
/// is a sampled estimate, so certification against it is advisory.
pub fn gen_linear_network(
    agents: usize,
    b_lo: f64,
    b_hi: f64,
    seed: u64,
) -> Result<ProblemInstance, ObjectiveError> {
    if agents == 0 {
        return Err(ObjectiveError::BadParameter("need at least one agent".into()));
    }
    if !(b_lo <= b_hi) {
        return Err(ObjectiveError::BadParameter(format!("empty target range [{b_lo}, {b_hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut weights = None;
    let mut sigma_max = 0.0;
    for _ in 0..MAX_RESAMPLES {
        let candidate = DMatrix::from_fn(agents, agents, |_, _| rng.sample(StandardNormal));
        let singular = candidate.singular_values();
        if singular[singular.len() - 1] > MIN_SINGULAR_VALUE {
            sigma_max = singular[0];
            weights = Some(candidate);
            break;
        }
    }
    let weights = weights.ok_or(ObjectiveError::SingularMatrix(MAX_RESAMPLES))?;
    let targets = DVector::from_fn(agents, |_, _| rng.random_range(b_lo..=b_hi));

    // The unique zero of the loss: A x* = sigma^{-1}(b).
    let preimage = DVector::from_fn(agents, |i, _| activate_inverse(targets[i]));
    let x_star = weights
        .clone()
        .lu()
        .solve(&preimage)
        .ok_or(ObjectiveError::SingularMatrix(MAX_RESAMPLES))?;

    let layer = LeakyLayer { weights, targets };
    let k_smooth = sigma_max * sigma_max;

    let probe = Objective::new(
        ObjectiveKind::LinearNet(layer.clone()),
        agents,
        k_smooth,
        f64::NAN,
        0.0,
        x_star.clone(),
        false,
        true,
    );
    let region = Region::Ball { center: x_star.clone(), radius: 5.0 };
    let (_, beta_est) = calibrate_constants(&probe, &region, 1500, seed ^ 0x9e37_79b9)?;

    let objective = Objective::new(
        ObjectiveKind::LinearNet(layer),
        agents,
        k_smooth,
        beta_est,
        0.0,
        x_star,
        false,
        true,
    );
    let params = BTreeMap::from([("b_lo".into(), b_lo), ("b_hi".into(), b_hi)]);
    Ok(ProblemInstance {
        objective,
        partition: BlockPartition::scalar(agents),
        meta: InstanceMeta { generator: "linear_nn".into(), seed, params },
    })
}
