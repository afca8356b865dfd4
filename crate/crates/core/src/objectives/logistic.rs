//! Logistic-loss benchmark: `L(x) = (1/m) sum_i softplus(b_i a_i'x)` with
//! binary feature vectors and nonnegative weights.
//!
//! With every weight positive the loss has no stationary point: its infimum
//! is the sum of the constant terms contributed by degenerate rows (weight
//! zero or empty features), which is the exact minimum value used for gaps.
//! The dominance constant only holds on compact sets, so it is calibrated on
//! the sublevel set of the standard start and marked as an estimate; the
//! minimizer oracle is a bounded-tolerance reference point for the advisory
//! distance computations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::calibrate::{calibrate_constants, reference_minimizer, Region};
use super::{InstanceMeta, Objective, ObjectiveError, ObjectiveKind, ProblemInstance};
use crate::hybrid::BlockPartition;

/// Numerically stable `ln(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Standard logistic sigmoid.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LogitLoss {
    /// Rows are the feature vectors `a_i` (entries in {0, 1}).
    features: DMatrix<f64>,
    /// Weights `b_i`.
    weights: DVector<f64>,
    inv_m: f64,
}

impl LogitLoss {
    pub(crate) fn value(&self, x: &DVector<f64>) -> f64 {
        let z = &self.features * x;
        self.inv_m
            * z.iter()
                .zip(self.weights.iter())
                .map(|(zi, bi)| softplus(bi * zi))
                .sum::<f64>()
    }

    pub(crate) fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = &self.features * x;
        let coef = DVector::from_fn(z.len(), |i, _| {
            self.inv_m * self.weights[i] * sigmoid(self.weights[i] * z[i])
        });
        self.features.transpose() * coef
    }
}

/// Seeded logistic instance; each agent owns one scalar block.
///
/// Feature entries are fair coin flips, weights are uniform in `[0, 10]`.
/// The smoothness constant is the analytic sigmoid-derivative bound
/// `(1/m) sum_i b_i^2 ||a_i||^2 / 4`.
pub fn gen_logistic(
    agents: usize,
    samples: usize,
    seed: u64,
) -> Result<ProblemInstance, ObjectiveError> {
    if agents == 0 {
        return Err(ObjectiveError::BadParameter("need at least one agent".into()));
    }
    if samples == 0 {
        return Err(ObjectiveError::BadParameter("need at least one data row".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = DMatrix::from_fn(samples, agents, |_, _| {
        if rng.random_range(0.0..1.0) < 0.5 {
            1.0
        } else {
            0.0
        }
    });
    let weights = DVector::from_fn(samples, |_, _| rng.random_range(0.0..=10.0));
    let inv_m = 1.0 / samples as f64;

    // Rows with zero weight or empty features contribute a constant ln 2;
    // every other term approaches zero along the descent directions, so the
    // infimum is exact.
    let l_star: f64 = (0..samples)
        .map(|i| {
            if weights[i] == 0.0 || features.row(i).iter().all(|&a| a == 0.0) {
                inv_m * std::f64::consts::LN_2
            } else {
                0.0
            }
        })
        .sum();

    let k_smooth = inv_m
        * (0..samples)
            .map(|i| {
                let norm_sq: f64 = features.row(i).iter().map(|a| a * a).sum();
                weights[i] * weights[i] * norm_sq / 4.0
            })
            .sum::<f64>();

    let loss = LogitLoss { features, weights, inv_m };
    let probe = Objective::new(
        ObjectiveKind::Logistic(loss.clone()),
        agents,
        k_smooth,
        f64::NAN,
        l_star,
        DVector::zeros(agents),
        false,
        true,
    );

    // Reference point for advisory distances: descend until the gradient is
    // small on the scale of the sweep horizons. The true infimum sits at
    // infinity, so a tight tolerance is deliberately not requested.
    let start = DVector::zeros(agents);
    let (x_ref, _) = reference_minimizer(&probe, &start, 1e-4)?;

    // Dominance constant on the sublevel set of the standard start.
    let level = probe.value(&start);
    let region = Region::Sublevel {
        level,
        anchor: start,
        center: x_ref.clone(),
        radius: 2.0,
    };
    let (_, beta_est) = calibrate_constants(&probe, &region, 1000, seed ^ 0x51ed_2701)?;

    let objective = Objective::new(
        ObjectiveKind::Logistic(loss),
        agents,
        k_smooth,
        beta_est,
        l_star,
        x_ref,
        false,
        true,
    );
    let params = BTreeMap::from([("samples".into(), samples as f64)]);
    Ok(ProblemInstance {
        objective,
        partition: BlockPartition::scalar(agents),
        meta: InstanceMeta { generator: "logistic".into(), seed, params },
    })
}

/// Explicit logistic instance; used by tests.
#[cfg(test)]
pub(crate) fn logistic_from_parts(
    features: DMatrix<f64>,
    weights: DVector<f64>,
) -> Result<ProblemInstance, ObjectiveError> {
    let agents = features.ncols();
    let samples = features.nrows();
    if samples == 0 || agents == 0 || weights.len() != samples {
        return Err(ObjectiveError::BadParameter("inconsistent data shape".into()));
    }
    let inv_m = 1.0 / samples as f64;
    let l_star: f64 = (0..samples)
        .map(|i| {
            if weights[i] == 0.0 || features.row(i).iter().all(|&a| a == 0.0) {
                inv_m * std::f64::consts::LN_2
            } else {
                0.0
            }
        })
        .sum();
    let k_smooth = inv_m
        * (0..samples)
            .map(|i| {
                let norm_sq: f64 = features.row(i).iter().map(|a| a * a).sum();
                weights[i] * weights[i] * norm_sq / 4.0
            })
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
    let loss = LogitLoss { features, weights, inv_m };
    let objective = Objective::new(
        ObjectiveKind::Logistic(loss),
        agents,
        k_smooth,
        1.0,
        l_star,
        DVector::zeros(agents),
        false,
        true,
    );
    Ok(ProblemInstance {
        objective,
        partition: BlockPartition::scalar(agents),
        meta: InstanceMeta { generator: "logistic".into(), seed: 0, params: BTreeMap::new() },
    })
}
