//! Gradient verification and empirical constant estimation.
//!
//! Where a benchmark does not pin its smoothness or dominance constant in
//! closed form, the constants are estimated by sampling: the smoothness
//! estimate is the largest observed gradient-difference ratio (including
//! short-displacement pairs, which probe local curvature), and the dominance
//! estimate is the smallest observed ratio of half the squared gradient norm
//! to the value gap. Estimates certify nothing beyond the sampled region.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Objective, ObjectiveError};

/// Sampling region for calibration.
#[derive(Clone, Debug)]
pub enum Region {
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Ball { center: DVector<f64>, radius: f64 },
    /// Points of the sublevel set `{ L <= level }`, drawn by blending the
    /// anchor toward the set's interior around `center` and rejecting
    /// anything above the level.
    Sublevel {
        level: f64,
        anchor: DVector<f64>,
        center: DVector<f64>,
        radius: f64,
    },
}

impl Region {
    fn draw(&self, obj: &Objective, rng: &mut ChaCha8Rng) -> Option<DVector<f64>> {
        match self {
            Region::Box { lo, hi } => Some(DVector::from_fn(lo.len(), |i, _| {
                rng.random_range(lo[i]..=hi[i])
            })),
            Region::Ball { center, radius } => {
                Some(center + *radius * unit_direction(center.len(), rng) * rng.random_range(0.0..1.0f64).powf(1.0 / center.len().min(8) as f64))
            }
            Region::Sublevel { level, anchor, center, radius } => {
                for _ in 0..64 {
                    let blend: f64 = rng.random_range(0.0..=1.0);
                    let noise = unit_direction(center.len(), rng) * rng.random_range(0.0..*radius);
                    let p = anchor + blend * (center - anchor) + noise;
                    if obj.value(&p) <= *level {
                        return Some(p);
                    }
                }
                None
            }
        }
    }
}

fn unit_direction(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Compare the analytic gradient against central finite differences at each
/// probe point; returns the worst relative component error (relative to
/// `max(1, |analytic|)`).
pub fn check_gradient(
    obj: &Objective,
    points: &[DVector<f64>],
    h: f64,
) -> Result<f64, ObjectiveError> {
    if !(h > 0.0) {
        return Err(ObjectiveError::BadParameter(format!("step must be positive, got {h}")));
    }
    let mut worst = 0.0f64;
    for x in points {
        if x.len() != obj.dim() {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "probe has dimension {}, objective expects {}",
                x.len(),
                obj.dim()
            )));
        }
        let g = obj.gradient(x);
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (fp, fm) = (obj.value(&xp), obj.value(&xm));
            if !fp.is_finite() || !fm.is_finite() {
                return Err(ObjectiveError::NonFiniteValue);
            }
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Estimate (smoothness, dominance) on a region.
///
/// Points with value gap below 1e-12 are excluded from the dominance
/// estimate; a markedly negative gap means the recorded minimum value is
/// wrong (or the objective is unbounded below on the region) and is an error.
pub fn calibrate_constants(
    obj: &Objective,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), ObjectiveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k_est = 0.0f64;
    let mut beta_est = f64::INFINITY;
    let mut dominance_samples = 0usize;
    let mut drawn = 0usize;

    for trial in 0..samples {
        let Some(u) = region.draw(obj, &mut rng) else { continue };
        drawn += 1;

        let gap = obj.gap(&u);
        if gap < -1e-9 {
            return Err(ObjectiveError::NotBoundedBelow(gap));
        }
        let grad_u = obj.gradient(&u);
        if gap > 1e-12 {
            beta_est = beta_est.min(0.5 * grad_u.norm_squared() / gap);
            dominance_samples += 1;
        }

        // Alternate far pairs (global ratio) with short displacements that
        // probe curvature near u.
        let v = if trial % 2 == 0 {
            match region.draw(obj, &mut rng) {
                Some(v) => v,
                None => continue,
            }
        } else {
            &u + 1e-4 * unit_direction(u.len(), &mut rng)
        };
        let dist = (&u - &v).norm();
        if dist > 1e-12 {
            let ratio = (grad_u - obj.gradient(&v)).norm() / dist;
            k_est = k_est.max(ratio);
        }
    }

    if drawn == 0 || dominance_samples == 0 || k_est == 0.0 {
        return Err(ObjectiveError::NoValidSamples);
    }
    Ok((k_est, beta_est))
}

const MINIMIZER_ITERATION_CAP: usize = 1_000_000;

/// Offline reference descent: gradient steps with a backtracking line search,
/// run until the gradient norm falls below `tol`. Used to populate reference
/// minimizers where no closed form exists.
pub fn reference_minimizer(
    obj: &Objective,
    start: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, f64), ObjectiveError> {
    if !(tol > 0.0) {
        return Err(ObjectiveError::BadParameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut x = start.clone();
    let mut fx = obj.value(&x);
    if !fx.is_finite() {
        return Err(ObjectiveError::NonFiniteValue);
    }
    for _ in 0..MINIMIZER_ITERATION_CAP {
        let g = obj.gradient(&x);
        let g_norm_sq = g.norm_squared();
        if g_norm_sq.sqrt() <= tol {
            return Ok((x, fx));
        }
        // Armijo backtracking from a unit step.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &x - step * &g;
            let f_candidate = obj.value(&candidate);
            if f_candidate.is_finite() && f_candidate <= fx - 1e-4 * step * g_norm_sq {
                x = candidate;
                fx = f_candidate;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // The search direction made no progress at any representable
            // step; treat the point as numerically stationary.
            return Ok((x, fx));
        }
    }
    Err(ObjectiveError::NoConvergence(MINIMIZER_ITERATION_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{gen_logistic, gen_quadratic, quadratic::quadratic_from_eigenvalues as quadratic_from_parts, rosenbrock};
    use approx::assert_relative_eq;

    #[test]
    fn finite_differences_agree_on_the_quadratic() {
        let inst = quadratic_from_parts(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap();
        let points: Vec<DVector<f64>> = vec![
            DVector::zeros(2),
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::from_vec(vec![-0.5, -0.25]),
        ];
        let worst = check_gradient(&inst.objective, &points, 1e-5).unwrap();
        assert!(worst <= 1e-6, "worst rel err {worst}");
    }

    #[test]
    fn finite_differences_on_constant_objective() {
        let inst = crate::objectives::logistic::logistic_from_parts(
            nalgebra::DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::zeros(1),
        )
        .unwrap();
        let points = vec![DVector::zeros(2), DVector::from_vec(vec![2.0, -3.0])];
        let worst = check_gradient(&inst.objective, &points, 1e-5).unwrap();
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn rosenbrock_probe_meets_the_stated_tolerance() {
        let inst = rosenbrock();
        let points = vec![DVector::from_vec(vec![0.5, 0.5])];
        let worst = check_gradient(&inst.objective, &points, 1e-6).unwrap();
        assert!(worst <= 1e-5, "worst rel err {worst}");
    }

    #[test]
    fn calibration_recovers_quadratic_spectrum_within_five_percent() {
        let inst = gen_quadratic(6, 2.0, 4.0, 1.0, 5.0, 17).unwrap();
        let region = Region::Ball { center: DVector::zeros(6), radius: 4.0 };
        let (k_est, beta_est) = calibrate_constants(&inst.objective, &region, 4000, 5).unwrap();
        // Sampling underestimates the extremes but must stay within them.
        assert!(k_est <= 4.0 * (1.0 + 1e-9), "k_est {k_est}");
        assert!(k_est >= 4.0 * 0.95, "k_est {k_est}");
        assert!(beta_est >= 2.0 * (1.0 - 1e-9), "beta_est {beta_est}");
        assert!(beta_est <= 2.0 * 1.05, "beta_est {beta_est}");
    }

    #[test]
    fn calibration_rejects_wrong_minimum_value() {
        let mut inst = gen_logistic(4, 3, 2).unwrap();
        // Claim a minimum above the true infimum: gaps go negative.
        inst.objective.override_min_value_for_tests(1.0);
        let region = Region::Ball { center: DVector::zeros(4), radius: 2.0 };
        let err = calibrate_constants(&inst.objective, &region, 100, 1).unwrap_err();
        assert!(matches!(err, ObjectiveError::NotBoundedBelow(_)));
    }

    #[test]
    fn rosenbrock_box_yields_finite_positive_dominance() {
        let inst = rosenbrock();
        let (k_est, beta_est) =
            calibrate_constants(&inst.objective, &super::super::rosenbrock::calibration_box(), 10_000, 3)
                .unwrap();
        assert!(k_est.is_finite() && k_est > 0.0);
        assert!(beta_est.is_finite() && beta_est > 0.0);
    }

    #[test]
    fn reference_descent_hits_closed_form_minimizers() {
        let inst = quadratic_from_parts(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap();
        let (x, _) = reference_minimizer(&inst.objective, &DVector::zeros(2), 1e-10).unwrap();
        assert_relative_eq!(x[0], -0.5, epsilon = 1e-9);
        assert_relative_eq!(x[1], -0.25, epsilon = 1e-9);

        // Starting at the minimizer returns immediately.
        let start = DVector::from_vec(vec![-0.5, -0.25]);
        let (x2, f2) = reference_minimizer(&inst.objective, &start, 1e-8).unwrap();
        assert_eq!(x2, start);
        assert_relative_eq!(f2, -0.375, max_relative = 1e-12);
    }

    #[test]
    fn reference_descent_solves_the_valley() {
        let inst = rosenbrock();
        let start = DVector::from_vec(vec![-0.5, 0.5]);
        let (x, _) = reference_minimizer(&inst.objective, &start, 1e-9).unwrap();
        assert!((x[0] - 1.0).abs() <= 1e-6);
        assert!((x[1] - 1.0).abs() <= 1e-6);
    }
}
