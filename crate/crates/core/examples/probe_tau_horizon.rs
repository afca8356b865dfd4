use std::sync::Arc;
use hybridgd::experiments::*;
use hybridgd::objectives::gen_logistic;
use hybridgd::simulate::{derive_seed, run_batch, SimConfig, SimJob};
use hybridgd::{ResetRule, TimerPolicy};
use nalgebra::DVector;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn main() {
    let inst = Arc::new(gen_logistic(100, 5, derive_seed(20260810, 1000)).unwrap());
    let bench = inst.benchmark_tau_max();
    println!("K = {}, bench tau = {}", inst.objective.smoothness(), bench);
    for steps in [25.0f64, 50.0, 100.0, 200.0, 400.0] {
        let horizon = steps * bench;
        let mut jobs = Vec::new();
        for &frac in &[1.0f64, 0.5, 0.25] {
            let tau_max = bench * frac;
            for k in 0..5u64 {
                let seed = derive_seed(20260810, 17 + k);
                let policy = TimerPolicy::nominal(tau_max / 5.0, tau_max).unwrap()
                    .with_reset(ResetRule::Uniform { seed });
                jobs.push(SimJob {
                    instance: Arc::clone(&inst),
                    policy,
                    config: SimConfig::new(horizon, DVector::zeros(100)),
                });
            }
        }
        let results = run_batch(&jobs, 2);
        let mut meds = Vec::new();
        for v in 0..3 {
            let gaps: Vec<f64> = (0..5)
                .map(|k| {
                    let traj = results[v * 5 + k].as_ref().unwrap();
                    inst.objective.gap(&traj.last_sample().state.x)
                })
                .collect();
            meds.push(median(gaps));
        }
        let ordered = meds[0] <= meds[1] && meds[1] <= meds[2];
        println!(
            "steps {steps:>5}: medians {:?} ordered={} sep={:.3}%",
            meds, ordered, 100.0 * (meds[2] - meds[0]) / meds[0]
        );
    }
    let _ = TauSweep::Max;
}
