use std::time::Instant;
use hybridgd::experiments::*;

fn main() {
    let t0 = Instant::now();
    let out = tau_sweep(TauSweep::Max, 20260810, 2).unwrap();
    println!("tau_max sweep: {:?}", t0.elapsed());
    for c in &out.summary.conclusions { println!("  {}: {} — {}", c.name, c.passed, c.detail); }

    let t0 = Instant::now();
    let out = tau_sweep(TauSweep::Min, 20260810, 2).unwrap();
    println!("tau_min sweep: {:?}", t0.elapsed());
    for c in &out.summary.conclusions { println!("  {}: {} — {}", c.name, c.passed, c.detail); }

    let t0 = Instant::now();
    let (kappas, thetas) = default_perturbation_levels();
    let out = perturbation_study(&kappas, &thetas, 20260810, 2).unwrap();
    println!("perturbation: {:?}", t0.elapsed());
    for c in &out.summary.conclusions { println!("  {}: {} — {}", c.name, c.passed, c.detail); }

    let t0 = Instant::now();
    let out = rosenbrock_study(20260810, 2).unwrap();
    println!("rosenbrock: {:?}", t0.elapsed());
    for c in &out.summary.conclusions { println!("  {}: {} — {}", c.name, c.passed, c.detail); }

    let t0 = Instant::now();
    let out = network_size(NetworkObjective::LinearNet, &[5, 25, 50, 100], 20260810, 2).unwrap();
    println!("linear_nn scaling: {:?}", t0.elapsed());
    for c in &out.summary.conclusions { println!("  {}: {} — {}", c.name, c.passed, c.detail); }
}
