use std::time::Instant;
fn main() {
    let t0 = Instant::now();
    let sizes = [5usize, 100, 500, 1000];
    let out = hybridgd::experiments::network_size(
        hybridgd::experiments::NetworkObjective::Quadratic, &sizes, 20260810, 2).unwrap();
    println!("network_size quadratic total: {:?}", t0.elapsed());
    for c in &out.summary.conclusions {
        println!("  {}: {} — {}", c.name, c.passed, c.detail);
    }
}
