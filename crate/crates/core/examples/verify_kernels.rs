//! Sweep the kernel inequalities over deterministic and random samples.
//!
//! cargo run --release --example verify_kernels

use hlblowup::kernels::{eval_m, periodic_k, verify_kernel_properties, SamplingPlan};

fn main() {
    let plan = SamplingPlan::default();
    let mut failed = 0;
    for r in verify_kernel_properties(&plan) {
        failed += usize::from(!r.pass);
        println!(
            "{} {:<40} n={:<6} worst={:+.3e} at {:?}",
            if r.pass { "PASS" } else { "FAIL" },
            r.property,
            r.samples,
            r.worst_violation,
            r.worst_location
        );
    }

    for s in [1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-6] {
        let m = eval_m(s).unwrap();
        println!("s = {s:<10} M = {:.12}  M_sym = {:.12}  M_a = {:.12}", m.m, m.m_sym, m.m_a);
    }
    // K(x, y) >= 2 when x < y
    println!("K(0.3, 1.2) = {:.6}", periodic_k(0.3, 1.2, 0.5));
    std::process::exit(i32::from(failed > 0));
}
