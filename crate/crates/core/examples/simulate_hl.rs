//! Evolve the HL model from the two-parameter periodic data and estimate the
//! blow-up time from the growth of max|omega|.
//!
//! cargo run --release --example simulate_hl -- [N]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use hlblowup::diagnostics::blowup_time_estimate;
use hlblowup::evolve::{run, StepControl};
use hlblowup::fields::{preset_initial_data, Model, ModelSpec};
use hlblowup::grid::PeriodicGrid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1024);
    let grid = PeriodicGrid::new(2.0 * PI, n)?;
    let s0 = preset_initial_data("paper-basic", &grid, &BTreeMap::new())?;
    let tr = run(&ModelSpec::periodic(Model::Hl), &s0, &StepControl::default(), 3.0, 0.01)?;

    println!("{:>8} {:>14} {:>14} {:>14}", "t", "I", "max_omega", "bkm_omega");
    for r in tr.records.iter().step_by(10) {
        println!("{:8.3} {:14.6e} {:14.6e} {:14.6e}", r.t, r.i, r.max_omega, r.bkm_omega);
    }
    println!("stopped: {} at t = {:.4}", tr.termination.as_str(), tr.records.last().unwrap().t);

    let t: Vec<f64> = tr.records.iter().map(|r| r.t).collect();
    let w: Vec<f64> = tr.records.iter().map(|r| r.max_omega).collect();
    let est = blowup_time_estimate(&t, &w, 20)?;
    println!("1/max_omega extrapolates to zero at t = {:.4} (R^2 = {:.4})", est.t_star, est.fit_quality);
    Ok(())
}
