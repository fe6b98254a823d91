//! Evolve the CKY model in log coordinates and watch the entropy, F and G
//! functionals together with the convexity margins.
//!
//! cargo run --release --example log_coordinates_cky

use std::collections::BTreeMap;

use hlblowup::diagnostics::functionals_log;
use hlblowup::evolve::{run_log, StepControl};
use hlblowup::fields::{preset_log_data, Model, ModelSpec};
use hlblowup::grid::LogGrid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = LogGrid::new(-6.0, 12.0, 1441)?;
    let s0 = preset_log_data("log-bump", &grid, &BTreeMap::new())?;
    let f0 = functionals_log(&s0)?;
    println!("t = 0: entropy {:.6} F {:.6} G {:.6} mass {:.6}", f0.entropy, f0.f, f0.g, f0.mass);

    let tr = run_log(&ModelSpec::log_line(Model::Cky), &s0, &StepControl::default(), 1.0, 0.02)?;
    println!("{:>6} {:>12} {:>12} {:>12} {:>14} {:>12}", "t", "entropy", "F", "G", "ddot margin", "lemma3");
    for r in &tr.records {
        println!(
            "{:6.3} {:12.6} {:12.6} {:12.6} {:14.6e} {:12.4e}",
            r.t, r.entropy, r.f, r.g, r.entropy_ddot_margin, r.lemma3_margin
        );
    }
    println!("stopped: {}", tr.termination.as_str());
    Ok(())
}
