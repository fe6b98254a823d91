//! Run every periodic model from the same data and compare max|omega|.
//!
//! cargo run --release --example model_zoo

use std::collections::BTreeMap;
use std::f64::consts::PI;

use hlblowup::evolve::{run, StepControl};
use hlblowup::fields::{preset_initial_data, Model, ModelSpec};
use hlblowup::grid::PeriodicGrid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = PeriodicGrid::new(2.0 * PI, 512)?;
    let s0 = preset_initial_data("paper-basic", &grid, &BTreeMap::new())?;
    let models = [
        Model::Hl,
        Model::Euler2d,
        Model::Clm,
        Model::DeGregorio,
        Model::Osw { a: -0.5 },
        Model::Osw { a: 0.5 },
        Model::Ccf,
    ];
    for model in models {
        // CCF leaves the odd class
        let control = StepControl { symmetric: model != Model::Ccf, ..StepControl::default() };
        let tr = run(&ModelSpec::periodic(model), &s0, &control, 1.0, 0.05)?;
        let last = tr.records.last().unwrap();
        println!(
            "{:<12} t = {:5.3} max_omega {:10.4e} -> {:10.4e}  ({})",
            model.name(),
            last.t,
            tr.records[0].max_omega,
            last.max_omega,
            tr.termination.as_str()
        );
    }
    Ok(())
}
