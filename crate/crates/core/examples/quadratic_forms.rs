//! Evaluate the periodic and line quadratic forms on random odd vorticity
//! and report the most negative value seen.
//!
//! cargo run --release --example quadratic_forms -- [trials] [seed]

use std::f64::consts::PI;

use hlblowup::commands::{quadform_trials, random_periodic_vorticity};
use hlblowup::diagnostics::{PeriodicQuadform, QuadformMethod};
use hlblowup::grid::PeriodicGrid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    // one profile a -> Q(a) for a single sample
    let grid = PeriodicGrid::new(2.0 * PI, 512)?;
    let w = random_periodic_vorticity(&grid, &mut ChaCha8Rng::seed_from_u64(seed));
    let q = PeriodicQuadform::new(&grid, QuadformMethod::Spectral);
    let points: Vec<f64> = (0..=8).map(|k| k as f64 * PI / 8.0).collect();
    for (a, v) in points.iter().zip(q.eval_many(&w, &points)?) {
        println!("Q({a:.4}) = {v:+.6e}");
    }

    let ((pw, ploc), (lw, lloc)) = quadform_trials(trials, seed);
    println!("{trials} trials: periodic worst {pw:+.3e} ({ploc}), line worst {lw:+.3e} ({lloc})");
    Ok(())
}
