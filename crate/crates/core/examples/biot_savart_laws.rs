//! Compare the velocity laws on one vorticity profile: spectral and direct
//! Hilbert transforms, the mollified kernel, the half-line operator and the
//! CKY integral.
//!
//! cargo run --release --example biot_savart_laws

use std::f64::consts::PI;

use hlblowup::biotsavart::{
    velocity_cky, velocity_mollified_periodic, velocity_periodic, BiotSavartMethod, HalflineOperator,
};
use hlblowup::grid::PeriodicGrid;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = PeriodicGrid::new(2.0 * PI, 512)?;
    let omega = grid.sample(|x| x.sin() + 0.3 * (2.0 * x).sin());

    let spectral = velocity_periodic(&omega, &grid, BiotSavartMethod::Spectral)?;
    let direct = velocity_periodic(&omega, &grid, BiotSavartMethod::Direct)?;
    println!("|u_spectral - u_direct|   = {:.3e}", max_diff(&spectral.u, &direct.u));
    println!("|ux_spectral - ux_direct| = {:.3e}", max_diff(&spectral.ux, &direct.ux));

    // sin(kx) maps to -sin(kx)/k
    let exact: Vec<f64> = grid.sample(|x| -(x.sin() + 0.15 * (2.0 * x).sin()));
    println!("|u_spectral - exact|      = {:.3e}", max_diff(&spectral.u, &exact));

    // the layer kernel tends to the log kernel (up to a constant) as a grows
    for a in [0.5, 2.0, 8.0, 32.0] {
        let m = velocity_mollified_periodic(&omega, &grid, a)?;
        println!("mollified a = {a:<5} |ux - ux_spectral| = {:.3e}", max_diff(&m.ux, &spectral.ux));
    }

    // u cot(mu x) from the K(x, y) representation, interior half-period nodes
    let half = HalflineOperator::new(&grid).apply(&omega)?;
    let cot_u: Vec<f64> = (1..grid.half()).map(|j| spectral.u[j] / (grid.mu() * grid.node(j)).tan()).collect();
    println!("half-line u cot(mu x) vs spectral: {:.3e}", max_diff(&half[1..grid.half()], &cot_u));

    let xs: Vec<f64> = (0..=400).map(|j| j as f64 / 400.0 * PI).collect();
    let w: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let cky = velocity_cky(&w, &xs)?;
    println!("CKY u at x = pi/2: {:.6}", cky.u[200]);
    Ok(())
}
