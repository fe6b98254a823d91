//! Solve the comparison ODEs and print their blow-up times.
//!
//! cargo run --release --example comparison_bounds

use hlblowup::bounds::{closed_form_bound, entropy_envelope, fg_envelope, gengron_envelope, optimal_t0};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = gengron_envelope(1.0, 0.0, 1.0, 50.0)?;
    println!("I'' >= c0 I^2, I0 = 1, c0 = 1: t* = {:?}, upper = {:?}", g.t_star, g.t_star_upper);
    for t in [0.5, 1.0, 2.0] {
        println!("  envelope I({t}) = {:?}", g.value(t));
    }

    let alpha = 1.0;
    let t0 = optimal_t0(alpha, 1.0);
    println!("closed-form bound at its optimal t0 = {t0:.6}: {:.6}", closed_form_bound(alpha, 1.0, t0));

    let e = entropy_envelope(0.5, 0.0, 50.0)?;
    println!("entropy comparison from I = 0.5: t* = {:?}", e.t_star);
    let f = fg_envelope(1.0, 0.0, 50.0)?;
    println!("F/G comparison from F = 1: t* = {:?}", f.t_star);
    Ok(())
}
