//! Vary one configuration key and write one run directory per value.
//!
//! cargo run --release --example sweep -- [out_dir]

use hlblowup::commands::sweep;

const BASE: &str = r#"
[model]
kind = "hl"

[grid]
length = 6.283185307179586
n = 256

[preset]
name = "paper-basic"

[run]
t_end = 1.0
record_every = 0.05
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep-example".into());
    let base: toml::Table = BASE.parse()?;
    let rows = sweep(&base, "preset.params.A=0.5,1,1.5,2", std::path::Path::new(&out)).map_err(|e| e.message)?;
    for r in rows {
        println!("{:<24} {:<16} t = {:.3} max_omega = {:.4e}", r.dir, r.termination, r.t_final, r.max_omega_final);
    }
    println!("index written to {out}/index.csv");
    Ok(())
}
