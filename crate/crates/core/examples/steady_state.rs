//! Steady-state temperatures of every bundled package at full chiplet power.

use mfit::solver::steady_state_rise;
use mfit::{build_rc, bundled};

fn main() -> mfit::Result<()> {
    println!("{:<16} {:>8} {:>10} {:>12} {:>12}", "package", "nodes", "P (W)", "max (C)", "balance");
    for (name, _, watts) in bundled::ALL {
        let model = build_rc(&bundled::package(name).unwrap())?;
        let p = vec![watts; model.power_blocks.len()];
        let rise = steady_state_rise(&model, &p)?;
        let p_in: f64 = p.iter().sum();
        let p_out: f64 = model.convection().iter().zip(&rise).map(|(g, r)| g * r).sum();
        let max = rise.iter().cloned().fold(0.0, f64::max) + model.ambient_c;
        println!("{name:<16} {:>8} {p_in:>10.1} {max:>12.2} {:>12.1e}", model.len(), (p_in - p_out) / p_in);
    }
    Ok(())
}
