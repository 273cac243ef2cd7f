//! Abstraction formulas: a µbump layer's equivalent conductivity from a
//! measured temperature drop, its volume-weighted heat capacity, and the
//! equivalent HTC of a finned heatsink.

use mfit::calibration::{
    equivalent_conductivity, heatsink_htc, weighted_average_capacitance, CompositeLayerSpec, Constituent,
    HeatsinkSpec,
};
use mfit::package::Material;

fn material(name: &str, rho: f64, c_v: f64) -> Material {
    Material { name: name.into(), k_x: 1.0, k_y: 1.0, k_z: 1.0, rho, c_v }
}

fn main() -> mfit::Result<()> {
    // 2 W through a 20 µm layer of 1.5 mm x 1.5 mm drops 0.012 K.
    let k = equivalent_conductivity(2.0, 20e-6, 2.25e-6, 0.012)?;
    println!("k_eq   = {k:.3} W/(m K)");

    // Copper bumps in underfill, 30 % by volume.
    let layer = CompositeLayerSpec {
        constituents: vec![
            Constituent { volume_fraction: 0.3, material: material("copper", 8933.0, 385.0) },
            Constituent { volume_fraction: 0.7, material: material("underfill", 1800.0, 1000.0) },
        ],
        thickness_m: 20e-6,
        area_m2: 2.25e-6,
    };
    let eq = weighted_average_capacitance(&layer)?;
    println!("rho_eq = {:.1} kg/m3, c_v_eq = {:.1} J/(kg K)", eq.rho_eq, eq.c_v_eq);

    let sink = HeatsinkSpec {
        h_avg: 60.0,
        a_total: 0.1,
        a_fin: 0.0024,
        fin_count: 40,
        fin_efficiency: 0.85,
        length: 0.06,
        width: 0.06,
    };
    println!("h_eq   = {:.1} W/(m2 K)", heatsink_htc(&sink)?);
    Ok(())
}
