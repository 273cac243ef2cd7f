//! Mesh a bundled package into an RC network and print its structure.
//!
//! ```bash
//! cargo run --example build_network -- chiplet36_2p5d
//! ```

use mfit::{build_rc, bundled};

fn main() -> mfit::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "chiplet16_2p5d".into());
    let spec = bundled::package(&name).unwrap_or_else(|| {
        eprintln!("unknown package {name}; try one of:");
        for (n, _, _) in bundled::ALL {
            eprintln!("  {n}");
        }
        std::process::exit(1);
    });
    let model = build_rc(&spec)?;

    let fp = model.footprint;
    println!("{}: {:.1} x {:.1} mm, {:.3} mm thick", model.name, fp.width() * 1e3, fp.height() * 1e3, spec.thickness() * 1e3);
    println!("{:<12} {:>6} {:>10}", "layer", "nodes", "t (um)");
    for l in &model.layers {
        println!("{:<12} {:>6} {:>10.1}", l.name, l.nodes.len(), l.thickness * 1e6);
    }
    println!("{} nodes, {} conductances, {} power blocks", model.len(), model.couplings.len(), model.power_blocks.len());

    let total_c: f64 = model.capacitances().iter().sum();
    let total_conv: f64 = model.convection().iter().sum();
    println!("total heat capacity {total_c:.4} J/K, convection to ambient {total_conv:.4} W/K");

    // The text model file is exact: it reloads to the same network.
    let text = model.to_text();
    assert_eq!(mfit::RCModel::from_text(&text)?, model);
    println!("model file {} bytes, fingerprint {}", text.len(), &model.fingerprint()[..16]);
    Ok(())
}
