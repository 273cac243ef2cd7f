//! Describe a package in TOML, validate it and read the diagnostics, then
//! look up the node under a point of interest.

use std::collections::BTreeMap;

use mfit::{build_rc, parse_package, steady_state};

const DOC: &str = r#"
name = "two-die"
ambient_c = 35.0
footprint_m = [0.008, 0.004]

[boundary]
top_htc = 3000.0
bottom_htc = 20.0

[[materials]]
name = "si"
k_x = 130.0
k_y = 130.0
k_z = 130.0
rho = 2330.0
c_v = 712.0

[[materials]]
name = "cu"
k_x = 390.0
k_y = 390.0
k_z = 390.0
rho = 8933.0
c_v = 385.0

[[layers]]
name = "base"
z_order = 0
thickness_m = 0.0002
material = "si"
grid = [4, 2]

[[layers]]
name = "dies"
z_order = 1
thickness_m = 0.0001
material = "si"
grid = [1, 1]

[[layers.blocks]]
name = "cpu"
origin_m = [0.0005, 0.0005]
size_m = [0.003, 0.003]
grid = [3, 3]
chiplet = true

[[layers.blocks.power_blocks]]
id = "cpu_core"
origin_m = [0.0, 0.0]
size_m = [0.0015, 0.0015]

[[layers.blocks]]
name = "mem"
origin_m = [0.0045, 0.0005]
size_m = [0.003, 0.003]
grid = [2, 2]
chiplet = true

[[layers.blocks.power_blocks]]
id = "mem_all"
origin_m = [0.0, 0.0]
size_m = [0.003, 0.003]

[[layers]]
name = "spreader"
z_order = 2
thickness_m = 0.0005
material = "cu"
grid = [4, 2]
"#;

fn main() -> mfit::Result<()> {
    // A broken variant first: overlapping dies are reported with both names.
    let broken = DOC.replace("origin_m = [0.0045, 0.0005]", "origin_m = [0.003, 0.0005]");
    if let Err(e) = parse_package(&broken) {
        println!("rejected as expected:\n{e}\n");
    }

    let spec = parse_package(DOC)?;
    let model = build_rc(&spec)?;
    println!("{} nodes; power blocks {:?}", model.len(), model.power_blocks);

    let powers = BTreeMap::from([("cpu_core".to_string(), 4.0), ("mem_all".to_string(), 1.0)]);
    let t = steady_state(&model, &powers)?;
    for (x, y) in [(0.001, 0.001), (0.0035, 0.0035), (0.006, 0.002)] {
        let n = model.node_lookup("dies", x, y)?;
        println!("dies @ ({:.1}, {:.1}) mm -> {} {:.2} C", x * 1e3, y * 1e3, model.nodes[n].id(), t[n]);
    }
    Ok(())
}
