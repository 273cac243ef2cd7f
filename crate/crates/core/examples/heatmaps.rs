//! Per-layer heat maps of the 3D stack in steady state, one chiplet column
//! switched off. Writes `<layer>_<time>.csv` rasters into the given directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mfit::solver::layer_heatmap;
use mfit::{build_rc, bundled, steady_state, TemperatureTrace};

fn main() -> mfit::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "heatmaps".into()));
    let model = build_rc(&bundled::package("chiplet16x3_3d").unwrap())?;
    let powers: BTreeMap<String, f64> = model
        .power_blocks
        .iter()
        .map(|id| (id.clone(), if id.ends_with("c0_0") { 0.0 } else { 1.2 }))
        .collect();
    let temps = steady_state(&model, &powers)?;
    let mut trace = TemperatureTrace::new(model.node_ids(), Some(model.chiplet_mask()));
    trace.push_row(0.0, temps);

    std::fs::create_dir_all(&dir).map_err(|e| mfit::Error::Io { path: dir.display().to_string(), source: e })?;
    for layer in &model.layers {
        let map = layer_heatmap(&trace, &model, &layer.name, 0.0)?;
        let (r, c, v) = map.hottest().unwrap();
        println!("{:<11} {:>2}x{:<2} hottest {v:.2} C at raster ({r}, {c})", layer.name, map.rows(), map.cols());
        std::fs::write(dir.join(map.file_name()), map.to_csv())
            .map_err(|e| mfit::Error::Io { path: map.file_name(), source: e })?;
    }
    Ok(())
}
