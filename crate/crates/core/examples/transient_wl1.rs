//! Stress / PRBS / cooldown workload on the 16-chiplet package, integrated
//! with the adaptive solver. Writes the power and temperature traces.
//!
//! ```bash
//! cargo run --release --example transient_wl1 -- out_dir
//! ```

use std::path::PathBuf;
use std::time::Instant;

use mfit::workload::{synth_wl1, SynthSpec};
use mfit::{build_rc, bundled, simulate, SolverConfig};

fn main() -> mfit::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let model = build_rc(&bundled::package("chiplet16_2p5d").unwrap())?;
    let trace = synth_wl1(&SynthSpec::default(), &model.power_blocks)?;
    println!("workload: {} change instants over {} s", trace.times.len(), trace.end_time);

    let t0 = Instant::now();
    let temps = simulate(&model, &trace, &SolverConfig::default(), None)?;
    println!("simulated {} samples in {:.2} s", temps.len(), t0.elapsed().as_secs_f64());

    let chip = model.chiplet_mask();
    for t in [5.0, 10.0, 25.0, 40.0, 55.0] {
        let k = temps.nearest_index(t).unwrap();
        let hottest = temps.row(k).iter().zip(&chip).filter(|(_, c)| **c).map(|(v, _)| *v).fold(f64::MIN, f64::max);
        println!("t = {t:>4} s  hottest chiplet node {hottest:.2} C");
    }

    std::fs::create_dir_all(&dir).map_err(|e| mfit::Error::Io { path: dir.display().to_string(), source: e })?;
    trace.save_csv(dir.join("wl1_power.csv"))?;
    temps.save_csv(dir.join("wl1_rc.csv"))?;
    println!("wrote {}", dir.join("wl1_rc.csv").display());
    Ok(())
}
