//! Discretize the 16-chiplet network at Ts = 10 ms and check the discrete
//! model against the continuous solver on a PRBS workload.

use std::time::Instant;

use mfit::dss::discretize;
use mfit::metrics::{compare, CompareOptions};
use mfit::workload::{synth_wl1, SynthSpec};
use mfit::{build_rc, bundled, simulate, SolverConfig};

fn main() -> mfit::Result<()> {
    let model = build_rc(&bundled::package("chiplet16_2p5d").unwrap())?;
    let trace = synth_wl1(&SynthSpec::default(), &model.power_blocks)?;

    let t0 = Instant::now();
    let dss = discretize(&model, 0.01)?;
    let (lo, hi) = dss.spectral_radius_bounds(2000);
    println!("discretized {} states in {:.3} s, spectral radius in [{lo:.6}, {hi:.6}]", dss.states(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let fast = dss.run(&trace, None)?;
    let dss_time = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let reference = simulate(&model, &trace, &SolverConfig::default(), None)?;
    let rc_time = t2.elapsed().as_secs_f64();
    println!("DSS {} steps in {dss_time:.3} s, RC in {rc_time:.2} s", fast.len() - 1);

    let mut reference = reference;
    reference.chiplet = Some(model.chiplet_mask());
    let report = compare(&reference, &fast, &CompareOptions::default())?;
    print!("{}", report.to_text());
    Ok(())
}
