//! Score discrete models sampled at coarser periods against the continuous
//! reference, and show how the guard band trades false positives for
//! caught violations. Coarse candidates are held onto the reference grid.

use mfit::dss::discretize;
use mfit::metrics::{compare, CompareOptions};
use mfit::workload::{synth_wl1, SynthSpec};
use mfit::{build_rc, bundled, simulate, SolverConfig};

fn main() -> mfit::Result<()> {
    let model = build_rc(&bundled::package("chiplet16_2p5d").unwrap())?;
    let wl = SynthSpec { stress_s: 5.0, prbs_s: 10.0, cooldown_s: 5.0, ..SynthSpec::default() };
    let trace = synth_wl1(&wl, &model.power_blocks)?;
    let mut reference = simulate(&model, &trace, &SolverConfig::default(), None)?;
    reference.chiplet = Some(model.chiplet_mask());

    println!("{:>6} {:>6} {:>10} {:>10} {:>8} {:>8}", "Ts", "guard", "MAE (K)", "max (K)", "VA", "FPR");
    for ts in [0.01, 0.05, 0.1] {
        let cand = discretize(&model, ts)?.run(&trace, None)?;
        for guard in [0.0, 1.0, 3.0] {
            let r = compare(&reference, &cand, &CompareOptions { guard, ..Default::default() })?;
            let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}%", v * 100.0));
            println!(
                "{ts:>6} {guard:>6} {:>10.2e} {:>10.2e} {:>8} {:>8}",
                r.mae,
                r.max_abs_error,
                pct(r.violation_accuracy),
                pct(r.false_positive_rate)
            );
        }
    }
    Ok(())
}
