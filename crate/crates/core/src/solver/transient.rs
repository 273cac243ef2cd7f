//! Adaptive transient integration.
//!
//! The network is linear with piecewise-constant input, so the integrator is
//! restarted at every power change and only ever sees a constant `q`. Inside a
//! segment we use the 5-stage, L-stable, stiffly accurate SDIRK method of
//! order 4 with an embedded order-3 solution for error control (Hairer &
//! Wanner, Table IV.6.5). All stages share the matrix `C − hγG`, which is
//! factored once per distinct step size.

use nalgebra_sparse::factorization::CscCholesky;
use serde::{Deserialize, Serialize};

use super::{solve_in_place, Operators};
use crate::error::{Error, Result};
use crate::rc::RCModel;
use crate::trace::TemperatureTrace;
use crate::workload::PowerTrace;

const GAMMA: f64 = 0.25;
const STAGES: usize = 5;
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
/// Weights of the embedded order-3 solution.
const B_HAT: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Step growth below this ratio keeps the current factorization.
const KEEP_RATIO: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rtol: f64,
    /// Absolute tolerance, K.
    pub atol: f64,
    /// Upper bound on the internal step; defaults to the segment length.
    pub max_step: Option<f64>,
    /// Output sampling period, s.
    pub output_dt: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rtol: 1e-6, atol: 1e-8, max_step: None, output_dt: 0.01 }
    }
}

impl SolverConfig {
    fn check(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::domain("rtol and atol must be > 0"));
        }
        if !(self.output_dt.is_finite() && self.output_dt > 0.0) {
            return Err(Error::domain("output_dt must be > 0"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::domain("max_step must be > 0"));
            }
        }
        Ok(())
    }
}

struct Integrator<'a> {
    ops: &'a Operators,
    cfg: &'a SolverConfig,
    chol: Option<(f64, CscCholesky<f64>)>,
    k: Vec<Vec<f64>>,
    work: Vec<f64>,
    rhs: Vec<f64>,
    y_new: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(ops: &'a Operators, cfg: &'a SolverConfig) -> Self {
        let n = ops.len();
        Integrator {
            ops,
            cfg,
            chol: None,
            k: vec![vec![0.0; n]; STAGES],
            work: vec![0.0; n],
            rhs: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }

    fn factor(&mut self, h: f64) -> Result<()> {
        if matches!(&self.chol, Some((hf, _)) if *hf == h) {
            return Ok(());
        }
        let scale = h * GAMMA;
        match &mut self.chol {
            Some((hf, chol)) => {
                self.ops.refactor_shifted(chol, scale, &self.ops.capacitance)?;
                *hf = h;
            }
            None => {
                let chol = self.ops.factor_shifted(scale, &self.ops.capacitance)?;
                self.chol = Some((h, chol));
            }
        }
        Ok(())
    }

    /// One trial step; returns the weighted error norm. The candidate is left
    /// in `y_new`.
    fn try_step(&mut self, y: &[f64], q: &[f64], h: f64) -> Result<f64> {
        self.factor(h)?;
        let chol = &self.chol.as_ref().expect("factored").1;
        let n = y.len();
        for s in 0..STAGES {
            self.work.copy_from_slice(y);
            for (j, kj) in self.k.iter().enumerate().take(s) {
                let a = h * A[s][j];
                if a != 0.0 {
                    self.work.iter_mut().zip(kj).for_each(|(w, kv)| *w += a * kv);
                }
            }
            self.ops.apply_g(&self.work, &mut self.rhs);
            self.rhs.iter_mut().zip(q).for_each(|(r, qi)| *r += qi);
            solve_in_place(chol, &mut self.rhs);
            self.k[s].copy_from_slice(&self.rhs);
        }

        let mut sum = 0.0;
        for i in 0..n {
            let mut inc = 0.0;
            let mut err = 0.0;
            for s in 0..STAGES {
                let kv = self.k[s][i];
                inc += A[STAGES - 1][s] * kv;
                err += (A[STAGES - 1][s] - B_HAT[s]) * kv;
            }
            let yn = y[i] + h * inc;
            self.y_new[i] = yn;
            let scale = self.cfg.atol + self.cfg.rtol * y[i].abs().max(yn.abs());
            let e = h * err / scale;
            sum += e * e;
        }
        let norm = (sum / n.max(1) as f64).sqrt();
        if norm.is_finite() {
            Ok(norm)
        } else {
            Err(Error::numerical("non-finite error estimate"))
        }
    }

    /// Initial step for a fresh segment (Hairer's heuristic without the
    /// second-derivative refinement).
    fn initial_step(&mut self, y: &[f64], q: &[f64]) -> f64 {
        self.ops.apply_g(y, &mut self.rhs);
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..y.len() {
            let f = (self.rhs[i] + q[i]) / self.ops.capacitance[i];
            let sc = self.cfg.atol + self.cfg.rtol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (f / sc).powi(2);
        }
        let n = y.len().max(1) as f64;
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
    }

    /// Advances `y` from `t0` to exactly `t1` under constant `q`.
    fn advance(&mut self, y: &mut [f64], q: &[f64], t0: f64, t1: f64, h: &mut f64) -> Result<()> {
        let max_step = self.cfg.max_step.unwrap_or(f64::INFINITY);
        let mut t = t0;
        while t < t1 {
            let remaining = t1 - t;
            let min_step = 1e-14 * t1.abs().max(1.0);
            let mut h_try = h.min(max_step);
            // Land exactly on t1, avoiding a sliver step right before it.
            let last = h_try >= remaining || h_try > 0.5 * remaining && remaining - h_try < min_step;
            if last {
                h_try = remaining;
            }
            let err = self.try_step(y, q, h_try)?;
            if err <= 1.0 {
                y.copy_from_slice(&self.y_new);
                t = if last { t1 } else { t + h_try };
                let grow = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.25)).clamp(MIN_FACTOR, MAX_FACTOR) };
                // A step clipped to a boundary says nothing about the natural size.
                if !last || grow < 1.0 {
                    let proposed = h_try * grow;
                    if !(proposed > *h && proposed < KEEP_RATIO * *h) {
                        *h = proposed;
                    }
                }
            } else {
                *h = h_try * (SAFETY * err.powf(-0.25)).clamp(MIN_FACTOR, 1.0);
                if *h < min_step {
                    return Err(Error::Numerical {
                        message: format!("step size underflow ({:e} s)", *h),
                        last_time: Some(t),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Integrates `C dT/dt = G T + q(t)` over a power trace.
///
/// The first output row is the initial state at t = 0; further rows follow
/// every `output_dt`. A sample that coincides with a power change carries the
/// state reached under the previous power.
pub fn simulate(
    model: &RCModel,
    trace: &PowerTrace,
    config: &SolverConfig,
    t_init: Option<&[f64]>,
) -> Result<TemperatureTrace> {
    config.check()?;
    let n = model.len();
    let powers = trace.bind(&model.power_blocks)?;
    let mut y = match t_init {
        Some(t) if t.len() != n => {
            return Err(Error::domain(format!("initial state has {} values, model has {n} nodes", t.len())));
        }
        Some(t) => t.iter().map(|v| v - model.ambient_c).collect(),
        None => vec![0.0; n],
    };

    let ops = Operators::new(model);
    let mut integ = Integrator::new(&ops, config);
    let mut out = TemperatureTrace::new(model.node_ids(), Some(model.chiplet_mask()));
    let ambient = model.ambient_c;
    out.push_row(0.0, y.iter().map(|v| v + ambient));

    let dt = config.output_dt;
    let n_out = (trace.end_time / dt * (1.0 + 1e-12)).floor() as u64;
    let mut next_out = 1u64;
    let mut q = vec![0.0; n];

    for (seg, (t0, t1, _)) in trace.segments().enumerate() {
        model.inject_into(&powers[seg], &mut q);
        let quiet = q.iter().all(|v| *v == 0.0) && y.iter().all(|v| *v == 0.0);
        let mut h = integ.initial_step(&y, &q);
        let mut t = t0;
        loop {
            let t_out = next_out as f64 * dt;
            let out_in_segment = next_out <= n_out && t_out <= t1 * (1.0 + 1e-12);
            let target = if out_in_segment { t_out.min(t1) } else { t1 };
            if target > t && !quiet {
                integ.advance(&mut y, &q, t, target, &mut h)?;
            }
            t = target.max(t);
            if out_in_segment {
                out.push_row(t_out, y.iter().map(|v| v + ambient));
                next_out += 1;
            } else {
                break;
            }
        }
    }
    Ok(out)
}
