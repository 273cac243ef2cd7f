//! Discrete state-space model by zero-order hold.
//!
//! With `M = C⁻¹G` and input held constant over each period `Ts`:
//!
//! ```text
//! T[k+1] = A T[k] + B u[k],   A = exp(M Ts),   B = M⁻¹(A − I) C⁻¹ E
//! ```
//!
//! where `E` routes per-power-block watts to nodes. `M` is similar to the
//! symmetric matrix `S = C^{-1/2} G C^{-1/2}`, so both matrices come from one
//! symmetric eigendecomposition `S = Q Λ Qᵀ`:
//!
//! ```text
//! A = C^{-1/2} Q e^{Λ Ts} Qᵀ C^{1/2},   B = C^{-1/2} Q φ(Λ) Qᵀ C^{-1/2} E
//! ```
//!
//! with `φ(λ) = (e^{λ Ts} − 1)/λ`. Since `M⁻¹C⁻¹ = G⁻¹`, `B` also equals
//! `(I − A) R` with `R = −G⁻¹E` the steady-state response per watt. That is
//! the form used: eigenvalues of a stiff `S` carry absolute errors near
//! `ε‖S‖`, which would show up as a relative DC-gain error on the slow modes,
//! while `R` comes from a sparse solve with refinement, so the fixed point of
//! the discrete model coincides with the steady state.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rc::{hex_digest, LineReader, RCModel};
use crate::solver::steady_response;
use crate::trace::TemperatureTrace;
use crate::workload::PowerTrace;

pub const DSS_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TS: f64 = 0.01;

/// Alignment tolerance for power-change times against the sampling grid, s.
const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DssModel {
    pub ts: f64,
    pub ambient_c: f64,
    /// SHA-256 of the source model text.
    pub fingerprint: String,
    pub node_ids: Vec<String>,
    pub chiplet: Vec<bool>,
    pub power_blocks: Vec<String>,
    /// Row-major `N × N`.
    pub a: Vec<f64>,
    /// Row-major `N × P`, K per W per step.
    pub b: Vec<f64>,
}

/// Discretizes a model with sampling period `ts`.
pub fn discretize(model: &RCModel, ts: f64) -> Result<DssModel> {
    discretize_with_fingerprint(model, ts, model.fingerprint())
}

/// As [`discretize`], binding the result to an explicit source fingerprint.
pub fn discretize_with_fingerprint(model: &RCModel, ts: f64, fingerprint: String) -> Result<DssModel> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::domain(format!("sampling period {ts} must be > 0")));
    }
    if !model.nodes.iter().any(|n| n.g_conv > 0.0) {
        return Err(Error::domain("model has no convection; C⁻¹G is singular"));
    }
    let n = model.len();
    let p = model.power_blocks.len();
    let c = model.capacitances();
    let inv_sqrt: Vec<f64> = c.iter().map(|v| 1.0 / v.sqrt()).collect();
    let sqrt: Vec<f64> = c.iter().map(|v| v.sqrt()).collect();

    let mut s = model.g_dense();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = s
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::numerical("symmetric eigendecomposition did not converge"))?;
    let q = &eig.eigenvectors;
    let lambda = &eig.eigenvalues;
    if let Some(l) = lambda.iter().find(|l| **l >= 0.0) {
        return Err(Error::domain(format!(
            "C⁻¹G has a non-negative eigenvalue ({l:e}); part of the network has no path to ambient"
        )));
    }

    let decay: Vec<f64> = lambda.iter().map(|l| (l * ts).exp()).collect();

    // A = D⁻ Q diag(decay) Qᵀ D⁺
    let qd = scale_columns(q, &decay);
    let core = &qd * q.transpose();
    let mut am = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            am[(i, j)] = inv_sqrt[i] * core[(i, j)] * sqrt[j];
        }
    }

    // B = (I − A) R
    let r = steady_response(model)?;
    let bm = &r - &am * &r;
    let a: Vec<f64> = am.transpose().iter().copied().collect();
    let b: Vec<f64> = bm.transpose().iter().copied().collect();
    debug_assert_eq!(b.len(), n * p);

    Ok(DssModel {
        ts,
        ambient_c: model.ambient_c,
        fingerprint,
        node_ids: model.node_ids(),
        chiplet: model.chiplet_mask(),
        power_blocks: model.power_blocks.clone(),
        a,
        b,
    })
}

fn scale_columns(m: &DMatrix<f64>, f: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, s) in f.iter().enumerate() {
        out.column_mut(j).scale_mut(*s);
    }
    out
}

impl DssModel {
    pub fn states(&self) -> usize {
        self.node_ids.len()
    }

    pub fn inputs(&self) -> usize {
        self.power_blocks.len()
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.states(), self.states(), &self.a)
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.states(), self.inputs(), &self.b)
    }

    /// `A·state + B·powers` with `state` as K rise.
    pub fn step(&self, state: &[f64], powers: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.states()];
        self.step_into(state, powers, &mut out)?;
        Ok(out)
    }

    pub fn step_into(&self, state: &[f64], powers: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, p) = (self.states(), self.inputs());
        if state.len() != n || out.len() != n || powers.len() != p {
            return Err(Error::domain(format!(
                "dimension mismatch: model is {n} states × {p} inputs, got state {} and powers {}",
                state.len(),
                powers.len()
            )));
        }
        self.mac(state, powers, out);
        Ok(())
    }

    #[inline]
    fn mac(&self, state: &[f64], powers: &[f64], out: &mut [f64]) {
        let (n, p) = (self.states(), self.inputs());
        for (i, o) in out.iter_mut().enumerate() {
            let arow = &self.a[i * n..(i + 1) * n];
            let mut acc: f64 = arow.iter().zip(state).map(|(a, x)| a * x).sum();
            if p > 0 {
                let brow = &self.b[i * p..(i + 1) * p];
                acc += brow.iter().zip(powers).map(|(b, u)| b * u).sum::<f64>();
            }
            *o = acc;
        }
    }

    /// Steps through a power trace whose change times lie on the `Ts` grid,
    /// emitting one row per period starting with the initial state.
    pub fn run(&self, trace: &PowerTrace, t_init: Option<&[f64]>) -> Result<TemperatureTrace> {
        let ts = self.ts;
        let on_grid = |t: f64| -> Result<u64> {
            let k = (t / ts).round();
            if (k * ts - t).abs() > ALIGN_TOL {
                return Err(Error::domain(format!(
                    "power trace time {t} s is not a multiple of Ts = {ts} s"
                )));
            }
            Ok(k as u64)
        };
        let change_steps: Vec<u64> = trace.times.iter().map(|&t| on_grid(t)).collect::<Result<_>>()?;
        let steps = on_grid(trace.end_time)?;
        let powers = trace.bind(&self.power_blocks)?;

        let n = self.states();
        let mut x: Vec<f64> = match t_init {
            Some(t) if t.len() != n => {
                return Err(Error::domain(format!("initial state has {} values, model has {n} states", t.len())));
            }
            Some(t) => t.iter().map(|v| v - self.ambient_c).collect(),
            None => vec![0.0; n],
        };
        let mut next = vec![0.0; n];
        let mut out = TemperatureTrace::new(self.node_ids.clone(), Some(self.chiplet.clone()));
        out.values.reserve((steps as usize + 1) * n);
        let amb = self.ambient_c;
        out.push_row(0.0, x.iter().map(|v| v + amb));

        let mut seg = 0;
        for k in 0..steps {
            while seg + 1 < change_steps.len() && change_steps[seg + 1] <= k {
                seg += 1;
            }
            self.mac(&x, &powers[seg], &mut next);
            std::mem::swap(&mut x, &mut next);
            out.push_row((k + 1) as f64 * ts, x.iter().map(|v| v + amb));
        }
        Ok(out)
    }

    /// Fixed point `(I − A)⁻¹ B u` as K rise.
    pub fn fixed_point(&self, powers: &[f64]) -> Result<Vec<f64>> {
        let n = self.states();
        let lhs = DMatrix::identity(n, n) - self.a_matrix();
        let rhs = self.b_matrix() * DVector::from_column_slice(powers);
        let lu = lhs.lu();
        lu.solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::numerical("I − A is singular"))
    }

    /// Collatz–Wielandt bounds `(lower, upper)` on the spectral radius of the
    /// non-negative matrix `A`, tightened by power iteration.
    pub fn spectral_radius_bounds(&self, max_iter: usize) -> (f64, f64) {
        let n = self.states();
        let mut x = vec![1.0; n];
        let mut y = vec![0.0; n];
        let zeros = vec![0.0; self.inputs()];
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        for _ in 0..max_iter {
            self.mac(&x, &zeros, &mut y);
            let mut l = f64::INFINITY;
            let mut h = 0.0f64;
            for i in 0..n {
                if x[i] > 0.0 {
                    let r = y[i] / x[i];
                    l = l.min(r);
                    h = h.max(r);
                }
            }
            lo = f64::max(lo, l);
            hi = hi.min(h);
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm == 0.0 {
                return (0.0, 0.0);
            }
            x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / norm);
        }
        (lo, hi)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = |v: f64| format!("{v:.16e}");
        let _ = writeln!(s, "mfit-dss {DSS_FORMAT_VERSION}");
        let _ = writeln!(s, "ts {}", f(self.ts));
        let _ = writeln!(s, "ambient_c {}", f(self.ambient_c));
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "[nodes] {}", self.states());
        for (id, c) in self.node_ids.iter().zip(&self.chiplet) {
            let _ = writeln!(s, "{id},{}", u8::from(*c));
        }
        let _ = writeln!(s, "[power_blocks] {}", self.inputs());
        for id in &self.power_blocks {
            let _ = writeln!(s, "{id}");
        }
        let n = self.states();
        let p = self.inputs();
        let _ = writeln!(s, "[A] {n}");
        for row in self.a.chunks(n.max(1)) {
            let _ = writeln!(s, "{}", row.iter().map(|v| f(*v)).collect::<Vec<_>>().join(","));
        }
        let _ = writeln!(s, "[B] {n}");
        for i in 0..n {
            let row = &self.b[i * p..(i + 1) * p];
            let _ = writeln!(s, "{}", row.iter().map(|v| f(*v)).collect::<Vec<_>>().join(","));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_text_named(text, "<dss>")
    }

    fn from_text_named(text: &str, file: &str) -> Result<Self> {
        let mut r = LineReader::new(text, file);
        let header = r.next_line()?;
        if header != format!("mfit-dss {DSS_FORMAT_VERSION}") {
            return Err(r.err(format!("unsupported DSS header {header:?}")));
        }
        let v = r.keyed("ts")?;
        let ts = r.float(v)?;
        let v = r.keyed("ambient_c")?;
        let ambient_c = r.float(v)?;
        let fingerprint = r.keyed("fingerprint")?.to_string();
        let n = r.section("nodes")?;
        let mut node_ids = Vec::with_capacity(n);
        let mut chiplet = Vec::with_capacity(n);
        for _ in 0..n {
            let f = r.fields(2)?;
            node_ids.push(f[0].to_string());
            chiplet.push(r.int(f[1])? != 0);
        }
        let p = r.section("power_blocks")?;
        let mut power_blocks = Vec::with_capacity(p);
        for _ in 0..p {
            power_blocks.push(r.next_line()?.to_string());
        }
        let read_matrix = |r: &mut LineReader, name: &str, cols: usize| -> Result<Vec<f64>> {
            let rows = r.section(name)?;
            if rows != n {
                return Err(r.err(format!("[{name}] has {rows} rows, expected {n}")));
            }
            let mut out = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = r.next_line()?;
                if cols == 0 {
                    if !line.is_empty() {
                        return Err(r.err(format!("[{name}] row should be empty")));
                    }
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != cols {
                    return Err(r.err(format!("[{name}] row has {} values, expected {cols}", f.len())));
                }
                for v in f {
                    out.push(r.float(v)?);
                }
            }
            Ok(out)
        };
        let a = read_matrix(&mut r, "A", n)?;
        let b = read_matrix(&mut r, "B", p)?;
        if !(ts > 0.0) {
            return Err(Error::parse(file, 2, "ts must be > 0"));
        }
        Ok(DssModel { ts, ambient_c, fingerprint, node_ids, chiplet, power_blocks, a, b })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text_named(&text, &path.display().to_string())
    }

    /// Errors unless this model was discretized from `model_text`.
    pub fn check_source(&self, model_text: &str) -> Result<()> {
        let fp = hex_digest(model_text.as_bytes());
        if fp != self.fingerprint {
            return Err(Error::domain(format!(
                "DSS model was built from a different RC model (fingerprint {} != {fp}); rediscretize",
                self.fingerprint
            )));
        }
        Ok(())
    }
}

/// SHA-256 of a model file's bytes, as stored in DSS files.
pub fn file_fingerprint(text: &str) -> String {
    hex_digest(text.as_bytes())
}
