//! Piecewise-constant power traces: CSV ingestion and the synthetic
//! stress / PRBS / cooldown workload.
//!
//! Power CSV layout:
//!
//! ```text
//! time_s,c0_0,c0_1
//! 0,3.0,3.0
//! 10,0.0,3.0
//! # end_time_s=20
//! ```
//!
//! Each row is a change instant and its values hold until the next row. The
//! `# end_time_s=` footer is mandatory.

use std::io::Write;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub ids: Vec<String>,
    /// Change instants, starting at 0 and strictly increasing.
    pub times: Vec<f64>,
    /// Watts per id at each change instant.
    pub rows: Vec<Vec<f64>>,
    pub end_time: f64,
}

impl PowerTrace {
    pub fn new(ids: Vec<String>, times: Vec<f64>, rows: Vec<Vec<f64>>, end_time: f64) -> Result<Self> {
        let trace = PowerTrace { ids, times, rows, end_time };
        trace.check()?;
        Ok(trace)
    }

    /// Constant power on every id over `[0, end_time)`.
    pub fn constant(ids: Vec<String>, watts: f64, end_time: f64) -> Result<Self> {
        let row = vec![watts; ids.len()];
        Self::new(ids, vec![0.0], vec![row], end_time)
    }

    fn check(&self) -> Result<()> {
        for (k, id) in self.ids.iter().enumerate() {
            if id.is_empty() || self.ids[..k].contains(id) {
                return Err(Error::domain(format!("invalid or duplicate power block id {id:?}")));
            }
        }
        if self.times.is_empty() {
            return Err(Error::domain("power trace has no rows"));
        }
        if self.times.len() != self.rows.len() {
            return Err(Error::domain("power trace times and rows differ in length"));
        }
        if self.times[0] != 0.0 {
            return Err(Error::domain(format!("power trace starts at {}, expected 0", self.times[0])));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::domain(format!("change times not increasing at {}", w[1])));
            }
        }
        for (t, row) in self.times.iter().zip(&self.rows) {
            if row.len() != self.ids.len() {
                return Err(Error::domain(format!("ragged power row at t = {t}")));
            }
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::domain(format!("negative or invalid power {p} at t = {t}")));
            }
        }
        let last = *self.times.last().unwrap();
        if !(self.end_time.is_finite() && self.end_time > last) {
            return Err(Error::domain(format!(
                "end time {} must exceed the last change time {last}",
                self.end_time
            )));
        }
        Ok(())
    }

    /// `(start, end, row)` for every constant-power segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &[f64])> {
        self.times.iter().enumerate().map(move |(k, &t0)| {
            let t1 = self.times.get(k + 1).copied().unwrap_or(self.end_time);
            (t0, t1, self.rows[k].as_slice())
        })
    }

    /// Row index holding at time `t` (right-continuous).
    pub fn segment_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Re-orders the columns to `order`. Ids missing from the trace draw no
    /// power; ids in the trace but absent from `order` are an error.
    pub fn bind(&self, order: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut cols = Vec::with_capacity(self.ids.len());
        for id in &self.ids {
            let p = order
                .iter()
                .position(|o| o == id)
                .ok_or_else(|| Error::domain(format!("power trace references unknown power block {id:?}")))?;
            cols.push(p);
        }
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; order.len()];
                for (&c, &v) in cols.iter().zip(row) {
                    out[c] = v;
                }
                out
            })
            .collect())
    }

    /// Total injected power per segment.
    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::domain(format!("cannot write power trace: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time_s".to_string()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).map_err(err)?;
        }
        let mut inner = w
            .into_inner()
            .map_err(|e| Error::domain(format!("cannot write power trace: {e}")))?;
        writeln!(inner, "# end_time_s={}", self.end_time)
            .map_err(|e| Error::domain(format!("cannot write power trace: {e}")))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parses a power CSV. Line numbers in errors count the header as line 1.
pub fn parse_power_csv(text: &str, file: &str) -> Result<PowerTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut ids: Option<Vec<String>> = None;
    let mut times: Vec<f64> = Vec::new();
    let mut rows = Vec::new();
    let mut end_time = None;

    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(file, 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let first = rec.get(0).unwrap_or("").trim();
        if end_time.is_some() {
            return Err(Error::parse(file, line, "content after the end_time_s footer"));
        }
        if let Some(comment) = first.strip_prefix('#') {
            let value = comment
                .trim()
                .strip_prefix("end_time_s=")
                .ok_or_else(|| Error::parse(file, line, "expected `# end_time_s=<t>` footer"))?;
            let t: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(file, line, format!("invalid end time {value:?}")))?;
            end_time = Some((t, line));
            continue;
        }
        let Some(ids) = ids.as_ref() else {
            if first != "time_s" {
                return Err(Error::parse(file, line, "header must start with time_s"));
            }
            ids = Some(rec.iter().skip(1).map(|s| s.trim().to_string()).collect());
            continue;
        };
        if rec.len() != ids.len() + 1 {
            return Err(Error::parse(
                file,
                line,
                format!("ragged row: expected {} fields, found {}", ids.len() + 1, rec.len()),
            ));
        }
        let data_row = times.len() + 1;
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(file, line, format!("invalid number {s:?}")))
        };
        let t = parse(first)?;
        match times.last() {
            None if t != 0.0 => {
                return Err(Error::parse(file, line, format!("first change time is {t}, expected 0")));
            }
            Some(&prev) if !(t > prev) => {
                return Err(Error::parse(
                    file,
                    line,
                    format!("time {t} does not increase (data row {data_row})"),
                ));
            }
            _ => {}
        }
        let row: Vec<f64> = rec.iter().skip(1).map(parse).collect::<Result<_>>()?;
        if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::parse(file, line, format!("negative power {p} (data row {data_row})")));
        }
        times.push(t);
        rows.push(row);
    }

    let ids = ids.ok_or_else(|| Error::parse(file, 1, "missing header"))?;
    let (end, end_line) = end_time.ok_or_else(|| Error::parse(file, 0, "missing `# end_time_s=` footer"))?;
    PowerTrace::new(ids, times, rows, end).map_err(|e| Error::parse(file, end_line, e.to_string()))
}

pub fn load_power_csv(path: impl AsRef<Path>) -> Result<PowerTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_power_csv(&text, &path.display().to_string())
}

/// Stress / PRBS / cooldown workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub stress_s: f64,
    pub prbs_s: f64,
    pub cooldown_s: f64,
    /// PRBS bit period.
    pub dwell_s: f64,
    pub max_power_w: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            stress_s: 10.0,
            prbs_s: 30.0,
            cooldown_s: 15.0,
            dwell_s: 0.1,
            max_power_w: 3.0,
            seed: 1,
        }
    }
}

impl SynthSpec {
    /// Number of dwell periods in a phase. Phase durations must be whole
    /// multiples of the dwell.
    fn periods(&self, name: &str, d: f64) -> Result<u64> {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::domain(format!("{name} duration {d} must be >= 0")));
        }
        let n = (d / self.dwell_s).round();
        if (n * self.dwell_s - d).abs() > 1e-9 * d.max(1.0) {
            return Err(Error::domain(format!(
                "{name} duration {d} is not a multiple of the dwell {}",
                self.dwell_s
            )));
        }
        Ok(n as u64)
    }
}

/// Per-block bit stream: ChaCha8 seeded with the first 8 bytes (little
/// endian) of SHA-256(seed as u64 LE ‖ block id); one bit per draw, the top
/// bit of `next_u32`.
pub fn prbs_bits(seed: u64, block_id: &str, count: usize) -> Vec<bool> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(block_id.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 8];
    key.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(key));
    (0..count).map(|_| rng.next_u32() >> 31 == 1).collect()
}

/// Builds the stress / PRBS / cooldown trace. Every change time is an integer
/// multiple of the dwell.
pub fn synth_wl1(spec: &SynthSpec, power_block_ids: &[String]) -> Result<PowerTrace> {
    if !(spec.dwell_s.is_finite() && spec.dwell_s > 0.0) {
        return Err(Error::domain("dwell must be > 0"));
    }
    if !(spec.max_power_w.is_finite() && spec.max_power_w > 0.0) {
        return Err(Error::domain("max power must be > 0"));
    }
    let n_stress = spec.periods("stress", spec.stress_s)?;
    let n_prbs = spec.periods("prbs", spec.prbs_s)?;
    let n_cool = spec.periods("cooldown", spec.cooldown_s)?;
    let total = n_stress + n_prbs + n_cool;
    if total == 0 {
        return Err(Error::domain("workload has zero duration"));
    }

    let bits: Vec<Vec<bool>> = power_block_ids
        .iter()
        .map(|id| prbs_bits(spec.seed, id, n_prbs as usize))
        .collect();
    let p = spec.max_power_w;
    let row_at = |k: u64| -> Vec<f64> {
        if k < n_stress {
            vec![p; power_block_ids.len()]
        } else if k < n_stress + n_prbs {
            let b = (k - n_stress) as usize;
            bits.iter().map(|s| if s[b] { p } else { 0.0 }).collect()
        } else {
            vec![0.0; power_block_ids.len()]
        }
    };

    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for k in 0..total {
        let row = row_at(k);
        if rows.last() != Some(&row) {
            times.push(k as f64 * spec.dwell_s);
            rows.push(row);
        }
    }
    PowerTrace::new(power_block_ids.to_vec(), times, rows, total as f64 * spec.dwell_s)
}
