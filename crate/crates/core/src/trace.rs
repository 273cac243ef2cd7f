//! Time-indexed per-node temperatures, the common output of the RC solver
//! and the DSS model and the input of [`crate::metrics::compare`].

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureTrace {
    /// Strictly increasing sample times, s.
    pub times: Vec<f64>,
    /// Column ids, `layer/block/i_j` for model traces.
    pub node_ids: Vec<String>,
    /// Row-major °C values, `times.len() × node_ids.len()`.
    pub values: Vec<f64>,
    /// Chiplet flag per column when known (traces produced from a model).
    pub chiplet: Option<Vec<bool>>,
}

impl TemperatureTrace {
    pub fn new(node_ids: Vec<String>, chiplet: Option<Vec<bool>>) -> Self {
        TemperatureTrace { times: Vec::new(), node_ids, values: Vec::new(), chiplet }
    }

    pub fn push_row(&mut self, t: f64, row: impl IntoIterator<Item = f64>) {
        let before = self.values.len();
        self.times.push(t);
        self.values.extend(row);
        debug_assert_eq!(self.values.len() - before, self.node_ids.len());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn width(&self) -> usize {
        self.node_ids.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.width();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> {
        let n = self.width().max(1);
        self.times.iter().copied().zip(self.values.chunks(n))
    }

    pub fn column(&self, node: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.row(k)[node]).collect()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    /// Index of the sample closest to `t`; ties go to the earlier sample.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() {
            return None;
        }
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return Some(0);
        }
        if k == self.times.len() {
            return Some(k - 1);
        }
        Some(if t - self.times[k - 1] <= self.times[k] - t { k - 1 } else { k })
    }

    /// Largest value in the trace.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::domain(format!("cannot write trace: {e}"));
        let mut header = vec!["time_s".to_string()];
        header.extend(self.node_ids.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (t, row) in self.rows() {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(t.to_string());
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::domain(format!("cannot write trace: {e}")))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn from_csv_str(text: &str, file: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = rdr.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| Error::parse(file, 1, e.to_string()))?,
            None => return Err(Error::parse(file, 1, "empty trace file")),
        };
        if header.get(0) != Some("time_s") {
            return Err(Error::parse(file, 1, "header must start with time_s"));
        }
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut trace = TemperatureTrace::new(ids, None);
        for rec in records {
            let rec = rec.map_err(|e| Error::parse(file, 0, e.to_string()))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != trace.width() + 1 {
                return Err(Error::parse(
                    file,
                    line,
                    format!("expected {} fields, found {}", trace.width() + 1, rec.len()),
                ));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(file, line, format!("invalid number {s:?}")))
            };
            let t = parse(&rec[0])?;
            if let Some(&prev) = trace.times.last() {
                if t <= prev {
                    return Err(Error::parse(file, line, format!("time {t} does not increase")));
                }
            }
            let row: Vec<f64> = rec.iter().skip(1).map(parse).collect::<Result<_>>()?;
            trace.push_row(t, row);
        }
        Ok(trace)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }
}
