//! Accuracy of a candidate temperature trace against a reference: mean
//! absolute error and the fraction of over-threshold events the candidate
//! flags with a conservative guard band.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TemperatureTrace;

const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Maximum allowable temperature, °C.
    pub threshold: f64,
    /// The candidate flags a violation at `threshold − guard`, K.
    pub guard: f64,
    /// Compare every common node instead of chiplet nodes only.
    pub all_nodes: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { threshold: 85.0, guard: 1.0, all_nodes: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// K
    pub mae: f64,
    pub max_abs_error: f64,
    /// `matched / reference_violations`; `None` when the reference has no violation.
    pub violation_accuracy: Option<f64>,
    pub reference_violations: usize,
    pub matched: usize,
    /// Flags raised where the reference stays below threshold.
    pub false_positives: usize,
    /// `false_positives` over the non-violating (time, node) pairs.
    pub false_positive_rate: Option<f64>,
    pub samples: usize,
    pub nodes: usize,
    pub per_node_mae: Vec<(String, f64)>,
    pub threshold: f64,
    pub guard: f64,
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        let _ = writeln!(s, "mae_k = {}", self.mae);
        let _ = writeln!(s, "max_abs_error_k = {}", self.max_abs_error);
        let _ = writeln!(s, "violation_accuracy = {}", opt(self.violation_accuracy));
        let _ = writeln!(s, "reference_violations = {}", self.reference_violations);
        let _ = writeln!(s, "flagged_and_matched = {}", self.matched);
        let _ = writeln!(s, "false_positives = {}", self.false_positives);
        let _ = writeln!(s, "false_positive_rate = {}", opt(self.false_positive_rate));
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "nodes = {}", self.nodes);
        let _ = writeln!(s, "threshold_c = {}", self.threshold);
        let _ = writeln!(s, "guard_k = {}", self.guard);
        s
    }

    pub fn per_node_csv(&self) -> String {
        let mut s = String::from("node,mae_k\n");
        for (id, v) in &self.per_node_mae {
            let _ = writeln!(s, "{id},{v}");
        }
        s
    }
}

/// Scores `candidate` against `reference`.
///
/// The candidate is resampled onto the reference time grid by holding its
/// previous sample. Only nodes present in both traces are scored, and of
/// those only chiplet nodes unless `all_nodes` is set (chiplet flags come
/// from whichever trace carries them; traces without flags count every node).
pub fn compare(
    reference: &TemperatureTrace,
    candidate: &TemperatureTrace,
    opts: &CompareOptions,
) -> Result<ComparisonReport> {
    if reference.is_empty() || candidate.is_empty() {
        return Err(Error::domain("cannot compare an empty trace"));
    }
    let cand_cols: HashMap<&str, usize> = candidate
        .node_ids
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k))
        .collect();
    let cand_chiplet = |k: usize| candidate.chiplet.as_ref().map(|c| c[k]);

    let mut pairs = Vec::new();
    for (r, id) in reference.node_ids.iter().enumerate() {
        let Some(&c) = cand_cols.get(id.as_str()) else { continue };
        let is_chiplet = reference
            .chiplet
            .as_ref()
            .map(|f| f[r])
            .or_else(|| cand_chiplet(c))
            .unwrap_or(true);
        if opts.all_nodes || is_chiplet {
            pairs.push((r, c, id.clone()));
        }
    }
    if pairs.is_empty() {
        return Err(Error::domain("traces share no comparable nodes"));
    }

    let start = reference.times[0].max(candidate.times[0]);
    let end = reference.times[reference.len() - 1].min(candidate.times[candidate.len() - 1]);
    if start > end + TIME_TOL {
        return Err(Error::domain(format!(
            "traces do not overlap in time (common window would be [{start}, {end}])"
        )));
    }

    let flag_at = opts.threshold - opts.guard;
    let mut per_node = vec![0.0; pairs.len()];
    let mut samples = 0usize;
    let (mut sum, mut max_err) = (0.0, 0.0f64);
    let (mut violations, mut matched, mut false_pos) = (0usize, 0usize, 0usize);
    let mut ck = 0usize;
    for (k, &t) in reference.times.iter().enumerate() {
        if t < start - TIME_TOL || t > end + TIME_TOL {
            continue;
        }
        while ck + 1 < candidate.len() && candidate.times[ck + 1] <= t + TIME_TOL {
            ck += 1;
        }
        let rrow = reference.row(k);
        let crow = candidate.row(ck);
        for (p, (r, c, _)) in pairs.iter().enumerate() {
            let (rv, cv) = (rrow[*r], crow[*c]);
            let e = (rv - cv).abs();
            sum += e;
            per_node[p] += e;
            max_err = max_err.max(e);
            let flagged = cv >= flag_at;
            if rv >= opts.threshold {
                violations += 1;
                if flagged {
                    matched += 1;
                }
            } else if flagged {
                false_pos += 1;
            }
        }
        samples += 1;
    }

    let count = (samples * pairs.len()) as f64;
    let negatives = samples * pairs.len() - violations;
    Ok(ComparisonReport {
        mae: sum / count,
        max_abs_error: max_err,
        violation_accuracy: (violations > 0).then(|| matched as f64 / violations as f64),
        reference_violations: violations,
        matched,
        false_positives: false_pos,
        false_positive_rate: (negatives > 0).then(|| false_pos as f64 / negatives as f64),
        samples,
        nodes: pairs.len(),
        per_node_mae: pairs
            .iter()
            .zip(per_node)
            .map(|((_, _, id), s)| (id.clone(), s / samples as f64))
            .collect(),
        threshold: opts.threshold,
        guard: opts.guard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(ids: &[&str], times: &[f64], cols: &[&[f64]]) -> TemperatureTrace {
        let mut t = TemperatureTrace::new(ids.iter().map(|s| s.to_string()).collect(), None);
        for (k, &time) in times.iter().enumerate() {
            t.push_row(time, cols.iter().map(|c| c[k]));
        }
        t
    }

    #[test]
    fn identical_traces() {
        let a = trace(&["n"], &[0.0, 1.0, 2.0], &[&[80.0, 86.0, 90.0]]);
        let r = compare(&a, &a, &CompareOptions::default()).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.violation_accuracy, Some(1.0));
        assert_eq!(r.reference_violations, 2);
    }

    #[test]
    fn mae_one_third() {
        let a = trace(&["n"], &[0.0, 1.0, 2.0], &[&[1.0, 2.0, 3.0]]);
        let b = trace(&["n"], &[0.0, 1.0, 2.0], &[&[1.0, 2.0, 4.0]]);
        let r = compare(&a, &b, &CompareOptions::default()).unwrap();
        assert_eq!(r.mae, 1.0 / 3.0);
        assert_eq!(r.violation_accuracy, None);
        let back = compare(&b, &a, &CompareOptions::default()).unwrap();
        assert_eq!(back.mae, r.mae);
    }

    #[test]
    fn violation_accuracy_two_thirds() {
        let a = trace(&["n"], &[0.0, 1.0, 2.0, 3.0], &[&[85.0, 86.0, 90.0, 70.0]]);
        let b = trace(&["n"], &[0.0, 1.0, 2.0, 3.0], &[&[84.0, 83.9, 84.5, 70.0]]);
        let r = compare(&a, &b, &CompareOptions::default()).unwrap();
        assert_eq!(r.reference_violations, 3);
        assert_eq!(r.matched, 2);
        assert_eq!(r.violation_accuracy, Some(2.0 / 3.0));
        // Reversed roles: b never reaches 85, so there is nothing to capture.
        let rev = compare(&b, &a, &CompareOptions::default()).unwrap();
        assert_eq!(rev.violation_accuracy, None);
    }

    #[test]
    fn candidate_is_held_onto_reference_grid() {
        let a = trace(&["n"], &[0.0, 0.5, 1.0, 1.5], &[&[1.0, 1.0, 2.0, 2.0]]);
        let b = trace(&["n"], &[0.0, 1.0], &[&[1.0, 2.0]]);
        let r = compare(&a, &b, &CompareOptions::default()).unwrap();
        // The common window ends at 1.0.
        assert_eq!(r.samples, 3);
        assert_eq!(r.mae, 0.0);
    }

    #[test]
    fn chiplet_filter_and_errors() {
        let mut a = trace(&["chip", "lid"], &[0.0], &[&[90.0], &[50.0]]);
        a.chiplet = Some(vec![true, false]);
        let b = trace(&["chip", "lid"], &[0.0], &[&[90.0], &[40.0]]);
        assert_eq!(compare(&a, &b, &CompareOptions::default()).unwrap().mae, 0.0);
        let all = CompareOptions { all_nodes: true, ..Default::default() };
        assert_eq!(compare(&a, &b, &all).unwrap().mae, 5.0);

        let c = trace(&["other"], &[0.0], &[&[1.0]]);
        assert!(compare(&a, &c, &all).is_err());
        let late = trace(&["chip"], &[5.0], &[&[1.0]]);
        assert!(compare(&a, &late, &all).is_err());
    }
}
