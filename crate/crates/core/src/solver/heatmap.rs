use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::EPS;
use crate::rc::RCModel;
use crate::trace::TemperatureTrace;

/// Per-layer temperature raster. The raster lines are the union of all node
/// edges of the layer and the package outline, so every raster cell lies in
/// exactly one node or in a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub layer: String,
    /// Time of the trace sample used, s.
    pub time: f64,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major, row 0 at the lowest y. `None` where no node exists.
    pub cells: Vec<Option<f64>>,
    /// Node index of each cell.
    pub nodes: Vec<Option<usize>>,
}

impl HeatMap {
    pub fn cols(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.cols() + col]
    }

    /// `(row, col, value)` of the hottest cell.
    pub fn hottest(&self) -> Option<(usize, usize, f64)> {
        let cols = self.cols();
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k / cols, k % cols, v)))
            .max_by(|a, b| a.2.total_cmp(&b.2))
    }

    /// CSV grid, `NA` for absent cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows() {
            let line: Vec<String> = (0..self.cols())
                .map(|c| self.get(r, c).map_or_else(|| "NA".to_string(), |v| v.to_string()))
                .collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    /// `<layer>_<time_s>.csv`
    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.layer, self.time)
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= EPS);
    v
}

/// Heat map of one layer at the trace sample nearest to `t`.
pub fn layer_heatmap(trace: &TemperatureTrace, model: &RCModel, layer: &str, t: f64) -> Result<HeatMap> {
    let info = model
        .layer(layer)
        .ok_or_else(|| Error::domain(format!("unknown layer {layer:?}")))?;
    let k = trace
        .nearest_index(t)
        .ok_or_else(|| Error::domain("temperature trace is empty"))?;
    let row = trace.row(k);
    let nodes = &model.nodes[info.nodes.clone()];

    let mut columns = Vec::with_capacity(nodes.len());
    for n in nodes {
        let id = n.id();
        let col = match trace.node_ids.get(n.index) {
            Some(x) if *x == id => n.index,
            _ => trace
                .node_index(&id)
                .ok_or_else(|| Error::domain(format!("trace has no column for node {id}")))?,
        };
        columns.push(col);
    }

    let fp = model.footprint;
    let mut xs = vec![fp.x0, fp.x1];
    let mut ys = vec![fp.y0, fp.y1];
    for n in nodes {
        let r = n.rect();
        xs.extend([r.x0, r.x1]);
        ys.extend([r.y0, r.y1]);
    }
    let (x_edges, y_edges) = (sorted_unique(xs), sorted_unique(ys));

    let mut cells = Vec::new();
    let mut owners = Vec::new();
    for r in 0..y_edges.len() - 1 {
        let cy = 0.5 * (y_edges[r] + y_edges[r + 1]);
        for c in 0..x_edges.len() - 1 {
            let cx = 0.5 * (x_edges[c] + x_edges[c + 1]);
            let owner = nodes.iter().position(|n| n.rect().contains_point(cx, cy));
            owners.push(owner.map(|o| nodes[o].index));
            cells.push(owner.map(|o| row[columns[o]]));
        }
    }

    Ok(HeatMap {
        layer: layer.to_string(),
        time: trace.times[k],
        x_edges,
        y_edges,
        cells,
        nodes: owners,
    })
}
