//! Thermal RC network assembly.
//!
//! Every layer (or every block of a layer that has blocks) is split into a
//! regular grid of nodes. Conductances between nodes:
//!
//! * lateral, same layer: series combination of the two half-cells,
//!   `G = 1 / (l_i/(2 k_i A) + l_j/(2 k_j A))` with `A` the shared face;
//! * vertical, adjacent layers: `G = A_ov / (l_z,i/(2 k_z,i) + l_z,j/(2 k_z,j))`
//!   with `A_ov` the exact x-y overlap of the two cells;
//! * convection: `h · l_x · l_y` on the top and bottom layers, `h · face` on
//!   faces lying on the package perimeter when a lateral HTC is given.
//!
//! Temperatures are ambient-relative, so convection only enters the diagonal
//! of `G` and the network is `C dT/dt = G T + q`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{interval_overlap, Rect, EPS};
use crate::package::{validate_package, Material, PackageSpec, Severity, DEFAULT_REGION};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub index: usize,
    pub layer: String,
    /// Block name, or [`DEFAULT_REGION`] for a layer without blocks.
    pub block: String,
    /// Cell coordinates `(i, j)` within the block grid.
    pub cell: (usize, usize),
    pub center: [f64; 3],
    /// `(l_x, l_y, l_z)` in meters.
    pub extents: [f64; 3],
    /// J/K
    pub capacitance: f64,
    /// Convective conductance to ambient, W/K.
    pub g_conv: f64,
    pub is_chiplet: bool,
    /// Fraction of each power block's area that lands on this node.
    pub power_block_weights: BTreeMap<String, f64>,
}

impl NodeRecord {
    /// Trace column name, `layer/block/i_j`.
    pub fn id(&self) -> String {
        format!("{}/{}/{}_{}", self.layer, self.block, self.cell.0, self.cell.1)
    }

    pub fn rect(&self) -> Rect {
        let [cx, cy, _] = self.center;
        let [lx, ly, _] = self.extents;
        Rect {
            x0: cx - 0.5 * lx,
            y0: cy - 0.5 * ly,
            x1: cx + 0.5 * lx,
            y1: cy + 0.5 * ly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub z_order: u32,
    /// Height of the layer bottom above the package bottom, m.
    pub z0: f64,
    pub thickness: f64,
    pub nodes: Range<usize>,
}

/// Assembled network. Immutable after [`build_rc`] or [`RCModel::from_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct RCModel {
    pub name: String,
    pub ambient_c: f64,
    pub footprint: Rect,
    pub layers: Vec<LayerInfo>,
    pub nodes: Vec<NodeRecord>,
    /// Off-diagonal conductances `(i, j, G_ij)` with `i < j`, W/K.
    pub couplings: Vec<(usize, usize, f64)>,
    /// Power block ids in input-vector order.
    pub power_blocks: Vec<String>,
    /// For each power block, the `(node, weight)` pairs it injects into.
    pub power_map: Vec<Vec<(usize, f64)>>,
}

struct Cell {
    rect: Rect,
    block: String,
    block_index: Option<usize>,
    ij: (usize, usize),
    material: Material,
    scale: f64,
    chiplet: bool,
}

/// Builds the RC network of a validated package.
pub fn build_rc(spec: &PackageSpec) -> Result<RCModel> {
    let diags: Vec<_> = validate_package(spec)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if !diags.is_empty() {
        return Err(Error::Invalid(diags));
    }

    let footprint = spec.footprint();
    let stack = spec.stack();
    let b = &spec.boundary;

    let mut nodes = Vec::new();
    let mut layers = Vec::new();
    let mut layer_cells: Vec<Vec<Cell>> = Vec::new();
    let mut z0 = 0.0;
    for layer in &stack {
        let layer_material = spec
            .material(&layer.material)
            .expect("validated material reference")
            .clone();
        let mut cells = Vec::new();
        if layer.blocks.is_empty() {
            let [nx, ny] = [layer.grid[0] as usize, layer.grid[1] as usize];
            for j in 0..ny {
                for i in 0..nx {
                    cells.push(Cell {
                        rect: footprint.cell(nx, ny, i, j),
                        block: DEFAULT_REGION.to_string(),
                        block_index: None,
                        ij: (i, j),
                        material: layer_material.clone(),
                        scale: 1.0,
                        chiplet: false,
                    });
                }
            }
        } else {
            for (bi, block) in layer.blocks.iter().enumerate() {
                let material = block
                    .material
                    .as_deref()
                    .map(|m| spec.material(m).expect("validated material reference").clone())
                    .unwrap_or_else(|| layer_material.clone());
                let [nx, ny] = [block.grid[0] as usize, block.grid[1] as usize];
                let rect = block.rect();
                for j in 0..ny {
                    for i in 0..nx {
                        cells.push(Cell {
                            rect: rect.cell(nx, ny, i, j),
                            block: block.name.clone(),
                            block_index: Some(bi),
                            ij: (i, j),
                            material: material.clone(),
                            scale: block.capacitance_scale,
                            chiplet: block.chiplet,
                        });
                    }
                }
            }
        }

        let first = nodes.len();
        let lz = layer.thickness_m;
        for cell in &cells {
            let [cx, cy] = cell.rect.center();
            let (lx, ly) = (cell.rect.width(), cell.rect.height());
            nodes.push(NodeRecord {
                index: nodes.len(),
                layer: layer.name.clone(),
                block: cell.block.clone(),
                cell: cell.ij,
                center: [cx, cy, z0 + 0.5 * lz],
                extents: [lx, ly, lz],
                capacitance: cell.material.volumetric_heat_capacity() * lx * ly * lz * cell.scale,
                g_conv: 0.0,
                is_chiplet: cell.chiplet,
                power_block_weights: BTreeMap::new(),
            });
        }
        layers.push(LayerInfo {
            name: layer.name.clone(),
            z_order: layer.z_order,
            z0,
            thickness: lz,
            nodes: first..nodes.len(),
        });
        layer_cells.push(cells);
        z0 += lz;
    }

    let mut couplings = Vec::new();

    // Lateral coupling inside each layer.
    for (li, cells) in layer_cells.iter().enumerate() {
        let base = layers[li].nodes.start;
        let lz = layers[li].thickness;
        for a in 0..cells.len() {
            for bidx in a + 1..cells.len() {
                if let Some(g) = lateral_conductance(&cells[a], &cells[bidx], lz) {
                    couplings.push((base + a, base + bidx, g));
                }
            }
        }
    }

    // Vertical coupling between adjacent layers by overlap area.
    for li in 0..layers.len().saturating_sub(1) {
        let (lower, upper) = (&layer_cells[li], &layer_cells[li + 1]);
        let (lz_l, lz_u) = (layers[li].thickness, layers[li + 1].thickness);
        let mut connected = false;
        for (a, ca) in lower.iter().enumerate() {
            for (u, cu) in upper.iter().enumerate() {
                let area = ca.rect.overlap_area(&cu.rect);
                if area > 0.0 {
                    let r = lz_l / (2.0 * ca.material.k_z) + lz_u / (2.0 * cu.material.k_z);
                    couplings.push((layers[li].nodes.start + a, layers[li + 1].nodes.start + u, area / r));
                    connected = true;
                }
            }
        }
        if !connected {
            return Err(Error::Build(format!(
                "layers {:?} and {:?} do not overlap (disconnected stack)",
                layers[li].name,
                layers[li + 1].name
            )));
        }
    }

    // Convection.
    let last = layers.len() - 1;
    for (li, info) in layers.iter().enumerate() {
        for n in info.nodes.clone() {
            let node = &mut nodes[n];
            let [lx, ly, lz] = node.extents;
            let mut g = 0.0;
            if li == last {
                g += b.top_htc * lx * ly;
            }
            if li == 0 {
                g += b.bottom_htc * lx * ly;
            }
            if b.lateral_htc > 0.0 {
                let r = node.rect();
                let exposed_x = [r.x0 - footprint.x0, footprint.x1 - r.x1]
                    .iter()
                    .filter(|d| d.abs() <= EPS)
                    .count();
                let exposed_y = [r.y0 - footprint.y0, footprint.y1 - r.y1]
                    .iter()
                    .filter(|d| d.abs() <= EPS)
                    .count();
                g += b.lateral_htc * lz * (exposed_x as f64 * ly + exposed_y as f64 * lx);
            }
            node.g_conv = g;
        }
    }

    // Every node needs a conduction path to a convecting node, otherwise G is
    // singular.
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for &(i, j, _) in &couplings {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    let mut reached: Vec<bool> = nodes.iter().map(|n| n.g_conv > 0.0).collect();
    let mut frontier: Vec<usize> = (0..nodes.len()).filter(|&i| reached[i]).collect();
    while let Some(i) = frontier.pop() {
        for &j in &adjacency[i] {
            if !reached[j] {
                reached[j] = true;
                frontier.push(j);
            }
        }
    }
    if let Some(i) = reached.iter().position(|r| !r) {
        return Err(Error::Build(format!(
            "node {} has no conduction path to ambient (isolated block in layer {:?})",
            nodes[i].id(),
            nodes[i].layer
        )));
    }

    // Power injection by overlap-area fraction within the owning chiplet.
    let mut power_blocks = Vec::new();
    let mut power_map = Vec::new();
    for (li, layer) in stack.iter().enumerate() {
        for (bi, block) in layer.blocks.iter().enumerate() {
            for pb in &block.power_blocks {
                let pr = Rect::from_origin_size(pb.origin_m, pb.size_m)
                    .translate(block.origin_m[0], block.origin_m[1]);
                let area = pr.area();
                let mut entries = Vec::new();
                for (ci, cell) in layer_cells[li].iter().enumerate() {
                    if cell.block_index != Some(bi) {
                        continue;
                    }
                    let ov = cell.rect.overlap_area(&pr);
                    if ov > 0.0 {
                        let n = layers[li].nodes.start + ci;
                        let w = ov / area;
                        nodes[n].power_block_weights.insert(pb.id.clone(), w);
                        entries.push((n, w));
                    }
                }
                power_blocks.push(pb.id.clone());
                power_map.push(entries);
            }
        }
    }

    Ok(RCModel {
        name: spec.name.clone(),
        ambient_c: spec.ambient_c,
        footprint,
        layers,
        nodes,
        couplings,
        power_blocks,
        power_map,
    })
}

fn lateral_conductance(a: &Cell, b: &Cell, lz: f64) -> Option<f64> {
    let (ra, rb) = (&a.rect, &b.rect);
    // Faces normal to x.
    if (ra.x1 - rb.x0).abs() <= EPS || (rb.x1 - ra.x0).abs() <= EPS {
        let shared = interval_overlap(ra.y0, ra.y1, rb.y0, rb.y1);
        if shared > 0.0 {
            let area = shared * lz;
            let r = ra.width() / (2.0 * a.material.k_x * area) + rb.width() / (2.0 * b.material.k_x * area);
            return Some(1.0 / r);
        }
    }
    // Faces normal to y.
    if (ra.y1 - rb.y0).abs() <= EPS || (rb.y1 - ra.y0).abs() <= EPS {
        let shared = interval_overlap(ra.x0, ra.x1, rb.x0, rb.x1);
        if shared > 0.0 {
            let area = shared * lz;
            let r = ra.height() / (2.0 * a.material.k_y * area) + rb.height() / (2.0 * b.material.k_y * area);
            return Some(1.0 / r);
        }
    }
    None
}

impl RCModel {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(NodeRecord::id).collect()
    }

    pub fn capacitances(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.capacitance).collect()
    }

    pub fn convection(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.g_conv).collect()
    }

    pub fn chiplet_mask(&self) -> Vec<bool> {
        self.nodes.iter().map(|n| n.is_chiplet).collect()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerInfo> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn power_index(&self, id: &str) -> Option<usize> {
        self.power_blocks.iter().position(|p| p == id)
    }

    /// Diagonal of `G`: `-(Σ_j G_ij + G_conv,i)`.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.nodes.iter().map(|n| -n.g_conv).collect();
        for &(i, j, g) in &self.couplings {
            d[i] -= g;
            d[j] -= g;
        }
        d
    }

    fn g_coo(&self) -> CooMatrix<f64> {
        let n = self.len();
        let mut coo = CooMatrix::new(n, n);
        for (i, d) in self.diagonal().into_iter().enumerate() {
            coo.push(i, i, d);
        }
        for &(i, j, g) in &self.couplings {
            coo.push(i, j, g);
            coo.push(j, i, g);
        }
        coo
    }

    /// Full conductance matrix `G` in CSR form.
    pub fn g_csr(&self) -> CsrMatrix<f64> {
        CsrMatrix::from(&self.g_coo())
    }

    pub fn g_csc(&self) -> CscMatrix<f64> {
        CscMatrix::from(&self.g_coo())
    }

    pub fn g_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for (i, d) in self.diagonal().into_iter().enumerate() {
            g[(i, i)] = d;
        }
        for &(i, j, v) in &self.couplings {
            g[(i, j)] += v;
            g[(j, i)] += v;
        }
        g
    }

    /// Dense `N × P` routing matrix from power-block watts to node watts.
    pub fn routing_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.len(), self.power_blocks.len());
        for (p, entries) in self.power_map.iter().enumerate() {
            for &(n, w) in entries {
                e[(n, p)] += w;
            }
        }
        e
    }

    /// Per-node heat injection for per-power-block watts in model order.
    pub fn inject(&self, powers: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.len()];
        self.inject_into(powers, &mut q);
        q
    }

    pub(crate) fn inject_into(&self, powers: &[f64], q: &mut [f64]) {
        q.iter_mut().for_each(|v| *v = 0.0);
        for (entries, &p) in self.power_map.iter().zip(powers) {
            if p != 0.0 {
                for &(n, w) in entries {
                    q[n] += w * p;
                }
            }
        }
    }

    /// Converts a map of power-block watts into model order. Unknown ids are
    /// an error; blocks absent from the map draw no power.
    pub fn power_vector(&self, powers: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.power_blocks.len()];
        for (id, &w) in powers {
            let p = self
                .power_index(id)
                .ok_or_else(|| Error::domain(format!("unknown power block {id:?}")))?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::domain(format!("power of {id:?} is {w}, must be >= 0")));
            }
            v[p] = w;
        }
        Ok(v)
    }

    /// Node whose footprint contains `(x, y)` in the given layer. Points on
    /// shared edges resolve to the cell with the lower coordinates.
    pub fn node_lookup(&self, layer: &str, x: f64, y: f64) -> Result<usize> {
        let info = self
            .layer(layer)
            .ok_or_else(|| Error::domain(format!("unknown layer {layer:?}")))?;
        self.nodes[info.nodes.clone()]
            .iter()
            .filter(|n| n.rect().contains_point(x, y))
            .min_by(|a, b| {
                let (ra, rb) = (a.rect(), b.rect());
                ra.x0
                    .total_cmp(&rb.x0)
                    .then(ra.y0.total_cmp(&rb.y0))
                    .then(a.index.cmp(&b.index))
            })
            .map(|n| n.index)
            .ok_or_else(|| {
                Error::domain(format!(
                    "position ({x}, {y}) is not covered by any node of layer {layer:?}"
                ))
            })
    }

    /// Serializes to the text model format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = |v: f64| format!("{v:.16e}");
        let _ = writeln!(s, "mfit-model {MODEL_FORMAT_VERSION}");
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "ambient_c {}", f(self.ambient_c));
        let fp = &self.footprint;
        let _ = writeln!(s, "footprint_m {} {} {} {}", f(fp.x0), f(fp.y0), f(fp.x1), f(fp.y1));

        let _ = writeln!(s, "[layers] {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                l.name,
                l.z_order,
                f(l.z0),
                f(l.thickness),
                l.nodes.start,
                l.nodes.end
            );
        }

        let _ = writeln!(s, "[nodes] {}", self.nodes.len());
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                n.index,
                n.layer,
                n.block,
                n.cell.0,
                n.cell.1,
                f(n.center[0]),
                f(n.center[1]),
                f(n.center[2]),
                f(n.extents[0]),
                f(n.extents[1]),
                f(n.extents[2]),
                u8::from(n.is_chiplet)
            );
        }

        let _ = writeln!(s, "[conductances] {}", self.couplings.len());
        for &(i, j, g) in &self.couplings {
            let _ = writeln!(s, "{i},{j},{}", f(g));
        }

        let _ = writeln!(s, "[convection] {}", self.nodes.len());
        for n in &self.nodes {
            let _ = writeln!(s, "{},{}", n.index, f(n.g_conv));
        }

        let _ = writeln!(s, "[capacitance] {}", self.nodes.len());
        for n in &self.nodes {
            let _ = writeln!(s, "{},{}", n.index, f(n.capacitance));
        }

        let pairs: usize = self.power_map.iter().map(Vec::len).sum();
        let _ = writeln!(s, "[power_blocks] {}", self.power_blocks.len());
        for id in &self.power_blocks {
            let _ = writeln!(s, "{id}");
        }
        let _ = writeln!(s, "[power_map] {pairs}");
        for (p, entries) in self.power_map.iter().enumerate() {
            for &(n, w) in entries {
                let _ = writeln!(s, "{},{n},{}", self.power_blocks[p], f(w));
            }
        }
        s
    }

    /// Hex SHA-256 of the serialized model.
    pub fn fingerprint(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text_named(&text, &path.display().to_string())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_text_named(text, "<model>")
    }

    fn from_text_named(text: &str, file: &str) -> Result<Self> {
        let mut r = LineReader::new(text, file);
        let header = r.next_line()?;
        if header != format!("mfit-model {MODEL_FORMAT_VERSION}") {
            return Err(r.err(format!("unsupported model header {header:?}")));
        }
        let name = r.keyed("name")?.to_string();
        let v = r.keyed("ambient_c")?;
        let ambient_c = r.float(v)?;
        let fp_text = r.keyed("footprint_m")?;
        let fp: Vec<f64> = fp_text
            .split_whitespace()
            .map(|t| r.float(t))
            .collect::<Result<_>>()?;
        if fp.len() != 4 {
            return Err(r.err("footprint_m needs four values"));
        }
        let footprint = Rect { x0: fp[0], y0: fp[1], x1: fp[2], y1: fp[3] };

        let mut layers = Vec::new();
        for _ in 0..r.section("layers")? {
            let f = r.fields(6)?;
            layers.push(LayerInfo {
                name: f[0].to_string(),
                z_order: r.int(f[1])? as u32,
                z0: r.float(f[2])?,
                thickness: r.float(f[3])?,
                nodes: r.int(f[4])?..r.int(f[5])?,
            });
        }

        let n_nodes = r.section("nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for k in 0..n_nodes {
            let f = r.fields(12)?;
            let index = r.int(f[0])?;
            if index != k {
                return Err(r.err(format!("node index {index}, expected {k}")));
            }
            nodes.push(NodeRecord {
                index,
                layer: f[1].to_string(),
                block: f[2].to_string(),
                cell: (r.int(f[3])?, r.int(f[4])?),
                center: [r.float(f[5])?, r.float(f[6])?, r.float(f[7])?],
                extents: [r.float(f[8])?, r.float(f[9])?, r.float(f[10])?],
                capacitance: 0.0,
                g_conv: 0.0,
                is_chiplet: r.int(f[11])? != 0,
                power_block_weights: BTreeMap::new(),
            });
        }

        let mut couplings = Vec::new();
        for _ in 0..r.section("conductances")? {
            let f = r.fields(3)?;
            let (i, j) = (r.int(f[0])?, r.int(f[1])?);
            if i >= j || j >= n_nodes {
                return Err(r.err(format!("bad coupling indices ({i}, {j})")));
            }
            couplings.push((i, j, r.float(f[2])?));
        }
        for _ in 0..r.section("convection")? {
            let f = r.fields(2)?;
            let i = r.node(f[0], n_nodes)?;
            nodes[i].g_conv = r.float(f[1])?;
        }
        for _ in 0..r.section("capacitance")? {
            let f = r.fields(2)?;
            let i = r.node(f[0], n_nodes)?;
            nodes[i].capacitance = r.float(f[1])?;
        }
        let mut power_blocks = Vec::new();
        for _ in 0..r.section("power_blocks")? {
            power_blocks.push(r.next_line()?.to_string());
        }
        let mut power_map = vec![Vec::new(); power_blocks.len()];
        for _ in 0..r.section("power_map")? {
            let f = r.fields(3)?;
            let p = power_blocks
                .iter()
                .position(|id| id == f[0])
                .ok_or_else(|| r.err(format!("unknown power block {:?}", f[0])))?;
            let n = r.node(f[1], n_nodes)?;
            let w = r.float(f[2])?;
            nodes[n].power_block_weights.insert(f[0].to_string(), w);
            power_map[p].push((n, w));
        }
        if let Some(n) = nodes.iter().find(|n| !(n.capacitance > 0.0)) {
            return Err(Error::parse(file, 0, format!("node {} has no positive capacitance", n.index)));
        }

        Ok(RCModel {
            name,
            ambient_c,
            footprint,
            layers,
            nodes,
            couplings,
            power_blocks,
            power_map,
        })
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Line-oriented reader shared by the model and DSS text formats.
pub(crate) struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    file: &'a str,
    line: usize,
}

impl<'a> LineReader<'a> {
    pub(crate) fn new(text: &'a str, file: &'a str) -> Self {
        LineReader { lines: text.lines().enumerate(), file, line: 0 }
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.file, self.line, msg)
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((k, l)) => {
                self.line = k + 1;
                Ok(l.trim_end())
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    pub(crate) fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next_line()?;
        l.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{key} ...`, found {l:?}")))
    }

    pub(crate) fn section(&mut self, name: &str) -> Result<usize> {
        let rest = self.keyed(&format!("[{name}]"))?;
        self.int(rest)
    }

    pub(crate) fn fields(&mut self, n: usize) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != n {
            return Err(self.err(format!("expected {n} fields, found {}", f.len())));
        }
        Ok(f)
    }

    pub(crate) fn float(&self, t: &str) -> Result<f64> {
        t.trim()
            .parse()
            .map_err(|_| self.err(format!("invalid number {t:?}")))
    }

    pub(crate) fn int(&self, t: &str) -> Result<usize> {
        t.trim()
            .parse()
            .map_err(|_| self.err(format!("invalid integer {t:?}")))
    }

    fn node(&self, t: &str, n: usize) -> Result<usize> {
        let i = self.int(t)?;
        if i >= n {
            return Err(self.err(format!("node index {i} out of range")));
        }
        Ok(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::package::{BoundarySpec, Block, Layer, PowerBlock};
    use approx::assert_relative_eq;

    fn material(k: f64) -> Material {
        Material { name: "m".into(), k_x: k, k_y: k, k_z: k, rho: 2000.0, c_v: 800.0 }
    }

    fn layer(name: &str, z: u32, grid: [u32; 2]) -> Layer {
        Layer {
            name: name.into(),
            z_order: z,
            thickness_m: 1e-3,
            material: "m".into(),
            grid,
            blocks: vec![],
        }
    }

    fn spec(layers: Vec<Layer>) -> PackageSpec {
        PackageSpec {
            name: "t".into(),
            ambient_c: 25.0,
            footprint_m: Some([1e-3, 1e-3]),
            boundary: BoundarySpec { top_htc: 100.0, bottom_htc: 0.0, lateral_htc: 0.0 },
            materials: vec![material(1.0)],
            layers,
        }
    }

    #[test]
    fn unit_cube_node() {
        let model = build_rc(&spec(vec![layer("a", 0, [1, 1])])).unwrap();
        assert_eq!(model.len(), 1);
        let n = &model.nodes[0];
        // G_x = k·l_y·l_z/l_x = 1e-3 W/K for a 1 mm cube with k = 1.
        let [lx, ly, lz] = n.extents;
        assert_relative_eq!(1.0 * ly * lz / lx, 1e-3, max_relative = 1e-12);
        assert_relative_eq!(n.capacitance, 2000.0 * 800.0 * 1e-9, max_relative = 1e-12);
        assert_relative_eq!(n.g_conv, 100.0 * 1e-6, max_relative = 1e-12);
        assert_eq!(n.id(), "a/_/0_0");
    }

    #[test]
    fn stacked_layers_collapse_to_center_to_center() {
        let model = build_rc(&spec(vec![layer("a", 0, [1, 1]), layer("b", 1, [1, 1])])).unwrap();
        assert_eq!(model.couplings.len(), 1);
        let (i, j, g) = model.couplings[0];
        assert_eq!((i, j), (0, 1));
        // k·A/l_z with the two half-cells in series.
        assert_relative_eq!(g, 1.0 * 1e-6 / 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn coarse_under_fine_splits_evenly() {
        let model = build_rc(&spec(vec![layer("a", 0, [1, 1]), layer("b", 1, [2, 2])])).unwrap();
        let vertical: Vec<f64> = model
            .couplings
            .iter()
            .filter(|(i, _, _)| *i == 0)
            .map(|c| c.2)
            .collect();
        assert_eq!(vertical.len(), 4);
        for g in &vertical {
            assert_relative_eq!(*g, vertical[0], max_relative = 1e-15);
            assert_relative_eq!(*g, 1e-6 / 4.0 / 1e-3, max_relative = 1e-12);
        }
    }

    #[test]
    fn lateral_series_half_cells() {
        let mut s = spec(vec![layer("a", 0, [2, 1])]);
        s.footprint_m = Some([2e-3, 1e-3]);
        let model = build_rc(&s).unwrap();
        assert_eq!(model.couplings.len(), 1);
        // Two 1 mm cells, k = 1: G = k·A/l = 1·(1e-3·1e-3)/1e-3.
        assert_relative_eq!(model.couplings[0].2, 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn rows_sum_to_minus_convection() {
        let model = build_rc(&spec(vec![layer("a", 0, [3, 2]), layer("b", 1, [2, 3])])).unwrap();
        let g = model.g_dense();
        for i in 0..model.len() {
            let row: f64 = g.row(i).iter().sum();
            assert_relative_eq!(row, -model.nodes[i].g_conv, epsilon = 1e-15);
        }
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn abutting_blocks_couple() {
        let mut s = spec(vec![layer("a", 0, [1, 1])]);
        s.footprint_m = Some([2e-3, 1e-3]);
        let block = |name: &str, x: f64, grid: [u32; 2]| Block {
            name: name.into(),
            origin_m: [x, 0.0],
            size_m: [1e-3, 1e-3],
            material: None,
            grid,
            chiplet: false,
            capacitance_scale: 1.0,
            power_blocks: vec![],
        };
        s.layers[0].blocks = vec![block("l", 0.0, [1, 1]), block("r", 1e-3, [1, 2])];
        let model = build_rc(&s).unwrap();
        // Left cell touches both right cells, right cells touch each other.
        assert_eq!(model.couplings.len(), 3);
    }

    #[test]
    fn isolated_block_is_build_error() {
        let mut s = spec(vec![layer("a", 0, [1, 1]), layer("b", 1, [1, 1])]);
        s.footprint_m = Some([2e-3, 1e-3]);
        let block = |name: &str, x: f64| Block {
            name: name.into(),
            origin_m: [x, 0.0],
            size_m: [0.5e-3, 1e-3],
            material: None,
            grid: [1, 1],
            chiplet: false,
            capacitance_scale: 1.0,
            power_blocks: vec![],
        };
        s.layers[0].blocks = vec![block("l", 0.0), block("r", 1.5e-3)];
        s.layers[1].blocks = vec![block("cap", 0.0)];
        match build_rc(&s) {
            Err(Error::Build(msg)) => assert!(msg.contains("a/r/0_0"), "{msg}"),
            other => panic!("expected build error, got {other:?}"),
        }
    }

    #[test]
    fn power_weights_partition() {
        let mut s = spec(vec![layer("a", 0, [1, 1])]);
        s.layers[0].blocks = vec![Block {
            name: "chip".into(),
            origin_m: [0.0, 0.0],
            size_m: [1e-3, 1e-3],
            material: None,
            grid: [2, 2],
            chiplet: true,
            capacitance_scale: 2.0,
            power_blocks: vec![PowerBlock {
                id: "core".into(),
                origin_m: [0.1e-3, 0.2e-3],
                size_m: [0.7e-3, 0.5e-3],
            }],
        }];
        let model = build_rc(&s).unwrap();
        let total: f64 = model.power_map[0].iter().map(|e| e.1).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert_eq!(model.power_map[0].len(), 4);
        assert_relative_eq!(
            model.nodes[0].capacitance,
            2.0 * 2000.0 * 800.0 * 0.25e-9,
            max_relative = 1e-12
        );
    }

    #[test]
    fn lookup_tie_breaks_low() {
        let model = build_rc(&spec(vec![layer("a", 0, [2, 2])])).unwrap();
        assert_eq!(model.nodes[model.node_lookup("a", 0.0, 0.0).unwrap()].cell, (0, 0));
        assert_eq!(model.nodes[model.node_lookup("a", 0.5e-3, 0.2e-3).unwrap()].cell, (0, 0));
        assert_eq!(model.nodes[model.node_lookup("a", 0.5e-3, 0.5e-3).unwrap()].cell, (0, 0));
        assert_eq!(model.nodes[model.node_lookup("a", 0.8e-3, 0.7e-3).unwrap()].cell, (1, 1));
        assert!(model.node_lookup("a", 2e-3, 0.0).is_err());
        assert!(model.node_lookup("nope", 0.0, 0.0).is_err());

        let single = build_rc(&spec(vec![layer("a", 0, [1, 1])])).unwrap();
        assert_eq!(single.node_lookup("a", 0.5e-3, 0.5e-3).unwrap(), 0);
    }

    #[test]
    fn text_round_trip() {
        let model = build_rc(&spec(vec![layer("a", 0, [2, 1]), layer("b", 1, [1, 2])])).unwrap();
        let back = RCModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.fingerprint(), model.fingerprint());
    }

    #[test]
    fn truncated_model_is_parse_error() {
        let model = build_rc(&spec(vec![layer("a", 0, [2, 1])])).unwrap();
        let text = model.to_text();
        let cut: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(matches!(RCModel::from_text(&cut), Err(Error::Parse { .. })));
    }
}
