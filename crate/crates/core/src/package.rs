//! Declarative package description: materials, layer stack, blocks, power
//! injection sites and boundary conditions.
//!
//! Documents are TOML. Units are fixed per key and carried in the key name
//! where a length is involved (`thickness_m`, `origin_m`, `size_m`); there is
//! no unit inference. A key with a different unit suffix is rejected as an
//! unknown field.
//!
//! ```toml
//! name = "one-node"
//! ambient_c = 25.0
//! footprint_m = [0.001, 0.001]
//!
//! [boundary]
//! top_htc = 100.0
//! bottom_htc = 0.0
//!
//! [[materials]]
//! name = "si"
//! k_x = 150.0
//! k_y = 150.0
//! k_z = 150.0
//! rho = 2330.0
//! c_v = 700.0
//!
//! [[layers]]
//! name = "die"
//! z_order = 0
//! thickness_m = 0.001
//! material = "si"
//! grid = [1, 1]
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;

/// Placeholder block name for nodes of a layer that has no explicit blocks.
pub const DEFAULT_REGION: &str = "_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    /// Thermal conductivity along x, W/(m·K).
    pub k_x: f64,
    pub k_y: f64,
    pub k_z: f64,
    /// Density, kg/m³.
    pub rho: f64,
    /// Mass specific heat, J/(kg·K).
    pub c_v: f64,
}

impl Material {
    /// Volumetric heat capacity ρ·c_v in J/(m³·K).
    pub fn volumetric_heat_capacity(&self) -> f64 {
        self.rho * self.c_v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    /// Heatsink side (top of the highest layer), W/(m²·K).
    pub top_htc: f64,
    pub bottom_htc: f64,
    #[serde(default)]
    pub lateral_htc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerBlock {
    pub id: String,
    /// Relative to the parent block origin.
    pub origin_m: [f64; 2],
    pub size_m: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub name: String,
    pub origin_m: [f64; 2],
    pub size_m: [f64; 2],
    /// Falls back to the layer material when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    pub grid: [u32; 2],
    /// Heat source flag; only chiplet blocks may carry power blocks.
    #[serde(default, skip_serializing_if = "is_false")]
    pub chiplet: bool,
    #[serde(default = "unit_scale")]
    pub capacitance_scale: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub power_blocks: Vec<PowerBlock>,
}

impl Block {
    pub fn rect(&self) -> Rect {
        Rect::from_origin_size(self.origin_m, self.size_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub name: String,
    pub z_order: u32,
    pub thickness_m: f64,
    pub material: String,
    /// Grid over the whole footprint when the layer has no blocks. For layers
    /// with blocks only the blocks are meshed.
    pub grid: [u32; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageSpec {
    pub name: String,
    pub ambient_c: f64,
    /// Package outline `[w, h]` anchored at the origin. When omitted it is the
    /// bounding box of all blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprint_m: Option<[f64; 2]>,
    pub boundary: BoundarySpec,
    pub materials: Vec<Material>,
    pub layers: Vec<Layer>,
}

fn unit_scale() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev} at {}: {}", self.path, self.message)
    }
}

impl PackageSpec {
    /// Package outline in the x-y plane.
    pub fn footprint(&self) -> Rect {
        if let Some([w, h]) = self.footprint_m {
            return Rect::from_origin_size([0.0, 0.0], [w, h]);
        }
        let mut fp = Rect { x0: 0.0, y0: 0.0, x1: 0.0, y1: 0.0 };
        for b in self.layers.iter().flat_map(|l| &l.blocks) {
            let r = b.rect();
            fp.x0 = fp.x0.min(r.x0);
            fp.y0 = fp.y0.min(r.y0);
            fp.x1 = fp.x1.max(r.x1);
            fp.y1 = fp.y1.max(r.y1);
        }
        fp
    }

    pub fn material(&self, name: &str) -> Option<&Material> {
        self.materials.iter().find(|m| m.name == name)
    }

    /// Layers sorted bottom to top.
    pub fn stack(&self) -> Vec<&Layer> {
        let mut layers: Vec<&Layer> = self.layers.iter().collect();
        layers.sort_by_key(|l| l.z_order);
        layers
    }

    /// All power block ids in document order.
    pub fn power_block_ids(&self) -> Vec<String> {
        self.stack()
            .into_iter()
            .flat_map(|l| &l.blocks)
            .flat_map(|b| &b.power_blocks)
            .map(|p| p.id.clone())
            .collect()
    }

    /// Sum of layer thicknesses in meters.
    pub fn thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness_m).sum()
    }

    /// Rectangles of material present in a layer.
    /// Meshed regions of a layer: its blocks, or the whole footprint.
    pub fn layer_regions(&self, layer: &Layer) -> Vec<Rect> {
        if layer.blocks.is_empty() {
            vec![self.footprint()]
        } else {
            layer.blocks.iter().map(Block::rect).collect()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Domain(format!("cannot serialize package: {e}")))
    }
}

/// Parses and validates a package document.
pub fn parse_package(document: &str) -> Result<PackageSpec> {
    let de = toml::Deserializer::new(document);
    let spec: PackageSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            path: if path.is_empty() { ".".into() } else { path },
            message: e.into_inner().message().trim().to_string(),
        }
    })?;
    let diagnostics = validate_package(&spec);
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(Error::Invalid(diagnostics));
    }
    Ok(spec)
}

pub fn load_package(path: impl AsRef<std::path::Path>) -> Result<PackageSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_package(&text)
}

fn bad_identifier(name: &str) -> bool {
    name.is_empty()
        || name == DEFAULT_REGION
        || name
            .chars()
            .any(|c| c == '/' || c == ',' || c == '#' || c.is_whitespace())
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        });
    }
}

/// Checks every package invariant and returns one diagnostic per violation.
pub fn validate_package(spec: &PackageSpec) -> Vec<Diagnostic> {
    let mut out = Collector(Vec::new());

    if spec.name.is_empty() {
        out.error("name", "package name is empty");
    }
    if !spec.ambient_c.is_finite() {
        out.error("ambient_c", "ambient temperature is not finite");
    }

    let b = &spec.boundary;
    for (key, v) in [
        ("top_htc", b.top_htc),
        ("bottom_htc", b.bottom_htc),
        ("lateral_htc", b.lateral_htc),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            out.error(format!("boundary.{key}"), format!("heat transfer coefficient {v} must be >= 0"));
        }
    }
    if !(b.top_htc > 0.0 || b.bottom_htc > 0.0 || b.lateral_htc > 0.0) {
        out.error("boundary", "no heat sink: all heat transfer coefficients are zero");
    }

    let mut material_names = HashSet::new();
    for (mi, m) in spec.materials.iter().enumerate() {
        let path = format!("materials[{mi}]");
        if bad_identifier(&m.name) {
            out.error(&path, format!("invalid material name {:?}", m.name));
        }
        if !material_names.insert(m.name.as_str()) {
            out.error(&path, format!("duplicate material {:?}", m.name));
        }
        for (key, v) in [("k_x", m.k_x), ("k_y", m.k_y), ("k_z", m.k_z), ("rho", m.rho), ("c_v", m.c_v)] {
            if !positive(v) {
                out.error(format!("{path}.{key}"), format!("{key} = {v} must be > 0"));
            }
        }
    }

    let footprint_ok = match spec.footprint_m {
        Some([w, h]) => {
            let ok = positive(w) && positive(h);
            if !ok {
                out.error("footprint_m", "footprint dimensions must be > 0");
            }
            ok
        }
        None => {
            let fp = spec.footprint();
            let ok = fp.width() > 0.0 && fp.height() > 0.0;
            if !ok {
                out.error("footprint_m", "footprint_m is required when no layer has blocks");
            }
            ok
        }
    };
    let footprint = spec.footprint();

    if spec.layers.is_empty() {
        out.error("layers", "package has no layers");
    }
    let mut z_orders: Vec<u32> = spec.layers.iter().map(|l| l.z_order).collect();
    z_orders.sort_unstable();
    for (expected, z) in z_orders.iter().enumerate() {
        if *z as usize != expected {
            out.error(
                "layers",
                format!("layer z_order values must be consecutive from 0, found {z_orders:?}"),
            );
            break;
        }
    }

    let mut layer_names = HashSet::new();
    let mut power_ids: HashMap<&str, String> = HashMap::new();
    for (li, layer) in spec.layers.iter().enumerate() {
        let lpath = format!("layers[{li}]");
        if bad_identifier(&layer.name) {
            out.error(&lpath, format!("invalid layer name {:?}", layer.name));
        }
        if !layer_names.insert(layer.name.as_str()) {
            out.error(&lpath, format!("duplicate layer {:?}", layer.name));
        }
        if !positive(layer.thickness_m) {
            out.error(format!("{lpath}.thickness_m"), "thickness must be > 0");
        }
        if !material_names.contains(layer.material.as_str()) {
            out.error(
                format!("{lpath}.material"),
                format!("unknown material {:?}", layer.material),
            );
        }
        if layer.grid.contains(&0) {
            out.error(format!("{lpath}.grid"), "grid dimensions must be >= 1");
        }

        let mut block_names = HashSet::new();
        for (bi, block) in layer.blocks.iter().enumerate() {
            let bpath = format!("{lpath}.blocks[{bi}]");
            if bad_identifier(&block.name) {
                out.error(&bpath, format!("invalid block name {:?}", block.name));
            }
            if !block_names.insert(block.name.as_str()) {
                out.error(&bpath, format!("duplicate block {:?} in layer {:?}", block.name, layer.name));
            }
            let size_ok = positive(block.size_m[0]) && positive(block.size_m[1]);
            if !size_ok {
                out.error(format!("{bpath}.size_m"), "block size must be > 0");
            }
            if !block.origin_m.iter().all(|v| v.is_finite()) {
                out.error(format!("{bpath}.origin_m"), "block origin is not finite");
            }
            if block.grid.contains(&0) {
                out.error(format!("{bpath}.grid"), "grid dimensions must be >= 1");
            }
            if let Some(m) = &block.material {
                if !material_names.contains(m.as_str()) {
                    out.error(format!("{bpath}.material"), format!("unknown material {m:?}"));
                }
            }
            if !positive(block.capacitance_scale) {
                out.error(
                    format!("{bpath}.capacitance_scale"),
                    format!("capacitance_scale = {} must be > 0", block.capacitance_scale),
                );
            }
            if footprint_ok && size_ok && !footprint.contains_rect(&block.rect()) {
                out.error(&bpath, format!("block {:?} extends outside the package footprint", block.name));
            }
            if !block.power_blocks.is_empty() && !block.chiplet {
                out.error(
                    format!("{bpath}.power_blocks"),
                    format!("block {:?} has power blocks but is not flagged as a chiplet", block.name),
                );
            }
            if block.chiplet && block.power_blocks.is_empty() {
                out.warning(&bpath, format!("chiplet {:?} has no power blocks", block.name));
            }

            let parent = Rect::from_origin_size([0.0, 0.0], block.size_m);
            for (pi, pb) in block.power_blocks.iter().enumerate() {
                let ppath = format!("{bpath}.power_blocks[{pi}]");
                if bad_identifier(&pb.id) {
                    out.error(&ppath, format!("invalid power block id {:?}", pb.id));
                }
                if let Some(first) = power_ids.insert(pb.id.as_str(), ppath.clone()) {
                    out.error(&ppath, format!("power block id {:?} already used at {first}", pb.id));
                }
                let pr = Rect::from_origin_size(pb.origin_m, pb.size_m);
                if !(positive(pb.size_m[0]) && positive(pb.size_m[1])) {
                    out.error(format!("{ppath}.size_m"), "power block size must be > 0");
                } else if size_ok && !parent.contains_rect(&pr) {
                    out.error(&ppath, format!("power block {:?} lies outside block {:?}", pb.id, block.name));
                }
            }
            for (pi, pa) in block.power_blocks.iter().enumerate() {
                for pb in &block.power_blocks[pi + 1..] {
                    let ra = Rect::from_origin_size(pa.origin_m, pa.size_m);
                    let rb = Rect::from_origin_size(pb.origin_m, pb.size_m);
                    if ra.overlaps(&rb) {
                        out.error(
                            format!("{bpath}.power_blocks"),
                            format!("power blocks {:?} and {:?} overlap", pa.id, pb.id),
                        );
                    }
                }
            }
        }

        for (bi, a) in layer.blocks.iter().enumerate() {
            for (bj, b) in layer.blocks.iter().enumerate().skip(bi + 1) {
                if a.rect().overlaps(&b.rect()) {
                    out.error(
                        format!("{lpath}.blocks[{bi}]"),
                        format!(
                            "blocks {:?} and {:?} overlap (blocks[{bi}] and blocks[{bj}])",
                            a.name, b.name
                        ),
                    );
                }
            }
        }
    }

    // Adjacent layers must share area or the stack is disconnected.
    if footprint_ok {
        let stack = spec.stack();
        for pair in stack.windows(2) {
            let (lower, upper) = (pair[0], pair[1]);
            if lower.z_order + 1 != upper.z_order {
                continue;
            }
            let ra = spec.layer_regions(lower);
            let rb = spec.layer_regions(upper);
            let shared: f64 = ra
                .iter()
                .flat_map(|a| rb.iter().map(move |b| a.overlap_area(b)))
                .sum();
            if shared <= 0.0 {
                out.error(
                    "layers",
                    format!(
                        "layers {:?} and {:?} do not overlap in the x-y plane (disconnected stack)",
                        lower.name, upper.name
                    ),
                );
            }
        }
    }

    out.0
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
ambient_c = 25.0
footprint_m = [0.001, 0.001]

[boundary]
top_htc = 100.0
bottom_htc = 0.0

[[materials]]
name = "si"
k_x = 1.0
k_y = 1.0
k_z = 1.0
rho = 1000.0
c_v = 500.0

[[layers]]
name = "die"
z_order = 0
thickness_m = 0.001
material = "si"
grid = [1, 1]
"#;

    fn minimal() -> PackageSpec {
        parse_package(MINIMAL).unwrap()
    }

    fn errors(spec: &PackageSpec) -> Vec<Diagnostic> {
        validate_package(spec)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect()
    }

    #[test]
    fn minimal_document_parses() {
        let spec = minimal();
        assert_eq!(spec.layers.len(), 1);
        assert_eq!(spec.boundary.lateral_htc, 0.0);
        assert!(validate_package(&spec).is_empty());
    }

    #[test]
    fn missing_key_reports_path() {
        let doc = MINIMAL.replace("rho = 1000.0\n", "");
        match parse_package(&doc) {
            Err(Error::Schema { path, message }) => {
                assert!(path.starts_with("materials"), "{path}");
                assert!(message.contains("rho"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_unit_tag_is_schema_error() {
        let doc = MINIMAL.replace("thickness_m = 0.001", "thickness_mm = 1.0");
        match parse_package(&doc) {
            Err(Error::Schema { path, message }) => {
                assert!(path.starts_with("layers[0]"), "{path}");
                assert!(message.contains("thickness_mm"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_blocks_name_both() {
        let mut spec = minimal();
        spec.footprint_m = Some([0.01, 0.01]);
        let block = |name: &str, x: f64| Block {
            name: name.into(),
            origin_m: [x, 0.0],
            size_m: [0.002, 0.002],
            material: None,
            grid: [1, 1],
            chiplet: false,
            capacitance_scale: 1.0,
            power_blocks: vec![],
        };
        spec.layers[0].blocks = vec![block("left", 0.0), block("right", 0.002 - 1e-6)];
        let errs = errors(&spec);
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert!(errs[0].message.contains("\"left\"") && errs[0].message.contains("\"right\""));

        // Touching edges are fine.
        spec.layers[0].blocks[1].origin_m[0] = 0.002;
        assert!(errors(&spec).is_empty());
    }

    #[test]
    fn no_heat_sink() {
        let mut spec = minimal();
        spec.boundary.top_htc = 0.0;
        let errs = errors(&spec);
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("no heat sink"));
    }

    #[test]
    fn zero_capacitance_scale() {
        let mut spec = minimal();
        spec.layers[0].blocks.push(Block {
            name: "b".into(),
            origin_m: [0.0, 0.0],
            size_m: [0.001, 0.001],
            material: None,
            grid: [1, 1],
            chiplet: false,
            capacitance_scale: 0.0,
            power_blocks: vec![],
        });
        let errs = errors(&spec);
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert_eq!(errs[0].path, "layers[0].blocks[0].capacitance_scale");
    }

    #[test]
    fn dangling_material_and_z_gap() {
        let mut spec = minimal();
        spec.layers[0].material = "cu".into();
        let mut upper = spec.layers[0].clone();
        upper.name = "top".into();
        upper.material = "si".into();
        upper.z_order = 2;
        spec.layers.push(upper);
        let errs = errors(&spec);
        assert!(errs.iter().any(|d| d.path == "layers[0].material"));
        assert!(errs.iter().any(|d| d.message.contains("consecutive")));
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn power_blocks_require_chiplet_and_unique_ids() {
        let mut spec = minimal();
        let pb = PowerBlock { id: "p".into(), origin_m: [0.0, 0.0], size_m: [0.0005, 0.0005] };
        let mut block = Block {
            name: "c0".into(),
            origin_m: [0.0, 0.0],
            size_m: [0.0005, 0.001],
            material: None,
            grid: [1, 1],
            chiplet: false,
            capacitance_scale: 1.0,
            power_blocks: vec![pb.clone()],
        };
        spec.layers[0].blocks.push(block.clone());
        assert_eq!(errors(&spec).len(), 1);

        block.chiplet = true;
        spec.layers[0].blocks[0] = block.clone();
        block.name = "c1".into();
        block.origin_m = [0.0005, 0.0];
        spec.layers[0].blocks.push(block);
        let errs = errors(&spec);
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert!(errs[0].message.contains("already used"));
    }

    #[test]
    fn disconnected_stack_is_diagnosed() {
        let mut spec = minimal();
        spec.footprint_m = Some([0.004, 0.001]);
        let mut upper = spec.layers[0].clone();
        upper.name = "upper".into();
        upper.z_order = 1;
        upper.blocks.push(Block {
            name: "island".into(),
            origin_m: [0.0, 0.0],
            size_m: [0.001, 0.001],
            material: None,
            grid: [1, 1],
            chiplet: false,
            capacitance_scale: 1.0,
            power_blocks: vec![],
        });
        spec.layers[0].blocks.push(Block {
            name: "far".into(),
            origin_m: [0.003, 0.0],
            size_m: [0.001, 0.001],
            material: None,
            grid: [1, 1],
            chiplet: false,
            capacitance_scale: 1.0,
            power_blocks: vec![],
        });
        spec.layers.push(upper);
        let errs = errors(&spec);
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert!(errs[0].message.contains("disconnected"));
    }

    #[test]
    fn round_trip_is_stable() {
        let spec = minimal();
        let text = spec.to_toml().unwrap();
        assert_eq!(parse_package(&text).unwrap(), spec);
    }
}
