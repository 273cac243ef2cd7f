//! Homogenized parameters for abstracted sub-structures: equivalent
//! conductivity of a measured slab, heat-capacity preserving averages of
//! composite layers (µ-bumps in underfill, TSV arrays), and the equivalent
//! heat transfer coefficient of a finned air-cooled heatsink.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::package::Material;

/// Tolerance on the sum of volume fractions.
pub const FRACTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constituent {
    pub volume_fraction: f64,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeLayerSpec {
    pub constituents: Vec<Constituent>,
    pub thickness_m: f64,
    pub area_m2: f64,
}

impl CompositeLayerSpec {
    pub fn volume(&self) -> f64 {
        self.thickness_m * self.area_m2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentCapacity {
    /// kg/m³
    pub rho_eq: f64,
    /// J/(kg·K)
    pub c_v_eq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatsinkSpec {
    /// Average convective coefficient over the fins, W/(m²·K).
    pub h_avg: f64,
    /// Total wetted area, m².
    pub a_total: f64,
    /// Area of one fin, m².
    pub a_fin: f64,
    pub fin_count: u32,
    pub fin_efficiency: f64,
    /// Base plate length and width, m.
    pub length: f64,
    pub width: f64,
}

/// k = q·l / (A·ΔT) for a slab carrying heat flow `q_dot` across thickness `l`.
pub fn equivalent_conductivity(q_dot: f64, l: f64, area: f64, delta_t: f64) -> Result<f64> {
    for (name, v) in [("q_dot", q_dot), ("l", l), ("area", area), ("delta_t", delta_t)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} = {v} must be > 0")));
        }
    }
    Ok(q_dot * l / (area * delta_t))
}

/// Volume-weighted density and mass-weighted specific heat, so that
/// ρ_eq·c_eq·V equals the summed heat capacity of the constituents.
pub fn weighted_average_capacitance(spec: &CompositeLayerSpec) -> Result<EquivalentCapacity> {
    if spec.constituents.is_empty() {
        return Err(Error::domain("composite has no constituents"));
    }
    let mut total = 0.0;
    for c in &spec.constituents {
        if !(c.volume_fraction.is_finite() && c.volume_fraction >= 0.0) {
            return Err(Error::domain(format!(
                "volume fraction {} of {:?} must be >= 0",
                c.volume_fraction, c.material.name
            )));
        }
        if !(c.material.rho > 0.0 && c.material.c_v > 0.0) {
            return Err(Error::domain(format!(
                "material {:?} needs positive rho and c_v",
                c.material.name
            )));
        }
        total += c.volume_fraction;
    }
    if (total - 1.0).abs() > FRACTION_TOL {
        return Err(Error::domain(format!("volume fractions sum to {total}, expected 1")));
    }
    let rho_eq: f64 = spec
        .constituents
        .iter()
        .map(|c| c.volume_fraction * c.material.rho)
        .sum();
    let heat: f64 = spec
        .constituents
        .iter()
        .map(|c| c.volume_fraction * c.material.rho * c.material.c_v)
        .sum();
    Ok(EquivalentCapacity {
        rho_eq,
        c_v_eq: heat / rho_eq,
    })
}

/// Equivalent heat transfer coefficient of a finned heatsink referred to
/// its base plate area.
pub fn heatsink_htc(spec: &HeatsinkSpec) -> Result<f64> {
    for (name, v) in [
        ("h_avg", spec.h_avg),
        ("a_total", spec.a_total),
        ("a_fin", spec.a_fin),
        ("length", spec.length),
        ("width", spec.width),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} = {v} must be > 0")));
        }
    }
    if !(0.0..=1.0).contains(&spec.fin_efficiency) {
        return Err(Error::domain(format!(
            "fin efficiency {} outside [0, 1]",
            spec.fin_efficiency
        )));
    }
    let fin_loss = spec.fin_count as f64 * spec.a_fin * (1.0 - spec.fin_efficiency);
    if fin_loss > spec.a_total {
        return Err(Error::domain(format!(
            "fin loss area {fin_loss} exceeds total area {}",
            spec.a_total
        )));
    }
    Ok(spec.h_avg * spec.a_total * (1.0 - fin_loss / spec.a_total) / (spec.length * spec.width))
}

/// Input document of the `calibrate` subcommand. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRequest {
    #[serde(default)]
    pub conductivity: Option<ConductivityMeasurement>,
    #[serde(default)]
    pub composite: Option<CompositeLayerSpec>,
    #[serde(default)]
    pub heatsink: Option<HeatsinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductivityMeasurement {
    pub q_dot_w: f64,
    pub thickness_m: f64,
    pub area_m2: f64,
    pub delta_t_k: f64,
}

impl CalibrationRequest {
    pub fn parse(document: &str) -> Result<Self> {
        let de = toml::Deserializer::new(document);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.into_inner().message().trim().to_string(),
        })
    }

    /// Evaluates every present section, returning `key = value` pairs.
    pub fn evaluate(&self) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        if let Some(m) = &self.conductivity {
            let k = equivalent_conductivity(m.q_dot_w, m.thickness_m, m.area_m2, m.delta_t_k)?;
            out.push(("k_eq".to_string(), k));
        }
        if let Some(c) = &self.composite {
            let eq = weighted_average_capacitance(c)?;
            out.push(("rho_eq".to_string(), eq.rho_eq));
            out.push(("c_v_eq".to_string(), eq.c_v_eq));
            out.push(("heat_capacity_j_per_k".to_string(), eq.rho_eq * eq.c_v_eq * c.volume()));
        }
        if let Some(h) = &self.heatsink {
            out.push(("h_eq".to_string(), heatsink_htc(h)?));
        }
        if out.is_empty() {
            return Err(Error::domain(
                "calibration document has none of [conductivity], [composite], [heatsink]",
            ));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(name: &str, rho: f64, c_v: f64) -> Material {
        Material { name: name.into(), k_x: 1.0, k_y: 1.0, k_z: 1.0, rho, c_v }
    }

    #[test]
    fn conductivity_from_measured_drop() {
        // 1 W through 1 mm over 1 cm² with an 8.08 K drop.
        let k = equivalent_conductivity(1.0, 0.001, 0.0001, 8.08).unwrap();
        assert_relative_eq!(k, 1.237_623_762_376_237_6, max_relative = 1e-14);
        assert_eq!(equivalent_conductivity(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        let k2 = equivalent_conductivity(2.0, 0.001, 0.0001, 16.16).unwrap();
        assert_relative_eq!(k, k2, max_relative = 1e-15);
    }

    #[test]
    fn conductivity_rejects_non_positive() {
        assert!(equivalent_conductivity(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(equivalent_conductivity(1.0, 1.0, -1.0, 1.0).is_err());
        assert!(equivalent_conductivity(1.0, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn single_constituent_is_identity() {
        let spec = CompositeLayerSpec {
            constituents: vec![Constituent { volume_fraction: 1.0, material: mat("cu", 8960.0, 385.0) }],
            thickness_m: 1e-5,
            area_m2: 1e-6,
        };
        let eq = weighted_average_capacitance(&spec).unwrap();
        assert_eq!(eq.rho_eq, 8960.0);
        assert_relative_eq!(eq.c_v_eq, 385.0, max_relative = 1e-15);
    }

    #[test]
    fn two_constituent_average() {
        let spec = CompositeLayerSpec {
            constituents: vec![
                Constituent { volume_fraction: 0.5, material: mat("a", 1000.0, 500.0) },
                Constituent { volume_fraction: 0.5, material: mat("b", 3000.0, 500.0) },
            ],
            thickness_m: 1e-5,
            area_m2: 1e-6,
        };
        let eq = weighted_average_capacitance(&spec).unwrap();
        assert_eq!(eq.rho_eq, 2000.0);
        assert_relative_eq!(eq.c_v_eq, 500.0, max_relative = 1e-15);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let spec = CompositeLayerSpec {
            constituents: vec![
                Constituent { volume_fraction: 0.5, material: mat("a", 1000.0, 500.0) },
                Constituent { volume_fraction: 0.4, material: mat("b", 3000.0, 500.0) },
            ],
            thickness_m: 1e-5,
            area_m2: 1e-6,
        };
        assert!(weighted_average_capacitance(&spec).is_err());
    }

    fn sink() -> HeatsinkSpec {
        HeatsinkSpec {
            h_avg: 50.0,
            a_total: 0.02,
            a_fin: 0.001,
            fin_count: 10,
            fin_efficiency: 0.8,
            length: 0.05,
            width: 0.05,
        }
    }

    #[test]
    fn heatsink_reference_case() {
        // 50·0.02·(1 − 10·0.001·0.2/0.02)/0.0025
        assert_relative_eq!(heatsink_htc(&sink()).unwrap(), 360.0, max_relative = 1e-12);
    }

    #[test]
    fn heatsink_limits() {
        let mut flat = sink();
        flat.fin_count = 0;
        flat.a_total = flat.length * flat.width;
        assert_relative_eq!(heatsink_htc(&flat).unwrap(), flat.h_avg, max_relative = 1e-14);

        let mut perfect = sink();
        perfect.fin_efficiency = 1.0;
        assert_relative_eq!(
            heatsink_htc(&perfect).unwrap(),
            50.0 * 0.02 / 0.0025,
            max_relative = 1e-14
        );
    }

    #[test]
    fn heatsink_rejects_unphysical_fins() {
        let mut s = sink();
        s.fin_count = 1000;
        s.fin_efficiency = 0.0;
        assert!(heatsink_htc(&s).is_err());
        s.fin_efficiency = 1.5;
        assert!(heatsink_htc(&s).is_err());
    }

    #[test]
    fn request_document() {
        let doc = r#"
[conductivity]
q_dot_w = 1.0
thickness_m = 1.0
area_m2 = 1.0
delta_t_k = 1.0

[heatsink]
h_avg = 50.0
a_total = 0.02
a_fin = 0.001
fin_count = 10
fin_efficiency = 0.8
length = 0.05
width = 0.05
"#;
        let req = CalibrationRequest::parse(doc).unwrap();
        let out = req.evaluate().unwrap();
        assert_eq!(out[0], ("k_eq".to_string(), 1.0));
        assert_eq!(out[1].0, "h_eq");
        assert!(CalibrationRequest::default().evaluate().is_err());
    }
}
