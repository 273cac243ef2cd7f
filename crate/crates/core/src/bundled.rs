//! Package documents shipped with the crate. Material values are
//! representative; geometry and chiplet power match the reference systems.

use crate::package::{parse_package, PackageSpec};

pub const CHIPLET16_2P5D: &str = include_str!("../examples/packages/chiplet16_2p5d.toml");
pub const CHIPLET36_2P5D: &str = include_str!("../examples/packages/chiplet36_2p5d.toml");
pub const CHIPLET64_2P5D: &str = include_str!("../examples/packages/chiplet64_2p5d.toml");
pub const CHIPLET16X3_3D: &str = include_str!("../examples/packages/chiplet16x3_3d.toml");

/// `(name, document, per-chiplet power in W)`
pub const ALL: [(&str, &str, f64); 4] = [
    ("chiplet16_2p5d", CHIPLET16_2P5D, 3.0),
    ("chiplet36_2p5d", CHIPLET36_2P5D, 3.0),
    ("chiplet64_2p5d", CHIPLET64_2P5D, 3.0),
    ("chiplet16x3_3d", CHIPLET16X3_3D, 1.2),
];

/// Parses a bundled document by name.
pub fn package(name: &str) -> Option<PackageSpec> {
    ALL.iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, doc, _)| parse_package(doc).expect("bundled package is valid"))
}
