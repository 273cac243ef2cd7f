//! Shared fixtures: a random package generator, a dense reference assembly
//! written from the conduction formulas alone, and an implicit-Euler
//! integrator used as a slow but simple transient reference.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mfit::package::{Block, BoundarySpec, Layer, Material, PackageSpec, PowerBlock};
use mfit::workload::PowerTrace;
use mfit::RCModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UNIT: f64 = 0.5e-3;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn material(rng: &mut ChaCha8Rng, name: &str) -> Material {
    Material {
        name: name.into(),
        k_x: log_uniform(rng, 0.5, 400.0),
        k_y: log_uniform(rng, 0.5, 400.0),
        k_z: log_uniform(rng, 0.5, 400.0),
        rho: rng.gen_range(1000.0..9000.0),
        c_v: rng.gen_range(300.0..1200.0),
    }
}

fn quadrant_layer(rng: &mut ChaCha8Rng, li: usize, wu: u32, hu: u32) -> Vec<Block> {
    let sx = rng.gen_range(1..wu);
    let sy = rng.gen_range(1..hu);
    let quads = [
        (0, 0, sx, sy),
        (sx, 0, wu - sx, sy),
        (0, sy, sx, hu - sy),
        (sx, sy, wu - sx, hu - sy),
    ];
    let mut blocks = Vec::new();
    for (q, &(x, y, w, h)) in quads.iter().enumerate() {
        if !rng.gen_bool(0.6) {
            continue;
        }
        let chiplet = rng.gen_bool(0.5);
        let size = [w as f64 * UNIT, h as f64 * UNIT];
        let power_blocks = if chiplet {
            let frac = if rng.gen_bool(0.5) { 1.0 } else { 0.5 };
            vec![PowerBlock {
                id: format!("p{li}_{q}"),
                origin_m: [0.0, 0.0],
                size_m: [size[0] * frac, size[1]],
            }]
        } else {
            Vec::new()
        };
        blocks.push(Block {
            name: format!("b{q}"),
            origin_m: [x as f64 * UNIT, y as f64 * UNIT],
            size_m: size,
            material: rng.gen_bool(0.5).then(|| "m1".to_string()),
            grid: [rng.gen_range(1..=3), rng.gen_range(1..=3)],
            chiplet,
            capacitance_scale: if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.5..2.0) },
            power_blocks,
        });
    }
    if blocks.is_empty() {
        let (x, y, w, h) = quads[0];
        blocks.push(Block {
            name: "b0".into(),
            origin_m: [x as f64 * UNIT, y as f64 * UNIT],
            size_m: [w as f64 * UNIT, h as f64 * UNIT],
            material: None,
            grid: [1, 1],
            chiplet: true,
            capacitance_scale: 1.0,
            power_blocks: vec![PowerBlock {
                id: format!("p{li}_0"),
                origin_m: [0.0, 0.0],
                size_m: [w as f64 * UNIT, h as f64 * UNIT],
            }],
        });
    }
    blocks
}

/// A buildable package with at most 50 nodes, reproducible from `seed`.
pub fn random_spec(seed: u64) -> PackageSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let wu = rng.gen_range(2..=4u32);
        let hu = rng.gen_range(2..=4u32);
        let nl = rng.gen_range(1..=3usize);
        let mut layers = Vec::new();
        for li in 0..nl {
            let blocks = if rng.gen_bool(0.5) { quadrant_layer(&mut rng, li, wu, hu) } else { Vec::new() };
            layers.push(Layer {
                name: format!("l{li}"),
                z_order: li as u32,
                thickness_m: log_uniform(&mut rng, 20e-6, 800e-6),
                material: "m0".into(),
                grid: [rng.gen_range(1..=5), rng.gen_range(1..=5)],
                blocks,
            });
        }
        let spec = PackageSpec {
            name: format!("random{seed}"),
            ambient_c: rng.gen_range(20.0..50.0),
            footprint_m: Some([wu as f64 * UNIT, hu as f64 * UNIT]),
            boundary: BoundarySpec {
                top_htc: log_uniform(&mut rng, 100.0, 5000.0),
                bottom_htc: if rng.gen_bool(0.5) { 0.0 } else { log_uniform(&mut rng, 1.0, 100.0) },
                lateral_htc: if rng.gen_bool(0.5) { 0.0 } else { log_uniform(&mut rng, 1.0, 100.0) },
            },
            materials: vec![material(&mut rng, "m0"), material(&mut rng, "m1")],
            layers,
        };
        let nodes: u32 = spec
            .layers
            .iter()
            .map(|l| match l.blocks.is_empty() {
                true => l.grid[0] * l.grid[1],
                false => l.blocks.iter().map(|b| b.grid[0] * b.grid[1]).sum(),
            })
            .sum();
        let valid = mfit::validate_package(&spec)
            .iter()
            .all(|d| d.severity != mfit::package::Severity::Error);
        if valid && nodes <= 50 && mfit::build_rc(&spec).is_ok() {
            return spec;
        }
    }
}

pub struct DenseOracle {
    pub ids: Vec<String>,
    pub g: DMatrix<f64>,
    pub c: Vec<f64>,
    pub g_conv: Vec<f64>,
}

struct ONode {
    x: [f64; 2],
    y: [f64; 2],
    layer: usize,
    lz: f64,
    k: [f64; 3],
}

/// Dense assembly written directly from the conduction formulas: every pair
/// of nodes is tested for a shared lateral face or a vertical overlap.
pub fn dense_oracle(spec: &PackageSpec) -> DenseOracle {
    let mut layers: Vec<&Layer> = spec.layers.iter().collect();
    layers.sort_by_key(|l| l.z_order);
    let mats: BTreeMap<&str, &Material> = spec.materials.iter().map(|m| (m.name.as_str(), m)).collect();
    let [fw, fh] = spec.footprint_m.expect("oracle specs carry a footprint");

    let mut ids = Vec::new();
    let mut nodes = Vec::new();
    let mut c = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        let regions: Vec<(String, [f64; 2], [f64; 2], [u32; 2], &str, f64)> = if layer.blocks.is_empty() {
            vec![("_".into(), [0.0, 0.0], [fw, fh], layer.grid, layer.material.as_str(), 1.0)]
        } else {
            layer
                .blocks
                .iter()
                .map(|b| {
                    let m = b.material.as_deref().unwrap_or(&layer.material);
                    (b.name.clone(), b.origin_m, b.size_m, b.grid, m, b.capacitance_scale)
                })
                .collect()
        };
        for (name, o, s, grid, mname, scale) in regions {
            let m = mats[mname];
            let (dx, dy) = (s[0] / grid[0] as f64, s[1] / grid[1] as f64);
            for j in 0..grid[1] {
                for i in 0..grid[0] {
                    let x0 = o[0] + dx * i as f64;
                    let y0 = o[1] + dy * j as f64;
                    ids.push(format!("{}/{}/{}_{}", layer.name, name, i, j));
                    c.push(m.rho * m.c_v * dx * dy * layer.thickness_m * scale);
                    nodes.push(ONode {
                        x: [x0, x0 + dx],
                        y: [y0, y0 + dy],
                        layer: li,
                        lz: layer.thickness_m,
                        k: [m.k_x, m.k_y, m.k_z],
                    });
                }
            }
        }
    }

    let n = nodes.len();
    let tol = 1e-12;
    let shared = |a: [f64; 2], b: [f64; 2]| (a[1].min(b[1]) - a[0].max(b[0])).max(0.0);
    let touch = |a: [f64; 2], b: [f64; 2]| (a[1] - b[0]).abs() < tol || (b[1] - a[0]).abs() < tol;
    let mut g = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let (p, q) = (&nodes[a], &nodes[b]);
            let mut gab = 0.0;
            if p.layer == q.layer {
                let (wp, wq) = (p.x[1] - p.x[0], q.x[1] - q.x[0]);
                let (hp, hq) = (p.y[1] - p.y[0], q.y[1] - q.y[0]);
                let sy = shared(p.y, q.y);
                let sx = shared(p.x, q.x);
                if touch(p.x, q.x) && sy > tol {
                    let area = sy * p.lz;
                    gab = 1.0 / (wp / (2.0 * p.k[0] * area) + wq / (2.0 * q.k[0] * area));
                } else if touch(p.y, q.y) && sx > tol {
                    let area = sx * p.lz;
                    gab = 1.0 / (hp / (2.0 * p.k[1] * area) + hq / (2.0 * q.k[1] * area));
                }
            } else if p.layer.abs_diff(q.layer) == 1 {
                let (sx, sy) = (shared(p.x, q.x), shared(p.y, q.y));
                if sx > tol && sy > tol {
                    gab = sx * sy / (p.lz / (2.0 * p.k[2]) + q.lz / (2.0 * q.k[2]));
                }
            }
            g[(a, b)] = gab;
            g[(b, a)] = gab;
        }
    }

    let top = layers.len() - 1;
    let bnd = &spec.boundary;
    let mut g_conv = vec![0.0; n];
    for (a, p) in nodes.iter().enumerate() {
        let (w, h) = (p.x[1] - p.x[0], p.y[1] - p.y[0]);
        let mut gc = 0.0;
        if p.layer == top {
            gc += bnd.top_htc * w * h;
        }
        if p.layer == 0 {
            gc += bnd.bottom_htc * w * h;
        }
        for (edge, len) in [(p.x[0], h), (fw - p.x[1], h), (p.y[0], w), (fh - p.y[1], w)] {
            if edge.abs() < tol {
                gc += bnd.lateral_htc * len * p.lz;
            }
        }
        g_conv[a] = gc;
        let row: f64 = (0..n).map(|b| g[(a, b)]).sum();
        g[(a, a)] = -(row + gc);
    }
    DenseOracle { ids, g, c, g_conv }
}

/// Largest entrywise relative difference `|a − b| / max(|a|, |b|)`; pairs
/// that are both zero count as equal.
pub fn max_rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Implicit Euler with a fixed step, sampled every `every` steps. Returns
/// `(times, rows)` in °C.
pub fn implicit_euler(model: &RCModel, trace: &PowerTrace, dt: f64, every: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = model.len();
    let g = model.g_dense();
    let c = DVector::from_vec(model.capacitances());
    let mut a = -g;
    for i in 0..n {
        a[(i, i)] += c[i] / dt;
    }
    let lu = a.lu();
    let rows = trace.bind(&model.power_blocks).unwrap();
    let steps = (trace.end_time / dt).round() as usize;
    let mut t = DVector::zeros(n);
    let mut times = vec![0.0];
    let mut out = vec![vec![model.ambient_c; n]];
    for k in 0..steps {
        let time = k as f64 * dt;
        let q = DVector::from_vec(model.inject(&rows[trace.segment_at(time + 0.5 * dt)]));
        let rhs = c.component_mul(&t) / dt + q;
        t = lu.solve(&rhs).unwrap();
        if (k + 1) % every == 0 {
            times.push((k + 1) as f64 * dt);
            out.push(t.iter().map(|v| v + model.ambient_c).collect());
        }
    }
    (times, out)
}

/// The 16-chiplet package coarsened to 64 nodes: one node per chiplet and a
/// 2×2 grid on full layers.
pub fn coarse_chiplet16() -> PackageSpec {
    let mut spec = mfit::bundled::package("chiplet16_2p5d").unwrap();
    for layer in &mut spec.layers {
        if layer.blocks.is_empty() {
            layer.grid = [2, 2];
        }
        for b in &mut layer.blocks {
            b.grid = [1, 1];
        }
    }
    spec
}

/// Richardson extrapolation `2·IE(dt/2) − IE(dt)`, second-order accurate.
pub fn implicit_euler_extrapolated(
    model: &RCModel,
    trace: &PowerTrace,
    dt: f64,
    every: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (times, coarse) = implicit_euler(model, trace, dt, every);
    let (_, fine) = implicit_euler(model, trace, 0.5 * dt, 2 * every);
    let rows = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| c.iter().zip(f).map(|(c, f)| 2.0 * f - c).collect())
        .collect();
    (times, rows)
}
