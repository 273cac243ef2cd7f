use std::collections::BTreeMap;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;

use super::{solve_in_place, Operators};
use crate::error::{Error, Result};
use crate::rc::RCModel;

/// Largest accepted residual ‖G·T + q‖∞, W.
const RESIDUAL_TOL: f64 = 1e-8;

/// Steady-state rise above ambient for per-power-block watts in model order.
pub fn steady_state_rise(model: &RCModel, powers: &[f64]) -> Result<Vec<f64>> {
    if powers.len() != model.power_blocks.len() {
        return Err(Error::domain(format!(
            "expected {} power values, got {}",
            model.power_blocks.len(),
            powers.len()
        )));
    }
    if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::domain(format!("power {p} must be >= 0")));
    }
    if !model.nodes.iter().any(|n| n.g_conv > 0.0) {
        return Err(Error::domain("conductance matrix is singular: no node convects to ambient"));
    }
    let ops = Operators::new(model);
    let zeros = vec![0.0; model.len()];
    let chol = ops
        .factor_shifted(1.0, &zeros)
        .map_err(|_| Error::domain("conductance matrix is singular: a part of the network has no path to ambient"))?;

    refined_solve(&ops, &chol, &model.inject(powers))
}

/// Solves `−G T = q` with up to three rounds of iterative refinement.
fn refined_solve(ops: &Operators, chol: &CscCholesky<f64>, q: &[f64]) -> Result<Vec<f64>> {
    let n = q.len();
    let mut t = q.to_vec();
    solve_in_place(chol, &mut t);

    let mut r = vec![0.0; n];
    for _ in 0..3 {
        ops.apply_g(&t, &mut r);
        r.iter_mut().zip(q).for_each(|(ri, qi)| *ri += qi);
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res <= RESIDUAL_TOL {
            return Ok(t);
        }
        // Refinement: -G δ = G T + q.
        solve_in_place(chol, &mut r);
        t.iter_mut().zip(&r).for_each(|(ti, di)| *ti += di);
    }
    ops.apply_g(&t, &mut r);
    let res = r.iter().zip(q).fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
    if res <= RESIDUAL_TOL {
        Ok(t)
    } else {
        Err(Error::numerical(format!("steady-state residual {res:e} W above tolerance")))
    }
}

/// Steady-state rise per watt of each power block, `N × P`, from a single
/// factorization.
pub(crate) fn steady_response(model: &RCModel) -> Result<DMatrix<f64>> {
    if !model.nodes.iter().any(|n| n.g_conv > 0.0) {
        return Err(Error::domain("conductance matrix is singular: no node convects to ambient"));
    }
    let ops = Operators::new(model);
    let chol = ops
        .factor_shifted(1.0, &vec![0.0; model.len()])
        .map_err(|_| Error::domain("conductance matrix is singular: a part of the network has no path to ambient"))?;
    let n = model.len();
    let mut out = DMatrix::zeros(n, model.power_blocks.len());
    let mut unit = vec![0.0; model.power_blocks.len()];
    for k in 0..unit.len() {
        unit[k] = 1.0;
        let q = model.inject(&unit);
        unit[k] = 0.0;
        let t = refined_solve(&ops, &chol, &q)?;
        out.column_mut(k).copy_from_slice(&t);
    }
    Ok(out)
}

/// Steady-state temperatures in °C for a map of power-block watts.
pub fn steady_state(model: &RCModel, powers: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let p = model.power_vector(powers)?;
    let rise = steady_state_rise(model, &p)?;
    Ok(rise.into_iter().map(|r| model.ambient_c + r).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rc::{LayerInfo, NodeRecord};
    use crate::geometry::Rect;
    use approx::assert_relative_eq;

    pub(crate) fn node(index: usize, g_conv: f64, capacitance: f64) -> NodeRecord {
        NodeRecord {
            index,
            layer: "l".into(),
            block: "_".into(),
            cell: (index, 0),
            center: [0.0; 3],
            extents: [1.0; 3],
            capacitance,
            g_conv,
            is_chiplet: true,
            power_block_weights: Default::default(),
        }
    }

    pub(crate) fn chain(g_conv: &[f64], couplings: Vec<(usize, usize, f64)>) -> RCModel {
        let nodes: Vec<_> = g_conv.iter().enumerate().map(|(i, &g)| node(i, g, 1.0)).collect();
        let n = nodes.len();
        RCModel {
            name: "chain".into(),
            ambient_c: 25.0,
            footprint: Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 },
            layers: vec![LayerInfo { name: "l".into(), z_order: 0, z0: 0.0, thickness: 1.0, nodes: 0..n }],
            nodes,
            couplings,
            power_blocks: (0..n).map(|i| format!("p{i}")).collect(),
            power_map: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    #[test]
    fn single_node() {
        let m = chain(&[0.1], vec![]);
        let t = steady_state(&m, &BTreeMap::from([("p0".to_string(), 1.0)])).unwrap();
        assert_relative_eq!(t[0], 35.0, max_relative = 1e-14);
    }

    #[test]
    fn zero_power_is_ambient() {
        let m = chain(&[0.1, 0.0], vec![(0, 1, 2.0)]);
        let t = steady_state(&m, &BTreeMap::new()).unwrap();
        assert_eq!(t, vec![25.0, 25.0]);
    }

    #[test]
    fn two_node_chain() {
        // node0 —G12— node1 —Gconv— ambient, heat into node0.
        let (g12, gc, q) = (0.5, 0.2, 3.0);
        let m = chain(&[0.0, gc], vec![(0, 1, g12)]);
        let t = steady_state_rise(&m, &[q, 0.0]).unwrap();
        assert_relative_eq!(t[0], q / gc + q / g12, max_relative = 1e-12);
        assert_relative_eq!(t[1], q / gc, max_relative = 1e-12);
    }

    #[test]
    fn singular_network_is_domain_error() {
        let m = chain(&[0.0, 0.0], vec![(0, 1, 1.0)]);
        assert!(matches!(steady_state_rise(&m, &[1.0, 0.0]), Err(Error::Domain(_))));
        // Convecting node with an isolated neighbour.
        let m = chain(&[1.0, 0.0], vec![]);
        assert!(matches!(steady_state_rise(&m, &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_negative_and_unknown_power() {
        let m = chain(&[0.1], vec![]);
        assert!(steady_state_rise(&m, &[-1.0]).is_err());
        assert!(steady_state(&m, &BTreeMap::from([("nope".to_string(), 1.0)])).is_err());
    }
}
