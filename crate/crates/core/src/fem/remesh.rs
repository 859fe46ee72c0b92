use crate::biomodel::Sym2;

use super::mesh::{mesh_from_rim, Mesh, PointLocator};
use super::step::SimState;
use super::FemError;

/// Global remesh on the current deformed configuration. The rim marker
/// nodes are kept as they are; everything else is regenerated.
pub fn remesh(state: &SimState, mesh: &Mesh, h: f64) -> Result<(SimState, Mesh), FemError> {
    let fresh = mesh_from_rim(&mesh.rim_points(), mesh.x_l, mesh.y_l, h)?;
    let moved = transfer_fields(state, mesh, &fresh);
    Ok((moved, fresh))
}

/// P1 interpolation of every nodal field from `from` onto the nodes of `to`.
pub fn transfer_fields(state: &SimState, from: &Mesh, to: &Mesh) -> SimState {
    let loc = PointLocator::new(&from.nodes, &from.triangles);
    let n = to.n_nodes();
    let comp = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..from.n_nodes()).map(f).collect() };
    let fields: Vec<Vec<f64>> = vec![
        state.n.clone(),
        state.m.clone(),
        state.c.clone(),
        state.rho.clone(),
        comp(&|i| state.v[i][0]),
        comp(&|i| state.v[i][1]),
        comp(&|i| state.eps[i].xx),
        comp(&|i| state.eps[i].xy),
        comp(&|i| state.eps[i].yy),
        comp(&|i| state.u[i][0]),
        comp(&|i| state.u[i][1]),
    ];
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(n); fields.len()];
    let mut fallbacks = 0;
    for p in &to.nodes {
        let l = loc.locate(*p);
        fallbacks += l.fallback as usize;
        for (o, f) in out.iter_mut().zip(&fields) {
            o.push(loc.interpolate(&l, f));
        }
    }
    if fallbacks > 0 {
        log::warn!("{fallbacks} nodes outside the previous mesh; used nearest elements");
    }
    let pair = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| [*x, *y]).collect::<Vec<_>>();
    SimState {
        t: state.t,
        // interpolation of non-negative values is non-negative up to roundoff
        n: out[0].iter().map(|v| v.max(0.0)).collect(),
        m: out[1].iter().map(|v| v.max(0.0)).collect(),
        c: out[2].iter().map(|v| v.max(0.0)).collect(),
        rho: out[3].iter().map(|v| v.max(0.0)).collect(),
        v: pair(&out[4], &out[5]),
        eps: (0..n).map(|i| Sym2::new(out[6][i], out[7][i], out[8][i])).collect(),
        u: pair(&out[9], &out[10]),
    }
}
