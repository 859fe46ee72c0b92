//! Diffusion–chemotaxis–reaction update of one species on the moved mesh,
//! with algebraic flux correction for positivity.

use crate::biomodel::ReactionSplits;

use super::mesh::{basis_gradients, BoundaryTag};
use super::sparse::bicgstab;
use super::step::{SimState, Stepper, TransportCtx};
use super::{FctMode, FemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Species {
    N,
    M,
    C,
}

impl Species {
    fn name(self) -> &'static str {
        match self {
            Species::N => "N",
            Species::M => "M",
            Species::C => "c",
        }
    }
}

/// Roundoff from the iterative solve below this fraction of the field
/// maximum is treated as zero.
const SOLVER_NOISE: f64 = 1e-7;

fn scrub_negatives(z: &mut [f64], species: Species) -> Result<(), FemError> {
    let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (i, v) in z.iter_mut().enumerate() {
        if *v < 0.0 {
            if -*v <= SOLVER_NOISE * scale {
                *v = 0.0;
            } else {
                return Err(FemError::Limiter { field: species.name(), node: i, value: *v });
            }
        }
    }
    Ok(())
}

pub(super) fn transport(
    stepper: &mut Stepper,
    ctx: &TransportCtx,
    old: &SimState,
    species: Species,
    splits: &[ReactionSplits],
    mode: FctMode,
) -> Result<Vec<f64>, FemError> {
    let (vp, kp, cfg) = stepper.params();
    let (pattern, transpose) = stepper.scalar_pattern();
    let mesh = ctx.mesh;
    let n = mesh.n_nodes();
    let dt = ctx.dt;
    let z_old: &[f64] = match species {
        Species::N => &old.n,
        Species::M => &old.m,
        Species::C => &old.c,
    };
    let boundary_value = match species {
        Species::N => kp.n_bar,
        Species::M => kp.m_bar,
        Species::C => kp.c_bar,
    };

    let a = &mut pattern.matrix;
    a.clear();
    let mut mc = vec![0.0; a.vals.len()];
    let mut mz_old = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = basis_gradients(mesh.corners(t));
        let slots = &pattern.elem_slots[t];
        let (diff, chi) = match species {
            Species::N | Species::M => {
                let f: f64 = tri.iter().map(|&i| old.n[i] + old.m[i]).sum::<f64>() / 3.0;
                (vp.d_f * f, vp.chi_f)
            }
            Species::C => (vp.d_c, 0.0),
        };
        let mut grad_c = [0.0; 2];
        if chi != 0.0 {
            for (k, &i) in tri.iter().enumerate() {
                grad_c[0] += old.c[i] * g[k][0];
                grad_c[1] += old.c[i] * g[k][1];
            }
        }
        for ra in 0..3 {
            let taxis = chi * area / 3.0 * (grad_c[0] * g[ra][0] + grad_c[1] * g[ra][1]);
            for rb in 0..3 {
                let gg = g[ra][0] * g[rb][0] + g[ra][1] * g[rb][1];
                let s = slots[ra * 3 + rb];
                a.vals[s] += -diff * area * gg + taxis;
                mc[s] += area / 12.0 * if ra == rb { 2.0 } else { 1.0 };
            }
        }
        if mode == FctMode::Clip {
            let p = [ctx.old_nodes[tri[0]], ctx.old_nodes[tri[1]], ctx.old_nodes[tri[2]]];
            let (_, area_old) = basis_gradients(p);
            let sum: f64 = tri.iter().map(|&i| z_old[i]).sum();
            for &i in tri {
                mz_old[i] += area_old / 12.0 * (z_old[i] + sum);
            }
        }
    }
    let k_vals = a.vals.clone();

    // artificial diffusion making every off-diagonal entry non-negative
    let mut d = vec![0.0; a.vals.len()];
    if mode == FctMode::Fct {
        for i in 0..n {
            let mut row_sum = 0.0;
            let mut diag = 0;
            for k in a.row(i) {
                if a.cols[k] == i {
                    diag = k;
                    continue;
                }
                let dij = 0.0f64.max(-k_vals[k]).max(-k_vals[transpose[k]]);
                d[k] = dij;
                row_sum += dij;
            }
            d[diag] = -row_sum;
        }
    }

    let dirichlet: Vec<bool> = mesh.tags.iter().map(|t| *t == BoundaryTag::Outer).collect();
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let s = match species {
            Species::N => splits[i].n,
            Species::M => splits[i].m,
            Species::C => splits[i].c,
        };
        let diag = a.diag_slot(i);
        match mode {
            FctMode::Fct => {
                for k in a.row(i) {
                    a.vals[k] = -(k_vals[k] + d[k]);
                }
                a.vals[diag] += ctx.m_new[i] / dt;
                rhs[i] = ctx.m_old[i] * z_old[i] / dt;
            }
            FctMode::Clip => {
                for k in a.row(i) {
                    a.vals[k] = mc[k] / dt - k_vals[k];
                }
                rhs[i] = mz_old[i] / dt;
            }
        }
        a.vals[diag] += ctx.m_new[i] * s.rate;
        rhs[i] += ctx.m_new[i] * s.source;
        if dirichlet[i] {
            a.set_identity_row(i);
            rhs[i] = boundary_value;
        }
    }

    let mut z = z_old.to_vec();
    bicgstab(a, &rhs, &mut z, cfg.tol, cfg.max_iter)?;
    if mode == FctMode::Clip {
        z.iter_mut().for_each(|v| *v = v.max(0.0));
        return Ok(z);
    }
    scrub_negatives(&mut z, species)?;

    // limited antidiffusion back towards the consistent-mass scheme
    let zl = z.clone();
    let zdot: Vec<f64> = zl.iter().zip(z_old).map(|(a, b)| (a - b) / dt).collect();
    let mut fluxes = Vec::new();
    let (mut p_plus, mut p_minus) = (vec![0.0; n], vec![0.0; n]);
    let (mut z_max, mut z_min) = (zl.clone(), zl.clone());
    for i in 0..n {
        for k in a.row(i) {
            let j = a.cols[k];
            if j == i {
                continue;
            }
            z_max[i] = z_max[i].max(zl[j]);
            z_min[i] = z_min[i].min(zl[j]);
            if j < i || dirichlet[i] || dirichlet[j] {
                continue;
            }
            let mut f = mc[k] * (zdot[i] - zdot[j]) + d[k] * (zl[i] - zl[j]);
            if f * (zl[j] - zl[i]) > 0.0 {
                f = 0.0;
            }
            if f == 0.0 {
                continue;
            }
            p_plus[i] += f.max(0.0);
            p_minus[i] += f.min(0.0);
            p_plus[j] += (-f).max(0.0);
            p_minus[j] += (-f).min(0.0);
            fluxes.push((i, j, f));
        }
    }
    let ratio = |q: f64, p: f64| if p == 0.0 { 1.0 } else { (q / p).clamp(0.0, 1.0) };
    let r_plus: Vec<f64> = (0..n).map(|i| ratio(ctx.m_new[i] / dt * (z_max[i] - zl[i]), p_plus[i])).collect();
    let r_minus: Vec<f64> = (0..n).map(|i| ratio(ctx.m_new[i] / dt * (z_min[i] - zl[i]), p_minus[i])).collect();
    for (i, j, f) in fluxes {
        let alpha = if f > 0.0 { r_plus[i].min(r_minus[j]) } else { r_minus[i].min(r_plus[j]) };
        z[i] += dt / ctx.m_new[i] * alpha * f;
        z[j] -= dt / ctx.m_new[j] * alpha * f;
    }
    scrub_negatives(&mut z, species)?;
    Ok(z)
}
