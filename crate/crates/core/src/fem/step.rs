use crate::biomodel::{
    elastic_stress, growth_rate, myofibroblast_traction, reaction_splits, skw, sym, Densities, Grad2, KineticParams,
    Sym2, VariableParams,
};
use crate::geometry::{wound_distance, WoundGeometry, DEFAULT_SAMPLES};

use super::mesh::{basis_gradients, BoundaryTag, Mesh};
use super::sparse::{cg, Pattern};
use super::transport::{transport, Species};
use super::{FemError, SimConfig};

/// Nodal unknowns on the current mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub c: Vec<f64>,
    pub rho: Vec<f64>,
    pub v: Vec<[f64; 2]>,
    pub eps: Vec<Sym2>,
    pub u: Vec<[f64; 2]>,
}

impl SimState {
    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn densities(&self, i: usize) -> Densities {
        Densities { n: self.n[i], m: self.m[i], c: self.c[i], rho: self.rho[i] }
    }
}

/// Every node at the unwounded equilibrium.
pub fn unwounded_state(mesh: &Mesh, p: &KineticParams) -> SimState {
    let n = mesh.n_nodes();
    SimState {
        t: 0.0,
        n: vec![p.n_bar; n],
        m: vec![p.m_bar; n],
        c: vec![p.c_bar; n],
        rho: vec![p.rho_bar; n],
        v: vec![[0.0; 2]; n],
        eps: vec![Sym2::ZERO; n],
        u: vec![[0.0; 2]; n],
    }
}

/// Transition width between wound and unwounded values.
pub fn transition_width(geometry: &WoundGeometry) -> f64 {
    (0.2 * geometry.min_cut()).min(0.5)
}

/// Wound values inside the rim, equilibrium outside, with a half-period
/// sine ramp of width `s_w` just inside the rim.
pub fn initial_conditions(mesh: &Mesh, geometry: &WoundGeometry, p: &KineticParams) -> Result<SimState, FemError> {
    let rim = geometry.boundary(DEFAULT_SAMPLES).map_err(|e| FemError::Mesh(e.to_string()))?;
    let s_w = transition_width(geometry);
    let mut s = unwounded_state(mesh, p);
    for (i, x) in mesh.nodes.iter().enumerate() {
        let (inside, d) = wound_distance(*x, &rim.points);
        if !inside {
            continue;
        }
        let w = (std::f64::consts::PI * d.min(s_w) / (2.0 * s_w)).sin();
        s.n[i] = p.n_bar + (p.n_tilde - p.n_bar) * w;
        s.c[i] = p.c_bar + (p.c_tilde - p.c_bar) * w;
        s.rho[i] = p.rho_bar + (p.rho_tilde - p.rho_bar) * w;
    }
    Ok(s)
}

/// Assembly caches for one mesh topology.
pub struct Stepper<'a> {
    config: &'a SimConfig,
    vp: &'a VariableParams,
    kp: &'a KineticParams,
    scalar: Pattern,
    block: Pattern,
    /// For each scalar slot `(i, j)`, the slot of `(j, i)`.
    transpose: Vec<usize>,
}

impl<'a> Stepper<'a> {
    pub fn new(mesh: &Mesh, config: &'a SimConfig, vp: &'a VariableParams, kp: &'a KineticParams) -> Self {
        let scalar = Pattern::from_triangles(mesh.n_nodes(), &mesh.triangles, 1);
        let block = Pattern::from_triangles(mesh.n_nodes(), &mesh.triangles, 2);
        let a = &scalar.matrix;
        let mut transpose = vec![0; a.vals.len()];
        for i in 0..a.n {
            for k in a.row(i) {
                transpose[k] = a.find(a.cols[k], i).expect("symmetric pattern");
            }
        }
        Self { config, vp, kp, scalar, block, transpose }
    }

    /// One semi-implicit step: momentum on the current mesh, node update,
    /// strain, then transport and collagen on the moved mesh.
    pub fn step(&mut self, state: &mut SimState, mesh: &mut Mesh) -> Result<(), FemError> {
        let dt = self.config.dt;
        let kp = self.kp;
        let m_old = mesh.lumped_masses();
        let old_nodes = mesh.nodes.clone();

        let v = self.solve_momentum(state, mesh, &m_old)?;
        let grad_v = nodal_velocity_gradients(mesh, &v);

        for (i, x) in mesh.nodes.iter_mut().enumerate() {
            x[0] += dt * v[i][0];
            x[1] += dt * v[i][1];
            state.u[i][0] += dt * v[i][0];
            state.u[i][1] += dt * v[i][1];
        }
        mesh.validate()?;
        let m_new = mesh.lumped_masses();

        for i in 0..mesh.n_nodes() {
            let e = state.eps[i];
            let g = &grad_v[i];
            let d = sym(g);
            let w = skw(g);
            let div = g[0][0] + g[1][1];
            // εW − Wε for W = skw(∇v)
            let rot = Sym2::new(-2.0 * e.xy * w, w * (e.xx - e.yy), 2.0 * e.xy * w);
            let tr = e.trace();
            let rate = Sym2::new(
                -rot.xx - (tr - 1.0) * d.xx + e.xx * div,
                -rot.xy - (tr - 1.0) * d.xy + e.xy * div,
                -rot.yy - (tr - 1.0) * d.yy + e.yy * div,
            );
            let k = growth_rate(state.n[i], state.m[i], state.c[i], kp);
            let denom = 1.0 / (m_new[i] * (1.0 + dt * k));
            state.eps[i] = e.scale(m_old[i]).add(&rate.scale(dt * m_new[i])).scale(denom);
        }

        let splits = (0..mesh.n_nodes())
            .map(|i| reaction_splits(&state.densities(i), self.vp, kp))
            .collect::<Result<Vec<_>, _>>()?;
        let old = state.clone();
        let ctx = TransportCtx { mesh, old_nodes: &old_nodes, m_old: &m_old, m_new: &m_new, dt };
        let fct = self.config.fct;
        for species in [Species::N, Species::M, Species::C] {
            let z = transport(self, &ctx, &old, species, &splits, fct)?;
            match species {
                Species::N => state.n = z,
                Species::M => state.m = z,
                Species::C => state.c = z,
            }
        }
        for i in 0..mesh.n_nodes() {
            let s = splits[i].rho;
            state.rho[i] = (m_old[i] * old.rho[i] + dt * m_new[i] * s.source) / (m_new[i] * (1.0 + dt * s.rate));
        }
        state.v = v;
        state.t += dt;
        Ok(())
    }

    fn solve_momentum(&mut self, state: &SimState, mesh: &Mesh, masses: &[f64]) -> Result<Vec<[f64; 2]>, FemError> {
        let kp = self.kp;
        let dt = self.config.dt;
        let n = mesh.n_nodes();
        let a = &mut self.block.matrix;
        a.clear();
        let mut rhs = vec![0.0; 2 * n];
        let inertia = if self.config.quasi_static { 0.0 } else { kp.rho_t / dt };

        for (t, tri) in mesh.triangles.iter().enumerate() {
            let (g, area) = basis_gradients(mesh.corners(t));
            let slots = &self.block.elem_slots[t];
            for ra in 0..3 {
                for k in 0..2 {
                    for rb in 0..3 {
                        for l in 0..2 {
                            let gg = g[ra][0] * g[rb][0] + g[ra][1] * g[rb][1];
                            let delta = if k == l { gg } else { 0.0 };
                            let val = area * (kp.mu1 * 0.5 * (delta + g[ra][l] * g[rb][k]) + kp.mu2 * g[ra][k] * g[rb][l]);
                            a.vals[slots[(2 * ra + k) * 6 + 2 * rb + l]] += val;
                        }
                    }
                }
            }
            let mut eps = Sym2::ZERO;
            let (mut rho, mut m) = (0.0, 0.0);
            for &i in tri {
                eps = eps.add(&state.eps[i]);
                rho += state.rho[i];
                m += state.m[i];
            }
            let (eps, rho, m) = (eps.scale(1.0 / 3.0), rho / 3.0, m / 3.0);
            let s = elastic_stress(&eps, rho, kp)?.add(&myofibroblast_traction(m, rho, kp)).to_matrix();
            for (ra, &i) in tri.iter().enumerate() {
                for k in 0..2 {
                    rhs[2 * i + k] -= area * (s[k][0] * g[ra][0] + s[k][1] * g[ra][1]);
                }
            }
        }

        let mut x = vec![0.0; 2 * n];
        for i in 0..n {
            for k in 0..2 {
                let dof = 2 * i + k;
                let slot = a.diag_slot(dof);
                a.vals[slot] += inertia * masses[i];
                rhs[dof] += inertia * masses[i] * state.v[i][k];
                x[dof] = state.v[i][k];
            }
        }
        for (i, tag) in mesh.tags.iter().enumerate() {
            let fixed: &[usize] = match tag {
                BoundaryTag::Interior => &[],
                BoundaryTag::Horizontal => &[1],
                BoundaryTag::Vertical => &[0],
                BoundaryTag::Origin | BoundaryTag::Outer => &[0, 1],
            };
            for &k in fixed {
                a.eliminate_symmetric(2 * i + k);
                rhs[2 * i + k] = 0.0;
                x[2 * i + k] = 0.0;
            }
        }
        cg(a, &rhs, &mut x, self.config.tol, self.config.max_iter)?;
        Ok((0..n).map(|i| [x[2 * i], x[2 * i + 1]]).collect())
    }

    pub(super) fn scalar_pattern(&mut self) -> (&mut Pattern, &[usize]) {
        (&mut self.scalar, &self.transpose)
    }

    pub(super) fn params(&self) -> (&'a VariableParams, &'a KineticParams, &'a SimConfig) {
        (self.vp, self.kp, self.config)
    }
}

pub(super) struct TransportCtx<'m> {
    pub mesh: &'m Mesh,
    pub old_nodes: &'m [[f64; 2]],
    pub m_old: &'m [f64],
    pub m_new: &'m [f64],
    pub dt: f64,
}

/// Area-weighted average of the element velocity gradients around each
/// node.
pub fn nodal_velocity_gradients(mesh: &Mesh, v: &[[f64; 2]]) -> Vec<Grad2> {
    let mut acc = vec![[[0.0; 2]; 2]; mesh.n_nodes()];
    let mut w = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = basis_gradients(mesh.corners(t));
        let mut ge = [[0.0; 2]; 2];
        for (a, &i) in tri.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    ge[r][c] += v[i][r] * g[a][c];
                }
            }
        }
        for &i in tri {
            w[i] += area;
            for r in 0..2 {
                for c in 0..2 {
                    acc[i][r][c] += area * ge[r][c];
                }
            }
        }
    }
    for (a, wi) in acc.iter_mut().zip(&w) {
        for row in a.iter_mut() {
            for x in row.iter_mut() {
                *x /= wi;
            }
        }
    }
    acc
}
