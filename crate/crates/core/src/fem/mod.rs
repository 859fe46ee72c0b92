//! Moving-mesh finite-element solver on the quarter domain.
//!
//! Linear Lagrange elements throughout. One step solves the momentum
//! balance on the current mesh, moves the nodes with the velocity, updates
//! the strain, and then transports the cell densities and the signalling
//! molecule on the moved mesh with a flux-corrected low/high-order pair.

mod io;
pub mod mesh;
mod remesh;
pub mod sparse;
mod step;
mod transport;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biomodel::{KineticParams, ModelError, VariableParams};
use crate::geometry::{close_with_axes, polygon_area, WoundGeometry};

pub use mesh::{auto_element_size, generate_mesh, mesh_from_rim, mesh_quality, BoundaryTag, Mesh, PointLocator};
pub use remesh::{remesh, transfer_fields};
pub use step::{initial_conditions, unwounded_state, SimState, Stepper};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("{solver} did not converge: {iterations} iterations, relative residual {residual:e}")]
    Solver { solver: &'static str, iterations: usize, residual: f64 },
    #[error("limiter produced {field} = {value:e} at node {node}")]
    Limiter { field: &'static str, node: usize, value: f64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("at t = {t} days: {source}")]
    At { t: f64, source: Box<FemError> },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed result file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FctMode {
    #[default]
    Fct,
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Time step in days.
    pub dt: f64,
    pub t_end: f64,
    /// Element size in cm; derived from `target_nodes` when absent.
    pub h: Option<f64>,
    pub target_nodes: usize,
    /// Remesh when `min|J|/max|J|` drops below this fraction of the value
    /// of the freshly generated mesh.
    pub remesh_threshold: f64,
    pub fct: FctMode,
    pub tol: f64,
    pub max_iter: usize,
    /// Spacing of the recorded time grid in days.
    pub record_interval: f64,
    /// Explicit record times; overrides `record_interval`.
    pub record_times: Option<Vec<f64>>,
    /// Drop the inertial term from the momentum balance.
    pub quasi_static: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_end: 100.0,
            h: None,
            target_nodes: 500,
            remesh_threshold: 0.5,
            fct: FctMode::Fct,
            tol: 1e-8,
            max_iter: 5000,
            record_interval: 1.0,
            record_times: None,
            quasi_static: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), FemError> {
        let bad = |m: String| Err(FemError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt) {
            return bad(format!("t_end {} must be at least dt {}", self.t_end, self.dt));
        }
        if !(self.remesh_threshold > 0.0 && self.remesh_threshold <= 1.0) {
            return bad(format!("remesh threshold must lie in (0, 1], got {}", self.remesh_threshold));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("solver tolerance and iteration limit must be positive".into());
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return bad(format!("element size must be positive, got {h}"));
            }
        }
        if self.record_times.is_none() && !(self.record_interval > 0.0) {
            return bad("record interval must be positive".into());
        }
        if let Some(ts) = &self.record_times {
            if ts.iter().any(|t| !(*t >= 0.0 && *t <= self.t_end + 1e-9)) {
                return bad("record times must lie in [0, t_end]".into());
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Recorded `(step index, time)` pairs, always starting at `t = 0`.
    pub fn record_schedule(&self) -> Vec<(usize, f64)> {
        let times: Vec<f64> = match &self.record_times {
            Some(ts) => ts.clone(),
            None => {
                let n = (self.t_end / self.record_interval + 1e-9).floor() as usize;
                (0..=n).map(|k| k as f64 * self.record_interval).collect()
            }
        };
        let mut out: Vec<(usize, f64)> = vec![(0, 0.0)];
        for t in times {
            let k = ((t / self.dt).round() as usize).min(self.n_steps());
            if !out.iter().any(|(s, _)| *s == k) {
                out.push((k, t));
            }
        }
        out.sort_by_key(|(s, _)| *s);
        out
    }

    pub fn element_size(&self, geometry: &WoundGeometry) -> f64 {
        self.h.unwrap_or_else(|| auto_element_size(geometry, self.target_nodes))
    }
}

/// Snapshot of the solution at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub nodes: Vec<[f64; 2]>,
    pub u: Vec<[f64; 2]>,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub c: Vec<f64>,
    pub rho: Vec<f64>,
    pub triangles: Arc<Vec<[usize; 3]>>,
    pub rim: Arc<Vec<usize>>,
    pub rsaw: f64,
}

impl Record {
    /// Node positions in the undeformed configuration, `x − u`.
    pub fn reference_nodes(&self) -> Vec<[f64; 2]> {
        self.nodes.iter().zip(&self.u).map(|(x, u)| [x[0] - u[0], x[1] - u[1]]).collect()
    }

    pub fn rim_points(&self) -> Vec<[f64; 2]> {
        self.rim.iter().map(|&i| self.nodes[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub geometry: WoundGeometry,
    pub params: VariableParams,
    pub kinetic: KineticParams,
    pub config: SimConfig,
    pub records: Vec<Record>,
    pub remesh_count: usize,
    pub wall_seconds: f64,
}

impl SimResult {
    pub fn rsaw_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.rsaw)).collect()
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<(), FemError> {
        io::save(self, dir)
    }

    pub fn load(dir: &std::path::Path) -> Result<Self, FemError> {
        io::load(dir)
    }
}

/// Simulates from `t = 0` to `t_end`, remeshing on demand and recording on
/// the configured time grid. Deterministic given its inputs.
pub fn run_simulation(
    config: &SimConfig,
    geometry: &WoundGeometry,
    params: &VariableParams,
    kinetic: &KineticParams,
) -> Result<SimResult, FemError> {
    config.validate()?;
    kinetic.validate()?;
    params.validate()?;
    let clock = Instant::now();
    let h = config.element_size(geometry);
    let mut mesh = generate_mesh(geometry, h)?;
    let mut state = initial_conditions(&mesh, geometry, kinetic)?;
    let initial_rim = close_with_axes(&mesh.rim_points());
    let a0 = polygon_area(&initial_rim).map_err(|e| FemError::Mesh(e.to_string()))?;

    let schedule = config.record_schedule();
    let mut next = 0;
    let mut records = Vec::with_capacity(schedule.len());
    let mut triangles = Arc::new(mesh.triangles.clone());
    let mut rim = Arc::new(mesh.rim.clone());
    let mut reference_quality = mesh.quality();
    let mut remesh_count = 0;
    let mut stepper = Stepper::new(&mesh, config, params, kinetic);

    let mut record = |k: usize, state: &SimState, mesh: &Mesh, tri: &Arc<Vec<[usize; 3]>>, rim: &Arc<Vec<usize>>, next: &mut usize| -> Result<(), FemError> {
        while *next < schedule.len() && schedule[*next].0 == k {
            let rsaw = if k == 0 {
                1.0
            } else {
                polygon_area(&close_with_axes(&mesh.rim_points())).map_err(|e| FemError::Mesh(e.to_string()))? / a0
            };
            records.push(Record {
                t: schedule[*next].1,
                nodes: mesh.nodes.clone(),
                u: state.u.clone(),
                n: state.n.clone(),
                m: state.m.clone(),
                c: state.c.clone(),
                rho: state.rho.clone(),
                triangles: Arc::clone(tri),
                rim: Arc::clone(rim),
                rsaw,
            });
            *next += 1;
        }
        Ok(())
    };

    record(0, &state, &mesh, &triangles, &rim, &mut next)?;
    for k in 1..=config.n_steps() {
        let t = k as f64 * config.dt;
        let at = |e: FemError| FemError::At { t, source: Box::new(e) };
        stepper.step(&mut state, &mut mesh).map_err(at)?;
        if mesh.quality() < config.remesh_threshold * reference_quality {
            let (s, m) = remesh(&state, &mesh, h).map_err(at)?;
            log::debug!("remesh at t = {t:.2}: quality {:.3} -> {:.3}", mesh.quality(), m.quality());
            state = s;
            mesh = m;
            reference_quality = mesh.quality();
            triangles = Arc::new(mesh.triangles.clone());
            rim = Arc::new(mesh.rim.clone());
            stepper = Stepper::new(&mesh, config, params, kinetic);
            remesh_count += 1;
        }
        record(k, &state, &mesh, &triangles, &rim, &mut next)?;
    }

    Ok(SimResult {
        geometry: geometry.clone(),
        params: *params,
        kinetic: kinetic.clone(),
        config: config.clone(),
        records,
        remesh_count,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Displaced rim polylines and the RSAW curve of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct WoundTrace {
    pub times: Vec<f64>,
    pub rsaw: Vec<f64>,
    pub rims: Vec<Vec<[f64; 2]>>,
    pub argmin_t: f64,
    pub min_rsaw: f64,
    pub final_rsaw: f64,
}

pub fn wound_boundary_trace(result: &SimResult) -> Result<WoundTrace, FemError> {
    let rims: Vec<Vec<[f64; 2]>> = result.records.iter().map(Record::rim_points).collect();
    let first = rims.first().ok_or_else(|| FemError::Parse("result has no records".into()))?;
    let a0 = polygon_area(&close_with_axes(first)).map_err(|e| FemError::Mesh(e.to_string()))?;
    let mut rsaw = Vec::with_capacity(rims.len());
    for r in &rims {
        rsaw.push(polygon_area(&close_with_axes(r)).map_err(|e| FemError::Mesh(e.to_string()))? / a0);
    }
    let times: Vec<f64> = result.records.iter().map(|r| r.t).collect();
    let (mut argmin, mut min) = (0, f64::INFINITY);
    for (k, &v) in rsaw.iter().enumerate() {
        if v < min {
            min = v;
            argmin = k;
        }
    }
    Ok(WoundTrace {
        argmin_t: times[argmin],
        min_rsaw: min,
        final_rsaw: *rsaw.last().unwrap(),
        times,
        rsaw,
        rims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeKind;

    #[test]
    fn schedule_covers_grid() {
        let c = SimConfig { t_end: 3.0, ..SimConfig::default() };
        let s = c.record_schedule();
        assert_eq!(s, vec![(0, 0.0), (10, 1.0), (20, 2.0), (30, 3.0)]);
        let c = SimConfig { t_end: 1.0, record_times: Some(vec![0.5, 0.0]), ..SimConfig::default() };
        assert_eq!(c.record_schedule(), vec![(0, 0.0), (5, 0.5)]);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { dt: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { remesh_threshold: 1.5, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { t_end: 0.01, ..SimConfig::default() }.validate().is_err());
        SimConfig::default().validate().unwrap();
    }

    fn synthetic(scale: f64) -> SimResult {
        let g = WoundGeometry::basic(ShapeKind::Rectangle, 2.0, 1.0).unwrap();
        let rim0 = vec![[2.0, 0.0], [2.0, 1.0], [0.0, 1.0]];
        let mk = |t: f64, s: f64| Record {
            t,
            nodes: rim0.iter().map(|p| [p[0] * s, p[1] * s]).collect(),
            u: vec![[0.0; 2]; 3],
            n: vec![0.0; 3],
            m: vec![0.0; 3],
            c: vec![0.0; 3],
            rho: vec![0.0; 3],
            triangles: Arc::new(vec![]),
            rim: Arc::new(vec![0, 1, 2]),
            rsaw: 0.0,
        };
        SimResult {
            geometry: g,
            params: VariableParams::default(),
            kinetic: KineticParams::default(),
            config: SimConfig::default(),
            records: vec![mk(0.0, 1.0), mk(10.0, scale), mk(20.0, scale), mk(30.0, 0.95)],
            remesh_count: 0,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn trace_of_scaled_rim() {
        let tr = wound_boundary_trace(&synthetic(0.9)).unwrap();
        assert_eq!(tr.rsaw[0], 1.0);
        assert!((tr.rsaw[1] - 0.81).abs() < 1e-12);
        // tie between t = 10 and t = 20 resolves to the earlier time
        assert_eq!(tr.argmin_t, 10.0);
        assert!((tr.final_rsaw - 0.9025).abs() < 1e-12);
    }
}
