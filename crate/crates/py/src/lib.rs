//! Python bindings: geometry, simulation, datasets, DeepONet training and
//! prediction, and the evaluation metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use woundnet::biomodel::{KineticParams, VariableParams};
use woundnet::cli::{fit_model, RunConfig};
use woundnet::datapipe::{self, DataConfig};
use woundnet::deeponet::{self, Ablation};
use woundnet::fem::{self, SimConfig};
use woundnet::geometry::{self, ShapeKind};
use woundnet::metrics;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn params_from(p: Option<[f64; 5]>) -> PyResult<VariableParams> {
    let vp = p.map_or_else(VariableParams::default, VariableParams::from_array);
    vp.validate().map_err(value_err)?;
    Ok(vp)
}

#[pyclass(name = "WoundGeometry", module = "woundnet", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGeometry {
    inner: geometry::WoundGeometry,
}

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (kind, x_cut, y_cut, weights=None))]
    fn new(kind: &str, x_cut: f64, y_cut: f64, weights: Option<[f64; 3]>) -> PyResult<Self> {
        let kind: ShapeKind = kind.parse().map_err(value_err)?;
        let inner = match (kind, weights) {
            (ShapeKind::Convex, Some(w)) => geometry::WoundGeometry::convex(x_cut, y_cut, w),
            (ShapeKind::Convex, None) => return Err(PyValueError::new_err("convex shapes need weights")),
            (k, _) => geometry::WoundGeometry::basic(k, x_cut, y_cut),
        }
        .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    #[pyo3(signature = (n_samples=geometry::DEFAULT_SAMPLES))]
    fn boundary(&self, n_samples: usize) -> PyResult<Vec<[f64; 2]>> {
        Ok(self.inner.boundary(n_samples).map_err(value_err)?.points)
    }

    #[pyo3(signature = (n_samples=geometry::DEFAULT_SAMPLES))]
    fn area(&self, n_samples: usize) -> PyResult<f64> {
        self.inner.boundary(n_samples).map_err(value_err)?.area().map_err(value_err)
    }

    /// `(y_cut, x_m, y_m, x_cut)`
    fn quadruple(&self) -> [f64; 4] {
        self.inner.quadruple().to_array()
    }

    fn extent(&self) -> (f64, f64) {
        self.inner.extent()
    }

    fn __repr__(&self) -> String {
        format!("WoundGeometry({}, {}, {})", self.inner.kind, self.inner.x_cut, self.inner.y_cut)
    }
}

#[pyclass(name = "SimResult", module = "woundnet")]
pub struct PySimResult {
    inner: fem::SimResult,
}

#[pymethods]
impl PySimResult {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.t).collect()
    }

    #[getter]
    fn rsaw(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.rsaw).collect()
    }

    #[getter]
    fn remesh_count(&self) -> usize {
        self.inner.remesh_count
    }

    #[getter]
    fn wall_seconds(&self) -> f64 {
        self.inner.wall_seconds
    }

    /// Nodes, displacements and densities `(N, M, c, rho)` of record `k`.
    #[allow(clippy::type_complexity)]
    fn record(&self, k: usize) -> PyResult<(Vec<[f64; 2]>, Vec<[f64; 2]>, [Vec<f64>; 4])> {
        let r = self.inner.records.get(k).ok_or_else(|| PyValueError::new_err("record index out of range"))?;
        Ok((r.nodes.clone(), r.u.clone(), [r.n.clone(), r.m.clone(), r.c.clone(), r.rho.clone()]))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(runtime_err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

/// Runs one simulation. `sim` is a TOML fragment with `[sim]` keys, e.g.
/// `"t_end = 20.0\ndt = 0.1"`.
#[pyfunction]
#[pyo3(signature = (geometry, params=None, sim=""))]
fn simulate(py: Python<'_>, geometry: &PyGeometry, params: Option<[f64; 5]>, sim: &str) -> PyResult<PySimResult> {
    let cfg: SimConfig = toml::from_str(sim).map_err(value_err)?;
    let vp = params_from(params)?;
    let g = geometry.inner;
    let res = py
        .detach(|| fem::run_simulation(&cfg, &g, &vp, &KineticParams::default()))
        .map_err(runtime_err)?;
    Ok(PySimResult { inner: res })
}

#[pyclass(name = "Dataset", module = "woundnet")]
pub struct PyDataset {
    inner: datapipe::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: datapipe::Dataset::load(&path).map_err(runtime_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(runtime_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_sims(&self) -> usize {
        self.inner.provenance.sims.len()
    }

    /// Rows in the `records.csv` column order.
    fn rows(&self) -> Vec<[f64; 16]> {
        self.inner
            .records
            .iter()
            .map(|r| {
                let mut row = [0.0; 16];
                row[..5].copy_from_slice(&r.branch);
                row[5..12].copy_from_slice(&r.trunk);
                row[12..14].copy_from_slice(&r.target);
                row[14..].copy_from_slice(&r.extent);
                row
            })
            .collect()
    }

    fn targets(&self) -> Vec<[f64; 2]> {
        self.inner.records.iter().map(|r| r.target).collect()
    }
}

fn generate(py: Python<'_>, convex: bool, n_sims: usize, seed: u64, sim: &str) -> PyResult<PyDataset> {
    let cfg: SimConfig = toml::from_str(sim).map_err(value_err)?;
    let data = DataConfig { n_sims, test_sims: n_sims, ..DataConfig::default() };
    let kp = KineticParams::default();
    let ds = py
        .detach(|| {
            if convex {
                datapipe::generate_convex_test_set(&data, &cfg, &kp, seed)
            } else {
                datapipe::generate_training_set(&data, &cfg, &kp, seed)
            }
        })
        .map_err(runtime_err)?;
    Ok(PyDataset { inner: ds })
}

#[pyfunction]
#[pyo3(signature = (n_sims, seed=0, sim=""))]
fn generate_training_set(py: Python<'_>, n_sims: usize, seed: u64, sim: &str) -> PyResult<PyDataset> {
    generate(py, false, n_sims, seed, sim)
}

#[pyfunction]
#[pyo3(signature = (n_sims, seed=0, sim=""))]
fn generate_convex_test_set(py: Python<'_>, n_sims: usize, seed: u64, sim: &str) -> PyResult<PyDataset> {
    generate(py, true, n_sims, seed, sim)
}

#[pyclass(name = "DeepONet", module = "woundnet")]
pub struct PyDeepONet {
    inner: deeponet::DeepONet,
}

#[pymethods]
impl PyDeepONet {
    /// Trains a fresh model on `dataset`. `config` is a run configuration in
    /// TOML; its `[train]` and `[data]` sections and `seed` apply.
    #[staticmethod]
    #[pyo3(signature = (dataset, ablation="final", config=""))]
    fn fit(py: Python<'_>, dataset: &PyDataset, ablation: &str, config: &str) -> PyResult<(Self, Vec<f64>, Vec<f64>)> {
        let cfg = RunConfig::from_toml(config).map_err(value_err)?;
        let ab: Ablation = ablation.parse().map_err(value_err)?;
        let ds = &dataset.inner;
        let (model, hist) = py.detach(|| fit_model(&cfg, ds, ab, None)).map_err(runtime_err)?;
        Ok((Self { inner: model }, hist.train, hist.val))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: deeponet::DeepONet::load(&path).map_err(runtime_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(runtime_err)
    }

    #[getter]
    fn ablation(&self) -> &'static str {
        self.inner.ablation.label()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    /// Displacements at `(t, x, y)` points for one wound.
    fn predict_field(&self, params: [f64; 5], geometry: &PyGeometry, points: Vec<[f64; 3]>) -> PyResult<Vec<[f64; 2]>> {
        let g = geometry.inner;
        let (x_l, y_l) = g.extent();
        let (u, _) = self
            .inner
            .predict_field(params, g.quadruple().to_array(), [x_l, y_l], &points)
            .map_err(value_err)?;
        Ok(u)
    }

    fn predict(&self, dataset: &PyDataset) -> PyResult<Vec<[f64; 2]>> {
        self.inner.predict(&dataset.inner.records).map_err(value_err)
    }
}

#[pyfunction]
fn sine_augment(u_hat: [f64; 2], x: f64, y: f64, x_l: f64, y_l: f64) -> PyResult<[f64; 2]> {
    deeponet::sine_augment(u_hat, x, y, x_l, y_l).map_err(value_err)
}

#[pyfunction]
fn r2_score(truth: Vec<[f64; 2]>, pred: Vec<[f64; 2]>) -> PyResult<f64> {
    metrics::r2_score(&truth, &pred).map_err(value_err)
}

#[pyfunction]
fn arrmse(truth: Vec<[f64; 2]>, pred: Vec<[f64; 2]>) -> PyResult<f64> {
    metrics::arrmse(&truth, &pred).map_err(value_err)
}

#[pyfunction]
fn arelerr(truth: Vec<[f64; 2]>, pred: Vec<[f64; 2]>) -> PyResult<f64> {
    metrics::arelerr(&truth, &pred).map_err(value_err)
}

#[pyfunction]
fn round1(v: f64) -> f64 {
    geometry::round1(v)
}

#[pyfunction]
fn domain_extent(x_cut: f64, y_cut: f64) -> (f64, f64) {
    geometry::domain_extent(x_cut, y_cut)
}

#[pymodule(name = "woundnet")]
fn woundnet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PySimResult>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyDeepONet>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_training_set, m)?)?;
    m.add_function(wrap_pyfunction!(generate_convex_test_set, m)?)?;
    m.add_function(wrap_pyfunction!(sine_augment, m)?)?;
    m.add_function(wrap_pyfunction!(r2_score, m)?)?;
    m.add_function(wrap_pyfunction!(arrmse, m)?)?;
    m.add_function(wrap_pyfunction!(arelerr, m)?)?;
    m.add_function(wrap_pyfunction!(round1, m)?)?;
    m.add_function(wrap_pyfunction!(domain_extent, m)?)?;
    Ok(())
}
