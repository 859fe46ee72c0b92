//! Branch/trunk DeepONet with optional sine augmentation, exact reverse-mode
//! gradients and Adam training.
//!
//! Weights are stored `(fan_in × fan_out)` so a batch `X` (rows = samples)
//! maps to `relu(X W + b)`. The output layer of each network is linear.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biomodel::VARIABLE_RANGES;
use crate::datapipe::DataRecord;

#[derive(Debug, Error)]
pub enum DeepOnetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file error: {0}")]
    Format(String),
}

/// Fully connected ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

struct MlpTape {
    /// Layer inputs `H_0 = X, H_1, …`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Weights and biases drawn from `U(±1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)));
            biases.push(Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..bound)));
        }
        Self { weights, biases }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        Self {
            weights: widths.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: widths.windows(2).map(|w| Array1::zeros(w[1])).collect(),
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.weights.iter().map(|m| m.nrows()).collect();
        w.extend(self.weights.last().map(|m| m.ncols()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.weights.first().map_or(0, |w| w.nrows())
    }

    pub fn output_width(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, DeepOnetError> {
        if x.ncols() != self.input_width() {
            return Err(DeepOnetError::Shape(format!("expected {} inputs, got {}", self.input_width(), x.ncols())));
        }
        let mut h = x.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>, DeepOnetError> {
        let a = ArrayView2::from_shape((1, x.len()), x).map_err(|e| DeepOnetError::Shape(e.to_string()))?;
        Ok(self.forward(a)?.into_iter().collect())
    }

    fn forward_tape(&self, x: Array2<f64>) -> (Array2<f64>, MlpTape) {
        let last = self.weights.len() - 1;
        let mut tape = MlpTape { inputs: Vec::with_capacity(last + 1), pre: Vec::with_capacity(last + 1) };
        let mut h = x;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = h.dot(w) + b;
            let next = if l < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            tape.inputs.push(h);
            tape.pre.push(z);
            h = next;
        }
        (h, tape)
    }

    /// Accumulates parameter gradients for `dL/d(output) = g` into `grads`.
    fn backward(&self, tape: &MlpTape, mut g: Array2<f64>, grads: &mut Mlp) {
        let last = self.weights.len() - 1;
        for l in (0..=last).rev() {
            if l < last {
                Zip::from(&mut g).and(&tape.pre[l]).for_each(|gv, &z| {
                    if z <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            grads.weights[l] += &tape.inputs[l].t().dot(&g);
            grads.biases[l] += &g.sum_axis(Axis(0));
            if l > 0 {
                g = g.dot(&self.weights[l].t());
            }
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Where the wound-shape quadruple enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeInfo {
    None,
    Branch,
    Trunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub shape_info: ShapeInfo,
    pub sine: bool,
}

impl Ablation {
    pub const CASE1: Ablation = Ablation { shape_info: ShapeInfo::None, sine: false };
    pub const CASE2: Ablation = Ablation { shape_info: ShapeInfo::Branch, sine: false };
    pub const CASE3: Ablation = Ablation { shape_info: ShapeInfo::Trunk, sine: false };
    pub const CASE4: Ablation = Ablation { shape_info: ShapeInfo::None, sine: true };
    pub const FINAL: Ablation = Ablation { shape_info: ShapeInfo::Trunk, sine: true };
    pub const ALL: [Ablation; 5] = [Self::CASE1, Self::CASE2, Self::CASE3, Self::CASE4, Self::FINAL];

    pub fn label(self) -> &'static str {
        match (self.shape_info, self.sine) {
            (ShapeInfo::None, false) => "case1",
            (ShapeInfo::Branch, false) => "case2",
            (ShapeInfo::Trunk, false) => "case3",
            (ShapeInfo::None, true) => "case4",
            (ShapeInfo::Trunk, true) => "final",
            (ShapeInfo::Branch, true) => "branch-sine",
        }
    }

    pub fn branch_width(self) -> usize {
        if self.shape_info == ShapeInfo::Branch {
            9
        } else {
            5
        }
    }

    pub fn trunk_width(self) -> usize {
        if self.shape_info == ShapeInfo::Trunk {
            7
        } else {
            3
        }
    }
}

impl Default for Ablation {
    fn default() -> Self {
        Self::FINAL
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Ablation {
    type Err = DeepOnetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| DeepOnetError::Config(format!("unknown ablation '{s}' (case1..case4, final)")))
    }
}

/// Min–max maps to `[0, 1]`, one `(lo, hi)` per network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub branch: Vec<(f64, f64)>,
    pub trunk: Vec<(f64, f64)>,
}

fn bounds_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

impl Normalization {
    /// Parameter ranges for the five kinetic inputs; data-derived bounds for
    /// everything else.
    pub fn fit(records: &[DataRecord], ablation: Ablation) -> Result<Self, DeepOnetError> {
        if records.is_empty() {
            return Err(DeepOnetError::Data("cannot fit normalization on an empty set".into()));
        }
        let col = |k: usize| bounds_of(records.iter().map(move |r| r.trunk[k]));
        let mut branch: Vec<(f64, f64)> = VARIABLE_RANGES.iter().map(|(_, lo, hi)| (*lo, *hi)).collect();
        let mut trunk: Vec<(f64, f64)> = (0..3).map(col).collect();
        let quad: Vec<(f64, f64)> = (3..7).map(col).collect();
        match ablation.shape_info {
            ShapeInfo::Branch => branch.extend(quad),
            ShapeInfo::Trunk => trunk.extend(quad),
            ShapeInfo::None => {}
        }
        Ok(Self { branch, trunk })
    }

    pub fn identity(ablation: Ablation) -> Self {
        Self { branch: vec![(0.0, 1.0); ablation.branch_width()], trunk: vec![(0.0, 1.0); ablation.trunk_width()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub p: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { p: 50, hidden_layers: 3, hidden_width: 50 }
    }
}

impl Architecture {
    pub fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(output);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepONet {
    pub branch: Mlp,
    pub trunk: Mlp,
    pub p: usize,
    pub ablation: Ablation,
    pub norm: Normalization,
}

/// `sin(π r)` with exact zeros at `r ∈ {0, 1}`.
fn sin_pi(r: f64) -> f64 {
    if r == 0.0 || r == 1.0 {
        0.0
    } else {
        (PI * r).sin()
    }
}

/// `cos(π r / 2)` with an exact zero at `r = 1`.
fn cos_half_pi(r: f64) -> f64 {
    if r == 1.0 {
        0.0
    } else {
        (0.5 * PI * r).cos()
    }
}

/// Multipliers `(s1, s2)` of the sine augmentation.
pub fn sine_factors(x: f64, y: f64, x_l: f64, y_l: f64) -> Result<[f64; 2], DeepOnetError> {
    if !(x_l > 0.0 && y_l > 0.0) {
        return Err(DeepOnetError::Domain(format!("extent ({x_l}, {y_l}) must be positive")));
    }
    let (rx, ry) = (x / x_l, y / y_l);
    Ok([sin_pi(rx) * cos_half_pi(ry), sin_pi(ry) * cos_half_pi(rx)])
}

pub fn sine_augment(u_hat: [f64; 2], x: f64, y: f64, x_l: f64, y_l: f64) -> Result<[f64; 2], DeepOnetError> {
    let s = sine_factors(x, y, x_l, y_l)?;
    Ok([u_hat[0] * s[0], u_hat[1] * s[1]])
}

/// Network-ready inputs for a set of records.
pub struct Prepared {
    pub branch: Array2<f64>,
    pub trunk: Array2<f64>,
    pub sine: Array2<f64>,
    pub target: Array2<f64>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.branch.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Prepared {
        Prepared {
            branch: self.branch.select(Axis(0), idx),
            trunk: self.trunk.select(Axis(0), idx),
            sine: self.sine.select(Axis(0), idx),
            target: self.target.select(Axis(0), idx),
        }
    }
}

/// Gradients in the shape of the two networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub branch: Mlp,
    pub trunk: Mlp,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.branch.slices();
        v.extend(self.trunk.slices());
        v
    }
}

impl DeepONet {
    pub fn new(
        ablation: Ablation,
        arch: &Architecture,
        norm: Normalization,
        seed: u64,
    ) -> Result<Self, DeepOnetError> {
        if arch.p == 0 || arch.hidden_width == 0 {
            return Err(DeepOnetError::Config("p and hidden width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch = Mlp::new(&arch.widths(ablation.branch_width(), 2 * arch.p), &mut rng);
        let trunk = Mlp::new(&arch.widths(ablation.trunk_width(), arch.p), &mut rng);
        Self::from_parts(branch, trunk, ablation, norm)
    }

    pub fn from_parts(branch: Mlp, trunk: Mlp, ablation: Ablation, norm: Normalization) -> Result<Self, DeepOnetError> {
        let p = trunk.output_width();
        if p == 0 {
            return Err(DeepOnetError::Shape("trunk has no outputs".into()));
        }
        if branch.output_width() != 2 * p {
            return Err(DeepOnetError::Shape(format!(
                "branch outputs {} values, expected 2·p = {}",
                branch.output_width(),
                2 * p
            )));
        }
        if branch.input_width() != ablation.branch_width() || trunk.input_width() != ablation.trunk_width() {
            return Err(DeepOnetError::Shape(format!(
                "{ablation} needs branch/trunk inputs {}/{}, got {}/{}",
                ablation.branch_width(),
                ablation.trunk_width(),
                branch.input_width(),
                trunk.input_width()
            )));
        }
        if norm.branch.len() != branch.input_width() || norm.trunk.len() != trunk.input_width() {
            return Err(DeepOnetError::Shape("normalization does not match the input widths".into()));
        }
        for w in branch.widths().windows(2).chain(trunk.widths().windows(2)) {
            if w[0] == 0 || w[1] == 0 {
                return Err(DeepOnetError::Shape("zero-width layer".into()));
            }
        }
        Ok(Self { branch, trunk, p, ablation, norm })
    }

    pub fn architecture(&self) -> Architecture {
        let w = self.trunk.widths();
        Architecture { p: self.p, hidden_layers: w.len() - 2, hidden_width: w.get(1).copied().unwrap_or(0) }
    }

    pub fn n_params(&self) -> usize {
        self.branch.n_params() + self.trunk.n_params()
    }

    pub fn branch_input(&self, r: &DataRecord) -> Vec<f64> {
        let mut v: Vec<f64> = r.branch.to_vec();
        if self.ablation.shape_info == ShapeInfo::Branch {
            v.extend_from_slice(&r.trunk[3..7]);
        }
        v.iter().zip(&self.norm.branch).map(|(x, b)| scale(*x, *b)).collect()
    }

    pub fn trunk_input(&self, r: &DataRecord) -> Vec<f64> {
        let k = self.ablation.trunk_width();
        r.trunk[..k].iter().zip(&self.norm.trunk).map(|(x, b)| scale(*x, *b)).collect()
    }

    pub fn prepare(&self, records: &[DataRecord]) -> Result<Prepared, DeepOnetError> {
        let n = records.len();
        let (nb, nt) = (self.branch.input_width(), self.trunk.input_width());
        let mut branch = Array2::zeros((n, nb));
        let mut trunk = Array2::zeros((n, nt));
        let mut sine = Array2::ones((n, 2));
        let mut target = Array2::zeros((n, 2));
        for (i, r) in records.iter().enumerate() {
            for (k, v) in self.branch_input(r).into_iter().enumerate() {
                branch[[i, k]] = v;
            }
            for (k, v) in self.trunk_input(r).into_iter().enumerate() {
                trunk[[i, k]] = v;
            }
            if self.ablation.sine {
                let s = sine_factors(r.trunk[1], r.trunk[2], r.extent[0], r.extent[1])?;
                sine[[i, 0]] = s[0];
                sine[[i, 1]] = s[1];
            }
            target[[i, 0]] = r.target[0];
            target[[i, 1]] = r.target[1];
        }
        Ok(Prepared { branch, trunk, sine, target })
    }

    fn combine(&self, b: &Array2<f64>, c: &Array2<f64>) -> Array2<f64> {
        let p = self.p;
        let u1 = (&b.slice(s![.., ..p]) * c).sum_axis(Axis(1));
        let u2 = (&b.slice(s![.., p..]) * c).sum_axis(Axis(1));
        let mut out = Array2::zeros((c.nrows(), 2));
        out.column_mut(0).assign(&u1);
        out.column_mut(1).assign(&u2);
        out
    }

    /// Displacements for prepared inputs.
    pub fn forward(&self, x: &Prepared) -> Result<Array2<f64>, DeepOnetError> {
        let b = self.branch.forward(x.branch.view())?;
        let c = self.trunk.forward(x.trunk.view())?;
        Ok(self.combine(&b, &c) * &x.sine)
    }

    pub fn predict(&self, records: &[DataRecord]) -> Result<Vec<[f64; 2]>, DeepOnetError> {
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(PREDICT_CHUNK) {
            let u = self.forward(&self.prepare(chunk)?)?;
            out.extend(u.rows().into_iter().map(|r| [r[0], r[1]]));
        }
        Ok(out)
    }

    /// Single query from raw (unnormalized) inputs.
    pub fn forward_one(
        &self,
        params: [f64; 5],
        txy: [f64; 3],
        quad: [f64; 4],
        extent: [f64; 2],
    ) -> Result<[f64; 2], DeepOnetError> {
        let r = DataRecord {
            branch: params,
            trunk: [txy[0], txy[1], txy[2], quad[0], quad[1], quad[2], quad[3]],
            target: [0.0; 2],
            extent,
        };
        Ok(self.predict(std::slice::from_ref(&r))?[0])
    }

    /// Field prediction for one sample: the branch is evaluated once and the
    /// trunk over all `(t, x, y)` points.
    pub fn predict_field(
        &self,
        params: [f64; 5],
        quad: [f64; 4],
        extent: [f64; 2],
        points: &[[f64; 3]],
    ) -> Result<(Vec<[f64; 2]>, f64), DeepOnetError> {
        let clock = Instant::now();
        let (x_l, y_l) = (extent[0], extent[1]);
        for p in points {
            if !(p[1] >= 0.0 && p[1] <= x_l && p[2] >= 0.0 && p[2] <= y_l) {
                return Err(DeepOnetError::Domain(format!("point ({}, {}) outside [0, {x_l}]×[0, {y_l}]", p[1], p[2])));
            }
        }
        let proto = DataRecord { branch: params, trunk: [0.0, 0.0, 0.0, quad[0], quad[1], quad[2], quad[3]], target: [0.0; 2], extent };
        let bin = self.branch_input(&proto);
        let b = self.branch.forward_vec(&bin)?;
        let p = self.p;
        let mut coef = Array2::zeros((p, 2));
        for i in 0..p {
            coef[[i, 0]] = b[i];
            coef[[i, 1]] = b[p + i];
        }
        let nt = self.trunk.input_width();
        let mut trunk = Array2::zeros((points.len(), nt));
        let mut rec = proto;
        for (i, pt) in points.iter().enumerate() {
            rec.trunk[0] = pt[0];
            rec.trunk[1] = pt[1];
            rec.trunk[2] = pt[2];
            for (k, v) in self.trunk_input(&rec).into_iter().enumerate() {
                trunk[[i, k]] = v;
            }
        }
        let u = self.trunk.forward(trunk.view())?.dot(&coef);
        let mut out = Vec::with_capacity(points.len());
        for (i, pt) in points.iter().enumerate() {
            let uh = [u[[i, 0]], u[[i, 1]]];
            out.push(if self.ablation.sine { sine_augment(uh, pt[1], pt[2], x_l, y_l)? } else { uh });
        }
        Ok((out, clock.elapsed().as_secs_f64()))
    }

    /// Mean over records of `‖u − û‖²` and its exact gradient.
    pub fn loss_and_gradients(&self, x: &Prepared) -> Result<(f64, Gradients), DeepOnetError> {
        if x.is_empty() {
            return Err(DeepOnetError::Data("empty batch".into()));
        }
        let n = x.len() as f64;
        let p = self.p;
        let (b, tb) = self.branch.forward_tape(x.branch.clone());
        let (c, tc) = self.trunk.forward_tape(x.trunk.clone());
        let u_hat = self.combine(&b, &c);
        let u = &u_hat * &x.sine;
        let err = &u - &x.target;
        let loss = err.iter().map(|e| e * e).sum::<f64>() / n;

        let du_hat = err.mapv(|e| 2.0 * e / n) * &x.sine;
        let d1 = du_hat.column(0).insert_axis(Axis(1));
        let d2 = du_hat.column(1).insert_axis(Axis(1));
        let mut db = Array2::zeros(b.raw_dim());
        db.slice_mut(s![.., ..p]).assign(&(&c * &d1));
        db.slice_mut(s![.., p..]).assign(&(&c * &d2));
        let dc = &b.slice(s![.., ..p]) * &d1 + &b.slice(s![.., p..]) * &d2;

        let mut grads = Gradients { branch: Mlp::zeros(&self.branch.widths()), trunk: Mlp::zeros(&self.trunk.widths()) };
        self.branch.backward(&tb, db, &mut grads.branch);
        self.trunk.backward(&tc, dc, &mut grads.trunk);
        Ok((loss, grads))
    }

    pub fn loss(&self, x: &Prepared) -> Result<f64, DeepOnetError> {
        if x.is_empty() {
            return Err(DeepOnetError::Data("empty set".into()));
        }
        let u = self.forward(x)?;
        Ok((&u - &x.target).iter().map(|e| e * e).sum::<f64>() / x.len() as f64)
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut v = self.branch.slices();
        v.extend(self.trunk.slices());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.branch.slices_mut();
        v.extend(self.trunk.slices_mut());
        v
    }

    pub fn save(&self, path: &Path) -> Result<(), DeepOnetError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DeepOnetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, DeepOnetError> {
        let file = ModelFile {
            version: MODEL_VERSION,
            p: self.p,
            ablation: self.ablation,
            norm: self.norm.clone(),
            branch: LayerFile::from_mlp(&self.branch),
            trunk: LayerFile::from_mlp(&self.trunk),
        };
        serde_json::to_string(&file).map_err(|e| DeepOnetError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, DeepOnetError> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| DeepOnetError::Format(e.to_string()))?;
        if f.version != MODEL_VERSION {
            return Err(DeepOnetError::Format(format!("unsupported model version {}", f.version)));
        }
        let m = Self::from_parts(LayerFile::to_mlp(&f.branch)?, LayerFile::to_mlp(&f.trunk)?, f.ablation, f.norm)?;
        if m.p != f.p {
            return Err(DeepOnetError::Format("p does not match the trunk output width".into()));
        }
        Ok(m)
    }
}

/// Deep copy of `prev` for continued training; the optimizer always
/// starts fresh in [`train`].
pub fn warm_start(prev: &DeepONet, ablation: Ablation, arch: &Architecture) -> Result<DeepONet, DeepOnetError> {
    if prev.ablation != ablation || prev.architecture() != *arch {
        return Err(DeepOnetError::Shape(format!(
            "cannot warm-start {ablation} {arch:?} from {} {:?}",
            prev.ablation,
            prev.architecture()
        )));
    }
    Ok(prev.clone())
}

const MODEL_VERSION: u32 = 1;
const PREDICT_CHUNK: usize = 1 << 15;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    p: usize,
    ablation: Ablation,
    norm: Normalization,
    branch: Vec<LayerFile>,
    trunk: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerFile {
    fn from_mlp(m: &Mlp) -> Vec<LayerFile> {
        m.weights
            .iter()
            .zip(&m.biases)
            .map(|(w, b)| LayerFile { rows: w.nrows(), cols: w.ncols(), weights: w.iter().copied().collect(), bias: b.to_vec() })
            .collect()
    }

    fn to_mlp(layers: &[LayerFile]) -> Result<Mlp, DeepOnetError> {
        if layers.is_empty() {
            return Err(DeepOnetError::Format("network without layers".into()));
        }
        let mut m = Mlp { weights: Vec::new(), biases: Vec::new() };
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.cols || (k > 0 && layers[k - 1].cols != l.rows) {
                return Err(DeepOnetError::Shape(format!("layer {k} dimensions disagree")));
            }
            m.weights.push(
                Array2::from_shape_vec((l.rows, l.cols), l.weights.clone()).map_err(|e| DeepOnetError::Shape(e.to_string()))?,
            );
            m.biases.push(Array1::from(l.bias.clone()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 100, epochs: 100, seed: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8, shuffle: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DeepOnetError> {
        if !(self.lr > 0.0) || self.batch_size == 0 || !(self.eps > 0.0) {
            return Err(DeepOnetError::Config("learning rate, batch size and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(DeepOnetError::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam moments for a list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: &[usize], beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model(model: &DeepONet, cfg: &TrainConfig) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self::new(&sizes, cfg.beta1, cfg.beta2, cfg.eps)
    }

    /// One bias-corrected Adam update.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], lr: f64) -> Result<(), DeepOnetError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(DeepOnetError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[k].len() {
                return Err(DeepOnetError::Shape(format!("block {k} size mismatch")));
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Per-epoch mean squared errors; entry 0 is the untrained model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

impl LossHistory {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train,val")?;
        for (e, (t, v)) in self.train.iter().zip(&self.val).enumerate() {
            writeln!(out, "{e},{t},{v}")?;
        }
        Ok(())
    }
}

pub fn train(
    model: &mut DeepONet,
    train_set: &[DataRecord],
    val_set: &[DataRecord],
    cfg: &TrainConfig,
) -> Result<LossHistory, DeepOnetError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(DeepOnetError::Data("training and validation splits must be non-empty".into()));
    }
    let xt = model.prepare(train_set)?;
    let xv = model.prepare(val_set)?;
    let mut adam = Adam::for_model(model, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xt.len()).collect();
    let mut hist = LossHistory { train: vec![model.loss(&xt)?], val: vec![model.loss(&xv)?] };
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch = xt.select(chunk);
            let (_, g) = model.loss_and_gradients(&batch)?;
            let grads = g.slices();
            adam.update(model.params_mut(), &grads, cfg.lr)?;
        }
        let (lt, lv) = (model.loss(&xt)?, model.loss(&xv)?);
        if !lt.is_finite() {
            return Err(DeepOnetError::Data(format!("training loss diverged at epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: train {lt:.4e} val {lv:.4e}");
        hist.train.push(lt);
        hist.val.push(lv);
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn record(rng: &mut ChaCha8Rng) -> DataRecord {
        let x_l = rng.random_range(1.0..10.0);
        let y_l = rng.random_range(1.0..10.0);
        DataRecord {
            branch: crate::biomodel::VariableParams::sample(rng).to_array(),
            trunk: [
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..x_l),
                rng.random_range(0.0..y_l),
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
            ],
            target: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            extent: [x_l, y_l],
        }
    }

    fn tiny(ablation: Ablation, seed: u64) -> DeepONet {
        let arch = Architecture { p: 2, hidden_layers: 2, hidden_width: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let recs: Vec<DataRecord> = (0..20).map(|_| record(&mut rng)).collect();
        DeepONet::new(ablation, &arch, Normalization::fit(&recs, ablation).unwrap(), seed).unwrap()
    }

    #[test]
    fn zero_network_gives_zero() {
        let m = Mlp::zeros(&[3, 4, 2]);
        assert_eq!(m.forward_vec(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn relu_identity_layer() {
        let mut m = Mlp::zeros(&[2, 2, 2]);
        m.weights[0] = Array2::eye(2);
        m.weights[1] = Array2::eye(2);
        assert_eq!(m.forward_vec(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        assert!(m.forward_vec(&[1.0]).is_err());
    }

    #[test]
    fn forward_matches_hand_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Mlp::new(&[3, 4, 2], &mut rng);
        let mut b = m.biases.clone();
        b[0] = Array1::from(vec![0.1, -0.2, 0.3, -0.4]);
        let m = Mlp { weights: m.weights, biases: b };
        let x = [0.3, -1.2, 0.8];
        let mut h = [0.0; 4];
        for j in 0..4 {
            let mut s = m.biases[0][j];
            for i in 0..3 {
                s += x[i] * m.weights[0][[i, j]];
            }
            h[j] = s.max(0.0);
        }
        let mut out = [0.0; 2];
        for j in 0..2 {
            out[j] = m.biases[1][j];
            for i in 0..4 {
                out[j] += h[i] * m.weights[1][[i, j]];
            }
        }
        let got = m.forward_vec(&x).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(got[j], out[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn dot_product_structure() {
        // p = 1, b = (2, 3), c = (4)
        let mut branch = Mlp::zeros(&[5, 1, 2]);
        branch.biases[1] = Array1::from(vec![2.0, 3.0]);
        let mut trunk = Mlp::zeros(&[3, 1, 1]);
        trunk.biases[1] = Array1::from(vec![4.0]);
        let m = DeepONet::from_parts(branch, trunk, Ablation::CASE1, Normalization::identity(Ablation::CASE1)).unwrap();
        let u = m.forward_one([0.0; 5], [1.0, 0.5, 0.5], [0.0; 4], [1.0, 1.0]).unwrap();
        assert_eq!(u, [8.0, 12.0]);

        let mut trunk0 = m.clone();
        trunk0.trunk = Mlp::zeros(&[3, 1, 1]);
        assert_eq!(trunk0.forward_one([0.0; 5], [1.0, 0.5, 0.5], [0.0; 4], [1.0, 1.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn explicit_basis_sum() {
        let m = tiny(Ablation::CASE3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let r = record(&mut rng);
            let b = m.branch.forward_vec(&m.branch_input(&r)).unwrap();
            let c = m.trunk.forward_vec(&m.trunk_input(&r)).unwrap();
            let mut u = [0.0; 2];
            for i in 0..m.p {
                u[0] += b[i] * c[i];
                u[1] += b[i + m.p] * c[i];
            }
            let got = m.predict(&[r]).unwrap()[0];
            assert_abs_diff_eq!(got[0], u[0], epsilon = 1e-12);
            assert_abs_diff_eq!(got[1], u[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn sine_examples() {
        assert_eq!(sine_augment([3.0, 5.0], 0.0, 0.7, 2.0, 1.0).unwrap()[0], 0.0);
        assert_eq!(sine_augment([3.0, 5.0], 1.3, 1.0, 2.0, 1.0).unwrap(), [0.0, 0.0]);
        assert_eq!(sine_augment([3.0, 5.0], 2.0, 0.4, 2.0, 1.0).unwrap(), [0.0, 0.0]);
        assert_eq!(sine_augment([3.0, 5.0], 1.1, 0.0, 2.0, 1.0).unwrap()[1], 0.0);
        assert_abs_diff_eq!(sine_augment([1.0, 0.0], 1.0, 0.0, 2.0, 1.0).unwrap()[0], 1.0, epsilon = 1e-15);
        assert!(sine_augment([1.0, 1.0], 0.5, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn ablation_wiring() {
        assert_eq!(tiny(Ablation::CASE1, 0).trunk.input_width(), 3);
        assert_eq!(tiny(Ablation::FINAL, 0).trunk.input_width(), 7);
        assert_eq!(tiny(Ablation::CASE2, 0).branch.input_width(), 9);
        assert_eq!(tiny(Ablation::CASE2, 0).branch.output_width(), 4);
        let m = tiny(Ablation::CASE1, 0);
        assert!(DeepONet::from_parts(m.branch.clone(), m.trunk.clone(), Ablation::FINAL, m.norm.clone()).is_err());
        assert_eq!("final".parse::<Ablation>().unwrap(), Ablation::FINAL);
    }

    fn finite_difference_error(m: &DeepONet, batch: &Prepared) -> f64 {
        let (_, g) = m.loss_and_gradients(batch).unwrap();
        let grads: Vec<Vec<f64>> = g.slices().iter().map(|s| s.to_vec()).collect();
        let mut worst: f64 = 0.0;
        let h = 1e-6;
        let mut probe = m.clone();
        let n_blocks = grads.len();
        for b in 0..n_blocks {
            for i in 0..grads[b].len() {
                let orig = probe.params()[b][i];
                probe.params_mut()[b][i] = orig + h;
                let lp = probe.loss(batch).unwrap();
                probe.params_mut()[b][i] = orig - h;
                let lm = probe.loss(batch).unwrap();
                probe.params_mut()[b][i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads[b][i];
                // below 1e-4 the comparison is absolute: rounding in fd is ~1e-10
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (k, ab) in Ablation::ALL.into_iter().enumerate() {
            let mut m = tiny(ab, k as u64);
            // nonzero biases keep pre-activations off the ReLU kink
            for b in m.branch.biases.iter_mut().chain(m.trunk.biases.iter_mut()) {
                b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
            let recs: Vec<DataRecord> = (0..6).map(|_| record(&mut rng)).collect();
            let batch = m.prepare(&recs).unwrap();
            let e = finite_difference_error(&m, &batch);
            assert!(e <= 1e-5, "{ab}: {e}");
        }
    }

    #[test]
    fn perfect_batch_has_zero_gradient() {
        let m = tiny(Ablation::FINAL, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut recs: Vec<DataRecord> = (0..5).map(|_| record(&mut rng)).collect();
        let pred = m.predict(&recs).unwrap();
        for (r, p) in recs.iter_mut().zip(pred) {
            r.target = p;
        }
        let (l, g) = m.loss_and_gradients(&m.prepare(&recs).unwrap()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.slices().iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn duplicated_batch_is_mean_invariant() {
        let m = tiny(Ablation::CASE4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let recs: Vec<DataRecord> = (0..5).map(|_| record(&mut rng)).collect();
        let mut twice = recs.clone();
        twice.extend(recs.iter().cloned());
        let (l1, g1) = m.loss_and_gradients(&m.prepare(&recs).unwrap()).unwrap();
        let (l2, g2) = m.loss_and_gradients(&m.prepare(&twice).unwrap()).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-12 * l1.abs().max(1.0));
        for (a, b) in g1.slices().iter().zip(g2.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(*x, *y, epsilon = 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn adam_scalar_oracle() {
        let mut adam = Adam::new(&[1], 0.9, 0.999, 1e-8);
        let mut theta = [0.0];
        adam.update(vec![&mut theta[..]], &[&[1.0]], 1e-3).unwrap();
        // m̂ = 1, v̂ = 1
        assert_abs_diff_eq!(theta[0], -1e-3 / (1.0 + 1e-8), epsilon = 1e-18);
        let mut adam = Adam::new(&[2], 0.9, 0.999, 1e-8);
        let mut theta = [0.5, -0.5];
        adam.update(vec![&mut theta[..]], &[&[0.0, 0.0]], 1e-3).unwrap();
        assert_eq!(theta, [0.5, -0.5]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn persistence_roundtrip() {
        let m = tiny(Ablation::FINAL, 7);
        let back = DeepONet::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let recs: Vec<DataRecord> = (0..100).map(|_| record(&mut rng)).collect();
        let (a, b) = (m.predict(&recs).unwrap(), back.predict(&recs).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x[0].to_bits() == y[0].to_bits() && x[1].to_bits() == y[1].to_bits()));
        assert!(DeepONet::from_json("{\"version\": 2}").is_err());
    }

    #[test]
    fn warm_start_copies() {
        let m = tiny(Ablation::FINAL, 7);
        let arch = m.architecture();
        let w = warm_start(&m, Ablation::FINAL, &arch).unwrap();
        assert_eq!(w, m);
        assert!(warm_start(&m, Ablation::CASE1, &arch).is_err());
    }

    #[test]
    fn field_prediction_matches_records() {
        let m = tiny(Ablation::FINAL, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = record(&mut rng);
        let pts: Vec<[f64; 3]> = (0..30)
            .map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..base.extent[0]), rng.random_range(0.0..base.extent[1])])
            .collect();
        let quad = [base.trunk[3], base.trunk[4], base.trunk[5], base.trunk[6]];
        let (field, _) = m.predict_field(base.branch, quad, base.extent, &pts).unwrap();
        for (p, u) in pts.iter().zip(&field) {
            let v = m.forward_one(base.branch, *p, quad, base.extent).unwrap();
            assert_abs_diff_eq!(u[0], v[0], epsilon = 1e-12);
            assert_abs_diff_eq!(u[1], v[1], epsilon = 1e-12);
        }
        let mut rev = pts.clone();
        rev.reverse();
        let (fr, _) = m.predict_field(base.branch, quad, base.extent, &rev).unwrap();
        for (a, b) in field.iter().zip(fr.iter().rev()) {
            assert_eq!(a, b);
        }
        assert!(m.predict_field(base.branch, quad, base.extent, &[[0.0, -1.0, 0.0]]).is_err());
    }
}
