//! Training, test and year-extension datasets sampled from simulator runs.
//!
//! A dataset directory holds `records.csv` (header [`CSV_HEADER`]),
//! `provenance` (key = value lines) and `rim.csv` / `rsaw.csv` with the
//! initial wound rim and the simulated RSAW curve of every run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::biomodel::{KineticParams, VariableParams};
use crate::fem::{run_simulation, FemError, PointLocator, SimConfig, SimResult};
use crate::geometry::{domain_extent, ShapeKind, WoundGeometry};

pub const CSV_HEADER: [&str; 16] =
    ["DF", "chiF", "Dc", "kF", "acI", "t", "x", "y", "ycut", "xm", "ym", "xcut", "u1", "u2", "xl", "yl"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("data config error: {0}")]
    Config(String),
    #[error("every simulation failed ({0} attempted)")]
    NoData(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset: {0}")]
    Parse(String),
    #[error(transparent)]
    Sim(#[from] FemError),
}

/// One sample: branch input, trunk input `(t, x, y, y_cut, x_m, y_m, x_cut)`,
/// displacement target in cm and the domain extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub branch: [f64; 5],
    pub trunk: [f64; 7],
    pub target: [f64; 2],
    pub extent: [f64; 2],
}

impl DataRecord {
    pub fn t(&self) -> f64 {
        self.trunk[0]
    }

    pub fn quadruple(&self) -> [f64; 4] {
        [self.trunk[3], self.trunk[4], self.trunk[5], self.trunk[6]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitLevel {
    #[default]
    Record,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub n_sims: usize,
    pub test_sims: usize,
    pub times_per_sim: usize,
    pub points_per_time: usize,
    /// Cut points are drawn from `[cut_min, cut_max)`.
    pub cut_min: f64,
    pub cut_max: f64,
    pub train_fraction: f64,
    pub split: SplitLevel,
    /// Year scenarios run `1/year_scale` of the full-size simulation count.
    pub year_scale: usize,
    pub year_t_end: f64,
    pub jobs: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_sims: 30,
            test_sims: 10,
            times_per_sim: 10,
            points_per_time: 20,
            cut_min: 0.5,
            cut_max: 5.0,
            train_fraction: 0.8,
            split: SplitLevel::Record,
            year_scale: 10,
            year_t_end: 365.0,
            jobs: 1,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_sims == 0 || self.test_sims == 0 || self.year_scale == 0 || self.times_per_sim == 0 || self.points_per_time == 0 {
            return Err(DataError::Config("simulation, time and point counts must be positive".into()));
        }
        if !(self.cut_min > 0.0 && self.cut_max > self.cut_min) {
            return Err(DataError::Config(format!("cut range [{}, {}) is empty", self.cut_min, self.cut_max)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(DataError::Config(format!("train fraction {} not in (0, 1)", self.train_fraction)));
        }
        Ok(())
    }
}

/// One contributing simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub seed: u64,
    pub stream: u64,
    pub geometry: WoundGeometry,
    pub params: VariableParams,
    pub t_end: f64,
    pub n_records: usize,
    /// Wound rim at `t = 0`.
    pub rim: Vec<[f64; 2]>,
    pub rsaw: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub scenario: String,
    pub config_hash: String,
    pub sims: Vec<SimSummary>,
    /// `(seed, stream, message)` of simulations that were skipped.
    pub failed: Vec<(u64, u64, String)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<DataRecord>,
    pub provenance: Provenance,
}

/// Index sets into [`Dataset::records`].
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record ranges of each simulation, in order.
    pub fn sim_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.provenance
            .sims
            .iter()
            .map(|s| {
                let r = start..start + s.n_records;
                start += s.n_records;
                r
            })
            .collect()
    }

    pub fn select(&self, idx: &[usize]) -> Vec<DataRecord> {
        idx.iter().map(|&i| self.records[i]).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir)?;
        let csv_err = |e: csv::Error| DataError::Parse(e.to_string());
        let mut w = csv::Writer::from_path(dir.join("records.csv")).map_err(csv_err)?;
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.records {
            let row = r.branch.iter().chain(&r.trunk).chain(&r.target).chain(&r.extent).map(|v| v.to_string());
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;

        let mut rim = String::from("sim,x,y\n");
        let mut rsaw = String::from("sim,t,rsaw\n");
        for (k, s) in self.provenance.sims.iter().enumerate() {
            for p in &s.rim {
                let _ = writeln!(rim, "{k},{},{}", p[0], p[1]);
            }
            for (t, v) in &s.rsaw {
                let _ = writeln!(rsaw, "{k},{t},{v}");
            }
        }
        fs::write(dir.join("rim.csv"), rim)?;
        fs::write(dir.join("rsaw.csv"), rsaw)?;
        fs::write(dir.join("provenance"), self.provenance_text())?;
        Ok(())
    }

    fn provenance_text(&self) -> String {
        let p = &self.provenance;
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", p.scenario);
        let _ = writeln!(s, "config_hash = {}", p.config_hash);
        let _ = writeln!(s, "n_records = {}", self.records.len());
        let _ = writeln!(s, "n_sims = {}", p.sims.len());
        let _ = writeln!(s, "n_failed = {}", p.failed.len());
        for (k, sim) in p.sims.iter().enumerate() {
            let g = &sim.geometry;
            let w = g.weights.map_or_else(|| "-".to_string(), |w| format!("{}:{}:{}", w[0], w[1], w[2]));
            let params: Vec<String> = sim.params.to_array().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                s,
                "sim_{k} = {} {} {} {} {} {} {w} {} {}",
                sim.seed,
                sim.stream,
                sim.t_end,
                g.kind,
                g.x_cut,
                g.y_cut,
                params.join(" "),
                sim.n_records
            );
        }
        for (seed, stream, msg) in &p.failed {
            let _ = writeln!(s, "failed = {seed} {stream} {}", msg.replace('\n', " "));
        }
        s
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let bad = |m: String| DataError::Parse(m);
        let mut rd = csv::Reader::from_path(dir.join("records.csv")).map_err(|e| bad(e.to_string()))?;
        let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut records = Vec::new();
        for (line, row) in rd.records().enumerate() {
            let row = row.map_err(|e| bad(e.to_string()))?;
            let v: Vec<f64> = row
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| bad(format!("record {}: bad number '{s}'", line + 1))))
                .collect::<Result<_, _>>()?;
            if v.len() != 16 {
                return Err(bad(format!("record {}: expected 16 columns", line + 1)));
            }
            let mut r = DataRecord { branch: [0.0; 5], trunk: [0.0; 7], target: [0.0; 2], extent: [0.0; 2] };
            r.branch.copy_from_slice(&v[0..5]);
            r.trunk.copy_from_slice(&v[5..12]);
            r.target.copy_from_slice(&v[12..14]);
            r.extent.copy_from_slice(&v[14..16]);
            records.push(r);
        }

        let text = fs::read_to_string(dir.join("provenance"))?;
        let mut prov = Provenance::default();
        for l in text.lines() {
            let Some((k, v)) = l.split_once(" = ") else { continue };
            match k {
                "scenario" => prov.scenario = v.to_string(),
                "config_hash" => prov.config_hash = v.to_string(),
                "failed" => {
                    let mut it = v.splitn(3, ' ');
                    let seed = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad(l.to_string()))?;
                    let stream = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad(l.to_string()))?;
                    prov.failed.push((seed, stream, it.next().unwrap_or("").to_string()));
                }
                k if k.starts_with("sim_") => prov.sims.push(parse_sim_line(v).ok_or_else(|| bad(l.to_string()))?),
                _ => {}
            }
        }
        for (file, cols) in [("rim.csv", 3), ("rsaw.csv", 3)] {
            let mut rd = csv::Reader::from_path(dir.join(file)).map_err(|e| bad(e.to_string()))?;
            for row in rd.records() {
                let row = row.map_err(|e| bad(e.to_string()))?;
                let v: Vec<f64> = row.iter().filter_map(|s| s.parse().ok()).collect();
                if v.len() != cols {
                    return Err(bad(format!("{file}: malformed row")));
                }
                let sim = prov.sims.get_mut(v[0] as usize).ok_or_else(|| bad(format!("{file}: unknown sim")))?;
                if file == "rim.csv" {
                    sim.rim.push([v[1], v[2]]);
                } else {
                    sim.rsaw.push((v[1], v[2]));
                }
            }
        }
        let ds = Dataset { records, provenance: prov };
        if ds.provenance.sims.iter().map(|s| s.n_records).sum::<usize>() != ds.records.len() {
            return Err(bad("provenance record counts disagree with records.csv".into()));
        }
        Ok(ds)
    }
}

fn parse_sim_line(v: &str) -> Option<SimSummary> {
    let f: Vec<&str> = v.split_whitespace().collect();
    if f.len() != 13 {
        return None;
    }
    let kind: ShapeKind = f[3].parse().ok()?;
    let (x_cut, y_cut): (f64, f64) = (f[4].parse().ok()?, f[5].parse().ok()?);
    let geometry = if f[6] == "-" {
        WoundGeometry::basic(kind, x_cut, y_cut).ok()?
    } else {
        let w: Vec<f64> = f[6].split(':').map(|x| x.parse().ok()).collect::<Option<_>>()?;
        WoundGeometry::convex(x_cut, y_cut, [*w.first()?, *w.get(1)?, *w.get(2)?]).ok()?
    };
    let mut a = [0.0; 5];
    for (k, slot) in a.iter_mut().enumerate() {
        *slot = f[7 + k].parse().ok()?;
    }
    Some(SimSummary {
        seed: f[0].parse().ok()?,
        stream: f[1].parse().ok()?,
        t_end: f[2].parse().ok()?,
        geometry,
        params: VariableParams::from_array(a),
        n_records: f[12].parse().ok()?,
        rim: Vec::new(),
        rsaw: Vec::new(),
    })
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn simulator_hash(sim: &SimConfig, kinetic: &KineticParams) -> String {
    let text = format!(
        "{}\n{}",
        serde_json::to_string(sim).expect("config serializes"),
        serde_json::to_string(kinetic).expect("parameters serialize")
    );
    sha256_hex(text.as_bytes())
}

/// Independent generator for simulation `stream` of a run seeded with `seed`.
pub fn sim_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How the displacement samples of one run are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// `times` record times without replacement, `points` uniform points each.
    Random { times: usize, points: usize },
    /// Every record time at every mesh node.
    AllNodes,
}

fn draw_geometry(rng: &mut ChaCha8Rng, cfg: &DataConfig, convex: bool) -> Result<WoundGeometry, DataError> {
    let kind = ShapeKind::BASIC[rng.random_range(0..3)];
    let x_cut = rng.random_range(cfg.cut_min..cfg.cut_max);
    let y_cut = rng.random_range(cfg.cut_min..cfg.cut_max);
    let g = if convex {
        let w: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let sum: f64 = w.iter().sum();
        let mut w = w.map(|a| a / sum);
        w[2] = (1.0 - w[0] - w[1]).max(0.0);
        WoundGeometry::convex(x_cut, y_cut, w)
    } else {
        WoundGeometry::basic(kind, x_cut, y_cut)
    };
    g.map_err(|e| DataError::Config(e.to_string()))
}

/// Displacement samples of a finished run; targets are P1 interpolants on
/// the reference configuration of each record.
pub fn sample_records(result: &SimResult, sampling: Sampling, rng: &mut ChaCha8Rng) -> Result<Vec<DataRecord>, DataError> {
    let g = &result.geometry;
    let (x_l, y_l) = domain_extent(g.x_cut, g.y_cut);
    let q = g.quadruple();
    let proto = |t: f64, x: f64, y: f64, u: [f64; 2]| DataRecord {
        branch: result.params.to_array(),
        trunk: [t, x, y, q.y_cut, q.x_m, q.y_m, q.x_cut],
        target: u,
        extent: [x_l, y_l],
    };
    let mut out = Vec::new();
    match sampling {
        Sampling::AllNodes => {
            for rec in &result.records {
                for (p, u) in rec.reference_nodes().iter().zip(&rec.u) {
                    out.push(proto(rec.t, p[0].clamp(0.0, x_l), p[1].clamp(0.0, y_l), *u));
                }
            }
        }
        Sampling::Random { times, points } => {
            if times > result.records.len() {
                return Err(DataError::Config(format!(
                    "cannot draw {times} distinct times from {} records",
                    result.records.len()
                )));
            }
            let mut idx: Vec<usize> = rand::seq::index::sample(rng, result.records.len(), times).into_vec();
            idx.sort_unstable();
            for k in idx {
                let rec = &result.records[k];
                let loc = PointLocator::new(&rec.reference_nodes(), &rec.triangles);
                let u1: Vec<f64> = rec.u.iter().map(|u| u[0]).collect();
                let u2: Vec<f64> = rec.u.iter().map(|u| u[1]).collect();
                for _ in 0..points {
                    let (x, y) = (rng.random_range(0.0..=x_l), rng.random_range(0.0..=y_l));
                    let l = loc.locate([x, y]);
                    out.push(proto(rec.t, x, y, [loc.interpolate(&l, &u1), loc.interpolate(&l, &u2)]));
                }
            }
        }
    }
    Ok(out)
}

struct SimJob {
    seed: u64,
    stream: u64,
}

fn run_jobs(
    jobs: Vec<SimJob>,
    sim: &SimConfig,
    kinetic: &KineticParams,
    cfg: &DataConfig,
    convex: bool,
    sampling: Sampling,
) -> Result<(Vec<DataRecord>, Vec<SimSummary>, Vec<(u64, u64, String)>), DataError> {
    let one = |job: &SimJob| -> Result<(Vec<DataRecord>, SimSummary), String> {
        let mut rng = sim_rng(job.seed, job.stream);
        let geometry = draw_geometry(&mut rng, cfg, convex).map_err(|e| e.to_string())?;
        let params = VariableParams::sample(&mut rng);
        let result = run_simulation(sim, &geometry, &params, kinetic).map_err(|e| e.to_string())?;
        log::info!(
            "sim {}/{}: {} {:.2}x{:.2}, {:.1} s, {} remeshes",
            job.seed,
            job.stream,
            geometry.kind,
            geometry.x_cut,
            geometry.y_cut,
            result.wall_seconds,
            result.remesh_count
        );
        let records = sample_records(&result, sampling, &mut rng).map_err(|e| e.to_string())?;
        let summary = SimSummary {
            seed: job.seed,
            stream: job.stream,
            geometry,
            params,
            t_end: sim.t_end,
            n_records: records.len(),
            rim: result.records[0].rim_points(),
            rsaw: result.rsaw_series(),
        };
        Ok((records, summary))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| DataError::Config(e.to_string()))?;
    let outcomes: Vec<_> = pool.install(|| jobs.par_iter().map(one).collect());
    let (mut records, mut sims, mut failed) = (Vec::new(), Vec::new(), Vec::new());
    for (job, o) in jobs.iter().zip(outcomes) {
        match o {
            Ok((r, s)) => {
                records.extend(r);
                sims.push(s);
            }
            Err(msg) => {
                log::warn!("simulation {}/{} skipped: {msg}", job.seed, job.stream);
                failed.push((job.seed, job.stream, msg));
            }
        }
    }
    if sims.is_empty() {
        return Err(DataError::NoData(jobs.len()));
    }
    if !failed.is_empty() {
        log::warn!("{} of {} simulations failed", failed.len(), jobs.len());
    }
    Ok((records, sims, failed))
}

fn build(
    scenario: &str,
    sim: &SimConfig,
    kinetic: &KineticParams,
    cfg: &DataConfig,
    seed: u64,
    convex: bool,
    sampling: Sampling,
) -> Result<Dataset, DataError> {
    cfg.validate()?;
    sim.validate()?;
    let n = if convex { cfg.test_sims } else { cfg.n_sims };
    let jobs = (0..n as u64).map(|stream| SimJob { seed, stream }).collect();
    let (records, sims, failed) = run_jobs(jobs, sim, kinetic, cfg, convex, sampling)?;
    Ok(Dataset {
        records,
        provenance: Provenance { scenario: scenario.into(), config_hash: simulator_hash(sim, kinetic), sims, failed },
    })
}

/// Basic shapes, `times_per_sim × points_per_time` records per run.
pub fn generate_training_set(
    cfg: &DataConfig,
    sim: &SimConfig,
    kinetic: &KineticParams,
    seed: u64,
) -> Result<Dataset, DataError> {
    let sampling = Sampling::Random { times: cfg.times_per_sim, points: cfg.points_per_time };
    build("train", sim, kinetic, cfg, seed, false, sampling)
}

/// Convex shape blends, every recorded time at every node.
pub fn generate_convex_test_set(
    cfg: &DataConfig,
    sim: &SimConfig,
    kinetic: &KineticParams,
    seed: u64,
) -> Result<Dataset, DataError> {
    build("convex-test", sim, kinetic, cfg, seed, true, Sampling::AllNodes)
}

/// Seeded permutation split. At simulation level whole runs go to one side;
/// the count of training runs is `round(fraction × runs)`.
pub fn split_dataset(ds: &Dataset, fraction: f64, level: SplitLevel, seed: u64) -> Result<Split, DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Config(format!("split fraction {fraction} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = match level {
        SplitLevel::Record => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut rng);
            let k = (fraction * ds.len() as f64).round() as usize;
            let val = idx.split_off(k);
            (idx, val)
        }
        SplitLevel::Simulation => {
            let mut ranges = ds.sim_ranges();
            ranges.shuffle(&mut rng);
            let k = (fraction * ranges.len() as f64).round() as usize;
            let flat = |r: &[std::ops::Range<usize>]| r.iter().flat_map(|r| r.clone()).collect::<Vec<_>>();
            (flat(&ranges[..k]), flat(&ranges[k..]))
        }
    };
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split { train, val })
}

/// An extension of the time horizon: `sims` new runs with `times` sampled
/// record times each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearScenario {
    pub sims: usize,
    pub times: usize,
}

impl YearScenario {
    pub const S1: YearScenario = YearScenario { sims: 50, times: 30 };
    pub const S2: YearScenario = YearScenario { sims: 150, times: 10 };

    /// Both scenarios shrunk by `factor`, keeping their record counts equal.
    pub fn scaled(self, factor: usize) -> YearScenario {
        YearScenario { sims: (self.sims / factor).max(1), times: self.times }
    }

    pub fn records(self, points_per_time: usize) -> usize {
        self.sims * self.times * points_per_time
    }
}

/// The base dataset followed by the records of the new year-long runs.
/// The new runs use generator streams after those already present.
pub fn extend_year_dataset(
    base: &Dataset,
    scenario: YearScenario,
    cfg: &DataConfig,
    sim: &SimConfig,
    kinetic: &KineticParams,
    seed: u64,
) -> Result<Dataset, DataError> {
    cfg.validate()?;
    sim.validate()?;
    if scenario.sims == 0 || scenario.times == 0 {
        return Err(DataError::Config("scenario needs runs and times".into()));
    }
    let first = base.provenance.sims.len() as u64 + base.provenance.failed.len() as u64;
    let jobs = (0..scenario.sims as u64).map(|k| SimJob { seed, stream: first + k }).collect();
    let sampling = Sampling::Random { times: scenario.times, points: cfg.points_per_time };
    let (records, sims, failed) = run_jobs(jobs, sim, kinetic, cfg, false, sampling)?;
    let mut out = base.clone();
    out.records.extend(records);
    out.provenance.sims.extend(sims);
    out.provenance.failed.extend(failed);
    out.provenance.scenario =
        format!("{}+year({}x{},{})", base.provenance.scenario, scenario.sims, scenario.times, simulator_hash(sim, kinetic));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_sim() -> SimConfig {
        SimConfig { t_end: 3.0, dt: 0.5, target_nodes: 150, ..SimConfig::default() }
    }

    fn quick_cfg(n: usize) -> DataConfig {
        DataConfig { n_sims: n, test_sims: n, times_per_sim: 3, points_per_time: 5, ..DataConfig::default() }
    }

    #[test]
    fn training_set_counts_and_ranges() {
        let kp = KineticParams::default();
        let ds = generate_training_set(&quick_cfg(2), &quick_sim(), &kp, 7).unwrap();
        assert_eq!(ds.len(), 2 * 3 * 5);
        assert_eq!(ds.provenance.sims.len(), 2);
        for r in &ds.records {
            assert!(r.trunk[0] >= 0.0 && r.trunk[0] <= 3.0);
            assert!(r.trunk[1] >= 0.0 && r.trunk[1] <= r.extent[0]);
            assert!(r.trunk[2] >= 0.0 && r.trunk[2] <= r.extent[1]);
            VariableParams::from_array(r.branch).validate().unwrap();
        }
    }

    #[test]
    fn targets_at_nodes_are_nodal_values() {
        let kp = KineticParams::default();
        let g = WoundGeometry::basic(ShapeKind::Ellipse, 1.5, 1.0).unwrap();
        let res = run_simulation(&quick_sim(), &g, &VariableParams::default(), &kp).unwrap();
        let rec = res.records.last().unwrap();
        let reference = rec.reference_nodes();
        let loc = PointLocator::new(&reference, &rec.triangles);
        let u1: Vec<f64> = rec.u.iter().map(|u| u[0]).collect();
        for (i, p) in reference.iter().enumerate() {
            let l = loc.locate(*p);
            assert!((loc.interpolate(&l, &u1) - u1[i]).abs() <= 1e-12 * u1[i].abs().max(1e-3));
        }
    }

    #[test]
    fn convex_weights_sum_to_one() {
        let cfg = quick_cfg(1);
        for stream in 0..50 {
            let g = draw_geometry(&mut sim_rng(3, stream), &cfg, true).unwrap();
            let s: f64 = g.weights.unwrap().iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn split_is_deterministic_and_exhaustive() {
        let mut ds = Dataset::default();
        ds.records = vec![DataRecord { branch: [0.0; 5], trunk: [0.0; 7], target: [0.0; 2], extent: [1.0; 2] }; 6000];
        let s = split_dataset(&ds, 0.8, SplitLevel::Record, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (4800, 1200));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..6000).collect::<Vec<_>>());
        assert_eq!(s, split_dataset(&ds, 0.8, SplitLevel::Record, 1).unwrap());
        assert!(split_dataset(&ds, 1.0, SplitLevel::Record, 1).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let kp = KineticParams::default();
        let ds = generate_convex_test_set(&quick_cfg(1), &quick_sim(), &kp, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        let split = split_dataset(&back, 0.5, SplitLevel::Simulation, 0).unwrap();
        assert_eq!(split.train.len() + split.val.len(), ds.len());
    }

    #[test]
    fn year_scenarios_add_equal_counts() {
        assert_eq!(YearScenario::S1.records(20), 30_000);
        assert_eq!(YearScenario::S2.records(20), 30_000);
        assert_eq!(YearScenario::S1.scaled(10).records(20), YearScenario::S2.scaled(10).records(20));
    }
}
