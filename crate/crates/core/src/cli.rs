//! The `woundnet` command line.
//!
//! Every subcommand reads one TOML run configuration (all sections
//! optional), writes its artifacts into a fresh directory
//! `<out>/<subcommand>-<hash12>-<timestamp>` together with the resolved
//! configuration, and reports progress on standard error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biomodel::{KineticParams, VariableParams};
use crate::datapipe::{
    extend_year_dataset, generate_convex_test_set, generate_training_set, sha256_hex, split_dataset, DataConfig,
    DataError, Dataset, YearScenario,
};
use crate::deeponet::{train, warm_start, Ablation, Architecture, DeepONet, LossHistory, Normalization, TrainConfig};
use crate::fem::{generate_mesh, run_simulation, SimConfig};
use crate::geometry::{ShapeKind, WoundGeometry};
use crate::metrics::{ablation_table, bench_speedup, predict_rsaw, rsaw_compare, EvalReport};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Data(_) => 4,
            CliError::Training(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(m) => CliError::Config(m),
            DataError::NoData(_) | DataError::Sim(_) => CliError::Simulation(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn train_err(e: impl std::fmt::Display) -> CliError {
    CliError::Training(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub kind: ShapeKind,
    pub x_cut: f64,
    pub y_cut: f64,
    pub weights: Option<[f64; 3]>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { kind: ShapeKind::Rectangle, x_cut: 2.0, y_cut: 1.0, weights: None }
    }
}

impl GeometrySection {
    pub fn build(&self) -> Result<WoundGeometry, CliError> {
        match (self.kind, self.weights) {
            (ShapeKind::Convex, Some(w)) => WoundGeometry::convex(self.x_cut, self.y_cut, w),
            (ShapeKind::Convex, None) => return Err(CliError::Config("convex geometry needs weights".into())),
            (k, _) => WoundGeometry::basic(k, self.x_cut, self.y_cut),
        }
        .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub ablation: String,
    pub p: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = Architecture::default();
        Self {
            ablation: Ablation::FINAL.label().into(),
            p: a.p,
            hidden_layers: a.hidden_layers,
            hidden_width: a.hidden_width,
            lr: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            shuffle: t.shuffle,
        }
    }
}

impl TrainSection {
    pub fn ablation(&self) -> Result<Ablation, CliError> {
        self.ablation.parse().map_err(|e: crate::deeponet::DeepOnetError| CliError::Config(e.to_string()))
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { p: self.p, hidden_layers: self.hidden_layers, hidden_width: self.hidden_width }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Timing repetitions; the median is reported.
    pub reps: usize,
    /// Test simulation used for RSAW curves and benchmarks.
    pub sim: usize,
    /// Upper bound on scatter points written by `export-plot`.
    pub max_scatter: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { reps: 3, sim: 0, max_scatter: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub geometry: GeometrySection,
    pub params: VariableParams,
    pub kinetic: KineticParams,
    pub sim: SimConfig,
    pub train: TrainSection,
    pub data: DataConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version == 0 {
            cfg.version = CONFIG_VERSION;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!("unsupported config version {}", self.version)));
        }
        self.geometry.build()?;
        self.params.validate().map_err(|e| cfg(&e))?;
        self.kinetic.validate().map_err(|e| cfg(&e))?;
        self.sim.validate().map_err(|e| cfg(&e))?;
        self.data.validate().map_err(|e| cfg(&e))?;
        self.train.ablation()?;
        self.train.train_config(self.seed).validate().map_err(|e| cfg(&e))?;
        if self.train.p == 0 || self.train.hidden_width == 0 {
            return Err(CliError::Config("p and hidden_width must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self, command: &str) -> String {
        sha256_hex(format!("{command}\n{}", self.to_toml()).as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    S1,
    S2,
}

#[derive(Debug, Parser)]
#[command(name = "woundnet", version, about = "Wound contraction simulator and DeepONet surrogate")]
pub struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Repeat for more detail on standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation for the configured geometry and parameters.
    Simulate,
    /// Generate the basic-shape training set.
    GenTrain {
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Generate the convex-combination test set.
    GenTest {
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Extend a dataset with year-long simulations.
    GenYear {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_enum, default_value = "s1")]
        scenario: ScenarioArg,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train a DeepONet on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// case1..case4 or final; overrides the configuration.
        #[arg(long)]
        ablation: Option<String>,
        /// Continue from an existing model file.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Evaluate a model, or train and evaluate all ablations with `--ablation all`.
    Eval {
        /// Test dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ablation: Option<String>,
        /// Training dataset, needed with `--ablation all`.
        #[arg(long)]
        train_data: Option<PathBuf>,
    },
    /// Predict the displacement field on the initial mesh of the configured wound.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated days; defaults to the simulation record grid.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
    },
    /// Time the simulator against the surrogate on the same workload.
    Bench {
        #[arg(long)]
        model: PathBuf,
    },
    /// Write the CSVs behind the loss, scatter, RSAW and error-profile plots.
    ExportPlot {
        /// Directory of a `train` run.
        #[arg(long)]
        train_run: PathBuf,
        /// Test dataset directory.
        #[arg(long)]
        data: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::GenTrain { .. } => "gen-train",
            Command::GenTest { .. } => "gen-test",
            Command::GenYear { .. } => "gen-year",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Predict { .. } => "predict",
            Command::Bench { .. } => "bench",
            Command::ExportPlot { .. } => "export-plot",
        }
    }
}

/// `YYYYMMDDTHHMMSS` in UTC.
fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()) as i64;
    let (days, rem) = (secs.div_euclid(86_400), secs.rem_euclid(86_400));
    // civil-from-days
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}{m:02}{d:02}T{:02}{:02}{:02}", rem / 3600, rem % 3600 / 60, rem % 60)
}

/// Creates a directory that did not exist before.
fn fresh_dir(out: &Path, stem: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(data_err)?;
    for k in 0.. {
        let name = if k == 0 { stem.to_string() } else { format!("{stem}-{k}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(data_err(e)),
        }
    }
    unreachable!()
}

pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
}

fn start_run(cli: &Cli, config: RunConfig) -> Result<Run, CliError> {
    let command = format!("{:?}", cli.command);
    let hash = config.hash(&command);
    let dir = fresh_dir(&cli.out, &format!("{}-{}-{}", cli.command.name(), &hash[..12], timestamp()))?;
    fs::write(dir.join("config.toml"), config.to_toml()).map_err(data_err)?;
    fs::write(dir.join("command"), format!("{command}\nconfig_hash = {hash}\n")).map_err(data_err)?;
    log::info!("run directory {}", dir.display());
    Ok(Run { dir, config })
}

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    Dataset::load(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn load_model(path: &Path) -> Result<DeepONet, CliError> {
    DeepONet::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), text).map_err(data_err)
}

fn loss_csv(h: &LossHistory) -> String {
    let mut buf = Vec::new();
    h.write_csv(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

/// Trains one model on `ds` as configured; the split and the optimizer are
/// seeded with the run seed.
pub fn fit_model(
    cfg: &RunConfig,
    ds: &Dataset,
    ablation: Ablation,
    prev: Option<&DeepONet>,
) -> Result<(DeepONet, LossHistory), CliError> {
    let split = split_dataset(ds, cfg.data.train_fraction, cfg.data.split, cfg.seed)?;
    let (tr, va) = (ds.select(&split.train), ds.select(&split.val));
    let arch = cfg.train.architecture();
    let mut model = match prev {
        Some(p) => warm_start(p, ablation, &arch).map_err(train_err)?,
        None => {
            let norm = Normalization::fit(&tr, ablation).map_err(train_err)?;
            DeepONet::new(ablation, &arch, norm, cfg.seed).map_err(train_err)?
        }
    };
    let hist = train(&mut model, &tr, &va, &cfg.train.train_config(cfg.seed)).map_err(train_err)?;
    log::info!(
        "{ablation}: val MSE {:.3e} -> {:.3e} over {} epochs",
        hist.val[0],
        hist.val.last().unwrap(),
        hist.val.len() - 1
    );
    Ok((model, hist))
}

/// Metrics on the whole test set plus the RSAW comparison of one run.
pub fn evaluate_model(model: &DeepONet, test: &Dataset, sim: usize, label: &str) -> Result<EvalReport, CliError> {
    let pred = model.predict(&test.records).map_err(train_err)?;
    let mut report = EvalReport::evaluate(label, &test.records, &pred).map_err(data_err)?;
    if let Some(s) = test.provenance.sims.get(sim) {
        let times: Vec<f64> = s.rsaw.iter().map(|p| p.0).collect();
        let predicted = predict_rsaw(model, s, &times).map_err(data_err)?;
        report.rsaw = Some(rsaw_compare(&s.rsaw, &predicted).map_err(data_err)?);
    }
    Ok(report)
}

pub fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig { version: CONFIG_VERSION, ..RunConfig::default() },
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    match &cli.command {
        Command::GenTrain { jobs: Some(j) } | Command::GenTest { jobs: Some(j) } | Command::GenYear { jobs: Some(j), .. } => {
            config.data.jobs = *j;
        }
        Command::Train { ablation: Some(a), .. } => config.train.ablation = a.clone(),
        _ => {}
    }
    config.validate()?;
    let run = start_run(cli, config)?;
    let (dir, cfg) = (&run.dir, &run.config);
    match &cli.command {
        Command::Simulate => {
            let g = cfg.geometry.build()?;
            let res = run_simulation(&cfg.sim, &g, &cfg.params, &cfg.kinetic)
                .map_err(|e| CliError::Simulation(e.to_string()))?;
            res.save(dir).map_err(data_err)?;
            let last = res.records.last().map_or(1.0, |r| r.rsaw);
            log::info!("{} records, final RSAW {last:.4}, {:.1} s", res.records.len(), res.wall_seconds);
        }
        Command::GenTrain { .. } => {
            let ds = generate_training_set(&cfg.data, &cfg.sim, &cfg.kinetic, cfg.seed)?;
            ds.save(dir)?;
            log::info!("{} records from {} simulations", ds.len(), ds.provenance.sims.len());
        }
        Command::GenTest { .. } => {
            let ds = generate_convex_test_set(&cfg.data, &cfg.sim, &cfg.kinetic, cfg.seed.wrapping_add(1))?;
            ds.save(dir)?;
            log::info!("{} records from {} simulations", ds.len(), ds.provenance.sims.len());
        }
        Command::GenYear { base, scenario, .. } => {
            let base = load_dataset(base)?;
            let sc = match scenario {
                ScenarioArg::S1 => YearScenario::S1,
                ScenarioArg::S2 => YearScenario::S2,
            }
            .scaled(cfg.data.year_scale);
            let sim = SimConfig { t_end: cfg.data.year_t_end, ..cfg.sim.clone() };
            let ds = extend_year_dataset(&base, sc, &cfg.data, &sim, &cfg.kinetic, cfg.seed.wrapping_add(2))?;
            ds.save(dir)?;
            log::info!("{} records added ({} x {})", ds.len() - base.len(), sc.sims, sc.times);
        }
        Command::Train { data, warm_start, .. } => {
            let ds = load_dataset(data)?;
            let prev = warm_start.as_deref().map(load_model).transpose()?;
            let (model, hist) = fit_model(cfg, &ds, cfg.train.ablation()?, prev.as_ref())?;
            model.save(&dir.join("model.json")).map_err(data_err)?;
            write(dir, "loss.csv", &loss_csv(&hist))?;
        }
        Command::Eval { data, model, ablation, train_data } => {
            let test = load_dataset(data)?;
            if ablation.as_deref() == Some("all") {
                let train_dir = train_data
                    .as_ref()
                    .ok_or_else(|| CliError::Config("--ablation all needs --train-data".into()))?;
                let ds = load_dataset(train_dir)?;
                let mut reports = Vec::new();
                for ab in Ablation::ALL {
                    let (m, hist) = fit_model(cfg, &ds, ab, None)?;
                    let sub = dir.join(ab.label());
                    fs::create_dir_all(&sub).map_err(data_err)?;
                    m.save(&sub.join("model.json")).map_err(data_err)?;
                    write(&sub, "loss.csv", &loss_csv(&hist))?;
                    let r = evaluate_model(&m, &test, cfg.eval.sim, ab.label())?;
                    r.write(&sub).map_err(data_err)?;
                    reports.push(r);
                }
                let table = ablation_table(&reports);
                write(dir, "ablation.csv", &table)?;
                eprint!("{table}");
            } else {
                let path = model.as_ref().ok_or_else(|| CliError::Config("eval needs --model or --ablation all".into()))?;
                let m = load_model(path)?;
                let r = evaluate_model(&m, &test, cfg.eval.sim, m.ablation.label())?;
                r.write(dir).map_err(data_err)?;
                eprint!("{}", r.to_kv());
            }
        }
        Command::Predict { model, times } => {
            let m = load_model(model)?;
            let g = cfg.geometry.build()?;
            let mesh = generate_mesh(&g, cfg.sim.element_size(&g)).map_err(|e| CliError::Simulation(e.to_string()))?;
            let times: Vec<f64> =
                if times.is_empty() { cfg.sim.record_schedule().into_iter().map(|p| p.1).collect() } else { times.clone() };
            let points: Vec<[f64; 3]> =
                times.iter().flat_map(|&t| mesh.nodes.iter().map(move |p| [t, p[0], p[1]])).collect();
            let (x_l, y_l) = g.extent();
            let (u, secs) = m
                .predict_field(cfg.params.to_array(), g.quadruple().to_array(), [x_l, y_l], &points)
                .map_err(data_err)?;
            let mut s = String::from("t,x,y,u1,u2\n");
            for (p, d) in points.iter().zip(&u) {
                let _ = writeln!(s, "{},{},{},{},{}", p[0], p[1], p[2], d[0], d[1]);
            }
            write(dir, "field.csv", &s)?;
            let summary = crate::datapipe::SimSummary {
                seed: cfg.seed,
                stream: 0,
                geometry: g,
                params: cfg.params,
                t_end: cfg.sim.t_end,
                n_records: 0,
                rim: mesh.rim_points(),
                rsaw: Vec::new(),
            };
            let curve = predict_rsaw(&m, &summary, &times).map_err(data_err)?;
            let mut s = String::from("t,rsaw\n");
            for (t, v) in curve {
                let _ = writeln!(s, "{t},{v:?}");
            }
            write(dir, "rsaw.csv", &s)?;
            log::info!("{} points in {secs:.3} s", points.len());
        }
        Command::Bench { model } => {
            let m = load_model(model)?;
            let g = cfg.geometry.build()?;
            let reference = run_simulation(&cfg.sim, &g, &cfg.params, &cfg.kinetic)
                .map_err(|e| CliError::Simulation(e.to_string()))?;
            let (full, rim) = workload(&reference);
            let (x_l, y_l) = g.extent();
            let (params, quad) = (cfg.params.to_array(), g.quadruple().to_array());
            let report = bench_speedup(
                cfg.eval.reps,
                full.len(),
                rim.len(),
                || run_simulation(&cfg.sim, &g, &cfg.params, &cfg.kinetic).map(|_| ()).map_err(|e| CliError::Simulation(e.to_string())),
                || m.predict_field(params, quad, [x_l, y_l], &full).map(|_| ()).map_err(data_err),
                || m.predict_field(params, quad, [x_l, y_l], &rim).map(|_| ()).map_err(data_err),
            )?;
            let r = EvalReport {
                label: "bench".into(),
                n_records: full.len(),
                r2: f64::NAN,
                arrmse: f64::NAN,
                arelerr: f64::NAN,
                profile: Vec::new(),
                rsaw: None,
                timing: Some(report),
            };
            write(dir, "bench", &r.to_kv())?;
            eprint!("{}", r.to_kv());
        }
        Command::ExportPlot { train_run, data } => {
            let m = load_model(&train_run.join("model.json"))?;
            fs::copy(train_run.join("loss.csv"), dir.join("loss.csv")).map_err(data_err)?;
            let test = load_dataset(data)?;
            let pred = m.predict(&test.records).map_err(train_err)?;
            let stride = test.len().div_ceil(cfg.eval.max_scatter.max(1)).max(1);
            let mut s = String::from("t,x,y,u1,u2,u1_pred,u2_pred\n");
            for (r, p) in test.records.iter().zip(&pred).step_by(stride) {
                let _ = writeln!(s, "{},{},{},{},{},{},{}", r.trunk[0], r.trunk[1], r.trunk[2], r.target[0], r.target[1], p[0], p[1]);
            }
            write(dir, "scatter.csv", &s)?;
            let report = EvalReport::evaluate(m.ablation.label(), &test.records, &pred).map_err(data_err)?;
            report.write(dir).map_err(data_err)?;
            // best and worst runs by the largest RSAW deviation
            let mut scored = Vec::new();
            for (k, s) in test.provenance.sims.iter().enumerate() {
                let times: Vec<f64> = s.rsaw.iter().map(|p| p.0).collect();
                let c = rsaw_compare(&s.rsaw, &predict_rsaw(&m, s, &times).map_err(data_err)?).map_err(data_err)?;
                let worst = c.target.iter().zip(&c.pred).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                scored.push((worst, k, c));
            }
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let (Some(best), Some(worst)) = (scored.first(), scored.last()) {
                for (name, (_, k, c)) in [("rsaw_best.csv", best), ("rsaw_worst.csv", worst)] {
                    let mut s = format!("# sim {k}\nt,target,pred\n");
                    for i in 0..c.times.len() {
                        let _ = writeln!(s, "{},{},{}", c.times[i], c.target[i], c.pred[i]);
                    }
                    write(dir, name, &s)?;
                }
            }
        }
    }
    Ok(run.dir)
}

/// `(t, x, y)` at every reference node and every rim node of every record.
pub fn workload(res: &crate::fem::SimResult) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let (x_l, y_l) = res.geometry.extent();
    let mut full = Vec::new();
    let mut rim = Vec::new();
    for rec in &res.records {
        let reference = rec.reference_nodes();
        full.extend(reference.iter().map(|p| [rec.t, p[0].clamp(0.0, x_l), p[1].clamp(0.0, y_l)]));
        rim.extend(rec.rim.iter().map(|&i| [rec.t, reference[i][0].clamp(0.0, x_l), reference[i][1].clamp(0.0, y_l)]));
    }
    (full, rim)
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c = RunConfig::from_toml("seed = 4\n[sim]\nt_end = 20.0\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.sim.t_end, 20.0);
        assert_eq!(c.train.epochs, 100);
        assert!(matches!(RunConfig::from_toml("[sim]\nbogus = 1\n"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("[train]\nablation = \"case9\"\n"), Err(CliError::Config(_))));
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_ne!(c.hash("a"), c.hash("b"));
    }

    #[test]
    fn timestamp_shape() {
        let t = timestamp();
        assert_eq!(t.len(), 15);
        assert_eq!(&t[8..9], "T");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Simulation(String::new()).exit_code(), 3);
        assert_eq!(CliError::Data(String::new()).exit_code(), 4);
        assert_eq!(CliError::Training(String::new()).exit_code(), 5);
        assert_eq!(main_with_args(["woundnet", "nonsense"]), ExitCode::from(2));
    }
}
