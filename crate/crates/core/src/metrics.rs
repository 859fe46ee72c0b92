//! Accuracy metrics, error-over-time profiles, RSAW comparisons and timing.
//!
//! Displacements are `[u1, u2]` pairs in cm; component metrics are averaged
//! over the two components.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::datapipe::{DataRecord, SimSummary};
use crate::deeponet::{DeepONet, DeepOnetError};
use crate::geometry::{close_with_axes, domain_extent, polygon_area, round1};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("series are not aligned: {0}")]
    Alignment(String),
    #[error(transparent)]
    Model(#[from] DeepOnetError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_lengths(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<(), MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::Alignment(format!("{} targets vs {} predictions", truth.len(), pred.len())));
    }
    Ok(())
}

/// `(SSE, SST)` of each component.
fn sums(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<[(f64, f64); 2], MetricError> {
    check_lengths(truth, pred)?;
    if truth.len() < 2 {
        return Err(MetricError::Undefined("need at least two records".into()));
    }
    let n = truth.len() as f64;
    let mut out = [(0.0, 0.0); 2];
    for (k, o) in out.iter_mut().enumerate() {
        let mean = truth.iter().map(|u| u[k]).sum::<f64>() / n;
        let sse: f64 = truth.iter().zip(pred).map(|(u, p)| (u[k] - p[k]).powi(2)).sum();
        let sst: f64 = truth.iter().map(|u| (u[k] - mean).powi(2)).sum();
        if sst == 0.0 {
            return Err(MetricError::Undefined(format!("component u{} has zero variance", k + 1)));
        }
        *o = (sse, sst);
    }
    Ok(out)
}

pub fn r2_components(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<[f64; 2], MetricError> {
    Ok(sums(truth, pred)?.map(|(sse, sst)| 1.0 - sse / sst))
}

pub fn arrmse_components(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<[f64; 2], MetricError> {
    Ok(sums(truth, pred)?.map(|(sse, sst)| (sse / sst).sqrt()))
}

pub fn r2_score(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<f64, MetricError> {
    let c = r2_components(truth, pred)?;
    Ok(0.5 * (c[0] + c[1]))
}

pub fn arrmse(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<f64, MetricError> {
    let c = arrmse_components(truth, pred)?;
    Ok(0.5 * (c[0] + c[1]))
}

/// Both values are rounded to one decimal first; entries whose rounded
/// truth is zero are left out.
pub fn arelerr_components(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<[f64; 2], MetricError> {
    check_lengths(truth, pred)?;
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        let (mut sum, mut n_t) = (0.0, 0usize);
        for (u, p) in truth.iter().zip(pred) {
            let (rt, rp) = (round1(u[k]), round1(p[k]));
            if rt != 0.0 {
                sum += (rt - rp).abs() / rt.abs();
                n_t += 1;
            }
        }
        if n_t == 0 {
            return Err(MetricError::Undefined(format!("no u{} target rounds to a nonzero value", k + 1)));
        }
        *o = sum / n_t as f64;
    }
    Ok(out)
}

pub fn arelerr(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<f64, MetricError> {
    let c = arelerr_components(truth, pred)?;
    Ok(0.5 * (c[0] + c[1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub t: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Mean and population standard deviation over each recorded time of the
/// Euclidean displacement error `‖u − û‖`.
pub fn abs_error_profile(records: &[DataRecord], pred: &[[f64; 2]]) -> Result<Vec<ProfileRow>, MetricError> {
    if records.len() != pred.len() {
        return Err(MetricError::Alignment(format!("{} records vs {} predictions", records.len(), pred.len())));
    }
    let mut rows: Vec<(f64, f64)> = records
        .iter()
        .zip(pred)
        .map(|(r, p)| (r.t(), ((r.target[0] - p[0]).powi(2) + (r.target[1] - p[1]).powi(2)).sqrt()))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for group in rows.chunk_by(|a, b| a.0 == b.0) {
        let n = group.len() as f64;
        let mean = group.iter().map(|g| g.1).sum::<f64>() / n;
        let var = group.iter().map(|g| (g.1 - mean).powi(2)).sum::<f64>() / n;
        out.push(ProfileRow { t: group[0].0, mean, std: var.sqrt(), count: group.len() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsawSummary {
    /// Earliest time of the minimum.
    pub argmin_t: f64,
    pub min: f64,
    pub last: f64,
}

impl RsawSummary {
    pub fn of(series: &[(f64, f64)]) -> Result<Self, MetricError> {
        let last = series.last().ok_or_else(|| MetricError::Undefined("empty RSAW series".into()))?.1;
        let (mut argmin_t, mut min) = (series[0].0, series[0].1);
        for &(t, v) in &series[1..] {
            if v < min {
                min = v;
                argmin_t = t;
            }
        }
        Ok(Self { argmin_t, min, last })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsawComparison {
    pub times: Vec<f64>,
    pub target: Vec<f64>,
    pub pred: Vec<f64>,
    pub target_summary: RsawSummary,
    pub pred_summary: RsawSummary,
}

impl RsawComparison {
    pub fn delta_argmin_t(&self) -> f64 {
        self.pred_summary.argmin_t - self.target_summary.argmin_t
    }

    pub fn delta_min(&self) -> f64 {
        self.pred_summary.min - self.target_summary.min
    }

    pub fn delta_last(&self) -> f64 {
        self.pred_summary.last - self.target_summary.last
    }
}

pub fn rsaw_compare(target: &[(f64, f64)], pred: &[(f64, f64)]) -> Result<RsawComparison, MetricError> {
    if target.len() != pred.len() || target.iter().zip(pred).any(|(a, b)| a.0 != b.0) {
        return Err(MetricError::Alignment("RSAW series have different time grids".into()));
    }
    Ok(RsawComparison {
        times: target.iter().map(|p| p.0).collect(),
        target: target.iter().map(|p| p.1).collect(),
        pred: pred.iter().map(|p| p.1).collect(),
        target_summary: RsawSummary::of(target)?,
        pred_summary: RsawSummary::of(pred)?,
    })
}

/// Surrogate RSAW curve of one run: the initial rim displaced by the
/// predicted field, relative to the initial area.
pub fn predict_rsaw(model: &DeepONet, sim: &SimSummary, times: &[f64]) -> Result<Vec<(f64, f64)>, MetricError> {
    let g = &sim.geometry;
    let (x_l, y_l) = domain_extent(g.x_cut, g.y_cut);
    let quad = g.quadruple().to_array();
    let area = |pts: &[[f64; 2]]| polygon_area(&close_with_axes(pts)).map_err(|e| MetricError::Undefined(e.to_string()));
    let a0 = area(&sim.rim)?;
    let mut points = Vec::with_capacity(times.len() * sim.rim.len());
    for &t in times {
        points.extend(sim.rim.iter().map(|p| [t, p[0].clamp(0.0, x_l), p[1].clamp(0.0, y_l)]));
    }
    let (u, _) = model.predict_field(sim.params.to_array(), quad, [x_l, y_l], &points)?;
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let chunk = &u[k * sim.rim.len()..(k + 1) * sim.rim.len()];
        let moved: Vec<[f64; 2]> = sim.rim.iter().zip(chunk).map(|(p, d)| [p[0] + d[0], p[1] + d[1]]).collect();
        out.push((t, area(&moved)? / a0));
    }
    Ok(out)
}

/// Median wall-clock seconds over `reps` calls.
pub fn median_seconds<E>(reps: usize, mut f: impl FnMut() -> Result<(), E>) -> Result<f64, E> {
    let mut v = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let clock = Instant::now();
        f()?;
        v.push(clock.elapsed().as_secs_f64());
    }
    v.sort_by(f64::total_cmp);
    Ok(v[v.len() / 2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupReport {
    pub reps: usize,
    pub points: usize,
    pub boundary_points: usize,
    pub simulator_seconds: f64,
    pub surrogate_seconds: f64,
    pub boundary_seconds: f64,
}

impl SpeedupReport {
    pub fn speedup(&self) -> f64 {
        self.simulator_seconds / self.surrogate_seconds
    }

    pub fn boundary_speedup(&self) -> f64 {
        self.simulator_seconds / self.boundary_seconds
    }

    /// Full-field surrogate time over boundary-only surrogate time.
    pub fn boundary_gain(&self) -> f64 {
        self.surrogate_seconds / self.boundary_seconds
    }
}

/// Times the simulator against full-field and boundary-only surrogate
/// evaluation, each as the median of `reps` runs.
pub fn bench_speedup<E>(
    reps: usize,
    points: usize,
    boundary_points: usize,
    simulator: impl FnMut() -> Result<(), E>,
    surrogate: impl FnMut() -> Result<(), E>,
    boundary: impl FnMut() -> Result<(), E>,
) -> Result<SpeedupReport, E> {
    Ok(SpeedupReport {
        reps,
        points,
        boundary_points,
        simulator_seconds: median_seconds(reps, simulator)?,
        surrogate_seconds: median_seconds(reps, surrogate)?,
        boundary_seconds: median_seconds(reps, boundary)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub n_records: usize,
    pub r2: f64,
    pub arrmse: f64,
    pub arelerr: f64,
    pub profile: Vec<ProfileRow>,
    pub rsaw: Option<RsawComparison>,
    pub timing: Option<SpeedupReport>,
}

/// Undefined metrics are reported as NaN; other errors propagate.
fn or_nan(name: &str, v: Result<f64, MetricError>) -> Result<f64, MetricError> {
    match v {
        Err(MetricError::Undefined(why)) => {
            log::warn!("{name} undefined: {why}");
            Ok(f64::NAN)
        }
        other => other,
    }
}

impl EvalReport {
    pub fn evaluate(label: &str, records: &[DataRecord], pred: &[[f64; 2]]) -> Result<Self, MetricError> {
        let truth: Vec<[f64; 2]> = records.iter().map(|r| r.target).collect();
        Ok(Self {
            label: label.to_string(),
            n_records: records.len(),
            r2: or_nan("R2", r2_score(&truth, pred))?,
            arrmse: or_nan("aRRMSE", arrmse(&truth, pred))?,
            arelerr: or_nan("aRelErr", arelerr(&truth, pred))?,
            profile: abs_error_profile(records, pred)?,
            rsaw: None,
            timing: None,
        })
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "label = {}", self.label);
        let _ = writeln!(s, "n_records = {}", self.n_records);
        let _ = writeln!(s, "r2 = {}", self.r2);
        let _ = writeln!(s, "arrmse = {}", self.arrmse);
        let _ = writeln!(s, "arelerr = {}", self.arelerr);
        if let Some(c) = &self.rsaw {
            for (name, v) in [("target", c.target_summary), ("pred", c.pred_summary)] {
                let _ = writeln!(s, "rsaw_{name}_argmin_t = {}", v.argmin_t);
                let _ = writeln!(s, "rsaw_{name}_min = {}", v.min);
                let _ = writeln!(s, "rsaw_{name}_final = {}", v.last);
            }
        }
        if let Some(t) = &self.timing {
            let _ = writeln!(s, "timing_statistic = median of {}", t.reps);
            let _ = writeln!(s, "timing_points = {}", t.points);
            let _ = writeln!(s, "timing_boundary_points = {}", t.boundary_points);
            let _ = writeln!(s, "simulator_seconds = {}", t.simulator_seconds);
            let _ = writeln!(s, "surrogate_seconds = {}", t.surrogate_seconds);
            let _ = writeln!(s, "boundary_seconds = {}", t.boundary_seconds);
            let _ = writeln!(s, "speedup = {}", t.speedup());
            let _ = writeln!(s, "boundary_speedup = {}", t.boundary_speedup());
        }
        s
    }

    /// Writes `report`, `abs_error_profile.csv` and, when present,
    /// `rsaw_compare.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), MetricError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report"), self.to_kv())?;
        let mut p = String::from("t,mean,std\n");
        for r in &self.profile {
            let _ = writeln!(p, "{},{},{}", r.t, r.mean, r.std);
        }
        fs::write(dir.join("abs_error_profile.csv"), p)?;
        if let Some(c) = &self.rsaw {
            let mut s = String::from("t,target,pred\n");
            for k in 0..c.times.len() {
                let _ = writeln!(s, "{},{},{}", c.times[k], c.target[k], c.pred[k]);
            }
            fs::write(dir.join("rsaw_compare.csv"), s)?;
        }
        Ok(())
    }
}

/// The Table 2 layout: one row per configuration.
pub fn ablation_table(reports: &[EvalReport]) -> String {
    let mut s = String::from("setup,r2,arrmse,arelerr\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{},{}", r.label, r.r2, r.arrmse, r.arelerr);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pairs(a: &[f64], b: &[f64]) -> Vec<[f64; 2]> {
        a.iter().zip(b).map(|(x, y)| [*x, *y]).collect()
    }

    #[test]
    fn perfect_and_mean_predictors() {
        let t = pairs(&[0.0, 1.0, 2.0, 4.0], &[1.0, -1.0, 0.5, 0.0]);
        assert_eq!(r2_score(&t, &t).unwrap(), 1.0);
        assert_eq!(arrmse(&t, &t).unwrap(), 0.0);
        assert_eq!(arelerr(&t, &t).unwrap(), 0.0);
        let m = [t.iter().map(|u| u[0]).sum::<f64>() / 4.0, t.iter().map(|u| u[1]).sum::<f64>() / 4.0];
        let mean = vec![m; 4];
        assert_abs_diff_eq!(r2_score(&t, &mean).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(arrmse(&t, &mean).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_cases() {
        let t = pairs(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]);
        let p = pairs(&[0.0, 1.0, 1.0], &[0.0, 1.0, 1.0]);
        assert_abs_diff_eq!(arrmse_components(&t, &p).unwrap()[0], 0.5f64.sqrt(), epsilon = 1e-15);
        // 0.04 rounds to zero and is excluded
        let t = pairs(&[0.04, 1.0], &[-0.8, 0.5]);
        let p = pairs(&[9.0, 1.0], &[-0.76, 0.5]);
        assert_eq!(arelerr_components(&t, &p).unwrap(), [0.0, 0.0]);
        let t = pairs(&[0.5], &[0.2]);
        let p = pairs(&[0.25], &[0.2]);
        // round1(0.25) = 0.3
        assert_abs_diff_eq!(arelerr_components(&t, &p).unwrap()[0], 0.4, epsilon = 1e-12);
        assert!(arelerr(&pairs(&[0.04], &[1.0]), &pairs(&[0.0], &[1.0])).is_err());
        assert!(r2_score(&pairs(&[1.0, 1.0], &[0.0, 1.0]), &pairs(&[1.0, 1.0], &[0.0, 1.0])).is_err());
    }

    #[test]
    fn profile_of_constant_error() {
        let recs: Vec<DataRecord> = (0..6)
            .map(|k| DataRecord {
                branch: [0.0; 5],
                trunk: [(k % 2) as f64, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                target: [0.3, 0.4],
                extent: [1.0, 1.0],
            })
            .collect();
        let prof = abs_error_profile(&recs, &vec![[0.0, 0.0]; 6]).unwrap();
        assert_eq!(prof.len(), 2);
        for r in prof {
            assert_abs_diff_eq!(r.mean, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(r.std, 0.0, epsilon = 1e-15);
            assert_eq!(r.count, 3);
        }
    }

    #[test]
    fn undefined_metric_is_reported_as_nan() {
        let recs: Vec<DataRecord> = (0..4)
            .map(|k| DataRecord { branch: [0.0; 5], trunk: [0.0; 7], target: [0.01 * k as f64, 0.02], extent: [1.0, 1.0] })
            .collect();
        let pred = vec![[0.0, 0.0]; 4];
        let r = EvalReport::evaluate("tiny", &recs, &pred).unwrap();
        assert!(r.arelerr.is_nan() && r.r2.is_nan());
        assert!(EvalReport::evaluate("short", &recs, &pred[..3]).is_err());
    }

    #[test]
    fn rsaw_summaries() {
        let s = [(0.0, 1.0), (1.0, 0.7), (2.0, 0.6), (3.0, 0.6), (4.0, 0.8)];
        let c = rsaw_compare(&s, &s).unwrap();
        assert_eq!(c.target_summary, RsawSummary { argmin_t: 2.0, min: 0.6, last: 0.8 });
        assert_eq!((c.delta_argmin_t(), c.delta_min(), c.delta_last()), (0.0, 0.0, 0.0));
        assert!(rsaw_compare(&s, &s[..4]).is_err());
    }

    proptest! {
        #[test]
        fn arrmse_squared_is_one_minus_r2(
            t in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 3..60),
            noise in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 60),
        ) {
            let truth: Vec<[f64; 2]> = t.iter().map(|p| [p.0, p.1]).collect();
            let pred: Vec<[f64; 2]> = truth.iter().zip(&noise).map(|(u, e)| [u[0] + e.0, u[1] + e.1]).collect();
            if let (Ok(r), Ok(a)) = (r2_components(&truth, &pred), arrmse_components(&truth, &pred)) {
                for k in 0..2 {
                    prop_assert!((a[k] * a[k] - (1.0 - r[k])).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn metrics_are_permutation_and_sign_invariant(
            t in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 3..40),
            shift in 0usize..40,
        ) {
            let truth: Vec<[f64; 2]> = t.iter().map(|p| [p.0, p.1]).collect();
            let pred: Vec<[f64; 2]> = t.iter().map(|p| [p.2, p.3]).collect();
            let k = shift % truth.len();
            let (mut tr, mut pr) = (truth.clone(), pred.clone());
            tr.rotate_left(k);
            pr.rotate_left(k);
            if let Ok(v) = r2_score(&truth, &pred) {
                prop_assert!((v - r2_score(&tr, &pr).unwrap()).abs() <= 1e-12 * v.abs().max(1.0));
            }
            if let Ok(v) = arelerr(&truth, &pred) {
                prop_assert!((v - arelerr(&tr, &pr).unwrap()).abs() <= 1e-12 * v.abs().max(1.0));
                let neg = |v: &[[f64; 2]]| v.iter().map(|u| [-u[0], -u[1]]).collect::<Vec<_>>();
                prop_assert_eq!(v, arelerr(&neg(&truth), &neg(&pred)).unwrap());
            }
        }
    }
}
