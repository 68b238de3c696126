//! Evaluation metrics: pose and goal diversity, Fréchet distance between
//! feature distributions, execution time, precision at the goal and
//! penetration of non-target objects.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{RootTransform, Vec2, Vec3};
use crate::state::{argmax, CharacterState, Goal};
use crate::voxel::Scene;

/// Joint proxy sphere radius for penetration tests (m).
pub const JOINT_RADIUS: f64 = 0.05;
/// Rollouts longer than this many seconds count as failures.
pub const EXECUTION_CAP_SECONDS: f64 = 180.0;

/// Local pose features: joint positions, rotations and velocities.
pub fn pose_feature(s: &CharacterState) -> Vec<f64> {
    let mut v = Vec::with_capacity(12 * s.jp.len());
    for p in &s.jp {
        v.extend_from_slice(&[p.x, p.y, p.z]);
    }
    for r in &s.jr {
        v.extend_from_slice(&r.0);
    }
    for p in &s.jv {
        v.extend_from_slice(&[p.x, p.y, p.z]);
    }
    v
}

/// Pose features plus the root trajectory relative to the goal.
pub fn fd_feature(s: &CharacterState) -> Vec<f64> {
    let mut v = pose_feature(s);
    for p in &s.tp_goal {
        v.extend_from_slice(&[p.x, p.y]);
    }
    for d in &s.td_goal {
        v.extend_from_slice(&[d.x, d.y]);
    }
    v
}

/// Average squared distance over all ordered pairs of distinct frames.
pub fn apd(frames: &[Vec<f64>]) -> Result<f64> {
    let n = frames.len();
    if n < 2 {
        return Err(Error::TooFewFrames(n));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += frames[i]
                .iter()
                .zip(&frames[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Ok(2.0 * total / (n * (n - 1)) as f64)
}

/// Goal diversity over `L` objects: mean pairwise position distance (m)
/// and mean pairwise angle between directions (rad).
pub fn apd_goals(per_object: &[Vec<Goal>]) -> Result<(f64, f64)> {
    if per_object.is_empty() {
        return Err(Error::TooFewGoals(0));
    }
    let (mut pos, mut rot) = (0.0, 0.0);
    for goals in per_object {
        let n = goals.len();
        if n < 2 {
            return Err(Error::TooFewGoals(n));
        }
        let (mut p, mut r) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p += (goals[i].position - goals[j].position).norm();
                    r += goals[i].direction.dot(&goals[j].direction).clamp(-1.0, 1.0).acos();
                }
            }
        }
        let pairs = (n * (n - 1)) as f64;
        pos += p / pairs;
        rot += r / pairs;
    }
    let l = per_object.len() as f64;
    Ok((pos / l, rot / l))
}

/// Sample mean and covariance (N - 1 normalization). When there are no
/// more samples than dimensions the covariance is shrunk by `1e-6 I`.
pub fn fit_gaussian(samples: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateCovariance("fewer than two samples"));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::DimMismatch {
            context: "feature width",
            expected: d,
            actual: samples.iter().map(Vec::len).find(|l| *l != d).unwrap_or(d),
        });
    }
    let mut mean = DVector::zeros(d);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= n as f64;
    let mut centered = DMatrix::zeros(d, n);
    for (c, s) in samples.iter().enumerate() {
        centered.set_column(c, &(DVector::from_column_slice(s) - &mean));
    }
    let mut cov = &centered * centered.transpose() / (n - 1) as f64;
    if n <= d {
        cov += DMatrix::identity(d, d) * 1e-6;
    }
    Ok((mean, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if !v.is_finite() {
            return Err(Error::DegenerateCovariance("non-finite eigenvalue"));
        }
        if *v < -1e-10 * scale {
            return Err(Error::DegenerateCovariance("covariance is not positive semidefinite"));
        }
        *v = v.max(0.0).sqrt();
    }
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok((s, roots))
}

/// Fréchet distance between two Gaussians.
pub fn frechet_from_moments(
    mu1: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    sigma2: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || sigma1.shape() != (d, d) || sigma2.shape() != (d, d) {
        return Err(Error::DimMismatch {
            context: "gaussian moments",
            expected: d,
            actual: mu2.len(),
        });
    }
    let (root1, _) = psd_sqrt(sigma1)?;
    let inner = &root1 * sigma2 * &root1;
    let (_, roots) = psd_sqrt(&inner)?;
    let mean_term = (mu1 - mu2).norm_squared();
    Ok((mean_term + sigma1.trace() + sigma2.trace() - 2.0 * roots.sum()).max(0.0))
}

pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (m1, s1) = fit_gaussian(a)?;
    let (m2, s2) = fit_gaussian(b)?;
    frechet_from_moments(&m1, &s1, &m2, &s2)
}

/// Seconds until `target` becomes the dominant label and stays dominant
/// for one second; `f64::INFINITY` if that never happens within the cap.
pub fn execution_time(actions: &[Vec<f64>], target: usize, fps: u32) -> f64 {
    let hold = fps.max(1) as usize;
    let cap = (EXECUTION_CAP_SECONDS * f64::from(fps)) as usize;
    let hits: Vec<bool> = actions.iter().map(|a| !a.is_empty() && argmax(a) == target).collect();
    let mut run = 0usize;
    for (i, hit) in hits.iter().enumerate() {
        run = if *hit { run + 1 } else { 0 };
        if run == hold {
            let start = i + 1 - hold;
            if start > cap {
                break;
            }
            return start as f64 / f64::from(fps);
        }
    }
    f64::INFINITY
}

/// Planar position error (m) and heading error (degrees) at the goal.
pub fn precision(end: &RootTransform, goal: &Goal, execution_time: f64) -> Result<(f64, f64)> {
    if !execution_time.is_finite() {
        return Err(Error::NotExecuted);
    }
    let g = Vec2::new(goal.position.x, goal.position.z);
    let pe = (end.position - g).norm();
    let gd = Vec2::new(goal.direction.x, goal.direction.z);
    let re = if gd.norm() < 1e-12 {
        0.0
    } else {
        (end.forward.dot(&gd) / gd.norm()).clamp(-1.0, 1.0).acos().to_degrees()
    };
    Ok((pe, re))
}

/// Percentage of frames where a joint sphere overlaps an object other than
/// the target.
pub fn penetration_pct(frames: &[Vec<Vec3>], scene: &Scene, target: Option<&str>) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    let boxes: Vec<_> = scene
        .objects
        .iter()
        .filter(|o| Some(o.id.as_str()) != target)
        .flat_map(|o| o.world_boxes())
        .collect();
    let hits = frames
        .iter()
        .filter(|joints| {
            joints
                .iter()
                .any(|j| boxes.iter().any(|b| b.overlaps_sphere(j, JOINT_RADIUS)))
        })
        .count();
    100.0 * hits as f64 / frames.len() as f64
}

/// Named metric values of one experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: String,
    pub metrics: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    /// JSON object; infinite values (failed executions) become `null`.
    pub fn to_json(&self) -> serde_json::Value {
        let metrics: serde_json::Map<String, serde_json::Value> = self
            .metrics
            .iter()
            .map(|(k, v)| {
                let v = if v.is_finite() { serde_json::json!(v) } else { serde_json::Value::Null };
                (k.clone(), v)
            })
            .collect();
        serde_json::json!({ "experiment": self.experiment, "metrics": metrics })
    }
}

/// One row per report, one column per metric name seen in any report.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut columns: Vec<&String> = reports.iter().flat_map(|r| r.metrics.keys()).collect();
    columns.sort();
    columns.dedup();
    let mut out = String::from("experiment");
    for c in &columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.experiment);
        for c in &columns {
            out.push(',');
            match r.metrics.get(*c) {
                Some(v) if v.is_finite() => out.push_str(&format!("{v}")),
                Some(_) => out.push_str("inf"),
                None => {}
            }
        }
        out.push('\n');
    }
    out
}
