//! Calibration and pose error measures.

use serde::{Deserialize, Serialize};

use crate::camera::{build_k, Intrinsics, Mat3};
use crate::error::{Error, Result};
use crate::recovery::CalibrationResult;
use crate::scene::{Observations, Scene, Vec3};

/// Ground-truth poses in the gauge of a reconstruction: camera 1 at the
/// origin with identity rotation, centers scaled so that the depth of point
/// 1 in camera 1 is one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPoses {
    pub rotations: Vec<Mat3>,
    pub centers: Vec<Vec3>,
}

impl GroundTruthPoses {
    pub fn from_scene(scene: &Scene) -> Self {
        let r1 = scene.rotations[0];
        let c1 = scene.centers[0];
        let kappa = 1.0 / scene.camera_point(0, 0)[2];
        Self {
            rotations: scene.rotations.iter().map(|r| r * r1.transpose()).collect(),
            centers: scene.centers.iter().map(|c| r1 * (c - c1) * kappa).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub delta_fg: f64,
    pub delta_uv: f64,
    pub delta_s: f64,
    pub re: f64,
    pub re_gt: f64,
    pub eps_r: f64,
    pub eps_c: f64,
}

/// Mean relative focal error.
pub fn delta_fg(est: &Intrinsics, gt: &Intrinsics) -> Result<f64> {
    if gt.f == 0.0 || gt.g == 0.0 {
        return Err(Error::ZeroGroundTruth);
    }
    Ok(0.5 * ((est.f - gt.f).abs() / gt.f.abs() + (est.g - gt.g).abs() / gt.g.abs()))
}

/// Mean relative principal point error.
pub fn delta_uv(est: &Intrinsics, gt: &Intrinsics) -> Result<f64> {
    if gt.u == 0.0 || gt.v == 0.0 {
        return Err(Error::ZeroGroundTruth);
    }
    Ok(0.5 * ((est.u - gt.u).abs() / gt.u.abs() + (est.v - gt.v).abs() / gt.v.abs()))
}

/// Skew error relative to the mean focal length.
pub fn delta_s(est: &Intrinsics, gt: &Intrinsics) -> Result<f64> {
    let fg = gt.f + gt.g;
    if fg == 0.0 {
        return Err(Error::ZeroGroundTruth);
    }
    Ok(2.0 * (est.s - gt.s).abs() / fg.abs())
}

/// Mean reprojection error with skipped points listed.
#[derive(Debug, Clone, PartialEq)]
pub struct Reprojection {
    pub error: f64,
    /// `(view, point)` pairs that landed behind the camera.
    pub behind: Vec<(usize, usize)>,
}

/// Reprojects the camera-1 cloud of `est` into views `2..M` and averages the
/// pixel distances. Poses come from `est` unless ground truth is given.
pub fn reprojection_report(
    est: &CalibrationResult,
    obs: &Observations,
    gt: Option<&GroundTruthPoses>,
) -> Result<Reprojection> {
    let m = obs.num_views();
    if m < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: m });
    }
    let k = build_k(&est.intrinsics)?;
    let (rotations, centers) = match gt {
        Some(g) => (&g.rotations, &g.centers),
        None => (&est.rotations, &est.centers),
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut behind = Vec::new();
    for i in 1..m {
        for (p, x) in est.points.iter().enumerate() {
            let y = k * (rotations[i] * (x - centers[i]));
            if y[2] <= 0.0 {
                behind.push((i, p));
                continue;
            }
            let [u, v] = obs.pixels[i][p];
            sum += ((y[0] / y[2] - u).powi(2) + (y[1] / y[2] - v).powi(2)).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        let (view, point) = behind[0];
        return Err(Error::BehindCamera { view, point });
    }
    Ok(Reprojection { error: sum / count as f64, behind })
}

pub fn reprojection(est: &CalibrationResult, obs: &Observations, gt: Option<&GroundTruthPoses>) -> Result<f64> {
    reprojection_report(est, obs, gt).map(|r| r.error)
}

// rounding can push a cosine a few ulps past ±1
fn clamped_acos(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).acos()
}

/// Mean rotation and center-direction errors over views `2..M`, in degrees.
pub fn angular_errors(est: &CalibrationResult, gt: &GroundTruthPoses) -> Result<(f64, f64)> {
    let m = est.num_views().min(gt.rotations.len());
    if m < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: m });
    }
    let (mut er, mut ec) = (0.0, 0.0);
    for i in 1..m {
        let tr = (gt.rotations[i].transpose() * est.rotations[i]).trace();
        er += clamped_acos((tr - 1.0) / 2.0).to_degrees().abs();
        let (c, ch) = (gt.centers[i], est.centers[i]);
        let denom = c.norm() * ch.norm();
        if denom == 0.0 {
            return Err(Error::ZeroCenter);
        }
        ec += clamped_acos(c.dot(&ch) / denom).to_degrees().abs();
    }
    let n = (m - 1) as f64;
    Ok((er / n, ec / n))
}

/// Every metric for one estimate against a known scene.
pub fn evaluate(est: &CalibrationResult, obs: &Observations, scene: &Scene) -> Result<MetricReport> {
    let gt = GroundTruthPoses::from_scene(scene);
    let (eps_r, eps_c) = angular_errors(est, &gt)?;
    Ok(MetricReport {
        delta_fg: delta_fg(&est.intrinsics, &scene.intrinsics)?,
        delta_uv: delta_uv(&est.intrinsics, &scene.intrinsics)?,
        delta_s: delta_s(&est.intrinsics, &scene.intrinsics)?,
        re: reprojection(est, obs, None)?,
        re_gt: reprojection(est, obs, Some(&gt))?,
        eps_r,
        eps_c,
    })
}
