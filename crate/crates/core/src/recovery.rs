//! From depths and a calibration matrix to camera poses and a point cloud.
//!
//! Camera 1 fixes the gauge: `R₁ = I`, `C₁ = 0`, and the cloud is measured
//! in the frame of camera 1 with the scale set by `λ₁₁ = 1`.

use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use crate::camera::{k_inverse, Intrinsics, Mat3};
use crate::error::{Error, Result};
use crate::metrics::reprojection;
use crate::scene::{Observations, Vec3};

/// Condition number above which the reference triple is treated as flat.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub intrinsics: Intrinsics,
    #[serde(with = "mat_rows")]
    pub rotations: Vec<Mat3>,
    #[serde(with = "vec_rows")]
    pub centers: Vec<Vec3>,
    /// Reconstructed points in the frame of camera 1.
    #[serde(with = "vec_rows")]
    pub points: Vec<Vec3>,
    pub depths: Vec<Vec<f64>>,
    /// Position of the solution this came from in the solver output.
    pub solution_index: Option<usize>,
}

impl CalibrationResult {
    pub fn num_views(&self) -> usize {
        self.rotations.len()
    }

    pub fn min_depth(&self) -> f64 {
        self.depths.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `X_ip = λ_ip K⁻¹ x_ip` for every view and point.
pub fn points_from_depths(depths: &[Vec<f64>], obs: &Observations, k: &Intrinsics) -> Result<Vec<Vec<Vec3>>> {
    let k_inv = k_inverse(k)?;
    Ok(depths
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(p, l)| k_inv * obs.homogeneous(i, p) * *l).collect())
        .collect())
}

/// Nearest rotation in the Frobenius norm.
pub fn project_to_rotation(m: &Mat3) -> Mat3 {
    let svd = SVD::new(*m, true, true);
    let (mut u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    if (u * v_t).determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    u * v_t
}

fn condition(m: &Mat3) -> f64 {
    let s = m.singular_values();
    let (hi, lo) = (s.max(), s.min());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Columns `X_p - X_1` for the points of `triple`.
fn offsets(cloud: &[Vec3], triple: [usize; 3]) -> Mat3 {
    Matrix3::from_columns(&triple.map(|p| cloud[p] - cloud[0]))
}

/// Points 2, 3, 4 unless they are nearly flat, else the best-conditioned
/// triple of the remaining points.
fn reference_triple(cloud: &[Vec3]) -> Result<[usize; 3]> {
    if cloud.len() < 4 {
        return Err(Error::DegeneratePoints);
    }
    let first = [1, 2, 3];
    if condition(&offsets(cloud, first)) <= MAX_CONDITION {
        return Ok(first);
    }
    let n = cloud.len();
    let mut best = (f64::INFINITY, first);
    for a in 1..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let cond = condition(&offsets(cloud, [a, b, c]));
                if cond < best.0 {
                    best = (cond, [a, b, c]);
                }
            }
        }
    }
    if best.0 > MAX_CONDITION {
        return Err(Error::DegeneratePoints);
    }
    Ok(best.1)
}

/// Poses and points for real depths `λ[view][point]` with `λ₁₁ = 1`.
///
/// `R_i` maps offsets between points seen by camera 1 onto those seen by
/// camera `i`, and `C_i = X_12 - R_iᵀ X_i2` so that `X_ip = R_i (X_1p - C_i)`.
pub fn recover_poses(depths: &[Vec<f64>], obs: &Observations, k: &Intrinsics) -> Result<CalibrationResult> {
    let mut clouds = points_from_depths(depths, obs, k)?;
    let triple = reference_triple(&clouds[0])?;
    let base_inv = offsets(&clouds[0], triple).try_inverse().ok_or(Error::DegeneratePoints)?;
    let anchor = triple[0];
    let mut rotations = vec![Mat3::identity()];
    let mut centers = vec![Vec3::zeros()];
    for cloud in &clouds[1..] {
        let r = project_to_rotation(&(offsets(cloud, triple) * base_inv));
        centers.push(clouds[0][anchor] - r.transpose() * cloud[anchor]);
        rotations.push(r);
    }
    Ok(CalibrationResult {
        intrinsics: *k,
        rotations,
        centers,
        points: clouds.swap_remove(0),
        depths: depths.to_vec(),
        solution_index: None,
    })
}

/// The candidate with the smallest mean reprojection error; ties go to the
/// larger minimum depth.
pub fn select_solution(candidates: Vec<CalibrationResult>, obs: &Observations) -> Result<CalibrationResult> {
    let mut best: Option<(f64, f64, CalibrationResult)> = None;
    for c in candidates {
        let Ok(re) = reprojection(&c, obs, None) else {
            continue;
        };
        let md = c.min_depth();
        let better = match &best {
            None => true,
            Some((bre, bmd, _)) => re < *bre || (re == *bre && md > *bmd),
        };
        if better {
            best = Some((re, md, c));
        }
    }
    best.map(|(_, _, c)| c).ok_or(Error::NoPhysicalSolution)
}

pub(crate) mod mat_rows {
    use super::Mat3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Mat3], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|m| [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat3>, D::Error> {
        Ok(Vec::<[[f64; 3]; 3]>::deserialize(d)?
            .into_iter()
            .map(|r| Mat3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]))
            .collect())
    }
}

pub(crate) mod vec_rows {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| [x[0], x[1], x[2]]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        Ok(Vec::<[f64; 3]>::deserialize(d)?.into_iter().map(Vec3::from).collect())
    }
}
