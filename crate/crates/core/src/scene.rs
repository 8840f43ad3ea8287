//! Synthetic scenes: points in the unit sphere seen by two or three cameras
//! looking at the sphere from about two units away.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::{build_k, Intrinsics};
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub num_points: usize,
    pub num_views: usize,
    pub intrinsics: Intrinsics,
    pub image_size: (f64, f64),
    /// Distance of the first camera from the sphere center, along -y.
    pub distance: f64,
    /// Half-width of the uniform per-axis offset of the other centers.
    pub center_offset: f64,
    pub min_offset: f64,
    /// Half-width of the uniform per-axis rotation angles, in degrees.
    pub max_angle_deg: f64,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_points: 100,
            num_views: 3,
            intrinsics: Intrinsics::new(330.0, 310.0, 300.0, 250.0, 10.0),
            image_size: (640.0, 480.0),
            distance: 2.0,
            center_offset: 0.5,
            min_offset: 0.1,
            max_angle_deg: 45.0,
            max_attempts: 10_000,
        }
    }
}

impl SceneConfig {
    pub fn with_points(mut self, n: usize) -> Self {
        self.num_points = n;
        self
    }

    pub fn with_views(mut self, m: usize) -> Self {
        self.num_views = m;
        self
    }

    pub fn with_intrinsics(mut self, k: Intrinsics) -> Self {
        self.intrinsics = k;
        self
    }
}

/// World points and cameras. Camera `i` maps `X` to `K R_i (X - C_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SceneRepr", into = "SceneRepr")]
pub struct Scene {
    pub points: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
    pub centers: Vec<Vec3>,
    pub intrinsics: Intrinsics,
    pub image_size: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct SceneRepr {
    points: Vec<[f64; 3]>,
    rotations: Vec<[f64; 9]>,
    centers: Vec<[f64; 3]>,
    intrinsics: Intrinsics,
    #[serde(default = "default_image_size")]
    image_size: (f64, f64),
}

fn default_image_size() -> (f64, f64) {
    (640.0, 480.0)
}

impl From<Scene> for SceneRepr {
    fn from(s: Scene) -> Self {
        SceneRepr {
            points: s.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            rotations: s
                .rotations
                .iter()
                .map(|r| {
                    let mut a = [0.0; 9];
                    for i in 0..3 {
                        for j in 0..3 {
                            a[3 * i + j] = r[(i, j)];
                        }
                    }
                    a
                })
                .collect(),
            centers: s.centers.iter().map(|c| [c.x, c.y, c.z]).collect(),
            intrinsics: s.intrinsics,
            image_size: s.image_size,
        }
    }
}

impl From<SceneRepr> for Scene {
    fn from(r: SceneRepr) -> Self {
        Scene {
            points: r.points.iter().map(|p| Vec3::from(*p)).collect(),
            rotations: r.rotations.iter().map(|a| Mat3::from_row_slice(a)).collect(),
            centers: r.centers.iter().map(|c| Vec3::from(*c)).collect(),
            intrinsics: r.intrinsics,
            image_size: r.image_size,
        }
    }
}

impl Scene {
    pub fn num_views(&self) -> usize {
        self.rotations.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// Point `p` in the frame of camera `i`.
    pub fn camera_point(&self, i: usize, p: usize) -> Vec3 {
        self.rotations[i] * (self.points[p] - self.centers[i])
    }

    /// Keeps only the listed points, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Scene {
        Scene {
            points: indices.iter().map(|&p| self.points[p]).collect(),
            ..self.clone()
        }
    }

    /// Same geometry with a different calibration matrix.
    pub fn with_intrinsics(&self, k: Intrinsics) -> Scene {
        Scene { intrinsics: k, ..self.clone() }
    }
}

/// Pixel measurements `x_ip`, view-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub pixels: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "depths", default, skip_serializing_if = "Option::is_none")]
    pub true_depths: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_image_size")]
    pub image_size: (f64, f64),
}

impl Observations {
    pub fn new(pixels: Vec<Vec<[f64; 2]>>, image_size: (f64, f64)) -> Self {
        Self { pixels, true_depths: None, image_size }
    }

    pub fn num_views(&self) -> usize {
        self.pixels.len()
    }

    pub fn num_points(&self) -> usize {
        self.pixels.first().map_or(0, Vec::len)
    }

    pub fn homogeneous(&self, view: usize, point: usize) -> Vec3 {
        let [x, y] = self.pixels[view][point];
        Vec3::new(x, y, 1.0)
    }

    /// Keeps only the listed points, in the given order, in every view.
    pub fn subset(&self, indices: &[usize]) -> Observations {
        let pick = |row: &Vec<[f64; 2]>| indices.iter().map(|&p| row[p]).collect();
        Observations {
            pixels: self.pixels.iter().map(pick).collect(),
            true_depths: self
                .true_depths
                .as_ref()
                .map(|d| d.iter().map(|row| indices.iter().map(|&p| row[p]).collect()).collect()),
            image_size: self.image_size,
        }
    }

    /// Flat parameter vector `[x_11, y_11, x_12, ...]`, view-major.
    pub fn to_params(&self) -> Vec<f64> {
        self.pixels.iter().flatten().flat_map(|px| px.iter().copied()).collect()
    }
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample from the unit ball by rejection.
fn sample_ball(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

/// Orientation of a camera at `(0, -d, 0)` looking at the origin with image
/// `y` pointing down the world `z` axis.
fn base_rotation() -> Mat3 {
    Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)
}

fn euler_xyz(a: f64, b: f64, c: f64) -> Mat3 {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), a);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), b);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), c);
    (rx * ry * rz).into_inner()
}

fn sees_all(
    k: &Mat3,
    rot: &Mat3,
    center: &Vec3,
    points: &[Vec3],
    (width, height): (f64, f64),
) -> bool {
    points.iter().all(|x| {
        let y = rot * (x - center);
        if y.z <= 1e-6 {
            return false;
        }
        let px = k * y;
        let (u, v) = (px.x / px.z, px.y / px.z);
        (0.0..=width).contains(&u) && (0.0..=height).contains(&v)
    })
}

fn check_config(config: &SceneConfig) -> Result<Mat3> {
    if config.num_points < 4 {
        return Err(Error::InvalidSpec(format!(
            "a scene needs at least 4 points, got {}",
            config.num_points
        )));
    }
    if !(1..=3).contains(&config.num_views) {
        return Err(Error::InvalidSpec(format!(
            "scenes support 1 to 3 views, got {}",
            config.num_views
        )));
    }
    build_k(&config.intrinsics)
}

/// Random scene: `num_points` points in the unit ball, camera 1 at distance
/// `distance` on the `-y` axis, the others offset uniformly per axis, every
/// camera rotated by uniform Euler angles. Each camera is resampled until it
/// sees every point inside the image.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    let k = check_config(config)?;
    let mut rng = rng_from(seed);
    let points: Vec<Vec3> = (0..config.num_points).map(|_| sample_ball(&mut rng)).collect();
    let first = Vec3::new(0.0, -config.distance, 0.0);
    let max_angle = config.max_angle_deg.to_radians();
    let mut rotations = Vec::with_capacity(config.num_views);
    let mut centers = Vec::with_capacity(config.num_views);
    for view in 0..config.num_views {
        let mut placed = false;
        for _ in 0..config.max_attempts {
            let center = if view == 0 {
                first
            } else {
                let off = config.center_offset;
                let delta = Vec3::new(
                    rng.random_range(-off..=off),
                    rng.random_range(-off..=off),
                    rng.random_range(-off..=off),
                );
                if delta.norm() < config.min_offset {
                    continue;
                }
                first + delta
            };
            let rot = euler_xyz(
                rng.random_range(-max_angle..=max_angle),
                rng.random_range(-max_angle..=max_angle),
                rng.random_range(-max_angle..=max_angle),
            ) * base_rotation();
            if sees_all(&k, &rot, &center, &points, config.image_size) {
                rotations.push(rot);
                centers.push(center);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::ExhaustedRetries(config.max_attempts));
        }
    }
    Ok(Scene {
        points,
        rotations,
        centers,
        intrinsics: config.intrinsics,
        image_size: config.image_size,
    })
}

/// Scene whose camera centers lie on the sphere of radius `distance` about
/// the origin with every optical axis passing through the origin.
pub fn generate_degenerate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    let k = check_config(config)?;
    let mut rng = rng_from(seed);
    let points: Vec<Vec3> = (0..config.num_points).map(|_| sample_ball(&mut rng)).collect();
    let mut rotations = Vec::with_capacity(config.num_views);
    let mut centers: Vec<Vec3> = Vec::with_capacity(config.num_views);
    for _ in 0..config.num_views {
        let mut placed = false;
        for _ in 0..config.max_attempts {
            let dir = loop {
                let g = Vec3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                if g.norm() > 1e-6 {
                    break g.normalize();
                }
            };
            let center = dir * config.distance;
            if centers.iter().any(|c| (c - center).norm() < config.min_offset) {
                continue;
            }
            let z = -dir;
            let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let x0 = helper.cross(&z).normalize();
            let y0 = z.cross(&x0);
            let roll: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let x = x0 * roll.cos() + y0 * roll.sin();
            let y = z.cross(&x);
            let rot = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
            if sees_all(&k, &rot, &center, &points, config.image_size) {
                rotations.push(rot);
                centers.push(center);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::ExhaustedRetries(config.max_attempts));
        }
    }
    Ok(Scene {
        points,
        rotations,
        centers,
        intrinsics: config.intrinsics,
        image_size: config.image_size,
    })
}

/// Pixels and true depths of every point in every view.
pub fn project(scene: &Scene) -> Result<Observations> {
    let k = build_k(&scene.intrinsics)?;
    let mut pixels = Vec::with_capacity(scene.num_views());
    let mut depths = Vec::with_capacity(scene.num_views());
    for view in 0..scene.num_views() {
        let mut row = Vec::with_capacity(scene.num_points());
        let mut drow = Vec::with_capacity(scene.num_points());
        for point in 0..scene.num_points() {
            let y = scene.camera_point(view, point);
            if y.z <= 0.0 {
                return Err(Error::BehindCamera { view, point });
            }
            let x = k * y;
            row.push([x.x / x.z, x.y / x.z]);
            drow.push(y.z);
        }
        pixels.push(row);
        depths.push(drow);
    }
    Ok(Observations {
        pixels,
        true_depths: Some(depths),
        image_size: scene.image_size,
    })
}

/// Independent zero-mean Gaussian noise on every pixel coordinate. True
/// depths are dropped since they no longer match the pixels.
pub fn add_noise(obs: &Observations, sigma: f64, seed: u64) -> Observations {
    let mut out = obs.clone();
    out.true_depths = None;
    if sigma <= 0.0 {
        return out;
    }
    let mut rng = rng_from(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for px in out.pixels.iter_mut().flatten() {
        px[0] += normal.sample(&mut rng);
        px[1] += normal.sample(&mut rng);
    }
    out
}
