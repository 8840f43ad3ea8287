//! MSAC over minimal samples of tracked points.

use nalgebra::{DMatrix, Matrix3x4};
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::build_k;
use crate::error::{Error, Result};
use crate::recovery::CalibrationResult;
use crate::scene::{Observations, Vec3};
use crate::solver::OnlineSolver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsacSettings {
    pub max_iterations: usize,
    /// Pixel residual where the Huber loss turns linear.
    pub huber_delta: f64,
    /// Pixel residual under which a track counts as an inlier.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for MsacSettings {
    fn default() -> Self {
        Self { max_iterations: 200, huber_delta: 2.0, inlier_threshold: 4.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsacResult {
    pub best: CalibrationResult,
    pub score: f64,
    pub inliers: usize,
    /// Iteration that produced `best`.
    pub best_iteration: usize,
    /// Solver invocations made.
    pub iterations: usize,
    /// Physical hypotheses scored across all iterations.
    pub hypotheses: usize,
    /// Best score seen after each iteration, `inf` before the first hypothesis.
    pub trace: Vec<f64>,
    /// Score of the best hypothesis of each iteration, if it had one.
    pub iteration_scores: Vec<Option<f64>>,
    /// Points sampled by the winning iteration.
    pub sample: Vec<usize>,
}

pub fn huber(r: f64, delta: f64) -> f64 {
    if r <= delta {
        0.5 * r * r
    } else {
        delta * (r - 0.5 * delta)
    }
}

fn projection_matrices(h: &CalibrationResult) -> Result<Vec<Matrix3x4<f64>>> {
    let k = build_k(&h.intrinsics)?;
    Ok(h.rotations
        .iter()
        .zip(&h.centers)
        .map(|(r, c)| {
            let t = -(r * c);
            k * Matrix3x4::from_columns(&[r.column(0).into(), r.column(1).into(), r.column(2).into(), t])
        })
        .collect())
}

/// Linear triangulation from every view.
pub fn triangulate(cameras: &[Matrix3x4<f64>], pixels: &[[f64; 2]]) -> Option<Vec3> {
    let mut a = DMatrix::<f64>::zeros(2 * cameras.len(), 4);
    for (i, (p, [x, y])) in cameras.iter().zip(pixels).enumerate() {
        for c in 0..4 {
            a[(2 * i, c)] = x * p[(2, c)] - p[(0, c)];
            a[(2 * i + 1, c)] = y * p[(2, c)] - p[(1, c)];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (imin, _) = svd.singular_values.argmin();
    let h = v_t.row(imin);
    (h[3].abs() > f64::MIN_POSITIVE).then(|| Vec3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// Huber score of a hypothesis over all tracks, and its inlier count. A
/// track that triangulates behind some camera is charged as if every
/// residual were the image diagonal.
pub fn score_hypothesis(h: &CalibrationResult, tracks: &Observations, settings: &MsacSettings) -> Result<(f64, usize)> {
    let cams = projection_matrices(h)?;
    let (w, hgt) = tracks.image_size;
    let worst = huber((w * w + hgt * hgt).sqrt(), settings.huber_delta) * cams.len() as f64;
    let mut score = 0.0;
    let mut inliers = 0;
    let mut px = vec![[0.0; 2]; cams.len()];
    for p in 0..tracks.num_points() {
        for (i, slot) in px.iter_mut().enumerate() {
            *slot = tracks.pixels[i][p];
        }
        let Some(x) = triangulate(&cams, &px) else {
            score += worst;
            continue;
        };
        let xh = x.push(1.0);
        let mut track_score = 0.0;
        let mut max_r: f64 = 0.0;
        let mut visible = true;
        for (cam, [u, v]) in cams.iter().zip(&px) {
            let y = cam * xh;
            if y[2] <= 0.0 {
                visible = false;
                break;
            }
            let r = ((y[0] / y[2] - u).powi(2) + (y[1] / y[2] - v).powi(2)).sqrt();
            max_r = max_r.max(r);
            track_score += huber(r, settings.huber_delta);
        }
        if !visible {
            score += worst;
            continue;
        }
        score += track_score;
        if max_r <= settings.inlier_threshold {
            inliers += 1;
        }
    }
    Ok((score, inliers))
}

struct IterationOutcome {
    hypotheses: usize,
    best: Option<(f64, usize, CalibrationResult)>,
    sample: Vec<usize>,
}

fn run_iteration(solver: &OnlineSolver, tracks: &Observations, settings: &MsacSettings, it: usize) -> IterationOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ it as u64);
    let mut idx = sample(&mut rng, tracks.num_points(), solver.n_points()).into_vec();
    idx.sort_unstable();
    let mut out = IterationOutcome { hypotheses: 0, best: None, sample: idx.clone() };
    let Ok(cands) = solver.candidates(&tracks.subset(&idx)) else {
        return out;
    };
    out.hypotheses = cands.len();
    for c in cands {
        let Ok((s, inl)) = score_hypothesis(&c, tracks, settings) else {
            continue;
        };
        if out.best.as_ref().is_none_or(|(bs, _, _)| s < *bs) {
            out.best = Some((s, inl, c));
        }
    }
    out
}

/// Samples minimal point sets, solves each, and keeps the hypothesis with
/// the lowest Huber score over all tracks.
pub fn msac_calibrate(tracks: &Observations, solver: &OnlineSolver, settings: &MsacSettings) -> Result<MsacResult> {
    if settings.max_iterations == 0 || settings.huber_delta <= 0.0 {
        return Err(Error::InvalidSpec("MSAC needs at least one iteration and a positive Huber delta".into()));
    }
    if tracks.num_views() != solver.n_views() {
        return Err(Error::DimensionMismatch { expected: solver.n_views(), got: tracks.num_views() });
    }
    if tracks.num_points() < solver.n_points() {
        return Err(Error::DimensionMismatch { expected: solver.n_points(), got: tracks.num_points() });
    }
    let outcomes: Vec<IterationOutcome> = (0..settings.max_iterations)
        .into_par_iter()
        .map(|it| run_iteration(solver, tracks, settings, it))
        .collect();
    let mut trace = Vec::with_capacity(outcomes.len());
    let mut best: Option<(f64, usize, usize)> = None;
    let mut hypotheses = 0;
    for (it, o) in outcomes.iter().enumerate() {
        hypotheses += o.hypotheses;
        if let Some((s, _, _)) = &o.best {
            if best.is_none_or(|(bs, _, _)| *s < bs) {
                best = Some((*s, o.best.as_ref().map_or(0, |b| b.1), it));
            }
        }
        trace.push(best.map_or(f64::INFINITY, |b| b.0));
    }
    let (score, inliers, it) = best.ok_or(Error::NoHypothesis)?;
    let iteration_scores = outcomes.iter().map(|o| o.best.as_ref().map(|b| b.0)).collect();
    let mut outcomes = outcomes;
    let winner = outcomes.swap_remove(it);
    Ok(MsacResult {
        best: winner.best.expect("winning iteration has a hypothesis").2,
        score,
        inliers,
        best_iteration: it,
        iterations: settings.max_iterations,
        hypotheses,
        trace,
        iteration_scores,
        sample: winner.sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, project, SceneConfig};

    #[test]
    fn huber_branches() {
        assert_eq!(huber(1.0, 2.0), 0.5);
        assert_eq!(huber(4.0, 2.0), 6.0);
        assert_eq!(huber(2.0, 2.0), 2.0);
    }

    #[test]
    fn triangulates_exact_projections() {
        let scene = generate_scene(&SceneConfig::default().with_points(5), 1).unwrap();
        let obs = project(&scene).unwrap();
        let k = build_k(&scene.intrinsics).unwrap();
        let cams: Vec<Matrix3x4<f64>> = scene
            .rotations
            .iter()
            .zip(&scene.centers)
            .map(|(r, c)| {
                let t = -(r * c);
                k * Matrix3x4::from_columns(&[r.column(0).into(), r.column(1).into(), r.column(2).into(), t])
            })
            .collect();
        for p in 0..5 {
            let px: Vec<[f64; 2]> = (0..3).map(|i| obs.pixels[i][p]).collect();
            let x = triangulate(&cams, &px).unwrap();
            assert!((x - scene.points[p]).norm() < 1e-9);
        }
    }
}
