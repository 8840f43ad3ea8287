//! End-to-end: monodromy bundle for the calibrated relaxation, then online
//! solves and MSAC on fresh scenes.

use std::sync::OnceLock;

use depthcal_core::camera::IntrinsicsSpec;
use depthcal_core::monodromy::{monodromy_solve, reanchor, seed_pair, MonodromySettings, StartBundle};
use depthcal_core::polysys::shipped;
use depthcal_core::robust::{msac_calibrate, score_hypothesis, MsacSettings};
use depthcal_core::scene::{add_noise, SceneConfig};
use depthcal_core::solver::{run_trial, simulate_trial, OnlineSolver};

fn calibrated_bundle() -> &'static StartBundle {
    static BUNDLE: OnceLock<StartBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let sys = shipped("11000").unwrap().build();
        let (p0, x0) = seed_pair(&sys, 11).unwrap();
        let settings = MonodromySettings { seed: 11, ..Default::default() };
        let set = monodromy_solve(&sys, (&p0, &x0), &settings).unwrap();
        let set = reanchor(&sys, &set, &settings);
        assert!(set.len() >= 600, "only {} solutions", set.len());
        StartBundle::new(&sys, &set, &settings, None)
    })
}

#[test]
fn calibrated_noiseless_round_trip() {
    let spec = IntrinsicsSpec::calibrated();
    let config = SceneConfig::default().with_points(20);
    for seed in 0..3 {
        let trial = simulate_trial(&spec, &config, 0.0, seed).unwrap();
        let solver = OnlineSolver::new(calibrated_bundle().clone(), trial.pixel_spec).unwrap();
        let (_, rep) = run_trial(&solver, &trial).unwrap();
        assert!(rep.delta_fg < 1e-9 && rep.re < 1e-6 && rep.re_gt < 1e-6, "seed {seed}: {rep:?}");
        assert!(rep.eps_r < 1e-4 && rep.eps_c < 1e-4, "seed {seed}: {rep:?}");
    }
}

#[test]
fn msac_single_iteration_on_clean_tracks() {
    let spec = IntrinsicsSpec::calibrated();
    let trial = simulate_trial(&spec, &SceneConfig::default().with_points(30), 0.0, 21).unwrap();
    let solver = OnlineSolver::new(calibrated_bundle().clone(), trial.pixel_spec).unwrap();
    let settings = MsacSettings { max_iterations: 1, seed: 3, ..Default::default() };
    let res = msac_calibrate(&trial.observations, &solver, &settings).unwrap();
    assert_eq!(res.iterations, 1);
    assert_eq!(res.inliers, 30);
    assert!(res.score < 1e-10, "{}", res.score);
    let (again, _) = score_hypothesis(&res.best, &trial.observations, &settings).unwrap();
    assert_eq!(again, res.score);
}

#[test]
fn msac_with_corrupted_tracks() {
    let spec = IntrinsicsSpec::calibrated();
    let trial = simulate_trial(&spec, &SceneConfig::default().with_points(40), 0.0, 5).unwrap();
    let mut tracks = add_noise(&trial.observations, 0.2, 9);
    // every fifth track is moved far from its true position in view 2
    for p in (0..40).step_by(5) {
        tracks.pixels[1][p][0] += 60.0;
        tracks.pixels[1][p][1] -= 45.0;
    }
    let solver = OnlineSolver::new(calibrated_bundle().clone(), trial.pixel_spec).unwrap();
    let settings = MsacSettings { max_iterations: 12, seed: 1, ..Default::default() };
    let res = msac_calibrate(&tracks, &solver, &settings).unwrap();
    assert_eq!(res.trace.len(), 12);
    assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*res.trace.last().unwrap(), res.score);
    let (again, _) = score_hypothesis(&res.best, &tracks, &settings).unwrap();
    assert_eq!(again, res.score);
    let mut scores: Vec<f64> = res.iteration_scores.iter().flatten().copied().collect();
    scores.sort_by(f64::total_cmp);
    assert!(res.score < scores[scores.len() / 2], "{scores:?}");
    // determinism under a fixed seed
    let again = msac_calibrate(&tracks, &solver, &settings).unwrap();
    assert_eq!(again.score, res.score);
    assert_eq!(again.sample, res.sample);
}
