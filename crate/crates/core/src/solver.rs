//! Online calibration from a start-system bundle, and the synthetic trials
//! used to evaluate it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::{
    condition_observations, denormalize_intrinsics, k_candidates, normalize_observations, Intrinsics,
    IntrinsicsSpec, OmegaParams, Slot,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::monodromy::{filter_physical, solve_from_bundle, StartBundle};
use crate::polysys::{build_system, CertificateReport, ParametricSystem};
use crate::recovery::{recover_poses, select_solution, CalibrationResult};
use crate::scene::{add_noise, generate_scene, project, Observations, Scene, SceneConfig};
use crate::slp::C64;
use crate::taxonomy::{coloring_to_selection, Coloring};
use crate::tracker::TrackSettings;

/// Spec with the known slots filled from a pixel camera (`s` stores `s/g`).
pub fn pixel_spec_for(spec: &IntrinsicsSpec, k: &Intrinsics) -> Result<IntrinsicsSpec> {
    let vals = [k.f, k.g, k.u, k.v, k.s / k.g];
    let mut mask = *spec.mask();
    for (slot, val) in mask.iter_mut().zip(vals) {
        if let Slot::Known(_) = slot {
            *slot = Slot::Known(val);
        }
    }
    IntrinsicsSpec::new(mask)
}

/// A camera that satisfies the structural priors of `spec`: zero skew when
/// the skew is known and tied focals when `g` follows `f`.
pub fn camera_for_spec(spec: &IntrinsicsSpec, k: &Intrinsics) -> Intrinsics {
    let mut out = *k;
    if spec.is_tied() {
        out.g = out.f;
    }
    if let Some(0.0) = spec.slot('s').known() {
        out.s = 0.0;
    }
    out
}

/// Square system of a taxonomy class.
pub fn system_for_coloring(coloring: &Coloring, spec: &IntrinsicsSpec) -> Result<ParametricSystem> {
    build_system(&coloring_to_selection(coloring), spec, coloring.n_points(), coloring.n_views())
}

/// Rank certificate of a class at synthetic points; the class is a minimal
/// relaxation when it passes.
pub fn certify_class(coloring: &Coloring, spec: &IntrinsicsSpec, seed: u64) -> Result<CertificateReport> {
    let sys = system_for_coloring(coloring, spec)?;
    crate::monodromy::certify_with_seeds(&sys, seed, 3)
}

/// Tracks a bundle to new observations and turns physical solutions into
/// calibrations.
#[derive(Debug, Clone)]
pub struct OnlineSolver {
    sys: ParametricSystem,
    bundle: StartBundle,
    pixel_spec: IntrinsicsSpec,
    pub track: TrackSettings,
}

impl OnlineSolver {
    /// `pixel_spec` carries the known intrinsics in pixels and must have the
    /// same unknowns as the bundle.
    pub fn new(bundle: StartBundle, pixel_spec: IntrinsicsSpec) -> Result<Self> {
        let sys = bundle.system()?;
        if pixel_spec.tag() != sys.spec().tag() {
            return Err(Error::InvalidSpec(format!(
                "bundle solves {} but the camera is {}",
                sys.spec().tag(),
                pixel_spec.tag()
            )));
        }
        Ok(Self { sys, bundle, pixel_spec, track: TrackSettings::default() })
    }

    pub fn system(&self) -> &ParametricSystem {
        &self.sys
    }

    pub fn bundle(&self) -> &StartBundle {
        &self.bundle
    }

    pub fn n_points(&self) -> usize {
        self.sys.n_points()
    }

    pub fn n_views(&self) -> usize {
        self.sys.n_views()
    }

    /// Every physical calibration for `obs`, which must hold exactly the
    /// bundle's number of views and points.
    pub fn candidates(&self, obs: &Observations) -> Result<Vec<CalibrationResult>> {
        if obs.num_views() != self.n_views() {
            return Err(Error::DimensionMismatch { expected: self.n_views(), got: obs.num_views() });
        }
        if obs.num_points() != self.n_points() {
            return Err(Error::DimensionMismatch { expected: self.n_points(), got: obs.num_points() });
        }
        let (normed, mut record) = normalize_observations(obs, &self.pixel_spec)?;
        let (conditioned, cond) = condition_observations(&normed, &self.pixel_spec);
        record.extend(&cond);
        let target: Vec<C64> = conditioned.to_params().into_iter().map(|v| C64::new(v, 0.0)).collect();
        let sols = solve_from_bundle(&self.sys, &self.bundle, &target, &self.track);
        let physical = filter_physical(&self.sys, &sols, &target);
        let mut out = Vec::new();
        for (idx, x) in physical.iter().enumerate() {
            let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
            let w = self.sys.omega_values(&xc).map(|z| z.re);
            let omega = OmegaParams { f_star: w[0], g_star: w[1], s_star: w[2], u: w[3], v: w[4] };
            let Ok([k_norm, ..]) = k_candidates(&omega) else {
                continue;
            };
            let k = denormalize_intrinsics(&k_norm, &record);
            let depths: Vec<Vec<f64>> =
                self.sys.depths(&xc).into_iter().map(|row| row.into_iter().map(|z| z.re).collect()).collect();
            if let Ok(mut res) = recover_poses(&depths, obs, &k) {
                res.solution_index = Some(idx);
                out.push(res);
            }
        }
        Ok(out)
    }

    /// The candidate that best reprojects `obs`.
    pub fn solve(&self, obs: &Observations) -> Result<CalibrationResult> {
        select_solution(self.candidates(obs)?, obs)
    }
}

/// One synthetic experiment: a scene, its noisy observations and the camera
/// prior handed to the solver.
#[derive(Debug, Clone)]
pub struct Trial {
    pub scene: Scene,
    pub observations: Observations,
    pub pixel_spec: IntrinsicsSpec,
}

/// Scene with `config` sized points and views, camera adjusted to the
/// priors of `spec`, pixels perturbed by `sigma`.
pub fn simulate_trial(spec: &IntrinsicsSpec, config: &SceneConfig, sigma: f64, seed: u64) -> Result<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = camera_for_spec(spec, &config.intrinsics);
    let config = config.clone().with_intrinsics(k);
    let scene = generate_scene(&config, rng.random())?;
    let clean = project(&scene)?;
    let observations = if sigma > 0.0 { add_noise(&clean, sigma, rng.random()) } else { clean };
    Ok(Trial { scene, observations, pixel_spec: pixel_spec_for(spec, &k)? })
}

/// Solves a trial on its first `n` points and scores the result against the
/// whole scene restricted to those points.
pub fn run_trial(solver: &OnlineSolver, trial: &Trial) -> Result<(CalibrationResult, MetricReport)> {
    let idx: Vec<usize> = (0..solver.n_points()).collect();
    let obs = trial.observations.subset(&idx);
    let scene = trial.scene.subset(&idx);
    let solver = OnlineSolver { pixel_spec: trial.pixel_spec, ..solver.clone() };
    let est = solver.solve(&obs)?;
    let report = evaluate(&est, &obs, &scene)?;
    Ok((est, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_spec_keeps_unknowns() {
        let spec = IntrinsicsSpec::parse_tag("fguv0").unwrap();
        let k = Intrinsics::new(330.0, 310.0, 300.0, 250.0, 0.0);
        let ps = pixel_spec_for(&spec, &k).unwrap();
        assert_eq!(ps.tag(), "fguv0");
        assert_eq!(ps.slot('s').known(), Some(0.0));
        let cal = pixel_spec_for(&IntrinsicsSpec::calibrated(), &k).unwrap();
        assert_eq!(cal.f_known(), Some(330.0));
    }

    #[test]
    fn camera_respects_priors() {
        let k = Intrinsics::new(330.0, 310.0, 300.0, 250.0, 10.0);
        let c = camera_for_spec(&IntrinsicsSpec::parse_tag("ffuv0").unwrap(), &k);
        assert_eq!((c.f, c.g, c.s), (330.0, 330.0, 0.0));
        let c = camera_for_spec(&IntrinsicsSpec::all_unknown(), &k);
        assert_eq!(c, k);
    }
}
