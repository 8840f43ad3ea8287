//! Offline discovery of all solutions at one generic parameter point by
//! monodromy, and the start-system bundle used by online solves.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{
    condition_observations, normalize_intrinsics, normalize_observations, omega_params_of, Intrinsics,
    IntrinsicsSpec, NormalizationRecord, Slot,
};
use crate::error::{Error, Result};
use crate::linalg::max_norm;
use crate::polysys::{certify_minimal, CertificateReport, ParametricSystem, SystemDescriptor};
use crate::scene::{generate_scene, project, Observations, Scene, SceneConfig};
use crate::slp::C64;
use crate::tracker::{
    newton_correct, residual_norm, track_all, track_loop_all, track_path, ParametricEquations, TrackResult, TrackSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonodromySettings {
    pub track: TrackSettings,
    /// Stop after this many consecutive loops that find nothing new.
    pub stall_loops: usize,
    pub max_loops: usize,
    /// Relative max-norm distance below which two solutions are one.
    pub dedup_tol: f64,
    /// Size of the loop vertices relative to the RMS of the anchor.
    pub loop_scale: f64,
    /// Stop as soon as this many solutions are known.
    pub target: Option<usize>,
    pub seed: u64,
}

impl Default for MonodromySettings {
    fn default() -> Self {
        Self {
            track: TrackSettings::default(),
            stall_loops: 5,
            max_loops: 500,
            dedup_tol: 1e-6,
            loop_scale: 1.0,
            target: None,
            seed: 0,
        }
    }
}

/// A synthetic problem instance with a known solution.
#[derive(Debug, Clone)]
pub struct SeedInstance {
    pub scene: Scene,
    /// Pixels after normalization and conditioning.
    pub observations: Observations,
    pub record: NormalizationRecord,
    /// Prior knowledge in pixel units matching the scene's camera.
    pub pixel_spec: IntrinsicsSpec,
    pub params: Vec<C64>,
    pub solution: Vec<C64>,
}

/// Pixel-scale camera whose known slots are consistent with `spec`.
fn random_camera(spec: &IntrinsicsSpec, rng: &mut impl Rng) -> (Intrinsics, IntrinsicsSpec) {
    let f = rng.random_range(280.0..420.0);
    let g = if spec.is_tied() { f } else { rng.random_range(280.0..420.0) };
    let u = rng.random_range(290.0..350.0);
    let v = rng.random_range(210.0..270.0);
    // a known shear can only be removed about a known v
    let zero_skew = !spec.mask()[4].is_unknown() && spec.mask()[3].is_unknown();
    let s = if zero_skew { 0.0 } else { rng.random_range(-15.0..15.0) };
    let k = Intrinsics::new(f, g, u, v, s);
    let vals = [f, g, u, v, s / g];
    let mut mask = *spec.mask();
    for (slot, val) in mask.iter_mut().zip(vals) {
        if let Slot::Known(_) = slot {
            *slot = Slot::Known(val);
        }
    }
    (k, IntrinsicsSpec::new(mask).expect("consistent spec"))
}

/// Fabricates a scene for the system's spec and sizes, and returns the
/// normalized problem together with its true solution.
pub fn seed_instance(sys: &ParametricSystem, seed: u64) -> Result<SeedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, pixel_spec) = random_camera(sys.spec(), &mut rng);
    let config = SceneConfig::default()
        .with_points(sys.n_points())
        .with_views(sys.n_views())
        .with_intrinsics(k);
    let scene = generate_scene(&config, rng.random())?;
    instance_from_scene(sys, scene, pixel_spec)
}

/// The normalized problem of a given scene and its true solution.
pub fn instance_from_scene(sys: &ParametricSystem, scene: Scene, pixel_spec: IntrinsicsSpec) -> Result<SeedInstance> {
    let k = scene.intrinsics;
    let obs = project(&scene)?;
    let (normed, mut record) = normalize_observations(&obs, &pixel_spec)?;
    let (conditioned, cond) = condition_observations(&normed, &pixel_spec);
    record.extend(&cond);
    let k_norm = normalize_intrinsics(&k, &record);
    let omega = omega_params_of(&k_norm)?;
    let depths = obs.true_depths.as_ref().ok_or(Error::NoPhysicalSolution)?;
    let solution = sys.unknowns_from(&omega, depths);
    let params: Vec<C64> = conditioned.to_params().into_iter().map(|v| C64::new(v, 0.0)).collect();
    let res = residual_norm(sys, &solution, &params);
    if res > 1e-9 {
        return Err(Error::NotOnVariety(res));
    }
    Ok(SeedInstance { scene, observations: conditioned, record, pixel_spec, params, solution })
}

/// `(p₀, x₀)` with `x₀` a solution of the system at `p₀`.
pub fn seed_pair(sys: &ParametricSystem, seed: u64) -> Result<(Vec<C64>, Vec<C64>)> {
    let inst = seed_instance(sys, seed)?;
    Ok((inst.params, inst.solution))
}

/// Rank certificate at the first of `tries` seed pairs where it passes, or
/// the best report seen. Full rank at one point implies it generically.
pub fn certify_with_seeds(sys: &ParametricSystem, seed: u64, tries: usize) -> Result<CertificateReport> {
    let mut best: Option<CertificateReport> = None;
    for k in 0..tries.max(1) as u64 {
        let (p0, x0) = seed_pair(sys, seed.wrapping_add(k))?;
        let rep = certify_minimal(sys, &p0, &x0)?;
        if rep.passed {
            return Ok(rep);
        }
        if best.as_ref().is_none_or(|b| rep.ratio_x > b.ratio_x) {
            best = Some(rep);
        }
    }
    Ok(best.expect("at least one try"))
}

/// Distinct solutions, looked up through a random linear projection.
#[derive(Debug, Clone)]
pub struct SolutionIndex {
    tol: f64,
    weights: Vec<(f64, f64)>,
    weight_sum: f64,
    keys: Vec<(f64, usize)>,
    pub solutions: Vec<Vec<C64>>,
}

impl SolutionIndex {
    pub fn new(dim: usize, tol: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let weights: Vec<(f64, f64)> =
            (0..dim).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let weight_sum = weights.iter().map(|(a, b)| a.abs() + b.abs()).sum();
        Self { tol, weights, weight_sum, keys: Vec::new(), solutions: Vec::new() }
    }

    fn key(&self, x: &[C64]) -> f64 {
        x.iter().zip(&self.weights).map(|(z, (a, b))| a * z.re + b * z.im).sum()
    }

    fn radius(&self, x: &[C64]) -> f64 {
        self.tol * (1.0 + max_norm(x))
    }

    pub fn find(&self, x: &[C64]) -> Option<usize> {
        let k = self.key(x);
        let r = self.radius(x);
        let window = 2.0 * r * self.weight_sum;
        let start = self.keys.partition_point(|(kk, _)| *kk < k - window);
        self.keys[start..]
            .iter()
            .take_while(|(kk, _)| *kk <= k + window)
            .map(|&(_, i)| i)
            .find(|&i| {
                let d = self.solutions[i].iter().zip(x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                d <= r
            })
    }

    /// Adds `x` unless a duplicate is present; returns whether it was new.
    pub fn insert(&mut self, x: Vec<C64>) -> bool {
        if self.find(&x).is_some() {
            return false;
        }
        let k = self.key(&x);
        let pos = self.keys.partition_point(|(kk, _)| *kk < k);
        self.keys.insert(pos, (k, self.solutions.len()));
        self.solutions.push(x);
        true
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    #[serde(with = "complex_vec")]
    pub parameters: Vec<C64>,
    #[serde(with = "complex_vecs")]
    pub solutions: Vec<Vec<C64>>,
    pub residuals: Vec<f64>,
    /// Loop that first produced each solution (0 for the seed).
    pub provenance: Vec<usize>,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

fn refine<S: ParametricEquations>(sys: &S, x: &[C64], p: &[C64], st: &TrackSettings) -> Option<Vec<C64>> {
    newton_correct(sys, x, p, st.newton_tol, st.max_newton_iters).ok()
}

/// Newton-refines each point at `p` and keeps the first of every cluster
/// within `tol` (relative, max-norm). Points that do not refine are dropped.
pub fn dedup<S: ParametricEquations>(
    sys: &S,
    solutions: &[Vec<C64>],
    p: &[C64],
    tol: f64,
    st: &TrackSettings,
) -> SolutionSet {
    let mut index = SolutionIndex::new(sys.num_unknowns(), tol, 1);
    for x in solutions {
        if let Some(y) = refine(sys, x, p, st) {
            index.insert(y);
        }
    }
    let residuals = index.solutions.iter().map(|x| residual_norm(sys, x, p)).collect();
    SolutionSet {
        parameters: p.to_vec(),
        provenance: vec![0; index.len()],
        solutions: index.solutions,
        residuals,
    }
}

fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rms(p: &[C64]) -> f64 {
    (p.iter().map(|z| z.norm_sqr()).sum::<f64>() / p.len().max(1) as f64).sqrt().max(1e-3)
}

fn perturbed(p0: &[C64], scale: f64, rng: &mut impl Rng) -> Vec<C64> {
    p0.iter().map(|z| z + complex_gaussian(rng) * scale).collect()
}

fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
    let scale = 1.0 + max_norm(b);
    a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol * scale)
}

/// Indices of successful loop results whose endpoints are not yet known and
/// were reached from exactly one start. Two starts meeting at one endpoint
/// means a path jumped, so neither is trusted.
fn fresh_endpoints(index: &SolutionIndex, results: &[TrackResult], tol: f64, seed: u64) -> Vec<usize> {
    let ok: Vec<usize> = (0..results.len()).filter(|&i| results[i].is_success()).collect();
    let mut hits = SolutionIndex::new(index.weights.len(), tol, seed);
    let mut owner: Vec<Vec<usize>> = Vec::new();
    for &i in &ok {
        let x = &results[i].endpoint;
        match hits.find(x) {
            Some(k) => owner[k].push(i),
            None => {
                hits.insert(x.clone());
                owner.push(vec![i]);
            }
        }
    }
    owner
        .into_iter()
        .filter(|o| o.len() == 1 && index.find(&results[o[0]].endpoint).is_none())
        .map(|o| o[0])
        .collect()
}

fn move_to_complex<S: ParametricEquations>(
    sys: &S,
    p: &[C64],
    x: &[C64],
    scale: f64,
    st: &TrackSettings,
    rng: &mut impl Rng,
) -> Result<(Vec<C64>, Vec<C64>)> {
    for attempt in 0..8u64 {
        let q = perturbed(p, scale, rng);
        let r = track_path(sys, x, p, &q, &TrackSettings { seed: st.seed ^ attempt, ..*st });
        if r.is_success() {
            return Ok((q, r.endpoint));
        }
    }
    Err(Error::NoProgress)
}

/// Grows the solution set from one seed by tracking all known solutions
/// around random triangles `p₀ → q₁ → q₂ → p₀`. The seed is first moved to a
/// random complex `p₀` near its real parameters and the returned set lives
/// there.
pub fn monodromy_solve<S: ParametricEquations>(
    sys: &S,
    seed: (&[C64], &[C64]),
    settings: &MonodromySettings,
) -> Result<SolutionSet> {
    let (p_real, x0) = seed;
    let st = &settings.track;
    let x0 = refine(sys, x0, p_real, st).ok_or(Error::NoConvergence(residual_norm(sys, x0, p_real)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let scale = settings.loop_scale * rms(p_real);
    // A real anchor sits close to real discriminant points where pairs of
    // solutions nearly collide, so the loops are based at a complex one.
    let (base, x0) = move_to_complex(sys, p_real, &x0, scale, st, &mut rng)?;
    let p0 = base.as_slice();
    let mut index = SolutionIndex::new(sys.num_unknowns(), settings.dedup_tol, settings.seed);
    index.insert(x0);
    let mut provenance = vec![0usize];
    let mut stall = 0;
    let mut any_success = false;
    let mut loops = 0;
    while stall < settings.stall_loops
        && loops < settings.max_loops
        && settings.target.is_none_or(|t| index.len() < t)
    {
        loops += 1;
        let q1 = perturbed(p0, scale, &mut rng);
        let q2 = perturbed(p0, scale, &mut rng);
        let starts = index.solutions.clone();
        let results = track_loop_all(sys, &starts, &[p0.to_vec(), q1.clone(), q2.clone()], st);
        any_success |= results.iter().any(|r| r.is_success());
        let fresh = fresh_endpoints(&index, &results, settings.dedup_tol, settings.seed);
        // a new endpoint must lead back to its start around the reversed loop
        let ends: Vec<Vec<C64>> = fresh.iter().map(|&i| results[i].endpoint.clone()).collect();
        let back = track_loop_all(sys, &ends, &[p0.to_vec(), q2, q1], st);
        let mut added = 0;
        for (&i, r) in fresh.iter().zip(back) {
            if r.is_success() && close(&r.endpoint, &starts[i], settings.dedup_tol) && index.insert(results[i].endpoint.clone()) {
                provenance.push(loops);
                added += 1;
            }
        }
        stall = if added == 0 { stall + 1 } else { 0 };
    }
    if !any_success && index.len() == 1 {
        return Err(Error::NoProgress);
    }
    let residuals = index.solutions.iter().map(|x| residual_norm(sys, x, p0)).collect();
    Ok(SolutionSet { parameters: p0.to_vec(), solutions: index.solutions, residuals, provenance })
}

/// Moves a solution set to a fresh random complex parameter point. Paths
/// that fail on the straight segment are retried through random detours.
/// If any solution is still lost, the original set is returned unchanged.
pub fn reanchor<S: ParametricEquations>(
    sys: &S,
    set: &SolutionSet,
    settings: &MonodromySettings,
) -> SolutionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0xa5c4);
    let p0 = &set.parameters;
    let p1 = perturbed(p0, settings.loop_scale * rms(p0), &mut rng);
    let st = settings.track;
    let straight = TrackSettings { detour_scale: 0.0, ..st };
    let mut results = track_all(sys, &set.solutions, p0, &p1, &straight);
    for attempt in 0..4u64 {
        let failed: Vec<usize> = (0..results.len()).filter(|&i| !results[i].is_success()).collect();
        if failed.is_empty() {
            break;
        }
        let retry = TrackSettings { detour_scale: 0.3, seed: st.seed ^ (attempt + 1).wrapping_mul(0x9e37), ..st };
        let starts: Vec<Vec<C64>> = failed.iter().map(|&i| set.solutions[i].clone()).collect();
        for (i, r) in failed.into_iter().zip(track_all(sys, &starts, p0, &p1, &retry)) {
            results[i] = r;
        }
    }
    let mut index = SolutionIndex::new(sys.num_unknowns(), settings.dedup_tol, settings.seed);
    let mut provenance = Vec::new();
    for (r, prov) in results.into_iter().zip(&set.provenance) {
        if r.is_success() && index.insert(r.endpoint) {
            provenance.push(*prov);
        }
    }
    // a partial move would throw away solutions monodromy already found
    if index.len() < set.len() {
        return set.clone();
    }
    let residuals = index.solutions.iter().map(|x| residual_norm(sys, x, &p1)).collect();
    SolutionSet { parameters: p1, solutions: index.solutions, residuals, provenance }
}

/// Real solutions with positive `f*`, `g*` and nonzero depths, with each
/// view's depths made positive by the per-view sign symmetry. Solutions
/// whose depths in some view have mixed signs are dropped.
pub fn filter_physical(sys: &ParametricSystem, solutions: &[Vec<C64>], p: &[C64]) -> Vec<Vec<f64>> {
    let st = TrackSettings::default();
    let mut index = SolutionIndex::new(sys.num_unknowns(), 1e-6, 2);
    let mut out = Vec::new();
    for x in solutions {
        let x = refine(sys, x, p, &st).unwrap_or_else(|| x.clone());
        let Some(xr) = physical_candidate(sys, &x) else {
            continue;
        };
        let as_c: Vec<C64> = xr.iter().map(|&v| C64::new(v, 0.0)).collect();
        if index.insert(as_c) {
            out.push(xr);
        }
    }
    out
}

/// The physical representative of one solution, if it has one.
pub fn physical_candidate(sys: &ParametricSystem, x: &[C64]) -> Option<Vec<f64>> {
    if x.iter().any(|z| z.im.abs() >= 1e-6) {
        return None;
    }
    let mut xr: Vec<f64> = x.iter().map(|z| z.re).collect();
    let omega = sys.omega_values(x);
    if omega[0].re <= 1e-8 || omega[1].re <= 1e-8 {
        return None;
    }
    for view in 0..sys.n_views() {
        let idx: Vec<Option<usize>> = (0..sys.n_points()).map(|pt| sys.depth_index(view, pt)).collect();
        let vals: Vec<f64> = idx.iter().map(|i| i.map_or(1.0, |k| xr[k])).collect();
        if vals.iter().any(|v| v.abs() <= 1e-8) {
            return None;
        }
        if vals.iter().all(|v| *v > 0.0) {
            continue;
        }
        if view > 0 && vals.iter().all(|v| *v < 0.0) {
            for k in idx.into_iter().flatten() {
                xr[k] = -xr[k];
            }
            continue;
        }
        return None;
    }
    Some(xr)
}

/// Everything an online solve needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartBundle {
    pub tool_version: String,
    pub descriptor: SystemDescriptor,
    #[serde(with = "complex_vec")]
    pub anchor: Vec<C64>,
    #[serde(with = "complex_vecs")]
    pub solutions: Vec<Vec<C64>>,
    pub settings: MonodromySettings,
    pub certificate: Option<CertificateReport>,
}

impl StartBundle {
    pub fn new(
        sys: &ParametricSystem,
        set: &SolutionSet,
        settings: &MonodromySettings,
        certificate: Option<CertificateReport>,
    ) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            descriptor: sys.descriptor(),
            anchor: set.parameters.clone(),
            solutions: set.solutions.clone(),
            settings: *settings,
            certificate,
        }
    }

    pub fn system(&self) -> Result<ParametricSystem> {
        ParametricSystem::from_descriptor(&self.descriptor)
    }

    /// One Newton pass on every stored solution; returns the largest
    /// residual afterwards.
    pub fn verify(&mut self, sys: &ParametricSystem) -> f64 {
        let st = TrackSettings::default();
        let mut worst: f64 = 0.0;
        for x in self.solutions.iter_mut() {
            if let Ok(y) = newton_correct(sys, x, &self.anchor, st.newton_tol * 1e-2, 1) {
                *x = y;
            }
            worst = worst.max(residual_norm(sys, x, &self.anchor));
        }
        worst
    }
}

/// Solutions at real target parameters tracked from a bundle's anchor.
///
/// Every start is tracked along the straight segment. If any path fails,
/// every start is tracked again through one random complex detour and the
/// two endpoint sets are merged. Each route maps the bundle one to one onto
/// the target's solutions, so a solution lost on one route is usually found
/// on the other. Retrying only the failed starts would not do this: a
/// different route permutes the endpoints, and those starts mostly land on
/// solutions that are already known.
pub fn solve_from_bundle(
    sys: &ParametricSystem,
    bundle: &StartBundle,
    target: &[C64],
    settings: &TrackSettings,
) -> Vec<Vec<C64>> {
    let straight = TrackSettings { detour_scale: 0.0, ..*settings };
    let mut results = track_all(sys, &bundle.solutions, &bundle.anchor, target, &straight);
    if results.iter().any(|r| !r.is_success()) {
        let detour = TrackSettings { detour_scale: 0.3, seed: settings.seed ^ 0x9e37, ..*settings };
        results.extend(track_all(sys, &bundle.solutions, &bundle.anchor, target, &detour));
    }
    let mut index = SolutionIndex::new(sys.num_unknowns(), 1e-6, settings.seed);
    for r in results.into_iter().filter(|r| r.is_success()) {
        index.insert(r.endpoint);
    }
    index.solutions
}

mod complex_vec {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?.into_iter().map(|[a, b]| C64::new(a, b)).collect())
    }
}

mod complex_vecs {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<C64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<C64>>, D::Error> {
        Ok(Vec::<Vec<[f64; 2]>>::deserialize(d)?
            .into_iter()
            .map(|x| x.into_iter().map(|[a, b]| C64::new(a, b)).collect())
            .collect())
    }
}
