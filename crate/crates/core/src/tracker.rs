//! Predictor-corrector tracking of solutions of `F(x; p) = 0` as the
//! parameters move along a path.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_factor, lu_solve, max_norm};
use crate::slp::C64;

/// A square system with parameters, evaluated through caller-owned scratch.
pub trait ParametricEquations: Sync {
    type Workspace: Send;

    fn num_unknowns(&self) -> usize;
    fn num_params(&self) -> usize;
    fn workspace(&self) -> Self::Workspace;
    fn residual(&self, x: &[C64], p: &[C64], ws: &mut Self::Workspace, out: &mut [C64]);
    /// Residual and row-major `∂F/∂x`.
    fn residual_and_jacobian(
        &self,
        x: &[C64],
        p: &[C64],
        ws: &mut Self::Workspace,
        out: &mut [C64],
        jx: &mut [C64],
    );
    /// `(∂F/∂p)·ṗ`.
    fn param_derivative(&self, x: &[C64], p: &[C64], pdot: &[C64], ws: &mut Self::Workspace, out: &mut [C64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSettings {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub step_growth: f64,
    pub step_shrink: f64,
    /// Consecutive fast corrector steps before the step grows.
    pub fast_corrections: usize,
    pub max_steps: usize,
    pub divergence_bound: f64,
    /// Relative corrector tolerance along the path.
    pub path_tol: f64,
    /// Relative size of the complex detour in [`track_path`].
    pub detour_scale: f64,
    pub seed: u64,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 8,
            initial_step: 0.05,
            min_step: 1e-7,
            max_step: 0.1,
            step_growth: 1.5,
            step_shrink: 0.5,
            fast_corrections: 2,
            max_steps: 10_000,
            divergence_bound: 1e8,
            path_tol: 1e-8,
            detour_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackStatus {
    Success,
    Diverged,
    SingularEndpoint,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub status: TrackStatus,
    pub endpoint: Vec<C64>,
    pub residual: f64,
    pub steps_taken: usize,
}

impl TrackResult {
    pub fn is_success(&self) -> bool {
        self.status == TrackStatus::Success
    }
}

/// Scratch for one path.
struct Buffers {
    n: usize,
    res: Vec<C64>,
    jac: Vec<C64>,
    piv: Vec<usize>,
    p: Vec<C64>,
    xt: Vec<C64>,
    k: [Vec<C64>; 4],
    dx: Vec<C64>,
}

impl Buffers {
    fn new(n: usize, m: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            n,
            res: vec![z; n],
            jac: vec![z; n * n],
            piv: vec![0; n],
            p: vec![z; m],
            xt: vec![z; n],
            k: [vec![z; n], vec![z; n], vec![z; n], vec![z; n]],
            dx: vec![z; n],
        }
    }
}

fn set_param(p: &mut [C64], pa: &[C64], pb: &[C64], t: f64) {
    for ((o, a), b) in p.iter_mut().zip(pa).zip(pb) {
        *o = a + (b - a) * t;
    }
}

/// `ẋ = -(∂F/∂x)⁻¹ (∂F/∂p) ṗ` at `b.xt`, stored in `b.k[slot]`; false if
/// the Jacobian is singular.
fn tangent<S: ParametricEquations>(
    sys: &S,
    ws: &mut S::Workspace,
    b: &mut Buffers,
    pdot: &[C64],
    slot: usize,
) -> bool {
    let Buffers { n, res, jac, piv, p, xt, k, .. } = b;
    sys.residual_and_jacobian(xt, p, ws, res, jac);
    if !lu_factor(jac, *n, piv) {
        return false;
    }
    let out = &mut k[slot];
    sys.param_derivative(xt, p, pdot, ws, out);
    for v in out.iter_mut() {
        *v = -*v;
    }
    lu_solve(jac, *n, piv, out);
    true
}

/// One Newton step at `b.p`; returns the max-norm of the update.
fn newton_step<S: ParametricEquations>(
    sys: &S,
    ws: &mut S::Workspace,
    b: &mut Buffers,
    x: &mut [C64],
) -> Option<f64> {
    sys.residual_and_jacobian(x, &b.p, ws, &mut b.res, &mut b.jac);
    if !lu_factor(&mut b.jac, b.n, &mut b.piv) {
        return None;
    }
    b.dx.copy_from_slice(&b.res);
    lu_solve(&b.jac, b.n, &b.piv, &mut b.dx);
    for (xi, d) in x.iter_mut().zip(&b.dx) {
        *xi -= d;
    }
    let step = max_norm(&b.dx);
    step.is_finite().then_some(step)
}

/// Residual test scaled by `max(1, ‖x‖∞)²`, so solutions far from the
/// origin are not held to a tolerance below their rounding error.
pub fn converged(residual: f64, x: &[C64], tol: f64) -> bool {
    residual < tol * max_norm(x).max(1.0).powi(2)
}

/// Newton's method at fixed parameters until the residual passes
/// [`converged`] with `tol`.
pub fn newton_correct<S: ParametricEquations>(
    sys: &S,
    x0: &[C64],
    p: &[C64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<C64>> {
    let mut ws = sys.workspace();
    let mut b = Buffers::new(sys.num_unknowns(), sys.num_params());
    b.p.copy_from_slice(p);
    let mut x = x0.to_vec();
    let mut res = vec![C64::new(0.0, 0.0); x.len()];
    for _ in 0..=max_iters {
        sys.residual(&x, p, &mut ws, &mut res);
        let r = max_norm(&res);
        if converged(r, &x, tol) {
            return Ok(x);
        }
        if !r.is_finite() {
            return Err(Error::NoConvergence(r));
        }
        newton_step(sys, &mut ws, &mut b, &mut x).ok_or(Error::SingularJacobian)?;
    }
    sys.residual(&x, p, &mut ws, &mut res);
    let r = max_norm(&res);
    if converged(r, &x, tol) {
        Ok(x)
    } else {
        Err(Error::NoConvergence(r))
    }
}

/// Residual max-norm of `x` at `p`.
pub fn residual_norm<S: ParametricEquations>(sys: &S, x: &[C64], p: &[C64]) -> f64 {
    let mut ws = sys.workspace();
    let mut res = vec![C64::new(0.0, 0.0); sys.num_unknowns()];
    sys.residual(x, p, &mut ws, &mut res);
    max_norm(&res)
}

/// Follows a solution along the straight segment from `pa` to `pb`.
pub fn track_segment<S: ParametricEquations>(
    sys: &S,
    x_start: &[C64],
    pa: &[C64],
    pb: &[C64],
    settings: &TrackSettings,
) -> TrackResult {
    let mut ws = sys.workspace();
    let mut b = Buffers::new(sys.num_unknowns(), sys.num_params());
    segment_with(sys, &mut ws, &mut b, x_start, pa, pb, settings)
}

fn segment_with<S: ParametricEquations>(
    sys: &S,
    ws: &mut S::Workspace,
    b: &mut Buffers,
    x_start: &[C64],
    pa: &[C64],
    pb: &[C64],
    st: &TrackSettings,
) -> TrackResult {
    let n = b.n;
    let pdot: Vec<C64> = pa.iter().zip(pb).map(|(a, c)| c - a).collect();
    let mut x = x_start.to_vec();
    let mut t = 0.0f64;
    let mut h = st.initial_step.min(st.max_step);
    let mut fast = 0usize;
    let mut steps = 0usize;
    let fail = |status, x: Vec<C64>, steps| TrackResult { status, endpoint: x, residual: f64::INFINITY, steps_taken: steps };

    if max_norm(&pdot) == 0.0 {
        t = 1.0;
    }
    while t < 1.0 {
        if steps >= st.max_steps {
            return fail(TrackStatus::StepLimit, x, steps);
        }
        steps += 1;
        let dt = h.min(1.0 - t);
        // classical Runge-Kutta predictor on dx/dt
        let mut ok = true;
        let stages = [(0.0, 0usize), (0.5, 0), (0.5, 1), (1.0, 2)];
        for (s, &(c, prev)) in stages.iter().enumerate() {
            set_param(&mut b.p, pa, pb, t + c * dt);
            if s == 0 {
                b.xt.copy_from_slice(&x);
            } else {
                for i in 0..n {
                    b.xt[i] = x[i] + b.k[prev][i] * (c * dt);
                }
            }
            if !tangent(sys, ws, b, &pdot, s) {
                ok = false;
                break;
            }
        }
        let mut xn = x.clone();
        if ok {
            for i in 0..n {
                xn[i] = x[i] + (b.k[0][i] + b.k[1][i] * 2.0 + b.k[2][i] * 2.0 + b.k[3][i]) * (dt / 6.0);
            }
            set_param(&mut b.p, pa, pb, t + dt);
            let scale = 1.0 + max_norm(&xn);
            let tol = st.path_tol * scale;
            let mut prev_step = f64::INFINITY;
            let mut iters = 0;
            ok = false;
            while iters < 3 {
                iters += 1;
                match newton_step(sys, ws, b, &mut xn) {
                    None => break,
                    Some(d) => {
                        // first correction must be small and later ones contract
                        if (iters == 1 && d > 0.1 * scale) || d > 0.5 * prev_step {
                            break;
                        }
                        if d < tol {
                            ok = true;
                            break;
                        }
                        prev_step = d;
                    }
                }
            }
            if ok {
                t += dt;
                x = xn;
                if max_norm(&x) > st.divergence_bound {
                    return fail(TrackStatus::Diverged, x, steps);
                }
                if iters <= 2 {
                    fast += 1;
                    if fast >= st.fast_corrections {
                        h = (h * st.step_growth).min(st.max_step);
                        fast = 0;
                    }
                } else {
                    fast = 0;
                }
                continue;
            }
        }
        fast = 0;
        h *= st.step_shrink;
        if h < st.min_step {
            return fail(TrackStatus::SingularEndpoint, x, steps);
        }
    }
    // polish at the endpoint
    b.p.copy_from_slice(pb);
    let mut res = vec![C64::new(0.0, 0.0); n];
    for _ in 0..=st.max_newton_iters {
        sys.residual(&x, pb, ws, &mut res);
        let r = max_norm(&res);
        if converged(r, &x, st.newton_tol) {
            // one extra step so the stored point is converged to round-off
            let mut y = x.clone();
            if newton_step(sys, ws, b, &mut y).is_some() {
                sys.residual(&y, pb, ws, &mut res);
                if max_norm(&res) <= r {
                    x = y;
                }
            }
            sys.residual(&x, pb, ws, &mut res);
            return TrackResult { status: TrackStatus::Success, residual: max_norm(&res), endpoint: x, steps_taken: steps };
        }
        if newton_step(sys, ws, b, &mut x).is_none() {
            return fail(TrackStatus::SingularEndpoint, x, steps);
        }
    }
    sys.residual(&x, pb, ws, &mut res);
    TrackResult { status: TrackStatus::SingularEndpoint, residual: max_norm(&res), endpoint: x, steps_taken: steps }
}

/// Random complex point near the middle of `pa`–`pb`, of size
/// `scale · max(‖pa‖, ‖pb‖, ‖pb - pa‖)`.
pub fn detour_point(pa: &[C64], pb: &[C64], scale: f64, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = max_norm(pa).max(max_norm(pb)).max(1e-300);
    pa.iter()
        .zip(pb)
        .map(|(a, b)| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            (a + b) * 0.5 + C64::new(re, im) * (scale * size)
        })
        .collect()
}

fn track_two_leg<S: ParametricEquations>(
    sys: &S,
    ws: &mut S::Workspace,
    b: &mut Buffers,
    x_start: &[C64],
    pa: &[C64],
    pmid: &[C64],
    pb: &[C64],
    st: &TrackSettings,
) -> TrackResult {
    let first = segment_with(sys, ws, b, x_start, pa, pmid, st);
    if !first.is_success() {
        return first;
    }
    let mut second = segment_with(sys, ws, b, &first.endpoint, pmid, pb, st);
    second.steps_taken += first.steps_taken;
    second
}

/// Tracks from `p_start` to `p_end` through a random complex midpoint so
/// that real segments cannot run into real branch points.
pub fn track_path<S: ParametricEquations>(
    sys: &S,
    x_start: &[C64],
    p_start: &[C64],
    p_end: &[C64],
    settings: &TrackSettings,
) -> TrackResult {
    let mut ws = sys.workspace();
    let mut b = Buffers::new(sys.num_unknowns(), sys.num_params());
    if p_start == p_end {
        return segment_with(sys, &mut ws, &mut b, x_start, p_start, p_end, settings);
    }
    let pmid = detour_point(p_start, p_end, settings.detour_scale, settings.seed);
    track_two_leg(sys, &mut ws, &mut b, x_start, p_start, &pmid, p_end, settings)
}

/// Tracks every start independently; results are in start order. All paths
/// share one detour midpoint so that distinct starts end at distinct
/// solutions.
pub fn track_all<S: ParametricEquations>(
    sys: &S,
    starts: &[Vec<C64>],
    p_start: &[C64],
    p_end: &[C64],
    settings: &TrackSettings,
) -> Vec<TrackResult> {
    let pmid = (p_start != p_end).then(|| detour_point(p_start, p_end, settings.detour_scale, settings.seed));
    starts
        .par_iter()
        .map_init(
            || (sys.workspace(), Buffers::new(sys.num_unknowns(), sys.num_params())),
            |(ws, b), x| match &pmid {
                Some(mid) => track_two_leg(sys, ws, b, x, p_start, mid, p_end, settings),
                None => segment_with(sys, ws, b, x, p_start, p_end, settings),
            },
        )
        .collect()
}

/// Tracks every start around the closed polygon `ps[0] → ps[1] → … → ps[0]`.
pub fn track_loop_all<S: ParametricEquations>(
    sys: &S,
    starts: &[Vec<C64>],
    vertices: &[Vec<C64>],
    settings: &TrackSettings,
) -> Vec<TrackResult> {
    starts
        .par_iter()
        .map_init(
            || (sys.workspace(), Buffers::new(sys.num_unknowns(), sys.num_params())),
            |(ws, b), x| {
                let mut cur = TrackResult {
                    status: TrackStatus::Success,
                    endpoint: x.clone(),
                    residual: 0.0,
                    steps_taken: 0,
                };
                for k in 0..vertices.len() {
                    let next = &vertices[(k + 1) % vertices.len()];
                    let steps = cur.steps_taken;
                    cur = segment_with(sys, ws, b, &cur.endpoint, &vertices[k], next, settings);
                    cur.steps_taken += steps;
                    if !cur.is_success() {
                        break;
                    }
                }
                cur
            },
        )
        .collect()
}

/// `x² - p = 0` in one unknown; used to exercise the tracker.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquareRoot;

impl ParametricEquations for SquareRoot {
    type Workspace = ();

    fn num_unknowns(&self) -> usize {
        1
    }

    fn num_params(&self) -> usize {
        1
    }

    fn workspace(&self) {}

    fn residual(&self, x: &[C64], p: &[C64], _: &mut (), out: &mut [C64]) {
        out[0] = x[0] * x[0] - p[0];
    }

    fn residual_and_jacobian(&self, x: &[C64], p: &[C64], _: &mut (), out: &mut [C64], jx: &mut [C64]) {
        out[0] = x[0] * x[0] - p[0];
        jx[0] = x[0] * 2.0;
    }

    fn param_derivative(&self, _: &[C64], _: &[C64], pdot: &[C64], _: &mut (), out: &mut [C64]) {
        out[0] = -pdot[0];
    }
}
