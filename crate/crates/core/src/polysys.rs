//! Depth equations as parametric polynomial systems.
//!
//! For views `1` and `j`, points `p` and `q`,
//!
//! ```text
//! d_{1,j,pq} = Q(λ_1p x_1p - λ_1q x_1q) - Q(λ_jp x_jp - λ_jq x_jq),   Q(w) = wᵀ Ω w
//! ```
//!
//! where `Ω = f* g* ω` clears the denominators of the conic. Unknowns are the
//! free conic parameters in the order `f*, g*, s*, u, v` followed by every
//! depth `λ_ip` except `λ_11 = 1`, view-major. Parameters are the pixel
//! coordinates `x_ip, y_ip`, view-major.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::camera::{IntrinsicsSpec, OmegaParams, Slot};
use crate::error::{Error, Result};
use crate::linalg::{max_norm, numerical_rank, singular_values};
use crate::slp::{Node, Slp, SlpBuilder, SlpWorkspace, C64};
use crate::taxonomy::{Equation, EquationSelection};
use crate::tracker::ParametricEquations;

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OmegaSlot {
    FStar,
    GStar,
    SStar,
    U,
    V,
}

impl OmegaSlot {
    pub const ALL: [OmegaSlot; 5] =
        [OmegaSlot::FStar, OmegaSlot::GStar, OmegaSlot::SStar, OmegaSlot::U, OmegaSlot::V];

    pub fn name(self) -> &'static str {
        match self {
            OmegaSlot::FStar => "f*",
            OmegaSlot::GStar => "g*",
            OmegaSlot::SStar => "s*",
            OmegaSlot::U => "u",
            OmegaSlot::V => "v",
        }
    }

    /// Value the slot takes once known intrinsics are normalized.
    pub fn normalized_value(self) -> f64 {
        match self {
            OmegaSlot::FStar | OmegaSlot::GStar => 1.0,
            _ => 0.0,
        }
    }
}

/// The conic parameters a spec leaves free, in canonical order.
pub fn unknown_omega_slots(spec: &IntrinsicsSpec) -> Vec<OmegaSlot> {
    let m = spec.mask();
    let mut out = Vec::new();
    if m[0].is_unknown() {
        out.push(OmegaSlot::FStar);
    }
    if m[1].is_unknown() {
        out.push(OmegaSlot::GStar);
    }
    if m[4].is_unknown() {
        out.push(OmegaSlot::SStar);
    }
    if m[2].is_unknown() {
        out.push(OmegaSlot::U);
    }
    if m[3].is_unknown() {
        out.push(OmegaSlot::V);
    }
    out
}

/// Everything needed to rebuild a system exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub spec: IntrinsicsSpec,
    pub n_points: usize,
    pub n_views: usize,
    pub selection: EquationSelection,
    pub unknowns: Vec<String>,
    pub parameters: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ParametricSystem {
    spec: IntrinsicsSpec,
    n_points: usize,
    n_views: usize,
    selection: EquationSelection,
    omega_slots: Vec<OmegaSlot>,
    slp: Slp,
}

pub fn num_unknowns_for(spec: &IntrinsicsSpec, n_points: usize, n_views: usize) -> usize {
    unknown_omega_slots(spec).len() + n_points * n_views - 1
}

/// Square system for a selection with exactly as many equations as unknowns.
pub fn build_system(
    selection: &EquationSelection,
    spec: &IntrinsicsSpec,
    n_points: usize,
    n_views: usize,
) -> Result<ParametricSystem> {
    let n = num_unknowns_for(spec, n_points, n_views);
    if selection.len() != n {
        return Err(Error::SizeMismatch { expected: n, got: selection.len() });
    }
    build_general(selection, spec, n_points, n_views)
}

/// Any selection, square or not.
pub fn build_general(
    selection: &EquationSelection,
    spec: &IntrinsicsSpec,
    n_points: usize,
    n_views: usize,
) -> Result<ParametricSystem> {
    if !(2..=3).contains(&n_views) || n_points < 2 {
        return Err(Error::InvalidSpec(format!("{n_points} points in {n_views} views")));
    }
    for eq in &selection.equations {
        if eq.view == 0 || eq.view >= n_views || eq.q >= n_points || eq.p >= eq.q {
            return Err(Error::InvalidColoring(format!("equation {eq} out of range")));
        }
    }
    let spec = spec.normalized();
    let omega_slots = unknown_omega_slots(&spec);
    let n_omega = omega_slots.len();
    let n_vars = n_omega + n_points * n_views - 1;
    let n_params = 2 * n_points * n_views;
    let mut b = SlpBuilder::new();

    let omega_node = |slot: OmegaSlot, b: &mut SlpBuilder| match omega_slots.iter().position(|s| *s == slot) {
        Some(i) => b.var(i),
        None => b.constant(slot.normalized_value()),
    };
    let fs = omega_node(OmegaSlot::FStar, &mut b);
    let gs = if spec.mask()[1] == Slot::TiedToF { fs } else { omega_node(OmegaSlot::GStar, &mut b) };
    let ss = omega_node(OmegaSlot::SStar, &mut b);
    let u = omega_node(OmegaSlot::U, &mut b);
    let v = omega_node(OmegaSlot::V, &mut b);

    // Ω = g* a aᵀ + f* b bᵀ + f* g* e3 e3ᵀ with a = (1, -s*, s*v - u), b = (0, 1, -v)
    let a3 = {
        let sv = b.mul(ss, v);
        b.sub(sv, u)
    };
    let o11 = gs;
    let o12 = {
        let t = b.mul(gs, ss);
        b.neg(t)
    };
    let o13 = b.mul(gs, a3);
    let o22 = {
        let s2 = b.mul(ss, ss);
        let t = b.mul(gs, s2);
        b.add(t, fs)
    };
    let o23 = {
        let t = b.mul(o12, a3);
        let fv = b.mul(fs, v);
        b.sub(t, fv)
    };
    let o33 = {
        let a33 = b.mul(a3, a3);
        let t1 = b.mul(gs, a33);
        let v2 = b.mul(v, v);
        let t2 = b.mul(fs, v2);
        let t3 = b.mul(fs, gs);
        let t12 = b.add(t1, t2);
        b.add(t12, t3)
    };
    let omega = [[o11, o12, o13], [o12, o22, o23], [o13, o23, o33]];

    let depth = |i: usize, p: usize, b: &mut SlpBuilder| {
        if i == 0 && p == 0 {
            b.constant(1.0)
        } else {
            b.var(n_omega + i * n_points + p - 1)
        }
    };
    // λ·x for homogeneous pixel x = (x, y, 1)
    let scaled = |i: usize, p: usize, b: &mut SlpBuilder| -> [Node; 3] {
        let l = depth(i, p, b);
        let px = b.param(2 * (i * n_points + p));
        let py = b.param(2 * (i * n_points + p) + 1);
        [b.mul(l, px), b.mul(l, py), l]
    };
    let quad = |w: [Node; 3], b: &mut SlpBuilder| -> Node {
        let mut terms = Vec::with_capacity(6);
        for r in 0..3 {
            let sq = b.mul(w[r], w[r]);
            terms.push(b.mul(omega[r][r], sq));
            for c in r + 1..3 {
                let cross = b.mul(w[r], w[c]);
                let t = b.mul(omega[r][c], cross);
                terms.push(b.scale(2.0, t));
            }
        }
        b.sum(&terms)
    };
    let diff = |i: usize, p: usize, q: usize, b: &mut SlpBuilder| -> [Node; 3] {
        let wp = scaled(i, p, b);
        let wq = scaled(i, q, b);
        [b.sub(wp[0], wq[0]), b.sub(wp[1], wq[1]), b.sub(wp[2], wq[2])]
    };

    let mut outputs = Vec::with_capacity(selection.len());
    for eq in &selection.equations {
        let w1 = diff(0, eq.p, eq.q, &mut b);
        let wj = diff(eq.view, eq.p, eq.q, &mut b);
        let q1 = quad(w1, &mut b);
        let qj = quad(wj, &mut b);
        outputs.push(b.sub(q1, qj));
    }
    let slp = b.finish(&outputs, n_vars, n_params);
    Ok(ParametricSystem {
        spec,
        n_points,
        n_views,
        selection: selection.clone(),
        omega_slots,
        slp,
    })
}

impl ParametricSystem {
    pub fn spec(&self) -> &IntrinsicsSpec {
        &self.spec
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn selection(&self) -> &EquationSelection {
        &self.selection
    }

    pub fn num_equations(&self) -> usize {
        self.selection.len()
    }

    pub fn num_unknowns(&self) -> usize {
        self.slp.num_vars()
    }

    pub fn num_params(&self) -> usize {
        self.slp.num_params()
    }

    pub fn omega_slots(&self) -> &[OmegaSlot] {
        &self.omega_slots
    }

    pub fn is_square(&self) -> bool {
        self.num_equations() == self.num_unknowns()
    }

    /// Position of `λ_ip` in the unknown vector; `None` for `λ_11`.
    pub fn depth_index(&self, view: usize, point: usize) -> Option<usize> {
        let k = view * self.n_points + point;
        (k > 0).then(|| self.omega_slots.len() + k - 1)
    }

    pub fn param_index(&self, view: usize, point: usize, coord: usize) -> usize {
        2 * (view * self.n_points + point) + coord
    }

    pub fn unknown_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.omega_slots.iter().map(|s| s.name().to_string()).collect();
        for i in 0..self.n_views {
            for p in 0..self.n_points {
                if i + p > 0 {
                    names.push(format!("lambda_{}_{}", i + 1, p + 1));
                }
            }
        }
        names
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.num_params());
        for i in 0..self.n_views {
            for p in 0..self.n_points {
                names.push(format!("x_{}_{}", i + 1, p + 1));
                names.push(format!("y_{}_{}", i + 1, p + 1));
            }
        }
        names
    }

    pub fn descriptor(&self) -> SystemDescriptor {
        SystemDescriptor {
            spec: self.spec,
            n_points: self.n_points,
            n_views: self.n_views,
            selection: self.selection.clone(),
            unknowns: self.unknown_names(),
            parameters: self.param_names(),
        }
    }

    pub fn from_descriptor(d: &SystemDescriptor) -> Result<Self> {
        let sys = build_general(&d.selection, &d.spec, d.n_points, d.n_views)?;
        if sys.unknown_names() != d.unknowns || sys.param_names() != d.parameters {
            return Err(Error::InvalidSpec("descriptor names do not match the system".into()));
        }
        Ok(sys)
    }

    /// All five conic parameters `(f*, g*, s*, u, v)` at `x`, with known
    /// slots at their normalized values.
    pub fn omega_values(&self, x: &[C64]) -> [C64; 5] {
        let mut out = OmegaSlot::ALL.map(|s| C64::new(s.normalized_value(), 0.0));
        for (i, slot) in self.omega_slots.iter().enumerate() {
            out[*slot as usize] = x[i];
        }
        if self.spec.mask()[1] == Slot::TiedToF {
            out[1] = out[0];
        }
        out
    }

    /// Depth matrix `λ[view][point]` at `x`, with `λ_11 = 1`.
    pub fn depths(&self, x: &[C64]) -> Vec<Vec<C64>> {
        (0..self.n_views)
            .map(|i| {
                (0..self.n_points)
                    .map(|p| match self.depth_index(i, p) {
                        Some(k) => x[k],
                        None => C64::new(1.0, 0.0),
                    })
                    .collect()
            })
            .collect()
    }

    /// Unknown vector for a conic and depths; depths are rescaled so that
    /// `λ_11 = 1`.
    pub fn unknowns_from(&self, omega: &OmegaParams, depths: &[Vec<f64>]) -> Vec<C64> {
        let vals = omega.as_array();
        let scale = depths[0][0];
        let mut x: Vec<C64> =
            self.omega_slots.iter().map(|s| C64::new(vals[*s as usize], 0.0)).collect();
        for (i, row) in depths.iter().enumerate().take(self.n_views) {
            for (p, d) in row.iter().enumerate().take(self.n_points) {
                if i + p > 0 {
                    x.push(C64::new(d / scale, 0.0));
                }
            }
        }
        x
    }

    fn check_dims(&self, x: &[C64], p: &[C64]) -> Result<()> {
        if x.len() != self.num_unknowns() {
            return Err(Error::DimensionMismatch { expected: self.num_unknowns(), got: x.len() });
        }
        if p.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), got: p.len() });
        }
        Ok(())
    }

    pub fn slp(&self) -> &Slp {
        &self.slp
    }
}

impl ParametricEquations for ParametricSystem {
    type Workspace = SlpWorkspace;

    fn num_unknowns(&self) -> usize {
        self.slp.num_vars()
    }

    fn num_params(&self) -> usize {
        self.slp.num_params()
    }

    fn workspace(&self) -> SlpWorkspace {
        self.slp.workspace()
    }

    fn residual(&self, x: &[C64], p: &[C64], ws: &mut SlpWorkspace, out: &mut [C64]) {
        self.slp.evaluate(x, p, ws, out);
    }

    fn residual_and_jacobian(
        &self,
        x: &[C64],
        p: &[C64],
        ws: &mut SlpWorkspace,
        out: &mut [C64],
        jx: &mut [C64],
    ) {
        self.slp.jacobians(x, p, ws, out, jx, None);
    }

    fn param_derivative(&self, x: &[C64], p: &[C64], pdot: &[C64], ws: &mut SlpWorkspace, out: &mut [C64]) {
        self.slp.param_derivative(x, p, pdot, ws, out);
    }
}

pub fn to_complex(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&r| C64::new(r, 0.0)).collect()
}

pub fn evaluate(sys: &ParametricSystem, x: &[C64], p: &[C64]) -> Result<Vec<C64>> {
    sys.check_dims(x, p)?;
    let mut out = vec![C64::new(0.0, 0.0); sys.num_equations()];
    sys.slp.evaluate(x, p, &mut sys.slp.workspace(), &mut out);
    Ok(out)
}

fn jacobians(sys: &ParametricSystem, x: &[C64], p: &[C64]) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    sys.check_dims(x, p)?;
    let (ne, nx, np) = (sys.num_equations(), sys.num_unknowns(), sys.num_params());
    let zero = C64::new(0.0, 0.0);
    let mut out = vec![zero; ne];
    let mut jx = vec![zero; ne * nx];
    let mut jp = vec![zero; ne * np];
    sys.slp.jacobians(x, p, &mut sys.slp.workspace(), &mut out, &mut jx, Some(&mut jp));
    Ok((DMatrix::from_row_slice(ne, nx, &jx), DMatrix::from_row_slice(ne, np, &jp)))
}

pub fn jacobian_x(sys: &ParametricSystem, x: &[C64], p: &[C64]) -> Result<DMatrix<C64>> {
    Ok(jacobians(sys, x, p)?.0)
}

pub fn jacobian_p(sys: &ParametricSystem, x: &[C64], p: &[C64]) -> Result<DMatrix<C64>> {
    Ok(jacobians(sys, x, p)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub rank_full: usize,
    pub rank_x: usize,
    pub n: usize,
    pub min_singular_x: f64,
    /// Smallest over largest singular value of `∂g/∂x`.
    pub ratio_x: f64,
    pub passed: bool,
}

/// Rank conditions `rank(∂g/∂p | ∂g/∂x) = rank(∂g/∂x) = n` at a point of the
/// incidence variety.
pub fn certify_minimal(sys: &ParametricSystem, p0: &[C64], x0: &[C64]) -> Result<CertificateReport> {
    let res = max_norm(&evaluate(sys, x0, p0)?);
    if res > 1e-9 {
        return Err(Error::NotOnVariety(res));
    }
    let (jx, jp) = jacobians(sys, x0, p0)?;
    let n = sys.num_unknowns();
    let mut full = DMatrix::zeros(jx.nrows(), jp.ncols() + jx.ncols());
    full.view_mut((0, 0), jp.shape()).copy_from(&jp);
    full.view_mut((0, jp.ncols()), jx.shape()).copy_from(&jx);
    let sx = singular_values(&jx);
    let sf = singular_values(&full);
    let rank_x = numerical_rank(&sx, RANK_TOL);
    let rank_full = numerical_rank(&sf, RANK_TOL);
    let min_singular_x = if sx.len() == n { *sx.last().unwrap_or(&0.0) } else { 0.0 };
    let ratio_x = match sx.first() {
        Some(&top) if top > 0.0 => min_singular_x / top,
        _ => 0.0,
    };
    Ok(CertificateReport {
        rank_full,
        rank_x,
        n,
        min_singular_x,
        ratio_x,
        passed: rank_full == n && rank_x == n,
    })
}

/// Oriented volume check for points `quad = [a, b, c, d]` between view 1 and
/// `view`: `det[λ_a x_a - λ_d x_d, λ_b x_b - λ_d x_d, λ_c x_c - λ_d x_d]` must
/// agree across views because each equals `det K` times the same volume.
pub fn tetra_det_residual(
    sys: &ParametricSystem,
    x: &[C64],
    p: &[C64],
    view: usize,
    quad: [usize; 4],
) -> Result<C64> {
    sys.check_dims(x, p)?;
    let depths = sys.depths(x);
    let det_in = |i: usize| -> C64 {
        let col = |k: usize| -> [C64; 3] {
            let at = |pt: usize| -> [C64; 3] {
                let l = depths[i][pt];
                [
                    l * p[sys.param_index(i, pt, 0)],
                    l * p[sys.param_index(i, pt, 1)],
                    l,
                ]
            };
            let (a, d) = (at(quad[k]), at(quad[3]));
            [a[0] - d[0], a[1] - d[1], a[2] - d[2]]
        };
        let (c0, c1, c2) = (col(0), col(1), col(2));
        c0[0] * (c1[1] * c2[2] - c1[2] * c2[1]) - c1[0] * (c0[1] * c2[2] - c0[2] * c2[1])
            + c2[0] * (c0[1] * c1[2] - c0[2] * c1[1])
    };
    Ok(det_in(0) - det_in(view))
}

/// The calibrated relaxation: four points, three views, `d_{1,2,12}` dropped.
pub fn calibrated_selection() -> EquationSelection {
    EquationSelection::dropping(4, 3, &[Equation::new(1, 0, 1)])
}

/// `fguv0` with five points: `d_{1,2,45}` and `d_{1,3,45}` dropped.
pub fn fguv0_selection() -> EquationSelection {
    EquationSelection::dropping(5, 3, &[Equation::new(1, 3, 4), Equation::new(2, 3, 4)])
}

/// `fguvs` with six points and eight dropped equations.
pub fn fguvs_selection() -> EquationSelection {
    let d = |v: usize, p: usize, q: usize| Equation::new(v - 1, p - 1, q - 1);
    EquationSelection::dropping(
        6,
        3,
        &[
            d(2, 5, 6),
            d(3, 5, 6),
            d(2, 4, 5),
            d(3, 4, 5),
            d(2, 4, 6),
            d(2, 3, 6),
            d(2, 2, 6),
            d(3, 3, 4),
        ],
    )
}

/// `ffuv0` with five points: `d_{1,2,45}`, `d_{1,3,45}` and `d_{1,2,35}`
/// dropped.
pub fn ffuv0_selection() -> EquationSelection {
    EquationSelection::dropping(
        5,
        3,
        &[Equation::new(1, 3, 4), Equation::new(2, 3, 4), Equation::new(1, 2, 4)],
    )
}

/// A named relaxation with its spec and point count.
#[derive(Debug, Clone)]
pub struct ShippedRelaxation {
    pub name: &'static str,
    pub spec: IntrinsicsSpec,
    pub n_points: usize,
    pub selection: EquationSelection,
}

impl ShippedRelaxation {
    pub fn build(&self) -> ParametricSystem {
        build_system(&self.selection, &self.spec, self.n_points, 3).expect("shipped relaxation is square")
    }
}

pub fn shipped_relaxations() -> Vec<ShippedRelaxation> {
    let spec = |t: &str| IntrinsicsSpec::parse_tag(t).expect("valid tag");
    vec![
        ShippedRelaxation { name: "11000", spec: spec("11000"), n_points: 4, selection: calibrated_selection() },
        ShippedRelaxation { name: "fguv0", spec: spec("fguv0"), n_points: 5, selection: fguv0_selection() },
        ShippedRelaxation { name: "ffuv0", spec: spec("ffuv0"), n_points: 5, selection: ffuv0_selection() },
        ShippedRelaxation { name: "fguvs", spec: spec("fguvs"), n_points: 6, selection: fguvs_selection() },
    ]
}

pub fn shipped(name: &str) -> Option<ShippedRelaxation> {
    shipped_relaxations().into_iter().find(|r| r.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{omega_direct, Intrinsics};
    use crate::monodromy::seed_pair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_c(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn shipped_sizes() {
        let sizes: Vec<(usize, usize)> = shipped_relaxations()
            .iter()
            .map(|r| {
                let s = r.build();
                (s.num_equations(), s.num_unknowns())
            })
            .collect();
        assert_eq!(sizes, vec![(11, 11), (18, 18), (17, 17), (22, 22)]);
        let bad = build_system(&EquationSelection::full(4, 3), &IntrinsicsSpec::calibrated(), 4, 3);
        assert_eq!(bad.unwrap_err(), Error::SizeMismatch { expected: 11, got: 12 });
    }

    #[test]
    fn ground_truth_is_a_zero() {
        for r in shipped_relaxations() {
            let sys = r.build();
            let (p0, x0) = seed_pair(&sys, 5).unwrap();
            let res = evaluate(&sys, &x0, &p0).unwrap();
            assert!(max_norm(&res) < 1e-9, "{}: {}", r.name, max_norm(&res));
        }
    }

    /// Direct quadratic form with the conic from `K^{-T} K^{-1}` times `f² g²`.
    #[test]
    fn matches_direct_conic() {
        let sys = build_general(&EquationSelection::full(4, 3), &IntrinsicsSpec::all_unknown(), 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let intr = Intrinsics::new(1.3, 0.8, 0.2, -0.1, 0.15);
        let om = crate::camera::omega_params_of(&intr).unwrap();
        let w = omega_direct(&intr).unwrap() * (om.f_star * om.g_star);
        let depths: Vec<Vec<f64>> =
            (0..3).map(|_| (0..4).map(|_| rng.random_range(0.5..2.0)).collect()).collect();
        let mut x = sys.unknowns_from(&om, &depths);
        for v in x.iter_mut() {
            *v *= 1.0;
        }
        let p: Vec<C64> = (0..24).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let res = evaluate(&sys, &x, &p).unwrap();
        let lam = sys.depths(&x);
        let q = |i: usize, a: usize, b: usize| {
            let v = |pt: usize| {
                let l = lam[i][pt].re;
                nalgebra::Vector3::new(l * p[2 * (4 * i + pt)].re, l * p[2 * (4 * i + pt) + 1].re, l)
            };
            let d = v(a) - v(b);
            (d.transpose() * w * d)[(0, 0)]
        };
        for (k, eq) in sys.selection().equations.iter().enumerate() {
            let expect = q(0, eq.p, eq.q) - q(eq.view, eq.p, eq.q);
            assert!((res[k].re - expect).abs() < 1e-10, "{k}: {} vs {expect}", res[k].re);
            assert!(res[k].im.abs() < 1e-14);
        }
    }

    #[test]
    fn identical_views_cancel() {
        let sys = build_general(&EquationSelection::full(4, 3), &IntrinsicsSpec::calibrated(), 4, 3).unwrap();
        let x = vec![C64::new(1.0, 0.0); 11];
        let view: Vec<C64> = (0..8).map(|i| C64::new(i as f64 * 0.3 - 1.0, 0.0)).collect();
        let p: Vec<C64> = view.iter().chain(&view).chain(&view).copied().collect();
        assert!(max_norm(&evaluate(&sys, &x, &p).unwrap()) < 1e-15);
        assert_eq!(
            evaluate(&sys, &x[..3], &p).unwrap_err(),
            Error::DimensionMismatch { expected: 11, got: 3 }
        );
    }

    fn fd_check(sys: &ParametricSystem, rng: &mut ChaCha8Rng) -> f64 {
        let x = random_c(rng, sys.num_unknowns());
        let p = random_c(rng, sys.num_params());
        let (jx, jp) = jacobians(sys, &x, &p).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let scale = jx.iter().chain(jp.iter()).map(|z| z.norm()).fold(0.0, f64::max);
        for k in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let fp = evaluate(sys, &xp, &p).unwrap();
            let fm = evaluate(sys, &xm, &p).unwrap();
            for r in 0..fp.len() {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                worst = worst.max((fd - jx[(r, k)]).norm() / scale);
            }
        }
        for k in 0..p.len() {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp[k] += h;
            pm[k] -= h;
            let fp = evaluate(sys, &x, &pp).unwrap();
            let fm = evaluate(sys, &x, &pm).unwrap();
            for r in 0..fp.len() {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                worst = worst.max((fd - jp[(r, k)]).norm() / scale);
            }
        }
        worst
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for r in shipped_relaxations() {
            let sys = r.build();
            for _ in 0..5 {
                let err = fd_check(&sys, &mut rng);
                assert!(err < 1e-6, "{}: {err}", r.name);
            }
        }
    }

    #[test]
    fn parameter_sparsity() {
        let sys = shipped("11000").unwrap().build();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_c(&mut rng, 11);
        let p = random_c(&mut rng, 24);
        let jp = jacobian_p(&sys, &x, &p).unwrap();
        for (r, eq) in sys.selection().equations.iter().enumerate() {
            for i in 0..3 {
                for pt in 0..4 {
                    let involved = (i == 0 || i == eq.view) && (pt == eq.p || pt == eq.q);
                    if !involved {
                        assert_eq!(jp[(r, sys.param_index(i, pt, 0))], C64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn certificates() {
        for r in shipped_relaxations() {
            let sys = r.build();
            let (p0, x0) = seed_pair(&sys, 3).unwrap();
            let rep = certify_minimal(&sys, &p0, &x0).unwrap();
            assert!(rep.passed, "{}: {rep:?}", r.name);
        }
        let over = build_general(&EquationSelection::full(4, 3), &IntrinsicsSpec::calibrated(), 4, 3).unwrap();
        let (p0, x0) = seed_pair(&over, 3).unwrap();
        let rep = certify_minimal(&over, &p0, &x0).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.rank_x, 11);
        assert_eq!(rep.rank_full, 12);
        let sys = shipped("11000").unwrap().build();
        let (p0, mut x0) = seed_pair(&sys, 3).unwrap();
        x0[0] += 0.1;
        assert!(matches!(certify_minimal(&sys, &p0, &x0), Err(Error::NotOnVariety(_))));
    }

    #[test]
    fn tetra_determinant_vanishes_at_truth() {
        let sys = shipped("11000").unwrap().build();
        let (p0, x0) = seed_pair(&sys, 4).unwrap();
        for view in 1..3 {
            let r = tetra_det_residual(&sys, &x0, &p0, view, [0, 1, 2, 3]).unwrap();
            assert!(r.norm() < 1e-9);
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let sys = shipped("fguv0").unwrap().build();
        let d = sys.descriptor();
        assert_eq!(d.unknowns[..4], ["f*", "g*", "u", "v"]);
        assert_eq!(d.unknowns[4], "lambda_1_2");
        let json = serde_json::to_string(&d).unwrap();
        let back: SystemDescriptor = serde_json::from_str(&json).unwrap();
        let rebuilt = ParametricSystem::from_descriptor(&back).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_c(&mut rng, 18);
        let p = random_c(&mut rng, 30);
        assert_eq!(evaluate(&sys, &x, &p).unwrap(), evaluate(&rebuilt, &x, &p).unwrap());
    }

    #[test]
    fn tied_focal_uses_one_unknown() {
        let sys = shipped("ffuv0").unwrap().build();
        assert_eq!(sys.omega_slots(), &[OmegaSlot::FStar, OmegaSlot::U, OmegaSlot::V]);
        let x = vec![C64::new(2.0, 0.0); sys.num_unknowns()];
        assert_eq!(sys.omega_values(&x)[1], C64::new(2.0, 0.0));
    }
}
