//! Calibration matrices, the image of the absolute conic and its sign-free
//! parametrization, and normalization of known intrinsics.
//!
//! The conic is `ω = K^{-T} K^{-1}`. Writing `f* = f²`, `g* = g²` and
//! `s* = s/g` removes the sign ambiguity `f → -f`, `(g, s) → (-g, -s)`:
//!
//! ```text
//! ω = a aᵀ / f* + b bᵀ / g* + e₃ e₃ᵀ,   a = (1, -s*, s* v - u),  b = (0, 1, -v)
//! ```

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Observations;

pub type Mat3 = Matrix3<f64>;

/// Entries of an upper-triangular calibration matrix, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub f: f64,
    pub g: f64,
    pub u: f64,
    pub v: f64,
    pub s: f64,
}

impl Intrinsics {
    pub const fn new(f: f64, g: f64, u: f64, v: f64, s: f64) -> Self {
        Self { f, g, u, v, s }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 1.0, 0.0, 0.0, 0.0)
    }

    /// Reads the entries back from an upper-triangular matrix with unit `(3,3)`.
    pub fn from_matrix(k: &Mat3) -> Self {
        let w = k[(2, 2)];
        Self::new(
            k[(0, 0)] / w,
            k[(1, 1)] / w,
            k[(0, 2)] / w,
            k[(1, 2)] / w,
            k[(0, 1)] / w,
        )
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.f, self.g, self.u, self.v, self.s]
    }
}

/// The sign-free coordinates `(f², g², s/g, u, v)` of the conic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaParams {
    pub f_star: f64,
    pub g_star: f64,
    pub s_star: f64,
    pub u: f64,
    pub v: f64,
}

impl OmegaParams {
    pub fn as_array(&self) -> [f64; 5] {
        [self.f_star, self.g_star, self.s_star, self.u, self.v]
    }
}

pub fn build_k(intr: &Intrinsics) -> Result<Mat3> {
    if intr.f == 0.0 || intr.g == 0.0 {
        return Err(Error::ZeroFocal);
    }
    Ok(Matrix3::new(
        intr.f, intr.s, intr.u, //
        0.0, intr.g, intr.v, //
        0.0, 0.0, 1.0,
    ))
}

/// Closed-form inverse of an upper-triangular calibration matrix.
pub fn k_inverse(intr: &Intrinsics) -> Result<Mat3> {
    let Intrinsics { f, g, u, v, s } = *intr;
    if f == 0.0 || g == 0.0 {
        return Err(Error::ZeroFocal);
    }
    Ok(Matrix3::new(
        1.0 / f,
        -s / (f * g),
        (s * v - g * u) / (f * g),
        0.0,
        1.0 / g,
        -v / g,
        0.0,
        0.0,
        1.0,
    ))
}

/// `ω = K^{-T} K^{-1}` by the direct product.
pub fn omega_direct(intr: &Intrinsics) -> Result<Mat3> {
    let k_inv = k_inverse(intr)?;
    Ok(k_inv.transpose() * k_inv)
}

pub fn omega_params_of(intr: &Intrinsics) -> Result<OmegaParams> {
    if intr.f == 0.0 || intr.g == 0.0 {
        return Err(Error::ZeroFocal);
    }
    Ok(OmegaParams {
        f_star: intr.f * intr.f,
        g_star: intr.g * intr.g,
        s_star: intr.s / intr.g,
        u: intr.u,
        v: intr.v,
    })
}

pub fn omega_from_params(p: &OmegaParams) -> Result<Mat3> {
    if p.f_star == 0.0 || p.g_star == 0.0 {
        return Err(Error::ZeroFocalSquare);
    }
    let a = Vector3::new(1.0, -p.s_star, p.s_star * p.v - p.u);
    let b = Vector3::new(0.0, 1.0, -p.v);
    let e3 = Vector3::z();
    Ok(a * a.transpose() / p.f_star + b * b.transpose() / p.g_star + e3 * e3.transpose())
}

/// The four real calibration matrices sharing one conic, physical one first.
///
/// Order: `(+f, +g)`, `(-f, +g)`, `(+f, -g)`, `(-f, -g)`, with `s = s*·g`.
pub fn k_candidates(p: &OmegaParams) -> Result<[Intrinsics; 4]> {
    if p.f_star <= 0.0 {
        return Err(Error::NegativeSquare(p.f_star));
    }
    if p.g_star <= 0.0 {
        return Err(Error::NegativeSquare(p.g_star));
    }
    let f = p.f_star.sqrt();
    let g = p.g_star.sqrt();
    let make = |f: f64, g: f64| Intrinsics::new(f, g, p.u, p.v, p.s_star * g);
    Ok([make(f, g), make(-f, g), make(f, -g), make(-f, -g)])
}

/// Knowledge about one intrinsic parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Slot {
    Unknown,
    Known(f64),
    /// `g = f`; only legal in the `g` slot.
    TiedToF,
}

impl Slot {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Slot::Unknown)
    }

    pub fn known(&self) -> Option<f64> {
        match self {
            Slot::Known(v) => Some(*v),
            _ => None,
        }
    }
}

/// Prior knowledge on `(f, g, u, v, s)`.
///
/// A known value in the `s` slot is the shear ratio `s* = s/g`; for zero skew
/// the two coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct IntrinsicsSpec {
    mask: [Slot; 5],
}

pub const SLOT_NAMES: [char; 5] = ['f', 'g', 'u', 'v', 's'];

impl IntrinsicsSpec {
    pub fn new(mask: [Slot; 5]) -> Result<Self> {
        for (i, slot) in mask.iter().enumerate() {
            match slot {
                Slot::TiedToF if i != 1 => {
                    return Err(Error::InvalidSpec(format!(
                        "tie to f is only legal for g, found in slot {}",
                        SLOT_NAMES[i]
                    )))
                }
                Slot::Known(v) if !v.is_finite() => {
                    return Err(Error::InvalidSpec(format!("slot {} is not finite", SLOT_NAMES[i])))
                }
                Slot::Known(v) if *v == 0.0 && i < 2 => {
                    return Err(Error::InvalidSpec("known focal length must be nonzero".into()))
                }
                _ => {}
            }
        }
        Ok(Self { mask })
    }

    pub fn all_unknown() -> Self {
        Self { mask: [Slot::Unknown; 5] }
    }

    /// Fully calibrated camera, already normalized.
    pub fn calibrated() -> Self {
        Self {
            mask: [
                Slot::Known(1.0),
                Slot::Known(1.0),
                Slot::Known(0.0),
                Slot::Known(0.0),
                Slot::Known(0.0),
            ],
        }
    }

    /// Known values for every slot taken from `intr`.
    pub fn from_intrinsics(intr: &Intrinsics) -> Self {
        Self {
            mask: [
                Slot::Known(intr.f),
                Slot::Known(intr.g),
                Slot::Known(intr.u),
                Slot::Known(intr.v),
                Slot::Known(intr.s / intr.g),
            ],
        }
    }

    /// Parses a five-letter tag such as `fguv0`, `ffuv0` or `11000`.
    ///
    /// Letters are unknowns, an `f` in the `g` position ties `g` to `f`, and
    /// numbers are known values.
    pub fn parse_tag(tag: &str) -> Result<Self> {
        let chars: Vec<char> = tag.trim().chars().collect();
        if chars.len() != 5 {
            return Err(Error::InvalidSpec(format!("tag `{tag}` must have 5 characters")));
        }
        let mut mask = [Slot::Unknown; 5];
        for (i, c) in chars.iter().enumerate() {
            mask[i] = if *c == SLOT_NAMES[i] {
                Slot::Unknown
            } else if i == 1 && *c == 'f' {
                Slot::TiedToF
            } else if let Some(d) = c.to_digit(10) {
                Slot::Known(d as f64)
            } else {
                return Err(Error::InvalidSpec(format!("unexpected `{c}` in tag `{tag}`")));
            };
        }
        Self::new(mask)
    }

    /// The five-letter tag; known values print as their normalized digit.
    pub fn tag(&self) -> String {
        self.mask
            .iter()
            .enumerate()
            .map(|(i, slot)| match slot {
                Slot::Unknown => SLOT_NAMES[i],
                Slot::TiedToF => 'f',
                Slot::Known(_) if i < 2 => '1',
                Slot::Known(_) => '0',
            })
            .collect()
    }

    pub fn mask(&self) -> &[Slot; 5] {
        &self.mask
    }

    pub fn slot(&self, name: char) -> Slot {
        let i = SLOT_NAMES.iter().position(|c| *c == name).expect("slot name");
        self.mask[i]
    }

    /// Number of linear constraints on `K`.
    pub fn num_constraints(&self) -> usize {
        self.mask.iter().filter(|s| !s.is_unknown()).count()
    }

    pub fn f_known(&self) -> Option<f64> {
        self.mask[0].known()
    }

    /// Known `g`, including a tie to a known `f`.
    pub fn g_known(&self) -> Option<f64> {
        match self.mask[1] {
            Slot::Known(v) => Some(v),
            Slot::TiedToF => self.f_known(),
            Slot::Unknown => None,
        }
    }

    pub fn is_tied(&self) -> bool {
        self.mask[1] == Slot::TiedToF
    }

    /// Same unknown pattern with every known value replaced by its normalized one.
    pub fn normalized(&self) -> Self {
        let mut mask = self.mask;
        for (i, slot) in mask.iter_mut().enumerate() {
            if let Slot::Known(_) = slot {
                *slot = Slot::Known(if i < 2 { 1.0 } else { 0.0 });
            }
        }
        Self { mask }
    }

    /// Does `intr` satisfy every known value and tie (to `tol`)?
    pub fn admits(&self, intr: &Intrinsics, tol: f64) -> bool {
        let vals = [intr.f, intr.g, intr.u, intr.v, intr.s / intr.g];
        self.mask.iter().zip(vals).all(|(slot, val)| match slot {
            Slot::Unknown => true,
            Slot::Known(k) => (k - val).abs() <= tol * (1.0 + k.abs()),
            Slot::TiedToF => (intr.f.abs() - intr.g.abs()).abs() <= tol * (1.0 + intr.f.abs()),
        })
    }
}

impl std::fmt::Display for IntrinsicsSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.tag())
    }
}

impl std::str::FromStr for IntrinsicsSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_tag(s)
    }
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    f: Option<f64>,
    g: Option<f64>,
    u: Option<f64>,
    v: Option<f64>,
    s: Option<f64>,
    mask: [Slot; 5],
}

impl From<IntrinsicsSpec> for SpecRepr {
    fn from(spec: IntrinsicsSpec) -> Self {
        let k = |i: usize| spec.mask[i].known();
        SpecRepr {
            f: k(0),
            g: spec.g_known(),
            u: k(2),
            v: k(3),
            s: k(4),
            mask: spec.mask,
        }
    }
}

impl TryFrom<SpecRepr> for IntrinsicsSpec {
    type Error = Error;

    fn try_from(repr: SpecRepr) -> Result<Self> {
        IntrinsicsSpec::new(repr.mask)
    }
}

/// One step of the image-coordinate normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    /// `x ← x - du`, `y ← y - dv`.
    Translate { du: f64, dv: f64 },
    /// `x ← x - s*·y`.
    Unshear { s_star: f64 },
    /// `x ← sx·x`, `y ← sy·y`.
    Scale { sx: f64, sy: f64 },
}

impl Transform {
    pub fn matrix(&self) -> Mat3 {
        match *self {
            Transform::Translate { du, dv } => Matrix3::new(1.0, 0.0, -du, 0.0, 1.0, -dv, 0.0, 0.0, 1.0),
            Transform::Unshear { s_star } => {
                Matrix3::new(1.0, -s_star, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
            }
            Transform::Scale { sx, sy } => Matrix3::new(sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0),
        }
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        match *self {
            Transform::Translate { du, dv } => Transform::Translate { du: -du, dv: -dv }.matrix(),
            Transform::Unshear { s_star } => Transform::Unshear { s_star: -s_star }.matrix(),
            Transform::Scale { sx, sy } => {
                Transform::Scale { sx: 1.0 / sx, sy: 1.0 / sy }.matrix()
            }
        }
    }
}

/// Transforms applied to pixel coordinates, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub transforms: Vec<Transform>,
}

impl NormalizationRecord {
    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// Combined map from original to normalized homogeneous pixels.
    pub fn matrix(&self) -> Mat3 {
        self.transforms
            .iter()
            .fold(Mat3::identity(), |acc, t| t.matrix() * acc)
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        self.transforms
            .iter()
            .fold(Mat3::identity(), |acc, t| acc * t.inverse_matrix())
    }

    pub fn apply(&self, pixel: [f64; 2]) -> [f64; 2] {
        let x = self.matrix() * Vector3::new(pixel[0], pixel[1], 1.0);
        [x[0] / x[2], x[1] / x[2]]
    }

    pub fn unapply(&self, pixel: [f64; 2]) -> [f64; 2] {
        let x = self.inverse_matrix() * Vector3::new(pixel[0], pixel[1], 1.0);
        [x[0] / x[2], x[1] / x[2]]
    }

    pub fn extend(&mut self, other: &NormalizationRecord) {
        self.transforms.extend_from_slice(&other.transforms);
    }

    fn map_observations(&self, obs: &Observations) -> Observations {
        if self.is_empty() {
            return obs.clone();
        }
        let t = self.matrix();
        let mut out = obs.clone();
        for view in out.pixels.iter_mut() {
            for px in view.iter_mut() {
                let x = t * Vector3::new(px[0], px[1], 1.0);
                *px = [x[0] / x[2], x[1] / x[2]];
            }
        }
        out
    }
}

/// Moves every known intrinsic to its normalized value (`f = g = 1`,
/// `u = v = s = 0`) by translating, unshearing and scaling pixels.
pub fn normalize_observations(
    obs: &Observations,
    spec: &IntrinsicsSpec,
) -> Result<(Observations, NormalizationRecord)> {
    let mut record = NormalizationRecord::default();
    let du = spec.slot('u').known();
    let dv = spec.slot('v').known();
    if du.is_some() || dv.is_some() {
        record.transforms.push(Transform::Translate {
            du: du.unwrap_or(0.0),
            dv: dv.unwrap_or(0.0),
        });
    }
    if let Some(s_star) = spec.slot('s').known() {
        if s_star != 0.0 {
            if dv.is_none() {
                return Err(Error::ShearWithoutV);
            }
            record.transforms.push(Transform::Unshear { s_star });
        }
    }
    let fx = spec.f_known();
    let gy = spec.g_known();
    if fx.is_some() || gy.is_some() {
        record.transforms.push(Transform::Scale {
            sx: 1.0 / fx.unwrap_or(1.0),
            sy: 1.0 / gy.unwrap_or(1.0),
        });
    }
    let normalized = record.map_observations(obs);
    Ok((normalized, record))
}

/// Recenters and rescales the axes whose intrinsics are still unknown so the
/// unknowns are of order one. Known (normalized) values are left untouched.
pub fn condition_observations(
    obs: &Observations,
    spec: &IntrinsicsSpec,
) -> (Observations, NormalizationRecord) {
    let (width, height) = obs.image_size;
    let scale = 2.0 / (width + height).max(f64::MIN_POSITIVE);
    let mut record = NormalizationRecord::default();
    let du = if spec.slot('u').is_unknown() { width / 2.0 } else { 0.0 };
    let dv = if spec.slot('v').is_unknown() { height / 2.0 } else { 0.0 };
    if du != 0.0 || dv != 0.0 {
        record.transforms.push(Transform::Translate { du, dv });
    }
    let f_free = spec.slot('f').is_unknown();
    let g_free = spec.slot('g').is_unknown() || (spec.is_tied() && f_free);
    let sx = if f_free { scale } else { 1.0 };
    let sy = if g_free { scale } else { 1.0 };
    if sx != 1.0 || sy != 1.0 {
        record.transforms.push(Transform::Scale { sx, sy });
    }
    (record.map_observations(obs), record)
}

/// Maps intrinsics estimated on normalized pixels back to original pixels.
pub fn denormalize_intrinsics(est: &Intrinsics, rec: &NormalizationRecord) -> Intrinsics {
    if rec.is_empty() {
        return *est;
    }
    let k_est = Matrix3::new(est.f, est.s, est.u, 0.0, est.g, est.v, 0.0, 0.0, 1.0);
    Intrinsics::from_matrix(&(rec.inverse_matrix() * k_est))
}

/// Intrinsics seen after applying `rec` to the pixels of a camera `intr`.
pub fn normalize_intrinsics(intr: &Intrinsics, rec: &NormalizationRecord) -> Intrinsics {
    let k = Matrix3::new(intr.f, intr.s, intr.u, 0.0, intr.g, intr.v, 0.0, 0.0, 1.0);
    Intrinsics::from_matrix(&(rec.matrix() * k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
        }
    }

    fn explicit_inverse(m: &Mat3) -> Mat3 {
        // adjugate / determinant
        let det = m.determinant();
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
        };
        Matrix3::new(
            c(1, 2, 1, 2),
            -c(0, 2, 1, 2),
            c(0, 1, 1, 2),
            -c(1, 2, 0, 2),
            c(0, 2, 0, 2),
            -c(0, 1, 0, 2),
            c(1, 2, 0, 1),
            -c(0, 2, 0, 1),
            c(0, 1, 0, 1),
        ) / det
    }

    #[test]
    fn build_k_examples() {
        assert_eq!(build_k(&Intrinsics::identity()).unwrap(), Mat3::identity());
        let k = build_k(&Intrinsics::new(330.0, 310.0, 300.0, 250.0, 10.0)).unwrap();
        assert_eq!(k.row(0).iter().copied().collect::<Vec<_>>(), vec![330.0, 10.0, 300.0]);
        assert_eq!(k[(1, 0)], 0.0);
        assert_eq!(k[(2, 2)], 1.0);
        let k = build_k(&Intrinsics::new(2.0, 3.0, 0.0, 0.0, 0.0)).unwrap();
        assert!((k.determinant() - 6.0).abs() < 1e-15);
        assert_eq!(build_k(&Intrinsics::new(0.0, 1.0, 0.0, 0.0, 0.0)), Err(Error::ZeroFocal));
        assert_eq!(omega_direct(&Intrinsics::new(1.0, 0.0, 0.0, 0.0, 0.0)), Err(Error::ZeroFocal));
    }

    #[test]
    fn omega_direct_examples() {
        assert_eq!(omega_direct(&Intrinsics::identity()).unwrap(), Mat3::identity());
        let w = omega_direct(&Intrinsics::new(2.0, 1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(w, Matrix3::from_diagonal(&Vector3::new(0.25, 1.0, 1.0)));
        let intr = Intrinsics::new(1.7, -0.8, 0.3, 0.9, 0.25);
        let k_inv = explicit_inverse(&build_k(&intr).unwrap());
        let expect = k_inv.transpose() * k_inv;
        let got = omega_direct(&intr).unwrap();
        for (a, b) in got.iter().zip(expect.iter()) {
            assert!(close(*a, *b, 1e-12));
        }
        assert!((got - got.transpose()).norm() == 0.0);
    }

    #[test]
    fn omega_params_examples() {
        let p = omega_params_of(&Intrinsics::identity()).unwrap();
        assert_eq!(p.as_array(), [1.0, 1.0, 0.0, 0.0, 0.0]);
        let p = omega_params_of(&Intrinsics::new(330.0, 310.0, 300.0, 250.0, 10.0)).unwrap();
        assert_eq!(p.as_array(), [108900.0, 96100.0, 10.0 / 310.0, 300.0, 250.0]);
        let base = Intrinsics::new(3.0, 2.0, 1.0, -1.0, 0.5);
        let a = omega_params_of(&Intrinsics { f: -3.0, ..base }).unwrap();
        let b = omega_params_of(&Intrinsics { g: -2.0, s: -0.5, ..base }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, omega_params_of(&base).unwrap());
    }

    #[test]
    fn omega_from_params_matches_direct() {
        assert_eq!(
            omega_from_params(&omega_params_of(&Intrinsics::identity()).unwrap()).unwrap(),
            Mat3::identity()
        );
        let intr = Intrinsics::new(2.0, 3.0, 5.0, 7.0, 1.0);
        let w = omega_from_params(&omega_params_of(&intr).unwrap()).unwrap();
        let d = omega_direct(&intr).unwrap();
        for (a, b) in w.iter().zip(d.iter()) {
            assert!(close(*a, *b, 1e-12), "{a} vs {b}");
        }
        let flipped = Intrinsics { g: -3.0, s: -1.0, ..intr };
        assert_eq!(
            omega_from_params(&omega_params_of(&flipped).unwrap()).unwrap(),
            w
        );
        let bad = OmegaParams { f_star: 0.0, g_star: 1.0, s_star: 0.0, u: 0.0, v: 0.0 };
        assert_eq!(omega_from_params(&bad), Err(Error::ZeroFocalSquare));
    }

    #[test]
    fn k_candidates_examples() {
        let c = k_candidates(&omega_params_of(&Intrinsics::identity()).unwrap()).unwrap();
        assert_eq!(c[0], Intrinsics::identity());
        let signs: Vec<(f64, f64)> = c.iter().map(|k| (k.f, k.g)).collect();
        assert_eq!(signs, vec![(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)]);
        let intr = Intrinsics::new(330.0, 310.0, 300.0, 250.0, 10.0);
        let c = k_candidates(&omega_params_of(&intr).unwrap()).unwrap();
        assert!(close(c[0].f, 330.0, 1e-14) && close(c[0].g, 310.0, 1e-14));
        assert!(close(c[0].s, 10.0, 1e-14));
        for k in c {
            let back = omega_params_of(&k).unwrap();
            assert!(close(back.s_star, 10.0 / 310.0, 1e-14));
        }
        let neg = OmegaParams { f_star: -1.0, g_star: 1.0, s_star: 0.0, u: 0.0, v: 0.0 };
        assert_eq!(k_candidates(&neg), Err(Error::NegativeSquare(-1.0)));
    }

    #[test]
    fn spec_tags() {
        for tag in ["fguvs", "fguv0", "ffuv0", "11000", "f1uv0", "ffuvs"] {
            assert_eq!(IntrinsicsSpec::parse_tag(tag).unwrap().tag(), tag);
        }
        assert_eq!(IntrinsicsSpec::parse_tag("11000").unwrap().num_constraints(), 5);
        assert_eq!(IntrinsicsSpec::parse_tag("ffuv0").unwrap().num_constraints(), 2);
        assert_eq!(IntrinsicsSpec::parse_tag("fguvs").unwrap().num_constraints(), 0);
        assert!(IntrinsicsSpec::parse_tag("fgufs").is_err());
        assert!(IntrinsicsSpec::new([
            Slot::Unknown,
            Slot::Unknown,
            Slot::TiedToF,
            Slot::Unknown,
            Slot::Unknown
        ])
        .is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = IntrinsicsSpec::new([
            Slot::Unknown,
            Slot::TiedToF,
            Slot::Known(300.0),
            Slot::Unknown,
            Slot::Known(0.0),
        ])
        .unwrap();
        let json = serde_json::to_value(spec).unwrap();
        assert_eq!(json["mask"][0], "unknown");
        assert_eq!(json["mask"][1], "tied-to-f");
        assert_eq!(json["mask"][2]["known"], 300.0);
        assert_eq!(json["u"], 300.0);
        assert!(json["f"].is_null());
        let back: IntrinsicsSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
    }

    fn obs_of(points: Vec<[f64; 2]>) -> Observations {
        Observations { pixels: vec![points], true_depths: None, image_size: (640.0, 480.0) }
    }

    #[test]
    fn normalization_examples() {
        let obs = obs_of(vec![[300.0, 250.0], [10.0, 20.0]]);
        let (same, rec) = normalize_observations(&obs, &IntrinsicsSpec::all_unknown()).unwrap();
        assert!(rec.is_empty());
        assert_eq!(same.pixels, obs.pixels);

        let spec = IntrinsicsSpec::new([
            Slot::Unknown,
            Slot::Unknown,
            Slot::Known(300.0),
            Slot::Known(250.0),
            Slot::Unknown,
        ])
        .unwrap();
        let (norm, _) = normalize_observations(&obs, &spec).unwrap();
        assert_eq!(norm.pixels[0][0], [0.0, 0.0]);

        let rec = NormalizationRecord { transforms: vec![Transform::Scale { sx: 1.0 / 330.0, sy: 1.0 }] };
        let est = Intrinsics::new(1.0, 2.0, 0.0, 0.0, 0.0);
        assert!(close(denormalize_intrinsics(&est, &rec).f, 330.0, 1e-15));
        assert_eq!(denormalize_intrinsics(&est, &NormalizationRecord::default()), est);

        let shear_no_v = IntrinsicsSpec::new([
            Slot::Unknown,
            Slot::Unknown,
            Slot::Unknown,
            Slot::Unknown,
            Slot::Known(0.1),
        ])
        .unwrap();
        assert_eq!(normalize_observations(&obs, &shear_no_v).unwrap_err(), Error::ShearWithoutV);
    }

    /// Every known/unknown mask: normalizing a camera lands known slots on
    /// their normalized values, and denormalizing restores the original.
    #[test]
    fn normalization_round_trip_all_masks() {
        let truth = Intrinsics::new(330.0, 310.0, 300.0, 250.0, 10.0);
        let known = [truth.f, truth.g, truth.u, truth.v, truth.s / truth.g];
        let mut checked = 0;
        for bits in 0u32..32 {
            let mut mask = [Slot::Unknown; 5];
            for (i, slot) in mask.iter_mut().enumerate() {
                if bits & (1 << i) != 0 {
                    *slot = Slot::Known(known[i]);
                }
            }
            let spec = IntrinsicsSpec::new(mask).unwrap();
            let obs = obs_of(vec![[1.0, 2.0]]);
            let rec = match normalize_observations(&obs, &spec) {
                Ok((_, rec)) => rec,
                Err(Error::ShearWithoutV) => continue,
                Err(e) => panic!("{e}"),
            };
            let (_, cond) = condition_observations(&obs, &spec);
            let mut full = rec.clone();
            full.extend(&cond);
            let normalized = normalize_intrinsics(&truth, &full);
            let nk = [normalized.f, normalized.g, normalized.u, normalized.v, normalized.s];
            let target = [1.0, 1.0, 0.0, 0.0, 0.0];
            for i in 0..5 {
                if bits & (1 << i) != 0 {
                    assert!((nk[i] - target[i]).abs() < 1e-12, "mask {bits:05b} slot {i}: {}", nk[i]);
                }
            }
            let back = denormalize_intrinsics(&normalized, &full);
            for (a, b) in back.as_array().iter().zip(truth.as_array()) {
                assert!(close(*a, b, 1e-9), "mask {bits:05b}: {a} vs {b}");
            }
            checked += 1;
        }
        // masks with a known nonzero shear and unknown v are rejected
        assert_eq!(checked, 24);
    }
}
