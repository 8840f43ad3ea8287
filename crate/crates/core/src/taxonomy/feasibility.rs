use serde::{Deserialize, Serialize};

use super::num_pairs;
use crate::camera::{IntrinsicsSpec, Slot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityStatus {
    Minimal,
    OverconstrainedRelaxable,
    Infeasible,
}

impl std::fmt::Display for FeasibilityStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeasibilityStatus::Minimal => "minimal",
            FeasibilityStatus::OverconstrainedRelaxable => "overconstrained-relaxable",
            FeasibilityStatus::Infeasible => "infeasible",
        })
    }
}

/// Counts for one intrinsics pattern and view count at the smallest
/// admissible number of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRow {
    pub spec: IntrinsicsSpec,
    pub views: usize,
    pub n_min: Option<usize>,
    pub l: usize,
    /// Unknowns: free conic parameters plus all depths but one.
    pub n: usize,
    pub n_avail: usize,
    pub n_drop: usize,
    pub raw_colorings: u64,
    pub status: FeasibilityStatus,
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

/// A problem with `N` points in `M` views has `2MN` measurements and
/// `(5 - L) + MN - 1` unknowns against `(M - 1)·C(N, 2)` depth equations,
/// and needs `L ≥ 3N + 6M - 2 - 2MN`. At least four points are required, and
/// two views need at least three known intrinsics.
pub fn feasibility(spec: &IntrinsicsSpec, views: usize) -> FeasibilityRow {
    let l = spec.num_constraints();
    let bound = |n: usize| 3 * n as i64 + 6 * views as i64 - 2 - 2 * (views * n) as i64;
    let infeasible = FeasibilityRow {
        spec: *spec,
        views,
        n_min: None,
        l,
        n: 0,
        n_avail: 0,
        n_drop: 0,
        raw_colorings: 0,
        status: FeasibilityStatus::Infeasible,
    };
    if !(2..=3).contains(&views) || (views == 2 && l < 3) {
        return infeasible;
    }
    let Some(n_points) = (4..64).find(|&n| l as i64 >= bound(n)) else {
        return infeasible;
    };
    let n = (5 - l) + views * n_points - 1;
    let n_avail = (views - 1) * num_pairs(n_points);
    if n_avail < n {
        return infeasible;
    }
    let n_drop = n_avail - n;
    let status = if l as i64 == bound(n_points) {
        FeasibilityStatus::Minimal
    } else {
        FeasibilityStatus::OverconstrainedRelaxable
    };
    FeasibilityRow {
        n_min: Some(n_points),
        n,
        n_avail,
        n_drop,
        raw_colorings: binomial(n_avail, n_drop),
        status,
        ..infeasible
    }
}

/// The 32 known/unknown patterns followed by the 8 with `g` tied to an
/// unknown `f`.
pub fn all_specs() -> Vec<IntrinsicsSpec> {
    let known = [1.0, 1.0, 0.0, 0.0, 0.0];
    let pattern = |bits: usize| -> [Slot; 5] {
        std::array::from_fn(|i| if bits >> (4 - i) & 1 == 1 { Slot::Unknown } else { Slot::Known(known[i]) })
    };
    let mut out: Vec<IntrinsicsSpec> =
        (0..32).map(|b| IntrinsicsSpec::new(pattern(b)).expect("legal pattern")).collect();
    for b in 0..8 {
        let mut mask = pattern(0b10000 | b);
        mask[1] = Slot::TiedToF;
        out.push(IntrinsicsSpec::new(mask).expect("legal tie"));
    }
    out
}

/// Every spec in two and three views.
pub fn feasibility_table() -> Vec<FeasibilityRow> {
    let specs = all_specs();
    [2, 3].iter().flat_map(|&m| specs.iter().map(move |s| feasibility(s, m))).collect()
}
