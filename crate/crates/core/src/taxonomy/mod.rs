//! Which depth equations to keep: feasibility counts for each intrinsics
//! pattern and enumeration of colorings of point pairs up to relabeling.
//!
//! A coloring assigns each unordered point pair one of four colors. With
//! three views, `B` keeps the pair's equation for both view pairs (1,2) and
//! (1,3), `R` keeps only (1,2), `G` keeps only (1,3) and `W` keeps neither.
//! With two views only `B` and `W` occur.

mod enumerate;
mod feasibility;
mod linegraph;

pub use enumerate::{enumerate_classes, enumerate_orbits, OrbitClass};
pub use feasibility::{all_specs, feasibility, feasibility_table, FeasibilityRow, FeasibilityStatus};
pub use linegraph::{brute_force_isomorphic, isomorphic, line_graph, LabeledLineGraph, VertexLabel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    B,
    R,
    G,
    W,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::B, Color::R, Color::G, Color::W];

    /// Digit used in canonical codes.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Color {
        Self::ALL[c as usize & 3]
    }

    pub fn keeps(self, view_pair: usize) -> bool {
        match self {
            Color::B => true,
            Color::R => view_pair == 0,
            Color::G => view_pair == 1,
            Color::W => false,
        }
    }

    /// Exchanges the roles of the two view pairs.
    pub fn swapped(self) -> Color {
        match self {
            Color::R => Color::G,
            Color::G => Color::R,
            c => c,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Color::B => 'B',
            Color::R => 'R',
            Color::G => 'G',
            Color::W => 'W',
        }
    }

    pub fn from_char(c: char) -> Option<Color> {
        match c.to_ascii_uppercase() {
            'B' => Some(Color::B),
            'R' => Some(Color::R),
            'G' => Some(Color::G),
            'W' => Some(Color::W),
            _ => None,
        }
    }
}

pub fn num_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Index of the pair `{p, q}` (0-based, `p != q`) in lexicographic order.
pub fn pair_index(p: usize, q: usize, n: usize) -> usize {
    let (p, q) = if p < q { (p, q) } else { (q, p) };
    p * (2 * n - p - 1) / 2 + (q - p - 1)
}

/// All pairs `(p, q)` with `p < q`, in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).collect()
}

/// A map from point pairs to colors, stored in lexicographic pair order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coloring {
    n_points: usize,
    n_views: usize,
    colors: Vec<Color>,
}

impl Coloring {
    pub fn new(n_points: usize, n_views: usize, colors: Vec<Color>) -> Result<Self> {
        if !(2..=3).contains(&n_views) {
            return Err(Error::InvalidColoring(format!("{n_views} views")));
        }
        if colors.len() != num_pairs(n_points) {
            return Err(Error::InvalidColoring(format!(
                "{} colors for {} points",
                colors.len(),
                n_points
            )));
        }
        if n_views == 2 && colors.iter().any(|c| matches!(c, Color::R | Color::G)) {
            return Err(Error::InvalidColoring("two views only allow B and W".into()));
        }
        Ok(Self { n_points, n_views, colors })
    }

    pub fn uniform(n_points: usize, n_views: usize, color: Color) -> Self {
        Self::new(n_points, n_views, vec![color; num_pairs(n_points)]).expect("uniform coloring")
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn color(&self, p: usize, q: usize) -> Color {
        self.colors[pair_index(p, q, self.n_points)]
    }

    pub fn set(&mut self, p: usize, q: usize, color: Color) {
        let i = pair_index(p, q, self.n_points);
        self.colors[i] = color;
    }

    /// Number of kept equations.
    pub fn num_equations(&self) -> usize {
        (0..self.n_views - 1)
            .map(|j| self.colors.iter().filter(|c| c.keeps(j)).count())
            .sum()
    }

    pub fn count(&self, color: Color) -> usize {
        self.colors.iter().filter(|c| **c == color).count()
    }

    /// Coloring with color `c'(σ(p), σ(q)) = c(p, q)`.
    pub fn permuted(&self, sigma: &[usize]) -> Coloring {
        let mut colors = vec![Color::W; self.colors.len()];
        for (k, (p, q)) in pairs(self.n_points).into_iter().enumerate() {
            colors[pair_index(sigma[p], sigma[q], self.n_points)] = self.colors[k];
        }
        Coloring { colors, ..self.clone() }
    }

    pub fn swapped(&self) -> Coloring {
        Coloring {
            colors: self.colors.iter().map(|c| c.swapped()).collect(),
            ..self.clone()
        }
    }

    /// Base-4 code with the first pair most significant.
    pub fn code(&self) -> u128 {
        self.colors.iter().fold(0u128, |acc, c| (acc << 2) | c.code() as u128)
    }

    pub fn from_code(n_points: usize, n_views: usize, code: u128) -> Result<Self> {
        let p = num_pairs(n_points);
        let colors = (0..p)
            .map(|k| Color::from_code(((code >> (2 * (p - 1 - k))) & 3) as u8))
            .collect();
        Self::new(n_points, n_views, colors)
    }

    /// Bit `j·P + k` is set when the equation of view pair `j` for pair `k`
    /// is dropped.
    pub fn drop_mask(&self) -> u64 {
        let p = self.colors.len();
        let mut mask = 0u64;
        for (k, c) in self.colors.iter().enumerate() {
            for j in 0..self.n_views - 1 {
                if !c.keeps(j) {
                    mask |= 1 << (j * p + k);
                }
            }
        }
        mask
    }

    pub fn from_drop_mask(n_points: usize, n_views: usize, mask: u64) -> Result<Self> {
        let p = num_pairs(n_points);
        if (n_views - 1) * p > 64 {
            return Err(Error::TooLarge(n_points));
        }
        let colors = (0..p)
            .map(|k| {
                let d12 = mask & (1 << k) != 0;
                let d13 = n_views == 3 && mask & (1 << (p + k)) != 0;
                match (n_views, d12, d13) {
                    (2, false, _) => Color::B,
                    (2, true, _) => Color::W,
                    (_, false, false) => Color::B,
                    (_, false, true) => Color::R,
                    (_, true, false) => Color::G,
                    (_, true, true) => Color::W,
                }
            })
            .collect();
        Self::new(n_points, n_views, colors)
    }

    /// `[[p, q, "C"], ...]` with 1-based point indices.
    pub fn to_triples(&self) -> Vec<(usize, usize, String)> {
        pairs(self.n_points)
            .into_iter()
            .zip(&self.colors)
            .map(|((p, q), c)| (p + 1, q + 1, c.as_char().to_string()))
            .collect()
    }

    pub fn from_triples(
        n_points: usize,
        n_views: usize,
        triples: &[(usize, usize, String)],
    ) -> Result<Self> {
        let mut colors = vec![Color::W; num_pairs(n_points)];
        let mut seen = vec![false; colors.len()];
        for (p, q, c) in triples {
            if *p == 0 || *q == 0 || *p > n_points || *q > n_points || p == q {
                return Err(Error::InvalidColoring(format!("bad pair ({p}, {q})")));
            }
            let color = c
                .chars()
                .next()
                .and_then(Color::from_char)
                .ok_or_else(|| Error::InvalidColoring(format!("bad color `{c}`")))?;
            let k = pair_index(p - 1, q - 1, n_points);
            colors[k] = color;
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidColoring("every pair needs a color".into()));
        }
        Self::new(n_points, n_views, colors)
    }
}

impl std::fmt::Display for Coloring {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.colors {
            write!(f, "{}", c.as_char())?;
        }
        Ok(())
    }
}

/// One depth equation `d_{1,j,pq}`: `view` is the second view (0-based, so
/// 1 or 2), `p < q` are 0-based point indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Equation {
    pub view: usize,
    pub p: usize,
    pub q: usize,
}

impl Equation {
    pub fn new(view: usize, p: usize, q: usize) -> Self {
        let (p, q) = if p < q { (p, q) } else { (q, p) };
        Self { view, p, q }
    }
}

impl std::fmt::Display for Equation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "d_1{}_{}{}", self.view + 1, self.p + 1, self.q + 1)
    }
}

/// A set of depth equations, ordered by view pair and then point pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EquationSelection {
    pub equations: Vec<Equation>,
}

impl EquationSelection {
    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn contains(&self, eq: &Equation) -> bool {
        self.equations.contains(eq)
    }

    /// Every equation for `n_points` points and `n_views` views.
    pub fn full(n_points: usize, n_views: usize) -> Self {
        coloring_to_selection(&Coloring::uniform(n_points, n_views, Color::B))
    }

    /// Every equation except the listed ones.
    pub fn dropping(n_points: usize, n_views: usize, dropped: &[Equation]) -> Self {
        let mut sel = Self::full(n_points, n_views);
        sel.equations.retain(|e| !dropped.contains(e));
        sel
    }
}

/// Equations kept by a coloring: `d_{1,2,pq}` for `B` and `R`, `d_{1,3,pq}`
/// for `B` and `G`.
pub fn coloring_to_selection(c: &Coloring) -> EquationSelection {
    let pairs = pairs(c.n_points());
    let mut equations = Vec::with_capacity(c.num_equations());
    for j in 0..c.n_views() - 1 {
        for (k, &(p, q)) in pairs.iter().enumerate() {
            if c.colors()[k].keeps(j) {
                equations.push(Equation::new(j + 1, p, q));
            }
        }
    }
    EquationSelection { equations }
}

/// Next permutation in lexicographic order; false after the last one.
pub(crate) fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

pub(crate) fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![perm.clone()];
    while next_permutation(&mut perm) {
        out.push(perm.clone());
    }
    out
}
