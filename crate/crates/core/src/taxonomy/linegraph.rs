use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::{NodeIndex, UnGraph};

use super::{all_permutations, pair_index, pairs, Color, Coloring};
use crate::error::{Error, Result};

/// Vertex label of a line graph: the color of the pair plus invariants of the
/// original coloring that any point relabeling preserves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VertexLabel {
    pub color: Color,
    /// Per-color degrees (B, R, G) of the two endpoints, sorted.
    pub endpoint_degrees: [[u8; 3]; 2],
    /// For components on at most four points: point count and canonical code.
    pub small_component: Option<(u8, u128)>,
}

/// Line graph of the non-white pairs of a coloring.
#[derive(Debug, Clone)]
pub struct LabeledLineGraph {
    pub graph: UnGraph<VertexLabel, ()>,
    /// The point pair behind each vertex, by node index.
    pub pairs: Vec<(usize, usize)>,
}

impl LabeledLineGraph {
    pub fn vertex_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }
}

fn color_degrees(c: &Coloring) -> Vec<[u8; 3]> {
    let mut deg = vec![[0u8; 3]; c.n_points()];
    for ((p, q), col) in pairs(c.n_points()).into_iter().zip(c.colors()) {
        if *col != Color::W {
            let k = col.code() as usize;
            deg[p][k] += 1;
            deg[q][k] += 1;
        }
    }
    deg
}

/// Connected components of the graph of non-white pairs, as point lists.
fn components(c: &Coloring) -> Vec<Vec<usize>> {
    let n = c.n_points();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut i = 0;
        while i < members.len() {
            let p = members[i];
            for q in 0..n {
                if q != p && comp[q] == usize::MAX && c.color(p, q) != Color::W {
                    comp[q] = id;
                    members.push(q);
                }
            }
            i += 1;
        }
        out.push(members);
    }
    out
}

/// Minimal code of the sub-coloring on `points` over all their orderings.
fn small_signature(c: &Coloring, points: &[usize]) -> u128 {
    let k = points.len();
    all_permutations(k)
        .iter()
        .map(|perm| {
            let mut code = 0u128;
            for a in 0..k {
                for b in a + 1..k {
                    code = (code << 2) | c.color(points[perm[a]], points[perm[b]]).code() as u128;
                }
            }
            code
        })
        .min()
        .unwrap_or(0)
}

/// Vertices are the non-white pairs; two are adjacent when the pairs share a
/// point.
pub fn line_graph(c: &Coloring) -> LabeledLineGraph {
    let deg = color_degrees(c);
    let mut small = vec![None; c.n_points()];
    for members in components(c) {
        if members.len() >= 2 && members.len() <= 4 {
            let sig = (members.len() as u8, small_signature(c, &members));
            for p in members {
                small[p] = Some(sig);
            }
        }
    }
    let mut graph = UnGraph::new_undirected();
    let mut kept = Vec::new();
    for ((p, q), col) in pairs(c.n_points()).into_iter().zip(c.colors()) {
        if *col == Color::W {
            continue;
        }
        let mut endpoint_degrees = [deg[p], deg[q]];
        endpoint_degrees.sort();
        graph.add_node(VertexLabel { color: *col, endpoint_degrees, small_component: small[p] });
        kept.push((p, q));
    }
    for a in 0..kept.len() {
        for b in a + 1..kept.len() {
            let (p, q) = kept[a];
            let (r, s) = kept[b];
            if p == r || p == s || q == r || q == s {
                graph.add_edge(NodeIndex::new(a), NodeIndex::new(b), ());
            }
        }
    }
    LabeledLineGraph { graph, pairs: kept }
}

fn same_counts(c1: &Coloring, c2: &Coloring) -> bool {
    Color::ALL.iter().all(|&col| c1.count(col) == c2.count(col))
}

fn label_isomorphic(a: &LabeledLineGraph, b: &LabeledLineGraph) -> bool {
    a.vertex_count() == b.vertex_count()
        && a.edge_count() == b.edge_count()
        && is_isomorphic_matching(&a.graph, &b.graph, |x, y| x == y, |_, _| true)
}

/// Whether `c2` is `c1` up to relabeling points and, for three views,
/// swapping the two view pairs. Decided by a label-preserving isomorphism of
/// line graphs; components on at most four points carry their exact
/// canonical form so the small exceptions to edge-isomorphism (triangle
/// against claw, and non-induced maps on `K4`, `K4 - e`, claw plus an edge)
/// cannot produce false positives.
pub fn isomorphic(c1: &Coloring, c2: &Coloring) -> bool {
    if c1.n_points() != c2.n_points() || c1.n_views() != c2.n_views() {
        return false;
    }
    let lg1 = line_graph(c1);
    if same_counts(c1, c2) && label_isomorphic(&lg1, &line_graph(c2)) {
        return true;
    }
    if c1.n_views() == 3 {
        let swapped = c2.swapped();
        if same_counts(c1, &swapped) && label_isomorphic(&lg1, &line_graph(&swapped)) {
            return true;
        }
    }
    false
}

/// Exhaustive search over point permutations and the view-pair swap.
pub fn brute_force_isomorphic(c1: &Coloring, c2: &Coloring) -> Result<bool> {
    let n = c1.n_points();
    if n > 7 {
        return Err(Error::TooLarge(n));
    }
    if n != c2.n_points() || c1.n_views() != c2.n_views() {
        return Ok(false);
    }
    let mut targets = vec![c2.clone()];
    if c1.n_views() == 3 {
        targets.push(c2.swapped());
    }
    let pairs = pairs(n);
    let found = all_permutations(n).iter().any(|sigma| {
        targets.iter().any(|t| {
            pairs
                .iter()
                .zip(c1.colors())
                .all(|(&(p, q), col)| t.colors()[pair_index(sigma[p], sigma[q], n)] == *col)
        })
    });
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn white(n: usize) -> Coloring {
        Coloring::uniform(n, 3, Color::W)
    }

    #[test]
    fn line_graph_examples() {
        let mut tri = white(5);
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            tri.set(p, q, Color::B);
        }
        let lg = line_graph(&tri);
        assert_eq!((lg.vertex_count(), lg.edge_count()), (3, 3));
        let mut claw = white(5);
        for (p, q) in [(0, 1), (0, 2), (0, 3)] {
            claw.set(p, q, Color::B);
        }
        let lg = line_graph(&claw);
        assert_eq!((lg.vertex_count(), lg.edge_count()), (3, 3));
        assert!(lg.graph.node_weights().all(|w| w.color == Color::B));
        // same line graph, different originals
        assert!(!isomorphic(&tri, &claw));
        assert!(!brute_force_isomorphic(&tri, &claw).unwrap());
        let mut single = white(5);
        single.set(2, 4, Color::R);
        let lg = line_graph(&single);
        assert_eq!((lg.vertex_count(), lg.edge_count()), (1, 0));
    }

    #[test]
    fn reflexive_and_swap() {
        let mut c = Coloring::uniform(5, 3, Color::B);
        c.set(0, 1, Color::R);
        c.set(2, 3, Color::G);
        c.set(1, 4, Color::R);
        c.set(3, 4, Color::W);
        assert!(isomorphic(&c, &c));
        assert!(isomorphic(&c, &c.swapped()));
        assert!(isomorphic(&c, &c.permuted(&[4, 2, 0, 1, 3])));
        assert!(brute_force_isomorphic(&c, &c.swapped().permuted(&[1, 0, 3, 2, 4])).unwrap());
        let mut other = c.clone();
        other.set(0, 2, Color::W);
        assert!(!brute_force_isomorphic(&c, &other).unwrap());
        assert!(!isomorphic(&c, &other));
        assert_eq!(
            brute_force_isomorphic(&Coloring::uniform(8, 3, Color::B), &Coloring::uniform(8, 3, Color::B)),
            Err(Error::TooLarge(8))
        );
    }

    fn random_coloring(rng: &mut ChaCha8Rng, n: usize, views: usize) -> Coloring {
        let colors = (0..n * (n - 1) / 2)
            .map(|_| {
                if views == 2 {
                    if rng.random_bool(0.5) { Color::B } else { Color::W }
                } else {
                    Color::ALL[rng.random_range(0..4)]
                }
            })
            .collect();
        Coloring::new(n, views, colors).unwrap()
    }

    /// Random pairs, half of them related by a random relabeling and a few
    /// recolorings so both answers occur often.
    #[test]
    fn agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [4, 5, 6] {
            for views in [2, 3] {
                for _ in 0..150 {
                    let c1 = random_coloring(&mut rng, n, views);
                    let mut perm: Vec<usize> = (0..n).collect();
                    for i in (1..n).rev() {
                        perm.swap(i, rng.random_range(0..=i));
                    }
                    let mut c2 = c1.permuted(&perm);
                    if views == 3 && rng.random_bool(0.5) {
                        c2 = c2.swapped();
                    }
                    if rng.random_bool(0.5) {
                        let k = rng.random_range(0..c2.colors().len());
                        let (p, q) = pairs(n)[k];
                        let cur = c2.color(p, q);
                        let next = if views == 2 {
                            if cur == Color::B { Color::W } else { Color::B }
                        } else {
                            Color::ALL[(cur.code() as usize + rng.random_range(1..4)) % 4]
                        };
                        c2.set(p, q, next);
                        let k2 = rng.random_range(0..c2.colors().len());
                        let (p2, q2) = pairs(n)[k2];
                        if k2 != k {
                            c2.set(p2, q2, cur);
                        }
                    }
                    assert_eq!(
                        isomorphic(&c1, &c2),
                        brute_force_isomorphic(&c1, &c2).unwrap(),
                        "{c1} vs {c2}"
                    );
                }
            }
        }
    }

    /// Every small exceptional pair: all colorings supported on four points
    /// of a five-point set with at most three non-white pairs.
    #[test]
    fn small_components_exhaustive() {
        let n = 5;
        let mut all = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..400 {
            let mut c = white(n);
            for _ in 0..rng.random_range(1..6) {
                let p = rng.random_range(0..4);
                let q = rng.random_range(0..4);
                if p != q {
                    c.set(p, q, Color::ALL[rng.random_range(0..3)]);
                }
            }
            all.push(c);
        }
        for a in all.iter().take(60) {
            for b in all.iter().take(60) {
                assert_eq!(isomorphic(a, b), brute_force_isomorphic(a, b).unwrap(), "{a} vs {b}");
            }
        }
    }
}
