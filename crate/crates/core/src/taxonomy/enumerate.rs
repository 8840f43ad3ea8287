use super::feasibility::binomial;
use super::{all_permutations, num_pairs, pair_index, pairs, Coloring};
use crate::error::{Error, Result};

/// One isomorphism class of colorings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitClass {
    /// The member with the smallest code.
    pub representative: Coloring,
    /// Number of raw colorings in the class.
    pub orbit_size: u64,
}

/// Colex rank of a `k`-subset of `0..64` given as a bit mask.
struct Ranker {
    table: Vec<[u64; 65]>,
}

impl Ranker {
    fn new(n: usize) -> Self {
        let table = (0..=n)
            .map(|c| {
                let mut row = [0u64; 65];
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot = binomial(c, k);
                }
                row
            })
            .collect();
        Self { table }
    }

    fn rank(&self, mut mask: u64) -> u64 {
        let mut r = 0;
        let mut i = 1;
        while mask != 0 {
            let c = mask.trailing_zeros() as usize;
            r += self.table[c][i];
            mask &= mask - 1;
            i += 1;
        }
        r
    }
}

/// Next larger integer with the same number of set bits.
fn gosper(x: u64) -> u64 {
    let c = x & x.wrapping_neg();
    let r = x + c;
    (((r ^ x) >> 2) / c) | r
}

/// Image of every drop-mask bit under each group element.
struct GroupAction {
    maps: Vec<Vec<u8>>,
}

impl GroupAction {
    fn new(n: usize, views: usize) -> Self {
        let np = num_pairs(n);
        let pair_list = pairs(n);
        let swaps: &[bool] = if views == 3 { &[false, true] } else { &[false] };
        let mut maps = Vec::new();
        for sigma in all_permutations(n) {
            let pair_map: Vec<usize> =
                pair_list.iter().map(|&(p, q)| pair_index(sigma[p], sigma[q], n)).collect();
            for &swap in swaps {
                let mut map = vec![0u8; (views - 1) * np];
                for j in 0..views - 1 {
                    let tj = if swap { 1 - j } else { j };
                    for k in 0..np {
                        map[j * np + k] = (tj * np + pair_map[k]) as u8;
                    }
                }
                maps.push(map);
            }
        }
        Self { maps }
    }

    fn apply(map: &[u8], mut mask: u64) -> u64 {
        let mut out = 0;
        while mask != 0 {
            let b = mask.trailing_zeros() as usize;
            out |= 1 << map[b];
            mask &= mask - 1;
        }
        out
    }
}

/// Contribution of each drop-mask bit to the base-4 code of its coloring.
fn code_weights(n: usize, views: usize) -> Vec<u128> {
    let np = num_pairs(n);
    let mut w = Vec::with_capacity((views - 1) * np);
    for j in 0..views - 1 {
        for k in 0..np {
            let shift = 2 * (np - 1 - k);
            // dropping (1,2) turns B into G, dropping (1,3) turns B into R
            let digit: u128 = match (views, j) {
                (2, _) => 3,
                (_, 0) => 2,
                _ => 1,
            };
            w.push(digit << shift);
        }
    }
    w
}

fn code_of(weights: &[u128], mut mask: u64) -> u128 {
    let mut code = 0;
    while mask != 0 {
        code += weights[mask.trailing_zeros() as usize];
        mask &= mask - 1;
    }
    code
}

/// All classes of colorings obtained by dropping `n_drop` of the
/// `(M - 1)·C(N, 2)` equations, with their sizes, sorted by canonical code.
///
/// Every drop mask is visited once in colex order; the first unvisited mask
/// of each class is expanded by the full group and its whole orbit marked.
pub fn enumerate_orbits(n: usize, views: usize, n_drop: usize) -> Result<Vec<OrbitClass>> {
    if !(2..=3).contains(&views) {
        return Err(Error::InvalidColoring(format!("{views} views")));
    }
    let n_avail = (views - 1) * num_pairs(n);
    if n_avail > 64 || n > 8 {
        return Err(Error::TooLarge(n));
    }
    if n_drop > n_avail {
        return Err(Error::Infeasible(format!("cannot drop {n_drop} of {n_avail} equations")));
    }
    let total = binomial(n_avail, n_drop);
    if total > 1 << 34 {
        return Err(Error::TooLarge(n));
    }
    let ranker = Ranker::new(n_avail);
    let group = GroupAction::new(n, views);
    let weights = code_weights(n, views);
    let mut visited = vec![0u64; total.div_ceil(64) as usize];
    let mut classes = Vec::new();

    let mut mask: u64 = if n_drop == 0 { 0 } else { (1u64 << n_drop) - 1 };
    for rank in 0..total {
        if visited[(rank / 64) as usize] & (1 << (rank % 64)) == 0 {
            let mut size = 0u64;
            let mut best = (u128::MAX, 0u64);
            for map in &group.maps {
                let image = GroupAction::apply(map, mask);
                let r = ranker.rank(image);
                let word = &mut visited[(r / 64) as usize];
                if *word & (1 << (r % 64)) == 0 {
                    *word |= 1 << (r % 64);
                    size += 1;
                }
                let code = code_of(&weights, image);
                if code < best.0 {
                    best = (code, image);
                }
            }
            classes.push((best.0, best.1, size));
        }
        if rank + 1 < total {
            mask = gosper(mask);
        }
    }
    classes.sort_unstable_by_key(|c| c.0);
    classes
        .into_iter()
        .map(|(_, m, size)| {
            Ok(OrbitClass { representative: Coloring::from_drop_mask(n, views, m)?, orbit_size: size })
        })
        .collect()
}

/// One representative per isomorphism class, in canonical order.
pub fn enumerate_classes(n: usize, views: usize, n_drop: usize) -> Result<Vec<Coloring>> {
    Ok(enumerate_orbits(n, views, n_drop)?.into_iter().map(|c| c.representative).collect())
}
