use std::fmt;

use serde::Serialize;

/// Output extent of a workload: items (patches or images), channels and two
/// spatial dims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Dims {
    pub p: usize,
    pub c: usize,
    pub s1: usize,
    pub s2: usize,
}

impl Dims {
    pub fn new(p: usize, c: usize, s1: usize, s2: usize) -> Self {
        Self { p, c, s1, s2 }
    }

    pub fn numel(&self) -> u64 {
        self.p as u64 * self.c as u64 * self.s1 as u64 * self.s2 as u64
    }

    pub fn is_empty(&self) -> bool {
        self.numel() == 0
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.p, self.c, self.s1, self.s2)
    }
}

/// Per-PE output tile. Ordering is lexicographic on (t_p, t_c, t_s1, t_s2),
/// which is the tie-break used by the schedule search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TileShape {
    pub t_p: usize,
    pub t_c: usize,
    pub t_s1: usize,
    pub t_s2: usize,
}

impl TileShape {
    pub fn new(t_p: usize, t_c: usize, t_s1: usize, t_s2: usize) -> Self {
        Self { t_p, t_c, t_s1, t_s2 }
    }

    pub fn numel(&self) -> u64 {
        self.t_p as u64 * self.t_c as u64 * self.t_s1 as u64 * self.t_s2 as u64
    }

    /// Tiles needed to cover `dims`: the product of per-dim ceilings.
    pub fn count(&self, dims: Dims) -> u64 {
        dims.p.div_ceil(self.t_p) as u64
            * dims.c.div_ceil(self.t_c) as u64
            * dims.s1.div_ceil(self.t_s1) as u64
            * dims.s2.div_ceil(self.t_s2) as u64
    }

    pub fn fits(&self, dims: Dims) -> bool {
        let ok = |t: usize, d: usize| t.is_power_of_two() && t <= d;
        ok(self.t_p, dims.p) && ok(self.t_c, dims.c) && ok(self.t_s1, dims.s1) && ok(self.t_s2, dims.s2)
    }
}

impl fmt::Display for TileShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.t_p, self.t_c, self.t_s1, self.t_s2)
    }
}

/// Powers of two not exceeding `n` (empty for `n == 0`).
pub fn pow2_upto(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |t| t.checked_mul(2))
        .take_while(|t| *t <= n)
        .collect()
}

/// Cartesian product of per-dim power-of-two candidates, in lexicographic
/// order. Empty when any dim is zero.
pub fn enumerate_tile_shapes(dims: Dims) -> Vec<TileShape> {
    let (ps, cs, s1s, s2s) = (pow2_upto(dims.p), pow2_upto(dims.c), pow2_upto(dims.s1), pow2_upto(dims.s2));
    let mut out = Vec::with_capacity(ps.len() * cs.len() * s1s.len() * s2s.len());
    for &p in &ps {
        for &c in &cs {
            for &a in &s1s {
                for &b in &s2s {
                    out.push(TileShape::new(p, c, a, b));
                }
            }
        }
    }
    out
}

/// Candidates the schedule search evaluates: [`enumerate_tile_shapes`]
/// plus, for each dim that is not a power of two, the next power of two,
/// i.e. one padded tile spanning the whole dim. With the padded tile a
/// larger workload can never schedule faster than a smaller one.
pub fn search_tile_shapes(dims: Dims) -> Vec<TileShape> {
    if dims.is_empty() {
        return Vec::new();
    }
    let per_dim = |n: usize| {
        let mut v = pow2_upto(n);
        if !n.is_power_of_two() {
            v.push(n.next_power_of_two());
        }
        v
    };
    let (ps, cs, s1s, s2s) = (per_dim(dims.p), per_dim(dims.c), per_dim(dims.s1), per_dim(dims.s2));
    let mut out = Vec::with_capacity(ps.len() * cs.len() * s1s.len() * s2s.len());
    for &p in &ps {
        for &c in &cs {
            for &a in &s1s {
                for &b in &s2s {
                    out.push(TileShape::new(p, c, a, b));
                }
            }
        }
    }
    out
}

/// `sum over the tiles of one dim of f(tile extent)`, where a dim of length
/// `n` splits into full tiles of `t` plus one remainder tile.
pub(crate) fn tiled_sum(n: usize, t: usize, f: impl Fn(usize) -> f64) -> f64 {
    let full = n / t;
    let rem = n % t;
    let mut s = full as f64 * f(t);
    if rem > 0 {
        s += f(rem);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_sets() {
        let v = enumerate_tile_shapes(Dims::new(10, 64, 4, 4));
        assert_eq!(v.len(), 4 * 7 * 3 * 3);
        assert!(v.iter().all(|t| t.t_p <= 8));
        assert_eq!(enumerate_tile_shapes(Dims::new(1, 1, 1, 1)), vec![TileShape::new(1, 1, 1, 1)]);
        assert_eq!(enumerate_tile_shapes(Dims::new(2, 2, 2, 2)).len(), 16);
        assert!(enumerate_tile_shapes(Dims::new(0, 4, 4, 4)).is_empty());
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(v, sorted);
    }

    #[test]
    fn search_adds_one_padded_tile_per_dim() {
        let v = search_tile_shapes(Dims::new(10, 64, 4, 7));
        assert_eq!(v.len(), 5 * 7 * 3 * 4);
        assert!(v.contains(&TileShape::new(16, 64, 4, 8)));
        assert_eq!(search_tile_shapes(Dims::new(2, 2, 2, 2)), enumerate_tile_shapes(Dims::new(2, 2, 2, 2)));
        assert!(search_tile_shapes(Dims::new(3, 0, 1, 1)).is_empty());
    }

    #[test]
    fn tile_count_is_product_of_ceilings() {
        let t = TileShape::new(8, 32, 4, 4);
        assert_eq!(t.count(Dims::new(10, 64, 4, 7)), 8);
    }

    #[test]
    fn tiled_sum_partitions() {
        assert_eq!(tiled_sum(10, 4, |t| t as f64), 10.0);
        assert_eq!(tiled_sum(10, 4, |_| 1.0), 3.0);
    }
}
