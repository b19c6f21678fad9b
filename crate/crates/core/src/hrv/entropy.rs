//! Sample entropy with exact sub-quadratic match counting.
//!
//! Template pairs are counted with a sweep over the first coordinate and a
//! Fenwick structure over the rest, so a 24 h series (~10^5 beats) is cheap.
//! Every comparison has the form `(a - b) <= r` or `(b - a) <= r`, which is
//! bit-for-bit the predicate `(a - b).abs() <= r`.

use crate::error::{Error, Result};
use crate::rpeak::BeatToBeatSeries;

/// `-ln(A/B)` with tolerance `r` (default: the series' own SDNN). Templates
/// never cross a segment boundary; matches use Chebyshev distance `<= r`.
/// Returns `None` when A or B is zero.
pub fn sample_entropy(bb: &BeatToBeatSeries, m: usize, r: Option<f64>) -> Result<Option<f64>> {
    if m == 0 {
        return Err(Error::config("embedding dimension must be positive"));
    }
    if bb.len() < m + 2 {
        return Err(Error::data(format!("{} intervals, need at least {}", bb.len(), m + 2)));
    }
    let r = match r {
        Some(r) => r,
        None => super::sdnn(bb)?,
    };
    let (a, b) = count_matches(bb, m, r);
    Ok((a > 0 && b > 0).then(|| -(a as f64 / b as f64).ln()))
}

/// Matching template pairs `(A, B)` for lengths `m + 1` and `m`, over the
/// starts whose length-`m + 1` template lies in one segment.
pub fn count_matches(bb: &BeatToBeatSeries, m: usize, r: f64) -> (u64, u64) {
    let x = bb.intervals();
    let ids = bb.segment_ids();
    let starts: Vec<usize> = (0..x.len().saturating_sub(m))
        .filter(|&i| ids[i..=i + m].iter().all(|&s| s == ids[i]))
        .collect();
    let points = |d: usize| -> Vec<f64> {
        starts.iter().flat_map(|&i| x[i..i + d].iter().copied()).collect()
    };
    (count_pairs(&points(m + 1), m + 1, r), count_pairs(&points(m), m, r))
}

/// Unordered pairs of `d`-dimensional points (row-major) within Chebyshev `r`.
fn count_pairs(pts: &[f64], d: usize, r: f64) -> u64 {
    let n = pts.len() / d;
    if n < 2 || r < 0.0 {
        return 0;
    }
    let close = |a: f64, b: f64| (a - b).abs() <= r;
    if d > 3 {
        let mut c = 0;
        for i in 0..n {
            for j in i + 1..n {
                if (0..d).all(|k| close(pts[i * d + k], pts[j * d + k])) {
                    c += 1;
                }
            }
        }
        return c;
    }

    let coord = |i: usize, k: usize| pts[i * d + k];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coord(a, 0).total_cmp(&coord(b, 0)));

    let mut window: Box<dyn Window> = match d {
        1 => Box::new(Count(0)),
        2 => Box::new(Fenwick1::new((0..n).map(|i| coord(i, 1)).collect())),
        _ => Box::new(Fenwick2::new(
            (0..n).map(|i| coord(i, 1)).collect(),
            (0..n).map(|i| coord(i, 2)).collect(),
        )),
    };
    let (mut lo, mut hi) = (0, 0);
    let mut total = 0u64;
    for &i in &order {
        let c = coord(i, 0);
        while hi < n && coord(order[hi], 0) - c <= r {
            window.insert(order[hi]);
            hi += 1;
        }
        while c - coord(order[lo], 0) > r {
            window.remove(order[lo]);
            lo += 1;
        }
        total += window.count_near(i, r);
    }
    // each point counts itself once, every pair twice
    (total - n as u64) / 2
}

trait Window {
    fn insert(&mut self, i: usize);
    fn remove(&mut self, i: usize);
    /// Active points within `r` of point `i` in the remaining coordinates.
    fn count_near(&self, i: usize, r: f64) -> u64;
}

struct Count(u64);

impl Window for Count {
    fn insert(&mut self, _: usize) {
        self.0 += 1;
    }
    fn remove(&mut self, _: usize) {
        self.0 -= 1;
    }
    fn count_near(&self, _: usize, _: f64) -> u64 {
        self.0
    }
}

/// Sorted values with the index range of those within `r` of `c`.
fn near_range(sorted: &[f64], c: f64, r: f64) -> (usize, usize) {
    (
        sorted.partition_point(|&v| c - v > r),
        sorted.partition_point(|&v| v - c <= r),
    )
}

struct Fenwick1 {
    vals: Vec<f64>,
    sorted: Vec<f64>,
    slot: Vec<usize>,
    tree: Vec<u32>,
}

impl Fenwick1 {
    fn new(vals: Vec<f64>) -> Self {
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        let slot = vals.iter().map(|&v| sorted.partition_point(|&s| s < v)).collect();
        let tree = vec![0; sorted.len() + 1];
        Self { vals, sorted, slot, tree }
    }

    fn add(&mut self, pos: usize, delta: i32) {
        let mut k = pos + 1;
        while k < self.tree.len() {
            self.tree[k] = self.tree[k].wrapping_add_signed(delta);
            k += k & k.wrapping_neg();
        }
    }

    fn prefix(&self, end: usize) -> u64 {
        let (mut k, mut s) = (end, 0u64);
        while k > 0 {
            s += self.tree[k] as u64;
            k &= k - 1;
        }
        s
    }
}

impl Window for Fenwick1 {
    fn insert(&mut self, i: usize) {
        self.add(self.slot[i], 1);
    }
    fn remove(&mut self, i: usize) {
        self.add(self.slot[i], -1);
    }
    fn count_near(&self, i: usize, r: f64) -> u64 {
        let (a, b) = near_range(&self.sorted, self.vals[i], r);
        self.prefix(b) - self.prefix(a)
    }
}

/// Fenwick tree over the rank of the first value whose nodes each hold the
/// sorted second values of their range, with an inner Fenwick of counts.
/// Node `k` owns `vals[off[k]..off[k + 1]]` and `tree[off[k] + k..off[k + 1] + k + 1]`.
struct Fenwick2 {
    u: Vec<f64>,
    v: Vec<f64>,
    u_sorted: Vec<f64>,
    u_rank: Vec<usize>,
    off: Vec<usize>,
    vals: Vec<f64>,
    tree: Vec<u32>,
}

impl Fenwick2 {
    fn new(u: Vec<f64>, v: Vec<f64>) -> Self {
        let n = u.len();
        let mut by_u: Vec<usize> = (0..n).collect();
        by_u.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
        let mut u_rank = vec![0; n];
        for (rank, &i) in by_u.iter().enumerate() {
            u_rank[i] = rank;
        }
        let u_sorted: Vec<f64> = by_u.iter().map(|&i| u[i]).collect();
        let mut off = vec![0; n + 2];
        for k in 1..=n {
            off[k + 1] = off[k] + (k & k.wrapping_neg());
        }
        let mut fill = off.clone();
        let mut vals = vec![0.0; off[n + 1]];
        for (rank, &i) in by_u.iter().enumerate() {
            let mut k = rank + 1;
            while k <= n {
                vals[fill[k]] = v[i];
                fill[k] += 1;
                k += k & k.wrapping_neg();
            }
        }
        for k in 1..=n {
            vals[off[k]..off[k + 1]].sort_by(f64::total_cmp);
        }
        let tree = vec![0; off[n + 1] + n + 1];
        Self { u, v, u_sorted, u_rank, off, vals, tree }
    }

    fn add(&mut self, i: usize, delta: i32) {
        let n = self.u.len();
        let x = self.v[i];
        let mut k = self.u_rank[i] + 1;
        while k <= n {
            let (a, b) = (self.off[k], self.off[k + 1]);
            let tree = &mut self.tree[a + k..b + k + 1];
            let mut j = self.vals[a..b].partition_point(|&s| s < x) + 1;
            while j < tree.len() {
                tree[j] = tree[j].wrapping_add_signed(delta);
                j += j & j.wrapping_neg();
            }
            k += k & k.wrapping_neg();
        }
    }

    /// Active points among the first `end` u-ranks with v within `r` of `c`.
    fn prefix(&self, end: usize, c: f64, r: f64) -> i64 {
        let (mut k, mut s) = (end, 0i64);
        while k > 0 {
            let (a, b) = (self.off[k], self.off[k + 1]);
            let (lo, hi) = near_range(&self.vals[a..b], c, r);
            let tree = &self.tree[a + k..b + k + 1];
            let sum = |mut j: usize| {
                let mut t = 0i64;
                while j > 0 {
                    t += tree[j] as i64;
                    j &= j - 1;
                }
                t
            };
            s += sum(hi) - sum(lo);
            k &= k - 1;
        }
        s
    }
}

impl Window for Fenwick2 {
    fn insert(&mut self, i: usize) {
        self.add(i, 1);
    }
    fn remove(&mut self, i: usize) {
        self.add(i, -1);
    }
    fn count_near(&self, i: usize, r: f64) -> u64 {
        let (a, b) = near_range(&self.u_sorted, self.u[i], r);
        (self.prefix(b, self.v[i], r) - self.prefix(a, self.v[i], r)) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(x: &[f64], ids: &[u32], m: usize, r: f64) -> (u64, u64) {
        let starts: Vec<usize> = (0..x.len().saturating_sub(m))
            .filter(|&i| ids[i..=i + m].iter().all(|&s| s == ids[i]))
            .collect();
        let (mut a, mut b) = (0, 0);
        for (p, &i) in starts.iter().enumerate() {
            for &j in &starts[p + 1..] {
                if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                    b += 1;
                    if (x[i + m] - x[j + m]).abs() <= r {
                        a += 1;
                    }
                }
            }
        }
        (a, b)
    }

    #[test]
    fn constant_series_has_zero_entropy() {
        let bb = BeatToBeatSeries::from_intervals(vec![800.0; 20]).unwrap();
        assert_eq!(sample_entropy(&bb, 2, None).unwrap(), Some(0.0));
    }

    #[test]
    fn alternating_series_matches_enumeration() {
        let x = [800.0, 900.0].repeat(4);
        let bb = BeatToBeatSeries::from_intervals(x.clone()).unwrap();
        let (a, b) = brute(&x, &[0; 8], 2, 50.0);
        assert_eq!(count_matches(&bb, 2, 50.0), (a, b));
        let want = -(a as f64 / b as f64).ln();
        assert_eq!(sample_entropy(&bb, 2, None).unwrap(), Some(want));
    }

    #[test]
    fn too_short_is_an_error() {
        let bb = BeatToBeatSeries::from_intervals(vec![800.0, 810.0, 790.0]).unwrap();
        assert!(sample_entropy(&bb, 2, None).is_err());
    }

    #[test]
    fn fast_counts_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..300 {
            let n = rng.random_range(4..120);
            // coarse grid values force exact ties at distance r
            let x: Vec<f64> = (0..n)
                .map(|_| if trial % 2 == 0 { 700.0 + 10.0 * rng.random_range(0..8) as f64 } else { rng.random_range(600.0..1100.0) })
                .collect();
            let mut ids = vec![0u32; n];
            let mut id = 0;
            for v in ids.iter_mut() {
                if rng.random_bool(0.05) {
                    id += 1;
                }
                *v = id;
            }
            let bb = BeatToBeatSeries::new(x.clone(), vec![0.0; n], ids.clone()).unwrap();
            for m in 1..=3 {
                let r = if trial % 2 == 0 { 20.0 } else { rng.random_range(0.0..150.0) };
                assert_eq!(count_matches(&bb, m, r), brute(&x, &ids, m, r), "trial {trial} m {m}");
            }
        }
    }
}
