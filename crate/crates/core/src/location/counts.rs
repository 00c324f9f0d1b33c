//! Exact range counting over a block decomposition.
//!
//! The terrific-ball and 1-cluster searches evaluate, for every data point
//! `x`, the number of points inside `B(x, r)` for a handful of radii. Block
//! bounds (triangle inequality on block bounding balls) certify most counts
//! without touching point pairs; the rest are resolved by exact distance
//! comparisons in a single pairwise pass that buckets each pair against the
//! whole sorted radius-edge list, so one pass serves an entire search. The
//! results are identical to brute force: classification margins are shrunk
//! by `1e-9·r`, pushing borderline block pairs into the exact path.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::linalg::dist2;

const BLOCK_CAP: usize = 256;
const MARGIN_REL: f64 = 1e-9;

/// Row-major copy of a point set.
pub struct PointSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl PointSet {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self { data, n, d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}


struct Block {
    start: usize,
    len: usize,
    center: Vec<f64>,
    radius: f64,
}

/// Exact per-point counts at a sorted list of radius edges:
/// `counts(e)[p] = |B(x_p, edges[e]) ∩ X|`.
pub struct MultiCounts {
    edges: Vec<f64>,
    /// edges.len() × n, row-major per edge.
    counts: Vec<u32>,
    n: usize,
}

impl MultiCounts {
    pub fn counts_at(&self, edge_idx: usize) -> &[u32] {
        &self.counts[edge_idx * self.n..(edge_idx + 1) * self.n]
    }

    /// Index of an edge previously passed to [`BlockIndex::counts_multi`].
    pub fn edge_index(&self, r: f64) -> Option<usize> {
        self.edges.iter().position(|&e| e == r)
    }
}

/// Block decomposition of a [`PointSet`] with precomputed block-center
/// distances. Coordinates are duplicated in slot order so block traversal
/// streams contiguous memory.
pub struct BlockIndex<'a> {
    points: &'a PointSet,
    /// `order[slot]` = original point index occupying this slot.
    order: Vec<usize>,
    /// Coordinates re-gathered in slot order.
    slot_data: Vec<f64>,
    /// f32 coordinates in slot order, recentered on each block's center.
    slot_f32: Vec<f32>,
    blocks: Vec<Block>,
    /// Center distances, `blocks.len()²`, row-major.
    center_dist: Vec<f64>,
}

impl<'a> BlockIndex<'a> {
    pub fn build(points: &'a PointSet) -> Self {
        let n = points.n();
        let d = points.d();
        let mut order: Vec<usize> = (0..n).collect();
        let mut ranges = vec![(0usize, n)];
        let mut final_ranges = Vec::new();
        while let Some((lo, hi)) = ranges.pop() {
            if hi - lo <= BLOCK_CAP {
                final_ranges.push((lo, hi));
                continue;
            }
            // Split on the widest coordinate at the median.
            let mut best_dim = 0;
            let mut best_spread = -1.0;
            for j in 0..d {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for &i in &order[lo..hi] {
                    let v = points.point(i)[j];
                    min = min.min(v);
                    max = max.max(v);
                }
                if max - min > best_spread {
                    best_spread = max - min;
                    best_dim = j;
                }
            }
            let mid = (hi - lo) / 2;
            order[lo..hi].select_nth_unstable_by(mid, |&a, &b| {
                points.point(a)[best_dim]
                    .partial_cmp(&points.point(b)[best_dim])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            ranges.push((lo, lo + mid));
            ranges.push((lo + mid, hi));
        }
        final_ranges.sort_unstable();

        let blocks: Vec<Block> = final_ranges
            .iter()
            .map(|&(lo, hi)| {
                let len = hi - lo;
                let mut center = vec![0.0; d];
                for &i in &order[lo..hi] {
                    for (c, v) in center.iter_mut().zip(points.point(i)) {
                        *c += v;
                    }
                }
                for c in center.iter_mut() {
                    *c /= len as f64;
                }
                let radius = order[lo..hi]
                    .iter()
                    .map(|&i| dist2(points.point(i), &center).sqrt())
                    .fold(0.0, f64::max);
                Block {
                    start: lo,
                    len,
                    center,
                    radius,
                }
            })
            .collect();

        let nb = blocks.len();
        let mut center_dist = vec![0.0; nb * nb];
        for i in 0..nb {
            for j in (i + 1)..nb {
                let dist = dist2(&blocks[i].center, &blocks[j].center).sqrt();
                center_dist[i * nb + j] = dist;
                center_dist[j * nb + i] = dist;
            }
        }
        let mut slot_data = Vec::with_capacity(n * d);
        for &i in &order {
            slot_data.extend_from_slice(points.point(i));
        }
        let mut slot_f32 = Vec::with_capacity(n * d);
        for block in &blocks {
            for slot in block.start..block.start + block.len {
                let row = &slot_data[slot * d..(slot + 1) * d];
                slot_f32.extend(row.iter().zip(&block.center).map(|(x, c)| (x - c) as f32));
            }
        }
        Self {
            points,
            order,
            slot_data,
            slot_f32,
            blocks,
            center_dist,
        }
    }

    #[inline]
    fn slot_point(&self, slot: usize) -> &[f64] {
        let d = self.points.d();
        &self.slot_data[slot * d..(slot + 1) * d]
    }

    fn classify(&self, bi: usize, bj: usize, r: f64) -> PairClass {
        let dist = self.center_dist[bi * self.blocks.len() + bj];
        let spread = self.blocks[bi].radius + self.blocks[bj].radius;
        let margin = MARGIN_REL * r;
        if dist + spread <= r - margin {
            PairClass::SureIn
        } else if dist - spread > r + margin {
            PairClass::SureOut
        } else {
            PairClass::Ambiguous
        }
    }

    /// Per-point `[lb, lb + amb]` bounds on `|B(xᵢ, r) ∩ X|` from block
    /// classification alone. Indexed by original point index.
    pub fn count_bounds(&self, r: f64) -> (Vec<u32>, Vec<u32>) {
        let nb = self.blocks.len();
        let mut block_lb = vec![0u32; nb];
        let mut block_amb = vec![0u32; nb];
        for bi in 0..nb {
            for bj in 0..nb {
                match self.classify(bi, bj, r) {
                    PairClass::SureIn => block_lb[bi] += self.blocks[bj].len as u32,
                    PairClass::Ambiguous => block_amb[bi] += self.blocks[bj].len as u32,
                    PairClass::SureOut => {}
                }
            }
        }
        let n = self.points.n();
        let mut lb = vec![0u32; n];
        let mut amb = vec![0u32; n];
        for (bi, block) in self.blocks.iter().enumerate() {
            for slot in block.start..block.start + block.len {
                let p = self.order[slot];
                lb[p] = block_lb[bi];
                amb[p] = block_amb[bi];
            }
        }
        (lb, amb)
    }

    /// Exact per-point counts at every edge (edges must be sorted
    /// ascending), identical to brute force.
    pub fn counts_multi(&self, edges: &[f64]) -> MultiCounts {
        let n = self.points.n();
        let ne = edges.len();
        debug_assert!(edges.windows(2).all(|w| w[0] <= w[1]));
        let nb = self.blocks.len();

        // Per block pair: the first edge at which the pair is surely inside
        // and the window of ambiguous edges (pairs ambiguous anywhere are
        // resolved pairwise for all edges).
        let mut block_delta = vec![0u32; nb * ne];
        let mut pairwise: Vec<(usize, usize)> = Vec::new();
        for bi in 0..nb {
            for bj in bi..nb {
                let mut first_sure = None;
                let mut any_ambiguous = false;
                for (e, &edge) in edges.iter().enumerate() {
                    match self.classify(bi, bj, edge) {
                        PairClass::SureIn => {
                            first_sure = Some(e);
                            break;
                        }
                        PairClass::Ambiguous => {
                            any_ambiguous = true;
                            break;
                        }
                        PairClass::SureOut => {}
                    }
                }
                if any_ambiguous {
                    pairwise.push((bi, bj));
                } else if let Some(e) = first_sure {
                    block_delta[bi * ne + e] += self.blocks[bj].len as u32;
                    if bj != bi {
                        block_delta[bj * ne + e] += self.blocks[bi].len as u32;
                    }
                }
            }
        }

        // Pairwise deltas (at slot order). Coarse chunks keep the per-chunk
        // accumulator allocation and the final merges negligible.
        let __t0 = std::time::Instant::now();
        eprintln!("[timing] pairwise block pairs: {}", pairwise.len());
        let edges2: Vec<f64> = edges.iter().map(|e| e * e).collect();
        let threads = rayon::current_num_threads().max(1);
        let chunk = pairwise.len().div_ceil(4 * threads).max(1);
        let deltas = pairwise
            .par_chunks(chunk)
            .map(|pairs| {
                let mut acc = vec![0u32; n * ne];
                for &(bi, bj) in pairs {
                    self.pair_deltas(bi, bj, &edges2, &mut acc);
                }
                acc
            })
            .reduce(
                || vec![0u32; n * ne],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );

        eprintln!("[timing] pairwise phase: {:?}", __t0.elapsed());
        let __t1 = std::time::Instant::now();
        // Assemble: per point, prefix-sum pairwise deltas over edges and add
        // the block-level prefix.
        let mut counts = vec![0u32; ne * n];
        for (bi, block) in self.blocks.iter().enumerate() {
            let bd = &block_delta[bi * ne..(bi + 1) * ne];
            for slot in block.start..block.start + block.len {
                let p = self.order[slot];
                let pd = &deltas[slot * ne..(slot + 1) * ne];
                let mut acc = 0u32;
                for e in 0..ne {
                    acc += bd[e] + pd[e];
                    counts[e * n + p] = acc;
                }
            }
        }
        eprintln!("[timing] assembly phase: {:?}", __t1.elapsed());
        MultiCounts {
            edges: edges.to_vec(),
            counts,
            n,
        }
    }

    /// Exact per-point counts `|B(xᵢ, r) ∩ X|` (self included).
    pub fn counts_exact(&self, r: f64) -> Vec<u32> {
        self.counts_multi(&[r]).counts.clone()
    }

    /// Accumulate, for each point of the pair's blocks (slot-indexed), a +1
    /// delta at the first edge whose radius covers the pair distance.
    ///
    /// Distances are screened in f32 after re-centering both blocks on a
    /// common origin (so coordinate magnitudes cannot swamp the mantissa);
    /// any pair whose screened distance lands inside a relative guard band
    /// around an edge is re-decided with the exact [`dist2`], making the
    /// counts identical to brute force.
    fn pair_deltas(&self, bi: usize, bj: usize, edges2: &[f64], acc: &mut [u32]) {
        let ne = edges2.len();
        let d = self.points.d();
        let a = &self.blocks[bi];
        let b = &self.blocks[bj];

        // Block-locally recentered f32 rows are precomputed; an A row is
        // shifted once per (row, pair) by the inter-center offset, after
        // which plain f32 differences screen the whole B block.
        let slot_f32 = &self.slot_f32;
        let fa = &slot_f32[a.start * d..(a.start + a.len) * d];
        let fb = &slot_f32[b.start * d..(b.start + b.len) * d];
        let edges2_f32: Vec<f32> = edges2.iter().map(|&e| e as f32).collect();
        let top_f32 = guard_hi(edges2_f32[ne - 1]);
        let mut shifted = vec![0.0f32; d];

        if bi == bj {
            for ia in 0..a.len {
                let si = a.start + ia;
                acc[si * ne] += 1; // self, at every edge
                let fp = &fa[ia * d..(ia + 1) * d];
                for (off, fq) in fa[(ia + 1) * d..].chunks_exact(d).enumerate() {
                    let d2s = dist2_f32(fp, fq);
                    handle_screened(
                        acc,
                        si,
                        si + 1 + off,
                        d2s,
                        ne,
                        edges2,
                        &edges2_f32,
                        top_f32,
                        self,
                    );
                }
            }
        } else {
            // x_a − x_b = (x_a − c_a) + (c_a − c_b) − (x_b − c_b).
            let offset: Vec<f32> = a
                .center
                .iter()
                .zip(&b.center)
                .map(|(ca, cb)| (ca - cb) as f32)
                .collect();
            let quads = b.len / 4;
            for ia in 0..a.len {
                let si = a.start + ia;
                let row = &fa[ia * d..(ia + 1) * d];
                for l in 0..d {
                    shifted[l] = row[l] + offset[l];
                }
                for qi in 0..quads {
                    let quad = &fb[qi * 4 * d..(qi + 1) * 4 * d];
                    let ds = dist2_f32_quad(&shifted, quad, d);
                    for (r, &d2s) in ds.iter().enumerate() {
                        handle_screened(
                            acc,
                            si,
                            b.start + qi * 4 + r,
                            d2s,
                            ne,
                            edges2,
                            &edges2_f32,
                            top_f32,
                            self,
                        );
                    }
                }
                for ib in 4 * quads..b.len {
                    let d2s = dist2_f32(&shifted, &fb[ib * d..(ib + 1) * d]);
                    handle_screened(
                        acc,
                        si,
                        b.start + ib,
                        d2s,
                        ne,
                        edges2,
                        &edges2_f32,
                        top_f32,
                        self,
                    );
                }
            }
        }
    }

    /// Exact `|B(p, r) ∩ X|` for an arbitrary center.
    pub fn point_count(&self, p: &[f64], r: f64) -> u32 {
        let r2 = r * r;
        let margin = MARGIN_REL * r;
        let mut count = 0u32;
        for block in &self.blocks {
            let dist = dist2(p, &block.center).sqrt();
            if dist + block.radius <= r - margin {
                count += block.len as u32;
            } else if dist - block.radius > r + margin {
                continue;
            } else {
                for slot in block.start..block.start + block.len {
                    if dist2(p, self.slot_point(slot)) <= r2 {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Bounds on `|B(p, r) ∩ X|` from block classification only.
    pub fn point_count_bounds(&self, p: &[f64], r: f64) -> (u32, u32) {
        let margin = MARGIN_REL * r;
        let mut lb = 0u32;
        let mut amb = 0u32;
        for block in &self.blocks {
            let dist = dist2(p, &block.center).sqrt();
            if dist + block.radius <= r - margin {
                lb += block.len as u32;
            } else if dist - block.radius > r + margin {
                continue;
            } else {
                amb += block.len as u32;
            }
        }
        (lb, lb + amb)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PairClass {
    SureIn,
    SureOut,
    Ambiguous,
}

/// Relative guard band within which the f32 distance screen defers to the
/// exact f64 distance. The screen's relative error after re-centering is
/// bounded by ~d·2⁻²³ ≈ 10⁻⁵ for d ≤ 128; 10⁻³ leaves ample margin.
const F32_GUARD: f32 = 1e-3;

#[inline]
fn guard_lo(edge2: f32) -> f32 {
    edge2 * (1.0 - F32_GUARD)
}

#[inline]
fn guard_hi(edge2: f32) -> f32 {
    edge2 * (1.0 + F32_GUARD) + f32::MIN_POSITIVE
}

/// f32 squared distance, eight-lane accumulation.
#[inline(always)]
fn dist2_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for lane in 0..8 {
            let diff = x[lane] - y[lane];
            acc[lane] += diff * diff;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        let diff = x - y;
        tail += diff * diff;
    }
    acc.iter().sum::<f32>() + tail
}

/// Four screened distances at once: one row against four consecutive rows
/// of length `d` (the independent accumulator chains hide FMA latency).
#[inline(always)]
pub fn dist2_f32_quad(pa: &[f32], quad: &[f32], d: usize) -> [f32; 4] {
    let (q0, rest) = quad.split_at(d);
    let (q1, rest) = rest.split_at(d);
    let (q2, q3) = rest.split_at(d);
    let mut a0 = [0.0f32; 8];
    let mut a1 = [0.0f32; 8];
    let mut a2 = [0.0f32; 8];
    let mut a3 = [0.0f32; 8];
    let chunks = d / 8;
    for c in 0..chunks {
        let base = 8 * c;
        let x = &pa[base..base + 8];
        let y0 = &q0[base..base + 8];
        let y1 = &q1[base..base + 8];
        let y2 = &q2[base..base + 8];
        let y3 = &q3[base..base + 8];
        for l in 0..8 {
            let d0 = x[l] - y0[l];
            a0[l] += d0 * d0;
            let d1 = x[l] - y1[l];
            a1[l] += d1 * d1;
            let d2 = x[l] - y2[l];
            a2[l] += d2 * d2;
            let d3 = x[l] - y3[l];
            a3[l] += d3 * d3;
        }
    }
    let mut tails = [0.0f32; 4];
    for l in 8 * chunks..d {
        let d0 = pa[l] - q0[l];
        tails[0] += d0 * d0;
        let d1 = pa[l] - q1[l];
        tails[1] += d1 * d1;
        let d2 = pa[l] - q2[l];
        tails[2] += d2 * d2;
        let d3 = pa[l] - q3[l];
        tails[3] += d3 * d3;
    }
    [
        a0.iter().sum::<f32>() + tails[0],
        a1.iter().sum::<f32>() + tails[1],
        a2.iter().sum::<f32>() + tails[2],
        a3.iter().sum::<f32>() + tails[3],
    ]
}

/// Bucket a screened pair distance into the edge list, deferring to the
/// exact f64 distance inside the guard bands, and record the ±1 deltas.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn handle_screened(
    acc: &mut [u32],
    sa: usize,
    sb: usize,
    d2s: f32,
    ne: usize,
    edges2: &[f64],
    edges2_f32: &[f32],
    top_f32: f32,
    index: &BlockIndex,
) {
    if d2s > top_f32 {
        return;
    }
    let mut e = 0;
    while e < ne && edges2_f32[e] < d2s {
        e += 1;
    }
    let ambiguous = e == ne
        || d2s >= guard_lo(edges2_f32[e])
        || (e > 0 && d2s <= guard_hi(edges2_f32[e - 1]));
    if ambiguous {
        let d2 = dist2(index.slot_point(sa), index.slot_point(sb));
        e = 0;
        while e < ne && edges2[e] < d2 {
            e += 1;
        }
        if e == ne {
            return;
        }
    }
    acc[sa * ne + e] += 1;
    acc[sb * ne + e] += 1;
}

/// `min(x, t)`.
#[inline]
pub fn capped(x: u32, t: u32) -> u32 {
    x.min(t)
}

/// The capped terrific query value from the two counts:
/// `min(#ᵗ inside, #ᵗ outside, t − #ᵗ annulus)`.
#[inline]
pub fn q_from_counts(count_r: u32, count_cr: u32, n: u32, t: u32) -> u32 {
    let inside = capped(count_r, t);
    let outside = capped(n - count_cr, t);
    let annulus = capped(count_cr - count_r, t);
    inside.min(outside).min(t - annulus)
}

/// Mean of the `t` largest values (as f64). Requires `values.len() >= t`.
pub fn top_t_mean(values: &mut [u32], t: usize) -> f64 {
    debug_assert!(values.len() >= t && t >= 1);
    let idx = t - 1;
    values.select_nth_unstable_by(idx, |a, b| b.cmp(a));
    let sum: u64 = values[..t].iter().map(|&v| v as u64).sum();
    sum as f64 / t as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_counts(points: &PointSet, r: f64) -> Vec<u32> {
        let r2 = r * r;
        (0..points.n())
            .map(|i| {
                (0..points.n())
                    .filter(|&j| dist2(points.point(i), points.point(j)) <= r2)
                    .count() as u32
            })
            .collect()
    }

    #[test]
    fn exact_counts_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(n, d) in &[(50usize, 2usize), (400, 3), (1500, 8)] {
            let m = DMatrix::from_fn(n, d, |_, _| {
                // Two lumps plus spread, to exercise all classifications.
                let lump = if rng.random::<f64>() < 0.5 { 0.0 } else { 20.0 };
                lump + rng.random::<f64>() * 4.0
            });
            let ps = PointSet::from_matrix(&m);
            let idx = BlockIndex::build(&ps);
            let edges = [0.5, 2.0, 7.0, 25.0, 100.0];
            let multi = idx.counts_multi(&edges);
            for (e, &r) in edges.iter().enumerate() {
                let brute = brute_counts(&ps, r);
                assert_eq!(multi.counts_at(e), &brute[..], "n={n} d={d} r={r}");
                assert_eq!(idx.counts_exact(r), brute, "n={n} d={d} r={r} single");
                let (lb, amb) = idx.count_bounds(r);
                for i in 0..n {
                    assert!(lb[i] <= brute[i] && brute[i] <= lb[i] + amb[i]);
                }
            }
        }
    }

    #[test]
    fn multi_counts_duplicate_points_and_zero_edge() {
        let m = DMatrix::from_row_slice(6, 1, &[1.0, 1.0, 1.0, 4.0, 4.0, 9.0]);
        let ps = PointSet::from_matrix(&m);
        let idx = BlockIndex::build(&ps);
        let multi = idx.counts_multi(&[0.0, 3.0, 8.0]);
        assert_eq!(multi.counts_at(0), &[3, 3, 3, 2, 2, 1]);
        assert_eq!(multi.counts_at(1), &[5, 5, 5, 5, 5, 1]);
        assert_eq!(multi.counts_at(2), &[6, 6, 6, 6, 6, 6]);
    }

    #[test]
    fn point_count_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = DMatrix::from_fn(600, 4, |_, _| rng.random::<f64>() * 10.0);
        let ps = PointSet::from_matrix(&m);
        let idx = BlockIndex::build(&ps);
        let q = vec![5.0, 5.0, 5.0, 5.0];
        for &r in &[0.1, 1.0, 3.0, 8.0, 30.0] {
            let brute = (0..ps.n())
                .filter(|&j| dist2(&q, ps.point(j)) <= r * r)
                .count() as u32;
            assert_eq!(idx.point_count(&q, r), brute);
            let (lb, ub) = idx.point_count_bounds(&q, r);
            assert!(lb <= brute && brute <= ub);
        }
    }

    #[test]
    fn top_t_mean_small() {
        let mut v = vec![1u32, 9, 3, 7];
        assert_eq!(top_t_mean(&mut v, 2), 8.0);
        let mut v2 = vec![4u32];
        assert_eq!(top_t_mean(&mut v2, 1), 4.0);
    }

    #[test]
    fn q_caps_and_partitions() {
        // 10 points at p, 10 far away; inside=10, outside=10, annulus=0, t=8.
        assert_eq!(q_from_counts(10, 10, 20, 8), 8);
        // all 20 inside: outside count 0.
        assert_eq!(q_from_counts(20, 20, 20, 8), 0);
        // one annulus point.
        assert_eq!(q_from_counts(10, 11, 20, 8), 7);
    }
}
