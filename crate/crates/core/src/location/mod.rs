//! Private cluster location: the capped terrific-ball query and radius
//! search, the full terrific-ball procedure, a private 1-cluster search, and
//! the grid-snapped location routine for Gaussian mixture data.

mod counts;

pub use counts::{capped, dist2_f32_quad, q_from_counts, top_t_mean, BlockIndex, MultiCounts, PointSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{AboveThreshold, BudgetLedger, PrivacyParams, SvtAnswer};
use crate::error::{Error, Result};
use crate::linalg::dist2;

/// A center point with a radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, x: &[f64]) -> bool {
        dist2(self.center.as_slice(), x) <= self.radius * self.radius
    }
}

/// How screening candidates are generated.
///
/// `Data` screens the dataset points themselves: utility-faithful, but the
/// candidate list depends on the data, so runs carry a ledger caveat. `Grid`
/// enumerates a data-independent cell grid and is used when the cell count
/// stays below `GRID_CANDIDATE_CAP`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CenterBackend {
    Data,
    Grid,
}

pub const GRID_CANDIDATE_CAP: usize = 200_000;

/// Parameters of the terrific-ball search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrificConfig {
    /// Candidate size: the ball must hold and exclude about `t` points.
    pub t: usize,
    /// Annulus factor (`> 1`).
    pub c: f64,
    /// Visit the radius grid from the largest radius down.
    pub largest: bool,
    pub radius_lo: f64,
    pub radius_hi: f64,
    /// Failure probability driving the accuracy slack Γ.
    pub beta: f64,
}

impl TerrificConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_lo > 0.0 && self.radius_lo < self.radius_hi) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < radius_lo < radius_hi, got [{}, {}]",
                self.radius_lo, self.radius_hi
            )));
        }
        if self.t < 1 {
            return Err(Error::InvalidArgument("t must be >= 1".into()));
        }
        if !(self.c > 1.0) {
            return Err(Error::InvalidArgument("c must be > 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidArgument("beta must be in (0,1)".into()));
        }
        Ok(())
    }

    /// `T = ⌈log₂(U/L)⌉ + 1`.
    pub fn num_queries(&self) -> usize {
        (self.radius_hi / self.radius_lo).log2().ceil() as usize + 1
    }

    /// Geometric grid `{L·2^i} ∩ [L, U)` plus `U`, reversed when `largest`.
    pub fn radius_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut r = self.radius_lo;
        while r < self.radius_hi {
            grid.push(r);
            r *= 2.0;
        }
        grid.push(self.radius_hi);
        if self.largest {
            grid.reverse();
        }
        grid
    }

    /// Accuracy slack `Γ = (16/ε)(ln T + ln(2/β))`; zero in zero-noise mode.
    pub fn gamma(&self, epsilon: f64) -> f64 {
        if epsilon.is_infinite() {
            return 0.0;
        }
        16.0 / epsilon * ((self.num_queries() as f64).ln() + (2.0 / self.beta).ln())
    }
}

/// The capped terrific-ball counting query
/// `Q_X(p, r) = min{#ᵗ(B(p,r)), #ᵗ(outside B(p,cr)), t − #ᵗ(annulus)}`
/// with the closed ball inside, half-open annulus `(r, cr]` and strict
/// outside. Sensitivity 1. Brute-force reference implementation.
pub fn terrific_query(points: &DMatrix<f64>, p: &DVector<f64>, r: f64, cfg: &TerrificConfig) -> u32 {
    let n = points.nrows() as u32;
    let t = cfg.t as u32;
    let (mut count_r, mut count_cr) = (0u32, 0u32);
    let r2 = r * r;
    let cr2 = (cfg.c * r) * (cfg.c * r);
    for i in 0..points.nrows() {
        let d2 = dist2(p.as_slice(), points.row(i).transpose().as_slice());
        if d2 <= r2 {
            count_r += 1;
        }
        if d2 <= cr2 {
            count_cr += 1;
        }
    }
    q_from_counts(count_r, count_cr, n, t)
}

/// The radius score `L_X(r)`: the mean of the `t` largest `Q_X(x, r)` over
/// `x ∈ X` (equivalently the max over t-subsets of the average query value).
/// Sensitivity 2.
pub fn score_l(points: &DMatrix<f64>, r: f64, cfg: &TerrificConfig) -> Result<f64> {
    if points.nrows() < cfg.t {
        return Err(Error::InsufficientData(format!(
            "score_l needs |X| >= t = {}, got {}",
            cfg.t,
            points.nrows()
        )));
    }
    let ps = PointSet::from_matrix(points);
    let idx = BlockIndex::build(&ps);
    let multi = idx.counts_multi(&[r, cfg.c * r]);
    Ok(terrific_score_from(
        multi.counts_at(0),
        multi.counts_at(1),
        cfg.t,
    ))
}

fn terrific_score_from(count_r: &[u32], count_cr: &[u32], t: usize) -> f64 {
    let n = count_r.len() as u32;
    let mut qs: Vec<u32> = count_r
        .iter()
        .zip(count_cr)
        .map(|(&a, &b)| q_from_counts(a, b, n, t as u32))
        .collect();
    top_t_mean(&mut qs, t)
}

/// The sweep's sorted edge list `{rᵢ} ∪ {c·rᵢ}` and, per radius, the edge
/// indices of `(r, c·r)`.
fn sweep_edges(grid: &[f64], c: f64) -> (Vec<f64>, Vec<(usize, usize)>) {
    let mut edges: Vec<f64> = grid.iter().flat_map(|&r| [r, c * r]).collect();
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();
    let pos = |v: f64| edges.iter().position(|&e| e == v).expect("edge present");
    let map = grid.iter().map(|&r| (pos(r), pos(c * r))).collect();
    (edges, map)
}

fn terrific_score_bounds(idx: &BlockIndex, r: f64, c: f64, t: usize) -> (f64, f64) {
    let (lb_r, amb_r) = idx.count_bounds(r);
    let (lb_cr, amb_cr) = idx.count_bounds(c * r);
    let n = lb_r.len() as u32;
    let tt = t as u32;
    let mut q_lo = Vec::with_capacity(lb_r.len());
    let mut q_hi = Vec::with_capacity(lb_r.len());
    for i in 0..lb_r.len() {
        let (a_lo, a_hi) = (lb_r[i], lb_r[i] + amb_r[i]);
        let (b_lo, b_hi) = (lb_cr[i], lb_cr[i] + amb_cr[i]);
        // Q is monotone up in count_r-given-annulus... bound each clause:
        // inside ∈ [a_lo, a_hi]; outside ∈ [n−b_hi, n−b_lo];
        // annulus ∈ [max(b_lo−a_hi,0), b_hi−a_lo].
        let ann_lo = b_lo.saturating_sub(a_hi);
        let ann_hi = b_hi - a_lo.min(b_hi);
        let lo = capped(a_lo, tt)
            .min(capped(n - b_hi, tt))
            .min(tt - capped(ann_hi, tt));
        let hi = capped(a_hi, tt)
            .min(capped(n - b_lo, tt))
            .min(tt - capped(ann_lo, tt));
        q_lo.push(lo);
        q_hi.push(hi);
    }
    (top_t_mean(&mut q_lo, t), top_t_mean(&mut q_hi, t))
}

fn in_count_score_from(count_r: &[u32], t: usize) -> f64 {
    let mut qs: Vec<u32> = count_r.iter().map(|&a| capped(a, t as u32)).collect();
    top_t_mean(&mut qs, t)
}

fn in_count_score_bounds(idx: &BlockIndex, r: f64, t: usize) -> (f64, f64) {
    let (lb, amb) = idx.count_bounds(r);
    let tt = t as u32;
    let mut lo: Vec<u32> = lb.iter().map(|&a| capped(a, tt)).collect();
    let mut hi: Vec<u32> = lb
        .iter()
        .zip(&amb)
        .map(|(&a, &m)| capped(a + m, tt))
        .collect();
    (top_t_mean(&mut lo, t), top_t_mean(&mut hi, t))
}

/// A certified SVT comparison: decide `score ≥ τ` from bounds, falling back
/// to the exact score only when the bounds straddle τ.
fn decide_from_bounds(
    tau: f64,
    bounds: (f64, f64),
    exact: impl FnOnce() -> f64,
) -> bool {
    let (lo, hi) = bounds;
    if lo >= tau {
        true
    } else if hi < tau {
        false
    } else {
        exact() >= tau
    }
}

/// Find a radius at which a near-terrific ball exists, by AboveThreshold
/// over the geometric radius grid at threshold `t − Γ`, sensitivity 2.
/// Returns `None` when the grid is exhausted.
///
/// Query values are decided from certified block bounds where possible; the
/// first undecided query triggers one exact multi-edge counting pass that
/// serves the rest of the sweep.
pub fn terrific_radius<R: Rng>(
    points: &DMatrix<f64>,
    cfg: &TerrificConfig,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<Option<f64>> {
    cfg.validate()?;
    if points.nrows() < cfg.t {
        return Err(Error::InsufficientData(format!(
            "terrific_radius needs |X| >= t = {}, got {}",
            cfg.t,
            points.nrows()
        )));
    }
    let ps = PointSet::from_matrix(points);
    let idx = BlockIndex::build(&ps);
    let grid = cfg.radius_grid();
    let (edges, edge_of) = sweep_edges(&grid, cfg.c);
    let mut cache: Option<MultiCounts> = None;
    let gamma = cfg.gamma(epsilon);
    let mut svt = AboveThreshold::new(
        cfg.t as f64 - gamma,
        2.0,
        epsilon,
        ledger,
        ChaCha8Rng::from_rng(rng),
    )?;
    for (gi, &r) in grid.iter().enumerate() {
        let answer = svt.process_with(|tau| {
            decide_from_bounds(tau, terrific_score_bounds(&idx, r, cfg.c, cfg.t), || {
                let multi = cache.get_or_insert_with(|| idx.counts_multi(&edges));
                let (er, ecr) = edge_of[gi];
                terrific_score_from(multi.counts_at(er), multi.counts_at(ecr), cfg.t)
            })
        })?;
        if answer == SvtAnswer::Above {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

/// Diagnostics of a terrific-ball attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrificDiagnostics {
    pub radius_found: Option<f64>,
    pub center_found: bool,
    pub candidates_scanned: usize,
}

/// The full terrific-ball procedure: radius search followed by candidate
/// screening with the (uncapped, sensitivity-1) terrific query at radius
/// `(1 + c/10)·r̃` and threshold `t`. The budget is split evenly between the
/// two AboveThreshold passes. Candidate ties break to the lowest index.
pub fn terrific_ball<R: Rng>(
    points: &DMatrix<f64>,
    cfg: &TerrificConfig,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<(Option<Ball>, TerrificDiagnostics)> {
    let half = pp.epsilon / 2.0;
    let radius = terrific_radius(points, cfg, half, ledger, rng)?;
    let Some(r_tilde) = radius else {
        return Ok((
            None,
            TerrificDiagnostics {
                radius_found: None,
                center_found: false,
                candidates_scanned: 0,
            },
        ));
    };
    let rho = (1.0 + cfg.c / 10.0) * r_tilde;
    ledger.record_caveat("terrific_ball.center_candidates(data)");
    let ps = PointSet::from_matrix(points);
    let idx = BlockIndex::build(&ps);
    let n = points.nrows() as u32;
    let t = cfg.t as u32;

    // Batched block-certified bounds over all data-point candidates.
    let (lb_r, amb_r) = idx.count_bounds(rho);
    let (lb_cr, amb_cr) = idx.count_bounds(cfg.c * rho);

    let mut svt = AboveThreshold::new(
        cfg.t as f64,
        1.0,
        half,
        ledger,
        ChaCha8Rng::from_rng(rng),
    )?;
    let mut scanned = 0usize;
    for i in 0..points.nrows() {
        scanned += 1;
        let answer = svt.process_with(|tau| {
            let (a_lo, a_hi) = (lb_r[i], lb_r[i] + amb_r[i]);
            let (b_lo, b_hi) = (lb_cr[i], lb_cr[i] + amb_cr[i]);
            let q_lo = eq_query(a_lo, b_hi, n, t);
            let q_hi = eq_query(a_hi, b_lo, n, t);
            decide_from_bounds(tau, (q_lo, q_hi), || {
                let p = ps.point(i);
                let a = idx.point_count(p, rho);
                let b = idx.point_count(p, cfg.c * rho);
                eq_query(a, b, n, t)
            })
        })?;
        if answer == SvtAnswer::Above {
            return Ok((
                Some(Ball {
                    center: points.row(i).transpose(),
                    radius: rho,
                }),
                TerrificDiagnostics {
                    radius_found: Some(r_tilde),
                    center_found: true,
                    candidates_scanned: scanned,
                },
            ));
        }
    }
    Ok((
        None,
        TerrificDiagnostics {
            radius_found: Some(r_tilde),
            center_found: false,
            candidates_scanned: scanned,
        },
    ))
}

/// The uncapped screening query `min(in, out, t − annulus)` as f64 (it can
/// go negative).
fn eq_query(count_r: u32, count_cr: u32, n: u32, t: u32) -> f64 {
    let inside = count_r as f64;
    let outside = (n - count_cr.min(n)) as f64;
    let annulus = count_cr.saturating_sub(count_r) as f64;
    inside.min(outside).min(t as f64 - annulus)
}

/// Exact verifier of the terrific-ball definition with slack:
/// at least `t − slack` inside, at least `t − slack` outside the `c`-times
/// ball, at most `slack` in the annulus.
pub fn verify_terrific(
    points: &DMatrix<f64>,
    ball: &Ball,
    c: f64,
    t: usize,
    slack: f64,
) -> bool {
    let r2 = ball.radius * ball.radius;
    let cr2 = (c * ball.radius) * (c * ball.radius);
    let mut inside = 0usize;
    let mut within_cr = 0usize;
    for i in 0..points.nrows() {
        let d2 = dist2(ball.center.as_slice(), points.row(i).transpose().as_slice());
        if d2 <= r2 {
            inside += 1;
        }
        if d2 <= cr2 {
            within_cr += 1;
        }
    }
    let outside = points.nrows() - within_cr;
    let annulus = within_cr - inside;
    inside as f64 >= t as f64 - slack
        && outside as f64 >= t as f64 - slack
        && annulus as f64 <= slack
}

/// Diagnostics of a 1-cluster / PGLoc run.
#[derive(Debug, Clone, PartialEq)]
pub struct LocDiagnostics {
    pub radius_found: Option<f64>,
    pub center_found: bool,
    pub backend: CenterBackend,
    pub candidates_scanned: usize,
}

/// Private 1-cluster search: find a small ball holding at least ~t points.
///
/// Radius search: AboveThreshold over `{0} ∪ {L·2^i} ∪ {U}` on the top-t mean
/// of capped in-counts (sensitivity 2, threshold `t − Γ`). Center search:
/// AboveThreshold over candidates on the in-count at the found radius
/// (sensitivity 1, threshold `t/2`). Budget: ε/2 each.
#[allow(clippy::too_many_arguments)]
pub fn one_cluster<R: Rng>(
    points: &DMatrix<f64>,
    t: usize,
    radius_lo: f64,
    radius_hi: f64,
    beta: f64,
    pp: PrivacyParams,
    backend: CenterBackend,
    grid_width: Option<f64>,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<(Option<Ball>, LocDiagnostics)> {
    if t == 0 || t > points.nrows() {
        return Err(Error::InsufficientData(format!(
            "one_cluster needs 1 <= t <= |X|, got t={t}, |X|={}",
            points.nrows()
        )));
    }
    if !(radius_lo > 0.0 && radius_lo < radius_hi) {
        return Err(Error::InvalidArgument("need 0 < radius_lo < radius_hi".into()));
    }
    let ps = PointSet::from_matrix(points);
    let idx = BlockIndex::build(&ps);
    let half = pp.epsilon / 2.0;

    // Radius pass.
    let mut grid = vec![0.0];
    let mut r = radius_lo;
    while r < radius_hi {
        grid.push(r);
        r *= 2.0;
    }
    grid.push(radius_hi);
    let num_queries = grid.len();
    let gamma = if half.is_infinite() {
        0.0
    } else {
        16.0 / half * ((num_queries as f64).ln() + (2.0 / beta).ln())
    };
    let mut cache: Option<MultiCounts> = None;
    let mut svt = AboveThreshold::new(
        t as f64 - gamma,
        2.0,
        half,
        ledger,
        ChaCha8Rng::from_rng(rng),
    )?;
    let mut r_tilde = None;
    for (gi, &r) in grid.iter().enumerate() {
        let answer = svt.process_with(|tau| {
            decide_from_bounds(tau, in_count_score_bounds(&idx, r, t), || {
                let multi = cache.get_or_insert_with(|| idx.counts_multi(&grid));
                in_count_score_from(multi.counts_at(gi), t)
            })
        })?;
        if answer == SvtAnswer::Above {
            r_tilde = Some(r);
            break;
        }
    }
    let Some(r_tilde) = r_tilde else {
        return Ok((
            None,
            LocDiagnostics {
                radius_found: None,
                center_found: false,
                backend,
                candidates_scanned: 0,
            },
        ));
    };

    // Center pass.
    let threshold = t as f64 / 2.0;
    let mut svt = AboveThreshold::new(
        threshold,
        1.0,
        half,
        ledger,
        ChaCha8Rng::from_rng(rng),
    )?;
    let mut scanned = 0usize;
    let effective_backend = match backend {
        CenterBackend::Grid => {
            let feasible = grid_candidate_count(points, grid_width, r_tilde)
                .is_some_and(|count| count <= GRID_CANDIDATE_CAP);
            if feasible {
                CenterBackend::Grid
            } else {
                ledger.record_caveat("one_cluster.grid_infeasible.fallback(data)");
                CenterBackend::Data
            }
        }
        CenterBackend::Data => CenterBackend::Data,
    };
    match effective_backend {
        CenterBackend::Data => {
            ledger.record_caveat("one_cluster.center_candidates(data)");
            // Exact per-candidate counts at r̃ may already sit in the sweep
            // cache; otherwise fall back to bounds plus per-point queries.
            let grid_idx = grid.iter().position(|&g| g == r_tilde).unwrap_or(0);
            let cached: Option<&[u32]> = cache.as_ref().map(|m| m.counts_at(grid_idx));
            let (lb, amb) = match cached {
                Some(_) => (Vec::new(), Vec::new()),
                None => idx.count_bounds(r_tilde),
            };
            for i in 0..points.nrows() {
                scanned += 1;
                let answer = svt.process_with(|tau| match cached {
                    Some(counts) => counts[i] as f64 >= tau,
                    None => decide_from_bounds(
                        tau,
                        (lb[i] as f64, (lb[i] + amb[i]) as f64),
                        || idx.point_count(ps.point(i), r_tilde) as f64,
                    ),
                })?;
                if answer == SvtAnswer::Above {
                    return Ok((
                        Some(Ball {
                            center: points.row(i).transpose(),
                            radius: r_tilde,
                        }),
                        LocDiagnostics {
                            radius_found: Some(r_tilde),
                            center_found: true,
                            backend: effective_backend,
                            candidates_scanned: scanned,
                        },
                    ));
                }
            }
        }
        CenterBackend::Grid => {
            // Cell centers sit up to w·√d/2 off the optimal center; screen
            // and return at the correspondingly inflated radius.
            let w = grid_width.unwrap_or(r_tilde.max(radius_lo));
            let r_test = r_tilde + w * (points.ncols() as f64).sqrt() / 2.0;
            for cell in GridCells::new(points, w, r_test) {
                scanned += 1;
                let answer = svt.process_with(|tau| {
                    let (lo, hi) = idx.point_count_bounds(&cell, r_test);
                    decide_from_bounds(tau, (lo as f64, hi as f64), || {
                        idx.point_count(&cell, r_test) as f64
                    })
                })?;
                if answer == SvtAnswer::Above {
                    return Ok((
                        Some(Ball {
                            center: DVector::from_vec(cell),
                            radius: r_test,
                        }),
                        LocDiagnostics {
                            radius_found: Some(r_tilde),
                            center_found: true,
                            backend: effective_backend,
                            candidates_scanned: scanned,
                        },
                    ));
                }
            }
        }
    }
    Ok((
        None,
        LocDiagnostics {
            radius_found: Some(r_tilde),
            center_found: false,
            backend: effective_backend,
            candidates_scanned: scanned,
        },
    ))
}

fn grid_candidate_count(points: &DMatrix<f64>, width: Option<f64>, r: f64) -> Option<usize> {
    let w = width.unwrap_or(r);
    if !(w > 0.0) {
        return None;
    }
    let d = points.ncols();
    let mut cells: usize = 1;
    for j in 0..d {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..points.nrows() {
            lo = lo.min(points[(i, j)]);
            hi = hi.max(points[(i, j)]);
        }
        let span = ((hi - lo) / w).ceil() as usize + 1;
        cells = cells.checked_mul(span)?;
        if cells > GRID_CANDIDATE_CAP {
            return Some(cells);
        }
    }
    Some(cells)
}

/// Lexicographic enumeration of grid cell centers covering the data's
/// bounding box (inflated by r on each side) at the given cell width.
struct GridCells {
    lo: Vec<f64>,
    width: f64,
    counts: Vec<usize>,
    cursor: Vec<usize>,
    done: bool,
}

impl GridCells {
    fn new(points: &DMatrix<f64>, width: f64, r: f64) -> Self {
        let d = points.ncols();
        let mut lo = vec![0.0; d];
        let mut counts = vec![0usize; d];
        for j in 0..d {
            let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..points.nrows() {
                a = a.min(points[(i, j)]);
                b = b.max(points[(i, j)]);
            }
            lo[j] = a - r;
            counts[j] = (((b + r) - (a - r)) / width).ceil() as usize + 1;
        }
        Self {
            lo,
            width,
            counts,
            cursor: vec![0; d],
            done: false,
        }
    }
}

impl Iterator for GridCells {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.done {
            return None;
        }
        let cell: Vec<f64> = self
            .cursor
            .iter()
            .zip(&self.lo)
            .map(|(&c, &l)| l + (c as f64 + 0.5) * self.width)
            .collect();
        // Advance odometer.
        let mut j = self.cursor.len();
        loop {
            if j == 0 {
                self.done = true;
                break;
            }
            j -= 1;
            self.cursor[j] += 1;
            if self.cursor[j] < self.counts[j] {
                break;
            }
            self.cursor[j] = 0;
        }
        Some(cell)
    }
}

/// Private location for Gaussian mixture data: snap points to a conceptual
/// grid of width `λ = σ_min/10` (coordinate-wise rounding — the grid itself
/// is never materialized), run the 1-cluster search, and inflate the radius
/// by the discretization error `λ·√ℓ`.
pub fn pgloc<R: Rng>(
    points: &DMatrix<f64>,
    t: usize,
    pp: PrivacyParams,
    mean_radius: f64,
    sigma_min: f64,
    sigma_max: f64,
    beta: f64,
    backend: CenterBackend,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<(Option<Ball>, LocDiagnostics)> {
    let ell = points.ncols() as f64;
    let lambda = sigma_min / 10.0;
    let snapped = points.map(|x| (x / lambda).round() * lambda);
    let radius_hi = 2.0 * (mean_radius + 3.0 * ell.sqrt() * sigma_max) + 2.0 * lambda * ell.sqrt();
    let (ball, diag) = one_cluster(
        &snapped,
        t,
        lambda,
        radius_hi,
        beta,
        pp,
        backend,
        Some(lambda),
        ledger,
        rng,
    )?;
    Ok((
        ball.map(|b| Ball {
            center: b.center,
            radius: b.radius + lambda * ell.sqrt(),
        }),
        diag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg(t: usize, c: f64, lo: f64, hi: f64, largest: bool) -> TerrificConfig {
        TerrificConfig {
            t,
            c,
            largest,
            radius_lo: lo,
            radius_hi: hi,
            beta: 0.05,
        }
    }

    /// 1-D two-cluster instance: `n_a` points near 0, `n_b` near `gap`.
    fn two_cluster_line(n_a: usize, n_b: usize, gap: f64, sigma: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for _ in 0..n_a {
            let z: f64 = StandardNormal.sample(&mut rng);
            rows.push(sigma * z);
        }
        for _ in 0..n_b {
            let z: f64 = StandardNormal.sample(&mut rng);
            rows.push(gap + sigma * z);
        }
        DMatrix::from_vec(rows.len(), 1, rows)
    }

    #[test]
    fn terrific_query_examples() {
        // 10 points at origin, 10 at distance 100.
        let mut rows = vec![0.0; 10];
        rows.extend(vec![100.0; 10]);
        let points = DMatrix::from_vec(20, 1, rows);
        let c = cfg(8, 5.0, 0.1, 200.0, false);
        let p = DVector::from_vec(vec![0.0]);
        assert_eq!(terrific_query(&points, &p, 1.0, &c), 8);

        // All inside B(p, r): outside-count 0.
        let tight = DMatrix::from_vec(20, 1, vec![0.0; 20]);
        assert_eq!(terrific_query(&tight, &p, 1.0, &c), 0);

        // One annulus point.
        let mut rows = vec![0.0; 10];
        rows.push(2.0); // in (r, cr] = (1, 5]
        rows.extend(vec![100.0; 9]);
        let points = DMatrix::from_vec(20, 1, rows);
        assert_eq!(terrific_query(&points, &p, 1.0, &c), 7);
    }

    #[test]
    fn score_identical_points_is_zero() {
        let points = DMatrix::from_vec(10, 1, vec![3.0; 10]);
        let c = cfg(4, 5.0, 0.1, 10.0, false);
        assert_eq!(score_l(&points, 1.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn score_separating_radius_hits_t() {
        let points = two_cluster_line(50, 50, 1000.0, 1.0, 1);
        let c = cfg(40, 5.0, 0.25, 2000.0, false);
        // A radius covering one cluster with an empty annulus.
        let score = score_l(&points, 8.0, &c).unwrap();
        assert_eq!(score, 40.0);
    }

    #[test]
    fn score_undersize_errors() {
        let points = DMatrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]);
        let c = cfg(4, 5.0, 0.1, 10.0, false);
        assert!(matches!(
            score_l(&points, 1.0, &c),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn radius_grid_is_monotone_and_complete() {
        let c = cfg(1, 5.0, 1.0, 20.0, false);
        assert_eq!(c.radius_grid(), vec![1.0, 2.0, 4.0, 8.0, 16.0, 20.0]);
        let rev = cfg(1, 5.0, 1.0, 20.0, true);
        assert_eq!(rev.radius_grid(), vec![20.0, 16.0, 8.0, 4.0, 2.0, 1.0]);
        // Exact power-of-two span keeps a single copy of U.
        let pow = cfg(1, 5.0, 1.0, 16.0, false);
        assert_eq!(pow.radius_grid(), vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    }

    #[test]
    fn terrific_radius_zero_noise_two_clusters() {
        let points = two_cluster_line(50, 50, 1000.0, 1.0, 2);
        let c = cfg(40, 5.0, 0.25, 2000.0, false);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = terrific_radius(&points, &c, f64::INFINITY, &mut ledger, &mut rng)
            .unwrap()
            .expect("radius");
        // Must separate: at most the gap, at least the cluster spread.
        assert!(r >= 2.0 && r <= 200.0, "r = {r}");
    }

    #[test]
    fn terrific_radius_single_cluster_abstains() {
        let points = two_cluster_line(100, 0, 0.0, 1.0, 4);
        let c = cfg(40, 5.0, 0.25, 2000.0, false);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = terrific_radius(&points, &c, f64::INFINITY, &mut ledger, &mut rng).unwrap();
        assert_eq!(r, None);
    }

    #[test]
    fn terrific_ball_zero_noise_verifies() {
        let points = two_cluster_line(50, 50, 1000.0, 1.0, 6);
        let c = cfg(40, 5.0, 0.25, 2000.0, false);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (ball, diag) = terrific_ball(
            &points,
            &c,
            PrivacyParams::non_private(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        let ball = ball.expect("ball");
        assert!(diag.center_found);
        assert!(verify_terrific(&points, &ball, 5.0, 40, 0.0));
        assert!(ball.radius <= (1.0 + 0.5) * diag.radius_found.unwrap() + 1e-12);
    }

    #[test]
    fn terrific_ball_tie_breaks_to_lowest_index() {
        // Symmetric two-point dataset {−a, +a}, t = 1: both points admit a
        // terrific ball; the first candidate (index 0) must win.
        let points = DMatrix::from_vec(2, 1, vec![-5.0, 5.0]);
        let c = cfg(1, 5.0, 0.1, 40.0, false);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (ball, _) = terrific_ball(
            &points,
            &c,
            PrivacyParams::non_private(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(ball.unwrap().center[0], -5.0);
    }

    #[test]
    fn one_cluster_identical_points_fires_at_zero_radius() {
        let points = DMatrix::from_vec(20, 2, vec![7.0; 40]);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (ball, _) = one_cluster(
            &points,
            10,
            0.5,
            100.0,
            0.05,
            PrivacyParams::non_private(),
            CenterBackend::Data,
            None,
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        let ball = ball.unwrap();
        assert_eq!(ball.radius, 0.0);
        assert_eq!(ball.center[0], 7.0);
    }

    #[test]
    fn pgloc_identical_points_pure_discretization_radius() {
        let ell = 4usize;
        let points = DMatrix::from_vec(12, ell, vec![1.04; 48]);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (ball, _) = pgloc(
            &points,
            6,
            PrivacyParams::non_private(),
            10.0,
            1.0,
            1.0,
            0.05,
            CenterBackend::Data,
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        let ball = ball.unwrap();
        let lambda = 0.1;
        assert!((ball.radius - lambda * (ell as f64).sqrt()).abs() < 1e-12);
        // Center snapped to the grid.
        assert!((ball.center[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pgloc_two_clusters_lands_on_one() {
        let points = two_cluster_line(60, 200, 500.0, 1.0, 11);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (ball, _) = pgloc(
            &points,
            30,
            PrivacyParams::non_private(),
            600.0,
            1.0,
            1.0,
            0.05,
            CenterBackend::Data,
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        let ball = ball.unwrap();
        // Cross-label purity: all covered points from a single cluster.
        let mut covered_small = 0;
        let mut covered_big = 0;
        for i in 0..points.nrows() {
            if ball.contains(points.row(i).transpose().as_slice()) {
                if i < 60 {
                    covered_small += 1;
                } else {
                    covered_big += 1;
                }
            }
        }
        assert!(covered_small == 0 || covered_big == 0);
        assert!(covered_small + covered_big >= 15);
    }

    #[test]
    fn one_cluster_grid_backend_small_instance() {
        let points = DMatrix::from_vec(30, 1, vec![2.0; 30]);
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (ball, diag) = one_cluster(
            &points,
            10,
            0.5,
            8.0,
            0.05,
            PrivacyParams::non_private(),
            CenterBackend::Grid,
            Some(0.5),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(diag.backend, CenterBackend::Grid);
        let ball = ball.unwrap();
        assert!((ball.center[0] - 2.0).abs() <= 0.5);
    }
}
