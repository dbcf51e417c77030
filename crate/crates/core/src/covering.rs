//! Covering and packing numbers.
//!
//! `N(E, r)` is the least number of sets of diameter at most `r` covering `E`.
//! Brackets pair a constructive cover (upper) with a certified `(> r)`-separated
//! subset (lower); a set of diameter `r` holds at most one point of such a
//! subset, so `lower <= N <= upper` always.
//!
//! Sets are closed, so a segment of length `L` needs the least `n` with
//! `n r >= L` (for `L > 0`) and a point needs one set.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{box_least_squares, Piece, SaitoSet};
use crate::error::{ApkError, Result};
use crate::geometry::{clip_segment_to_ball, gram, pow2, solve, Ball, Point, SegmentPiece};

/// Default net spacing for packing inputs is `r / NET_DIVISOR`.
pub const NET_DIVISOR: f64 = 4.0;

/// Default cap on net points (and cover cells) for one bracket.
pub const DEFAULT_COVER_BUDGET: u64 = 2_000_000;

/// Relative enlargement of packing spacings above `r`, so separation is strict.
const PACKING_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverBracket {
    pub lower: u64,
    pub upper: u64,
    #[serde(with = "crate::io::f17")]
    pub r: f64,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverOptions {
    /// Packing nets use spacing `r / net_divisor`.
    pub net_divisor: f64,
    /// Cap on net points and cover cells.
    pub budget: u64,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions { net_divisor: NET_DIVISOR, budget: DEFAULT_COVER_BUDGET }
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(ApkError::invalid(format!("r must be positive and finite, got {r}")));
    }
    Ok(())
}

/// Exact covering number of a segment of the given length.
pub fn cover_count_segment(length: f64, r: f64) -> Result<u64> {
    check_r(r)?;
    if !(length >= 0.0) || !length.is_finite() {
        return Err(ApkError::invalid(format!("length must be finite and >= 0, got {length}")));
    }
    if length == 0.0 {
        return Ok(1);
    }
    let q = (length / r).ceil();
    if q > 1e15 {
        return Err(ApkError::Overflow("counting cover intervals"));
    }
    let mut n = (q as u64).max(1);
    while n > 1 && (n - 1) as f64 * r >= length {
        n -= 1;
    }
    while (n as f64) * r < length {
        n += 1;
    }
    Ok(n)
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Uniform grid over point indices for radius queries.
struct Grid<'a> {
    points: &'a [Point],
    cell: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Point], cell: f64) -> Self {
        Grid { points, cell, map: HashMap::new() }
    }

    fn key(&self, p: &Point) -> Vec<i64> {
        p.coords().iter().map(|c| (c / self.cell).floor() as i64).collect()
    }

    fn insert(&mut self, i: usize) {
        let k = self.key(&self.points[i]);
        self.map.entry(k).or_default().push(i);
    }

    fn insert_all(&mut self) {
        for i in 0..self.points.len() {
            self.insert(i);
        }
    }

    /// Calls `f` on every stored index that may lie within `radius` of `p`.
    fn visit(&self, p: &Point, radius: f64, mut f: impl FnMut(usize)) {
        let reach = (radius / self.cell).ceil();
        let d = p.dim();
        let cells = (2.0 * reach + 1.0).powi(d as i32);
        if !cells.is_finite() || cells > self.map.len() as f64 {
            for idx in self.map.values() {
                idx.iter().for_each(|&i| f(i));
            }
            return;
        }
        let reach = reach as i64;
        let base = self.key(p);
        let mut off = vec![-reach; d];
        loop {
            let k: Vec<i64> = base.iter().zip(&off).map(|(b, o)| b + o).collect();
            if let Some(idx) = self.map.get(&k) {
                idx.iter().for_each(|&i| f(i));
            }
            let mut a = 0;
            loop {
                if a == d {
                    return;
                }
                off[a] += 1;
                if off[a] <= reach {
                    break;
                }
                off[a] = -reach;
                a += 1;
            }
        }
    }
}

/// Indices of a maximal `(> r)`-separated subset chosen by farthest-point
/// insertion starting from index 0; ties go to the lowest index.
pub fn packing_subset(points: &[Point], r: f64) -> Result<Vec<usize>> {
    check_r(r)?;
    if points.is_empty() {
        return Err(ApkError::InsufficientPoints { needed: 1, got: 0 });
    }
    let n = points.len();
    let mut grid = Grid::new(points, r);
    grid.insert_all();
    let mut dmin = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut heap: BinaryHeap<(Key, Reverse<usize>)> = (0..n).map(|i| (Key(f64::INFINITY), Reverse(i))).collect();
    let mut chosen = Vec::new();
    while let Some((Key(d), Reverse(i))) = heap.pop() {
        if taken[i] || d != dmin[i] {
            continue;
        }
        if d <= r {
            break;
        }
        taken[i] = true;
        chosen.push(i);
        let p = &points[i];
        let mut update = |j: usize| {
            if taken[j] || dmin[j] <= r {
                return;
            }
            let dj = p.dist(&points[j]);
            if dj < dmin[j] {
                dmin[j] = dj;
                heap.push((Key(dj), Reverse(j)));
            }
        };
        grid.visit(p, d, &mut update);
    }
    Ok(chosen)
}

/// Size of a greedy maximal `(> r)`-separated subset: a lower bound on `N(points, r)`.
pub fn packing_lower(points: &[Point], r: f64) -> Result<u64> {
    Ok(packing_subset(points, r)?.len() as u64)
}

/// True when every pair of points is more than `r` apart.
pub fn is_separated(points: &[Point], r: f64) -> bool {
    let mut grid = Grid::new(points, r.max(f64::MIN_POSITIVE));
    grid.insert_all();
    points.iter().enumerate().all(|(i, p)| {
        let mut ok = true;
        grid.visit(p, r, |j| ok &= j == i || p.dist(&points[j]) > r);
        ok
    })
}

/// Bracket for a finite point set: greedy packing below, greedy `r/2` balls above.
pub fn bracket_points(points: &[Point], r: f64) -> Result<CoverBracket> {
    let lower = packing_lower(points, r)?;
    // Every point lies within r/2 of a maximal (> r/2)-separated subset.
    let upper = packing_lower(points, r / 2.0)?;
    Ok(CoverBracket { lower, upper, r, description: "point set: farthest-point packings at r and r/2".into() })
}

/// `n` with `2^-(n+1) < R <= 2^-n`, by exact comparison with powers of two.
pub fn n_of(big_r: f64) -> Result<i64> {
    if !(big_r > 0.0) || !big_r.is_finite() {
        return Err(ApkError::invalid(format!("R must be positive and finite, got {big_r}")));
    }
    let mut n = (-big_r.log2()).floor() as i64;
    while !(big_r <= pow2(-n)) {
        n -= 1;
    }
    while !(pow2(-(n + 1)) < big_r) {
        n += 1;
    }
    Ok(n)
}

pub fn n_plus(big_r: f64) -> Result<i64> {
    Ok(n_of(big_r)?.max(0))
}

/// `1 + sum_{i >= n+(R)} 1/(r 2^(i+1)) = 1 + 1/(r 2^n+(R))`.
pub fn analytic_cover_bound(big_r: f64, r: f64) -> Result<f64> {
    check_r(r)?;
    if !(r < big_r) {
        return Err(ApkError::invalid(format!("need r < R, got r = {r}, R = {big_r}")));
    }
    Ok(1.0 + 1.0 / (r * pow2(n_plus(big_r)?)))
}

// ---------------------------------------------------------------------------
// Piece geometry helpers

/// The piece as a segment, when all of its axes are parallel.
fn as_segment(piece: &Piece) -> Option<SegmentPiece> {
    let first = &piece.directions[0].integer_vector;
    let parallel = piece.directions.iter().all(|x| x.integer_vector == *first || x.integer_vector.iter().zip(first).all(|(a, b)| *a == -b));
    if !parallel {
        return None;
    }
    let h = piece.half_width * piece.m() as f64;
    let u = &piece.directions[0].unit;
    Some(SegmentPiece { endpoint_a: piece.center.add_scaled(-h, u), endpoint_b: piece.center.add_scaled(h, u) })
}

/// Diagonal of the inverse Gram matrix, or `None` when the axes are dependent.
fn inverse_gram_diagonal(axes: &[Point]) -> Option<Vec<f64>> {
    let g = gram(axes);
    let m = axes.len();
    (0..m)
        .map(|i| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            solve(g.clone(), e).map(|x| x[i]).filter(|v| *v > 0.0)
        })
        .collect()
}

/// Parameter ranges of the piece that can reach the ball.
fn parameter_box(piece: &Piece, ball: &Ball) -> Vec<(f64, f64)> {
    let h = piece.half_width;
    let axes = piece.axis_points();
    let full = vec![(-h, h); axes.len()];
    let Some(diag) = inverse_gram_diagonal(&axes) else { return full };
    let w = ball.center.sub(&piece.center);
    let rhs: Vec<f64> = axes.iter().map(|u| u.dot(&w)).collect();
    let Some(t0) = solve(gram(&axes), rhs) else { return full };
    t0.iter()
        .zip(diag)
        .map(|(t, g)| {
            let reach = ball.radius * g.sqrt() * (1.0 + 1e-12) + 1e-15 * h;
            ((t - reach).max(-h), (t + reach).min(h))
        })
        .collect()
}

/// Orthonormal frame for a nondegenerate 2-dimensional piece.
struct PlaneFrame {
    origin: Point,
    b1: Point,
    b2: Point,
    /// Axis images in frame coordinates.
    a: [[f64; 2]; 2],
    h: f64,
}

impl PlaneFrame {
    fn new(piece: &Piece) -> Option<Self> {
        if piece.m() != 2 || as_segment(piece).is_some() {
            return None;
        }
        let u1 = &piece.directions[0].unit;
        let u2 = &piece.directions[1].unit;
        let b1 = u1.scale(1.0 / u1.norm());
        let perp = u2.add_scaled(-u2.dot(&b1), &b1);
        let pn = perp.norm();
        if pn < 1e-9 {
            return None;
        }
        let b2 = perp.scale(1.0 / pn);
        let a = [[u1.dot(&b1), u1.dot(&b2)], [u2.dot(&b1), u2.dot(&b2)]];
        Some(PlaneFrame { origin: piece.center.clone(), b1, b2, a, h: piece.half_width })
    }

    fn to2(&self, p: &Point) -> [f64; 2] {
        let w = p.sub(&self.origin);
        [w.dot(&self.b1), w.dot(&self.b2)]
    }

    fn from2(&self, q: [f64; 2]) -> Point {
        self.origin.add_scaled(q[0], &self.b1).add_scaled(q[1], &self.b2)
    }

    /// Parallelogram corners in order around the boundary.
    fn corners(&self) -> [[f64; 2]; 4] {
        let h = self.h;
        let c = |s1: f64, s2: f64| [h * (s1 * self.a[0][0] + s2 * self.a[1][0]), h * (s1 * self.a[0][1] + s2 * self.a[1][1])];
        [c(-1.0, -1.0), c(1.0, -1.0), c(1.0, 1.0), c(-1.0, 1.0)]
    }

    /// Parameters of a frame point.
    fn params(&self, q: [f64; 2]) -> [f64; 2] {
        let [[a11, a12], [a21, a22]] = self.a;
        // q = t1 (a11, a12) + t2 (a21, a22)
        let det = a11 * a22 - a21 * a12;
        [(q[0] * a22 - q[1] * a21) / det, (a11 * q[1] - a12 * q[0]) / det]
    }

    /// Disk cut from the ball by the piece's plane, in frame coordinates.
    fn disk(&self, ball: &Ball) -> Option<([f64; 2], f64)> {
        let c = self.to2(&ball.center);
        let foot = self.from2(c);
        let off = ball.center.dist(&foot);
        (off <= ball.radius).then(|| (c, (ball.radius * ball.radius - off * off).max(0.0).sqrt()))
    }
}

fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

fn project(poly: &[[f64; 2]], axis: [f64; 2]) -> (f64, f64) {
    poly.iter().map(|p| p[0] * axis[0] + p[1] * axis[1]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn edge_normals(poly: &[[f64; 2]]) -> impl Iterator<Item = [f64; 2]> + '_ {
    (0..poly.len()).map(move |i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        [a[1] - b[1], b[0] - a[0]]
    })
}

/// Convex polygons meet (touching counts, with slack `tol`).
fn polygons_meet(p: &[[f64; 2]], q: &[[f64; 2]], tol: f64) -> bool {
    edge_normals(p).chain(edge_normals(q)).all(|n| {
        let len = n[0].hypot(n[1]);
        if len == 0.0 {
            return true;
        }
        let n = [n[0] / len, n[1] / len];
        let (a0, a1) = project(p, n);
        let (b0, b1) = project(q, n);
        a0 <= b1 + tol && b0 <= a1 + tol
    })
}

/// Distance from `c` to a convex polygon listed counterclockwise or clockwise.
fn point_polygon_distance(c: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let cross = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let signs: Vec<f64> = (0..n).map(|i| cross(poly[i], poly[(i + 1) % n], c)).collect();
    if signs.iter().all(|&s| s >= 0.0) || signs.iter().all(|&s| s <= 0.0) {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let ac = [c[0] - a[0], c[1] - a[1]];
            let t = ((ab[0] * ac[0] + ab[1] * ac[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
            (ac[0] - t * ab[0]).hypot(ac[1] - t * ab[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Rotations and phase offsets tried for hexagonal covers and packings.
const LATTICE_ANGLES: [f64; 2] = [0.0, std::f64::consts::FRAC_PI_6];
const LATTICE_PHASES: [[f64; 2]; 4] = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]];

/// Points `phase + k1 v1 + k2 v2` of a triangular lattice with spacing `s`
/// (first basis vector along the x axis) inside the given box.
fn triangular_lattice(s: f64, phase: [f64; 2], lo: [f64; 2], hi: [f64; 2], mut f: impl FnMut([f64; 2])) {
    let dy = s * 3f64.sqrt() / 2.0;
    let off = [phase[0] * s + phase[1] * s / 2.0, phase[1] * dy];
    let k2_lo = ((lo[1] - off[1]) / dy).floor() as i64 - 1;
    let k2_hi = ((hi[1] - off[1]) / dy).ceil() as i64 + 1;
    for k2 in k2_lo..=k2_hi {
        let y = off[1] + k2 as f64 * dy;
        let x0 = off[0] + k2 as f64 * s / 2.0;
        let k1_lo = ((lo[0] - x0) / s).floor() as i64 - 1;
        let k1_hi = ((hi[0] - x0) / s).ceil() as i64 + 1;
        for k1 in k1_lo..=k1_hi {
            f([x0 + k1 as f64 * s, y]);
        }
    }
}

fn bbox(poly: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let (x0, x1) = project(poly, [1.0, 0.0]);
    let (y0, y1) = project(poly, [0.0, 1.0]);
    ([x0, y0], [x1, y1])
}

/// Hexagon cells of diameter `r` meeting both the parallelogram and the disk.
fn hex_cover_count(frame: &PlaneFrame, disk: ([f64; 2], f64), r: f64, budget: u64) -> Result<u64> {
    let a = 0.5 * r * (1.0 - 1e-12); // circumradius
    let corners = frame.corners();
    let (disk_c, disk_r) = disk;
    let scale = corners.iter().map(|p| p[0].abs().max(p[1].abs())).fold(disk_r, f64::max);
    let tol = 1e-12 * scale;
    let mut best = u64::MAX;
    for &angle in &LATTICE_ANGLES {
        // Rotate the problem by -angle; cells are pointy-top hexagons.
        let poly: Vec<[f64; 2]> = corners.iter().map(|p| rotate(*p, -angle)).collect();
        let dc = rotate(disk_c, -angle);
        let (mut lo, mut hi) = bbox(&poly);
        lo = [lo[0].max(dc[0] - disk_r), lo[1].max(dc[1] - disk_r)];
        hi = [hi[0].min(dc[0] + disk_r), hi[1].min(dc[1] + disk_r)];
        if lo[0] > hi[0] + tol || lo[1] > hi[1] + tol {
            return Ok(0);
        }
        let cells = ((hi[0] - lo[0]) / (1.5 * a) + 3.0) * ((hi[1] - lo[1]) / (1.5 * a) + 3.0);
        if cells > budget as f64 {
            return Err(ApkError::SamplingBudgetExceeded { needed: cells as u128, cap: budget });
        }
        let hexagon = |c: [f64; 2]| -> [[f64; 2]; 6] {
            std::array::from_fn(|k| {
                let t = std::f64::consts::FRAC_PI_6 + k as f64 * std::f64::consts::FRAC_PI_3;
                [c[0] + a * t.cos(), c[1] + a * t.sin()]
            })
        };
        let s = 3f64.sqrt() * a; // center spacing
        let expand = [lo[0] - a, lo[1] - a];
        let shrink = [hi[0] + a, hi[1] + a];
        for phase in LATTICE_PHASES {
            let mut count = 0u64;
            triangular_lattice(s, phase, expand, shrink, |c| {
                let hex = hexagon(c);
                if point_polygon_distance(dc, &hex) <= disk_r + tol && polygons_meet(&hex, &poly, tol) {
                    count += 1;
                }
            });
            best = best.min(count);
        }
    }
    Ok(best)
}

/// Parameter-box cells of diameter at most `r` that meet the ball.
fn cell_cover_count(piece: &Piece, ball: &Ball, r: f64, budget: u64) -> Result<u64> {
    let axes = piece.axis_points();
    let m = axes.len();
    let spread = (0..1usize << m)
        .map(|mask| {
            axes.iter()
                .enumerate()
                .fold(Point::origin(piece.dim()), |acc, (i, u)| acc.add_scaled(if mask >> i & 1 == 1 { 1.0 } else { -1.0 }, u))
                .norm()
        })
        .fold(0.0, f64::max);
    let side = r / spread * (1.0 - 1e-12);
    let bx = parameter_box(piece, ball);
    if bx.iter().any(|(lo, hi)| lo > hi) {
        return Ok(0);
    }
    let counts: Vec<u64> = bx.iter().map(|(lo, hi)| (((hi - lo) / side).ceil() as u64).max(1)).collect();
    let total = counts.iter().try_fold(1u128, |acc, &c| acc.checked_mul(c as u128)).unwrap_or(u128::MAX);
    if total > budget as u128 {
        return Err(ApkError::SamplingBudgetExceeded { needed: total, cap: budget });
    }
    let mut idx = vec![0u64; m];
    let mut count = 0;
    loop {
        let center_t: Vec<f64> = (0..m).map(|i| bx[i].0 + (idx[i] as f64 + 0.5) * side).collect();
        let center = piece.point_at(&center_t);
        let (dist, _) = box_least_squares(&center, &axes, side / 2.0, &ball.center);
        if dist <= ball.radius * (1.0 + 1e-12) {
            count += 1;
        }
        let mut k = 0;
        loop {
            if k == m {
                return Ok(count);
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Constructive cover size for one piece clipped to the ball (0 when disjoint).
fn piece_upper(piece: &Piece, ball: &Ball, r: f64, budget: u64) -> Result<u64> {
    if let Some(seg) = as_segment(piece) {
        return match clip_segment_to_ball(&seg, ball) {
            Some(c) => cover_count_segment(c.length(), r),
            None => Ok(0),
        };
    }
    if piece.distance_to(&ball.center) > ball.radius {
        return Ok(0);
    }
    if let Some(frame) = PlaneFrame::new(piece) {
        return match frame.disk(ball) {
            Some(disk) => Ok(hex_cover_count(&frame, disk, r, budget)?.max(1)),
            None => Ok(0),
        };
    }
    Ok(cell_cover_count(piece, ball, r, budget)?.max(1))
}

/// Axis-aligned bounding box of a piece.
fn piece_box(piece: &Piece) -> (Vec<f64>, Vec<f64>) {
    let d = piece.dim();
    let mut lo = piece.center.coords().to_vec();
    let mut hi = lo.clone();
    for (i, c) in piece.center.coords().iter().enumerate() {
        let spread: f64 = piece.directions.iter().map(|x| x.unit[i].abs()).sum::<f64>() * piece.half_width;
        lo[i] = c - spread;
        hi[i] = c + spread;
    }
    debug_assert_eq!(lo.len(), d);
    (lo, hi)
}

/// Smallest level `j*` such that pieces `j*..=J` together with the origin
/// have diameter at most `r`.
fn tail_start(set: &SaitoSet, r: f64) -> usize {
    let d = set.d();
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut start = set.pieces.len();
    for (i, p) in set.pieces.iter().enumerate().rev() {
        let (plo, phi) = piece_box(p);
        for a in 0..d {
            lo[a] = f64::min(lo[a], plo[a]);
            hi[a] = f64::max(hi[a], phi[a]);
        }
        let diam: f64 = lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt();
        if diam * (1.0 + 1e-12) > r {
            break;
        }
        start = i;
    }
    start
}

/// Candidate points of a clipped piece for a structured packing, in order.
fn structured_candidates(piece: &Piece, ball: &Ball, r: f64) -> Result<Vec<Point>> {
    if let Some(seg) = as_segment(piece) {
        let Some(c) = clip_segment_to_ball(&seg, ball) else { return Ok(vec![]) };
        let n = cover_count_segment(c.length(), r)?;
        if n == 1 {
            return Ok(vec![c.midpoint()]);
        }
        return Ok((0..n).map(|i| c.at(i as f64 / (n - 1) as f64)).collect());
    }
    if piece.distance_to(&ball.center) > ball.radius {
        return Ok(vec![]);
    }
    if let Some(frame) = PlaneFrame::new(piece) {
        let Some((dc, dr)) = frame.disk(ball) else { return Ok(vec![]) };
        let s = r * (1.0 + PACKING_MARGIN);
        let corners = frame.corners();
        let mut best: Vec<Point> = Vec::new();
        for &angle in &LATTICE_ANGLES {
            for phase in LATTICE_PHASES {
                let poly: Vec<[f64; 2]> = corners.iter().map(|p| rotate(*p, -angle)).collect();
                let rc = rotate(dc, -angle);
                let (lo, hi) = bbox(&poly);
                let lo = [lo[0].max(rc[0] - dr), lo[1].max(rc[1] - dr)];
                let hi = [hi[0].min(rc[0] + dr), hi[1].min(rc[1] + dr)];
                let mut pts = Vec::new();
                triangular_lattice(s, phase, lo, hi, |q| {
                    let q = rotate(q, angle);
                    let t = frame.params(q);
                    if t.iter().all(|x| x.abs() <= frame.h) {
                        let p = piece.point_at(&t);
                        if ball.contains(&p) {
                            pts.push(p);
                        }
                    }
                });
                if pts.len() > best.len() {
                    best = pts;
                }
            }
        }
        return Ok(best);
    }
    Ok(vec![])
}

/// Net of the piece clipped to the ball, spacing at most `spacing` along the piece.
fn clipped_net(piece: &Piece, ball: &Ball, spacing: f64, budget: u64, out: &mut Vec<Point>) -> Result<()> {
    if let Some(seg) = as_segment(piece) {
        let Some(c) = clip_segment_to_ball(&seg, ball) else { return Ok(()) };
        let n = (c.length() / spacing).ceil().max(1.0);
        if n + out.len() as f64 > budget as f64 {
            return Err(ApkError::SamplingBudgetExceeded { needed: n as u128 + out.len() as u128, cap: budget });
        }
        let n = n as u64;
        out.extend((0..=n).map(|i| c.at(i as f64 / n as f64)).filter(|p| ball.contains(p)));
        return Ok(());
    }
    if piece.distance_to(&ball.center) > ball.radius {
        return Ok(());
    }
    let m = piece.m();
    let step = spacing * (2.0 / m as f64).min(1.0);
    let bx = parameter_box(piece, ball);
    let counts: Vec<u64> = bx.iter().map(|(lo, hi)| ((hi - lo) / step).ceil().max(1.0) as u64 + 1).collect();
    let total = counts.iter().map(|&c| c as f64).product::<f64>();
    if total + out.len() as f64 > budget as f64 {
        return Err(ApkError::SamplingBudgetExceeded { needed: total as u128 + out.len() as u128, cap: budget });
    }
    let mut idx = vec![0u64; m];
    loop {
        let t: Vec<f64> = (0..m)
            .map(|i| {
                let (lo, hi) = bx[i];
                if counts[i] == 1 {
                    (lo + hi) / 2.0
                } else {
                    lo + (hi - lo) * idx[i] as f64 / (counts[i] - 1) as f64
                }
            })
            .collect();
        let p = piece.point_at(&t);
        if ball.contains(&p) {
            out.push(p);
        }
        let mut k = 0;
        loop {
            if k == m {
                return Ok(());
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Greedy `(> r)`-separated selection in the given order.
fn sequential_packing(candidates: &[Point], r: f64) -> Vec<usize> {
    let mut grid = Grid::new(candidates, r);
    let mut chosen = Vec::new();
    for (i, p) in candidates.iter().enumerate() {
        let mut ok = true;
        grid.visit(p, r, |j| ok &= p.dist(&candidates[j]) > r);
        if ok {
            grid.insert(i);
            chosen.push(i);
        }
    }
    chosen
}

/// Rigorous bracket on `N(B(x, R) ∩ K, r)`.
pub fn cover_bracket(set: &SaitoSet, ball: &Ball, r: f64) -> Result<CoverBracket> {
    cover_bracket_with(set, ball, r, CoverOptions::default())
}

pub fn cover_bracket_with(set: &SaitoSet, ball: &Ball, r: f64, opts: CoverOptions) -> Result<CoverBracket> {
    check_r(r)?;
    if ball.center.dim() != set.d() {
        return Err(ApkError::invalid("ball and set differ in dimension"));
    }
    if !(opts.net_divisor >= 1.0) {
        return Err(ApkError::invalid("net divisor must be >= 1"));
    }
    let origin_in = ball.contains(&Point::origin(set.d()));

    // Upper: per-piece covers, with the deep tail and the origin in one set.
    let counts = set.pieces.iter().map(|p| piece_upper(p, ball, r, opts.budget)).collect::<Result<Vec<u64>>>()?;
    let tail = tail_start(set, r);
    let head: u64 = counts[..tail].iter().sum();
    let tail_hit = origin_in || counts[tail..].iter().any(|&c| c > 0);
    let mut upper = head + tail_hit as u64;
    if head == 0 && !tail_hit {
        return Err(ApkError::invalid("the ball does not meet the set"));
    }
    if 2.0 * ball.radius <= r {
        upper = 1;
    }

    // Lower: best of a structured packing and a farthest-point packing of a net.
    let mut candidates = Vec::new();
    for p in &set.pieces {
        candidates.extend(structured_candidates(p, ball, r)?);
    }
    if origin_in {
        candidates.push(Point::origin(set.d()));
    }
    let structured = sequential_packing(&candidates, r).len() as u64;

    let mut net = Vec::new();
    for p in &set.pieces {
        clipped_net(p, ball, r / opts.net_divisor, opts.budget, &mut net)?;
    }
    if origin_in {
        net.push(Point::origin(set.d()));
    }
    let farthest = if net.is_empty() { 0 } else { packing_lower(&net, r)? };
    let lower = structured.max(farthest).max(1);

    if lower > upper {
        return Err(ApkError::InequalityViolated(format!("packing {lower} exceeds cover {upper} at r = {r}")));
    }
    Ok(CoverBracket {
        lower,
        upper,
        r,
        description: format!(
            "upper: per-piece covers over levels < {tail} plus one set for the tail and origin; \
             lower: max(structured packing {structured}, farthest-point packing {farthest} on a net of {} points)",
            net.len()
        ),
    })
}

/// One row of a covering sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "R", with = "crate::io::f17")]
    pub big_r: f64,
    #[serde(with = "crate::io::f17")]
    pub r: f64,
    pub lower: u64,
    pub upper: u64,
    #[serde(with = "crate::io::f17")]
    pub analytic_bound: f64,
}

pub const SWEEP_HEADER: [&str; 5] = ["R", "r", "lower", "upper", "analytic_bound"];

impl SweepRow {
    pub fn fields(&self) -> Vec<String> {
        use crate::io::fmt17;
        vec![fmt17(self.big_r), fmt17(self.r), self.lower.to_string(), self.upper.to_string(), fmt17(self.analytic_bound)]
    }
}

/// Brackets at `B(center, R)` for every `R` and `r = R / rho`, in input order.
pub fn cover_sweep(set: &SaitoSet, center: &Point, radii: &[f64], rhos: &[f64], opts: CoverOptions) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(f64, f64)> = radii.iter().flat_map(|&big_r| rhos.iter().map(move |&rho| (big_r, rho))).collect();
    jobs.par_iter()
        .map(|&(big_r, rho)| {
            if !(rho > 1.0) {
                return Err(ApkError::invalid(format!("ratio must exceed 1, got {rho}")));
            }
            let r = big_r / rho;
            let b = cover_bracket_with(set, &Ball::new(center.clone(), big_r)?, r, opts)?;
            Ok(SweepRow { big_r, r, lower: b.lower, upper: b.upper, analytic_bound: analytic_cover_bound(big_r, r)? })
        })
        .collect()
}
