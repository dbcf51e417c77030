//! The truncated set `K`: shrinking segments (or m-dimensional diamonds) whose
//! directions run through the fixed rational enumeration, plus the origin.
//!
//! Piece `j` is `{ 2^-j e_1 + sum_i t_i xi_ij : |t_i| <= 1/(m 2^(j+2)) }`; for
//! segments `m = 1`. Every piece projects onto the first axis inside
//! `[0.75, 1.25] * 2^-j`, so pieces at distinct levels are disjoint and a
//! point's level can be located from its first coordinate alone.
//!
//! Geometry can be produced in a scaled *frame*: coordinates in frame `f` are
//! the true coordinates multiplied by `2^f`. Power-of-two scaling is exact, so
//! deep pieces whose true coordinates would underflow are still representable.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::directions::{direction_at, RationalDirection};
use crate::directions::{enumerate_directions, enumerate_orientation_tuples, orientation_tuple_at};
use crate::error::{ApkError, Result};
use crate::geometry::{self, gram, pow2, Point, SegmentPiece};

/// Deepest level a materialized set may hold (dyadic sizes stay normal f64 values).
pub const MAX_MATERIALIZED_DEPTH: u64 = 1000;

/// Default cap on the number of sample points produced in one call.
pub const DEFAULT_SAMPLE_BUDGET: u64 = 20_000_000;

/// Largest m for which exact distances use the 3^m active-set enumeration.
const MAX_EXACT_M: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    Segment,
    Diamond,
}

/// One piece: `{center + sum_i t_i u_i : |t_i| <= half_width}` with unit axes `u_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub kind: PieceKind,
    pub level: u64,
    pub directions: Vec<RationalDirection>,
    pub center: Point,
    pub half_width: f64,
}

impl Piece {
    pub fn m(&self) -> usize {
        self.directions.len()
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn axes(&self) -> Vec<&Point> {
        self.directions.iter().map(|d| &d.unit).collect()
    }

    pub fn axis_points(&self) -> Vec<Point> {
        self.directions.iter().map(|d| d.unit.clone()).collect()
    }

    /// The point with parameters `t`.
    pub fn point_at(&self, t: &[f64]) -> Point {
        let mut c = self.center.coords().to_vec();
        for (ti, dir) in t.iter().zip(&self.directions) {
            for (x, u) in c.iter_mut().zip(dir.unit.coords()) {
                *x += ti * u;
            }
        }
        Point::from_vec(c)
    }

    /// Endpoints for a segment piece.
    pub fn segment(&self) -> Option<SegmentPiece> {
        (self.m() == 1)
            .then(|| SegmentPiece { endpoint_a: self.point_at(&[-self.half_width]), endpoint_b: self.point_at(&[self.half_width]) })
    }

    /// All `2^m` corners, sign pattern given by the bits of the corner index.
    pub fn vertices(&self) -> Vec<Point> {
        let m = self.m();
        (0..1usize << m)
            .map(|mask| {
                let t: Vec<f64> = (0..m).map(|i| if mask >> i & 1 == 1 { self.half_width } else { -self.half_width }).collect();
                self.point_at(&t)
            })
            .collect()
    }

    /// Largest distance from the center to a point of the piece.
    pub fn circumradius(&self) -> f64 {
        self.vertices().iter().map(|v| v.dist(&self.center)).fold(0.0, f64::max)
    }

    /// Range of the first coordinate over the piece.
    pub fn first_axis_range(&self) -> (f64, f64) {
        let spread: f64 = self.directions.iter().map(|d| d.unit[0].abs()).sum::<f64>() * self.half_width;
        (self.center[0] - spread, self.center[0] + spread)
    }

    /// True when the axes are linearly dependent (the piece is lower dimensional).
    pub fn is_degenerate(&self) -> bool {
        geometry::Orientation::new(self.axis_points()).is_err()
    }

    /// Euclidean distance from `p` to the piece, with the minimizing parameters.
    pub fn closest(&self, p: &Point) -> (f64, Vec<f64>) {
        box_least_squares(&self.center, &self.axis_points(), self.half_width, p)
    }

    pub fn distance_to(&self, p: &Point) -> f64 {
        self.closest(p).0
    }

    /// Parameter-grid net: steps at most `spacing`, covering radius at most `spacing`.
    pub fn sample(&self, spacing: f64, cap: u64) -> Result<Vec<Point>> {
        let per_axis = self.samples_per_axis(spacing)?;
        let total = (per_axis as u128).checked_pow(self.m() as u32).unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(ApkError::SamplingBudgetExceeded { needed: total, cap });
        }
        Ok(self.grid(per_axis))
    }

    /// Number of grid values per axis used by [`Piece::sample`].
    pub fn samples_per_axis(&self, spacing: f64) -> Result<u64> {
        if !(spacing > 0.0) {
            return Err(ApkError::invalid(format!("spacing must be positive, got {spacing}")));
        }
        let m = self.m() as f64;
        let step = spacing * (2.0 / m).min(1.0);
        let intervals = (2.0 * self.half_width / step).ceil().max(1.0);
        if intervals > 1e15 {
            return Err(ApkError::SamplingBudgetExceeded { needed: u128::MAX, cap: 0 });
        }
        Ok(intervals as u64 + 1)
    }

    fn grid(&self, per_axis: u64) -> Vec<Point> {
        let m = self.m();
        let n = per_axis as usize;
        let h = self.half_width;
        let vals: Vec<f64> = (0..n).map(|i| if n == 1 { 0.0 } else { -h + 2.0 * h * i as f64 / (n - 1) as f64 }).collect();
        let mut out = Vec::with_capacity(n.pow(m as u32));
        let mut idx = vec![0usize; m];
        loop {
            let t: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
            out.push(self.point_at(&t));
            let mut k = 0;
            loop {
                if k == m {
                    return out;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// min over |t_i| <= h of |center + sum t_i u_i - p|, by active-set enumeration.
pub(crate) fn box_least_squares(center: &Point, axes: &[Point], h: f64, p: &Point) -> (f64, Vec<f64>) {
    let m = axes.len();
    let w = p.sub(center);
    if m == 1 {
        let u = &axes[0];
        let uu = u.dot(u);
        let t = if uu > 0.0 { (w.dot(u) / uu).clamp(-h, h) } else { 0.0 };
        return (w.add_scaled(-t, u).norm(), vec![t]);
    }
    assert!(m <= MAX_EXACT_M, "exact piece distance supports m <= {MAX_EXACT_M}");
    let g = gram(axes);
    let rhs: Vec<f64> = axes.iter().map(|u| u.dot(&w)).collect();
    let mut best = (f64::INFINITY, vec![0.0; m]);
    let states = 3usize.pow(m as u32);
    for code in 0..states {
        // per axis: 0 free, 1 at -h, 2 at +h
        let mut c = code;
        let mut t = vec![0.0; m];
        let mut free = Vec::new();
        for (i, ti) in t.iter_mut().enumerate() {
            match c % 3 {
                0 => free.push(i),
                1 => *ti = -h,
                _ => *ti = h,
            }
            c /= 3;
        }
        if !free.is_empty() {
            let a: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| g[i][j]).collect()).collect();
            let b: Vec<f64> =
                free.iter().map(|&i| rhs[i] - (0..m).filter(|j| !free.contains(j)).map(|j| g[i][j] * t[j]).sum::<f64>()).collect();
            let Some(sol) = geometry::solve(a, b) else { continue };
            if sol.iter().any(|s| s.abs() > h * (1.0 + 1e-12)) {
                continue;
            }
            for (&i, s) in free.iter().zip(sol) {
                t[i] = s.clamp(-h, h);
            }
        }
        let mut r = w.clone();
        for (ti, u) in t.iter().zip(axes) {
            r = r.add_scaled(-ti, u);
        }
        let dist = r.norm();
        if dist < best.0 {
            best = (dist, t);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Segments,
    Diamonds,
}

/// Result of a membership query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Level(u64),
    Origin,
}

/// Recipe for the pieces of `K`, able to produce any level on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaitoLayout {
    pub d: usize,
    pub m: usize,
    pub mode: Mode,
}

impl SaitoLayout {
    pub fn segments(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(ApkError::invalid(format!("segment construction needs d >= 2, got {d}")));
        }
        Ok(SaitoLayout { d, m: 1, mode: Mode::Segments })
    }

    pub fn diamonds(d: usize, m: usize) -> Result<Self> {
        if d < 2 || m == 0 || m > d {
            return Err(ApkError::invalid(format!("diamond construction needs d >= 2 and 1 <= m <= d (d = {d}, m = {m})")));
        }
        if m > MAX_EXACT_M {
            return Err(ApkError::invalid(format!("diamond construction supports m <= {MAX_EXACT_M}")));
        }
        Ok(SaitoLayout { d, m, mode: Mode::Diamonds })
    }

    /// `2^(frame - j)`, the center offset of level `j`.
    pub fn center_scale(j: u64, frame: i64) -> f64 {
        pow2(frame - j as i64)
    }

    pub fn half_width(&self, j: u64, frame: i64) -> f64 {
        pow2(frame - j as i64 - 2) / self.m as f64
    }

    pub fn piece_from(&self, j: u64, directions: Vec<RationalDirection>, frame: i64) -> Piece {
        Piece {
            kind: match self.mode {
                Mode::Segments => PieceKind::Segment,
                Mode::Diamonds => PieceKind::Diamond,
            },
            level: j,
            directions,
            center: Point::axis(self.d, 0, Self::center_scale(j, frame)),
            half_width: self.half_width(j, frame),
        }
    }

    /// Piece `j` in the given frame.
    pub fn piece(&self, j: u64, frame: i64) -> Result<Piece> {
        let directions = match self.mode {
            Mode::Segments => vec![direction_at(self.d, j)?],
            Mode::Diamonds => orientation_tuple_at(self.d, self.m, j as u128)?.directions,
        };
        Ok(self.piece_from(j, directions, frame))
    }

    /// Membership in `K` truncated at `depth`, for a point given in `frame`
    /// with tolerance in the same units. Pieces are built on demand.
    pub fn contains(&self, p: &Point, frame: i64, tol: f64, depth: u64) -> Result<Option<Membership>> {
        locate(p, frame, tol, depth, |j| self.piece(j, frame))
    }

    /// Membership of several points, building each candidate piece once.
    pub fn contains_all(&self, points: &[Point], frame: i64, tol: f64, depth: u64) -> Result<Vec<Option<Membership>>> {
        let mut cache: HashMap<u64, Piece> = HashMap::new();
        points
            .iter()
            .map(|p| {
                locate(p, frame, tol, depth, |j| {
                    if let Some(piece) = cache.get(&j) {
                        return Ok(piece.clone());
                    }
                    let piece = self.piece(j, frame)?;
                    cache.insert(j, piece.clone());
                    Ok(piece)
                })
            })
            .collect()
    }
}

/// Levels whose first-axis range can come within `tol` of `x1`.
fn candidate_levels(x1: f64, frame: i64, tol: f64, depth: u64) -> Option<(u64, u64)> {
    if x1 + tol <= 0.0 {
        return None;
    }
    // 0.75 * 2^(f-j) <= x1 + tol  =>  j >= f - log2((x1 + tol) / 0.75)
    let lo = frame as f64 - ((x1 + tol) / 0.75).log2();
    let lo = (lo.ceil() - 1.0).max(0.0);
    // 1.25 * 2^(f-j) >= x1 - tol  =>  j <= f - log2((x1 - tol) / 1.25)
    let hi = if x1 - tol > 0.0 { (frame as f64 - ((x1 - tol) / 1.25).log2()).floor() + 1.0 } else { f64::INFINITY };
    if lo > depth as f64 || lo > hi {
        return None;
    }
    Some((lo as u64, hi.min(depth as f64) as u64))
}

const MAX_LOCATE_SCAN: u64 = 1_000_000;

fn locate(p: &Point, frame: i64, tol: f64, depth: u64, mut fetch: impl FnMut(u64) -> Result<Piece>) -> Result<Option<Membership>> {
    if !(tol >= 0.0) {
        return Err(ApkError::invalid(format!("tolerance must be >= 0, got {tol}")));
    }
    if let Some((lo, hi)) = candidate_levels(p[0], frame, tol, depth) {
        if hi - lo > MAX_LOCATE_SCAN {
            return Err(ApkError::invalid("tolerance too coarse: too many candidate levels"));
        }
        for j in lo..=hi {
            if fetch(j)?.distance_to(p) <= tol {
                return Ok(Some(Membership::Level(j)));
            }
        }
    }
    Ok((p.norm() <= tol).then_some(Membership::Origin))
}

/// A materialized truncation of `K` at depth `J`, in the unscaled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SaitoSet {
    pub layout: SaitoLayout,
    pub depth: u64,
    pub pieces: Vec<Piece>,
    pub includes_origin: bool,
}

/// Piece `j` of the segment construction: `2^-j e_1 +- 2^-(j+2) xi_j`.
pub fn build_segment(d: usize, j: u64) -> Result<SegmentPiece> {
    let layout = SaitoLayout::segments(d)?;
    Ok(layout.piece(j, 0)?.segment().expect("segment piece"))
}

pub fn build_saito_set(d: usize, depth: u64) -> Result<SaitoSet> {
    let layout = SaitoLayout::segments(d)?;
    check_depth(depth)?;
    let dirs = enumerate_directions(d, depth as usize + 1)?;
    let pieces = dirs.into_iter().enumerate().map(|(j, dir)| layout.piece_from(j as u64, vec![dir], 0)).collect();
    SaitoSet::assemble(layout, depth, pieces)
}

pub fn build_diamond_set(d: usize, m: usize, depth: u64) -> Result<SaitoSet> {
    let layout = SaitoLayout::diamonds(d, m)?;
    check_depth(depth)?;
    let tuples = enumerate_orientation_tuples(d, m, depth as usize + 1)?;
    let pieces = tuples.into_iter().enumerate().map(|(j, t)| layout.piece_from(j as u64, t.directions, 0)).collect();
    SaitoSet::assemble(layout, depth, pieces)
}

fn check_depth(depth: u64) -> Result<()> {
    if depth > MAX_MATERIALIZED_DEPTH {
        return Err(ApkError::invalid(format!("depth {depth} above {MAX_MATERIALIZED_DEPTH}; query deeper levels through SaitoLayout")));
    }
    Ok(())
}

impl SaitoSet {
    fn assemble(layout: SaitoLayout, depth: u64, pieces: Vec<Piece>) -> Result<Self> {
        let set = SaitoSet { layout, depth, pieces, includes_origin: true };
        set.check_disjoint()?;
        Ok(set)
    }

    /// Disjointness via the first-axis projections, which are ordered by level.
    fn check_disjoint(&self) -> Result<()> {
        for w in self.pieces.windows(2) {
            let (lo_prev, _) = w[0].first_axis_range();
            let (_, hi_next) = w[1].first_axis_range();
            if !(hi_next < lo_prev) {
                return Err(ApkError::ConstructionOverlap(w[0].level, w[1].level));
            }
        }
        if let Some(last) = self.pieces.last() {
            if !(last.first_axis_range().0 > 0.0) {
                return Err(ApkError::ConstructionOverlap(last.level, u64::MAX));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.layout.d
    }

    pub fn m(&self) -> usize {
        self.layout.m
    }

    pub fn mode(&self) -> Mode {
        self.layout.mode
    }

    /// Level of the piece holding `p` within `tol` (smallest level wins), else
    /// the origin marker when `|p| <= tol`.
    pub fn contains(&self, p: &Point, tol: f64) -> Result<Option<Membership>> {
        if p.dim() != self.d() {
            return Err(ApkError::invalid("point dimension does not match the set"));
        }
        locate(p, 0, tol, self.depth, |j| Ok(self.pieces[j as usize].clone()))
    }

    /// Net of every piece (step at most `spacing`) plus the origin.
    pub fn sample_points(&self, spacing: f64, cap: u64) -> Result<Vec<Point>> {
        let mut needed: u128 = 1;
        for p in &self.pieces {
            needed += (p.samples_per_axis(spacing)? as u128).pow(p.m() as u32);
        }
        if needed > cap as u128 {
            return Err(ApkError::SamplingBudgetExceeded { needed, cap });
        }
        let mut out = Vec::with_capacity(needed as usize);
        for p in &self.pieces {
            out.extend(p.sample(spacing, cap)?);
        }
        out.push(Point::origin(self.d()));
        Ok(out)
    }

    /// Sum of piece lengths (segments) or of the per-axis side products (diamonds).
    pub fn total_measure_parameter(&self) -> f64 {
        self.pieces.iter().map(|p| (2.0 * p.half_width).powi(p.m() as i32)).sum()
    }

    /// Radius of a ball about the origin containing the whole set.
    pub fn bounding_radius(&self) -> f64 {
        self.pieces.iter().map(|p| p.center.norm() + p.circumradius()).fold(0.0, f64::max)
    }
}

// JSON form: {"d", "m", "J", "mode", "pieces": [...], "origin": true}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaitoSetJson {
    d: usize,
    m: usize,
    #[serde(rename = "J")]
    depth: u64,
    #[serde(default)]
    mode: Option<Mode>,
    pieces: Vec<PieceJson>,
    origin: bool,
}

// Flat rather than an internally tagged enum: tagged enums buffer their
// content, which loses the exact number tokens kept by arbitrary_precision.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceJson {
    #[serde(rename = "type")]
    kind: PieceKind,
    j: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_mat")]
    endpoints: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec")]
    center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_mat")]
    dirs: Option<Vec<Vec<f64>>>,
    z: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_f17")]
    half_width: Option<f64>,
}

mod opt_f17 {
    use serde::{Deserializer, Serializer};
    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        crate::io::f17::serialize(x.as_ref().expect("skipped when none"), s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        crate::io::f17::deserialize(d).map(Some)
    }
}

mod opt_vec {
    use serde::{Deserializer, Serializer};
    pub fn serialize<S: Serializer>(x: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        crate::io::f17_vec::serialize(x.as_deref().expect("skipped when none"), s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        crate::io::f17_vec::deserialize(d).map(Some)
    }
}

mod opt_mat {
    use serde::{Deserializer, Serializer};
    pub fn serialize<S: Serializer>(x: &Option<Vec<Vec<f64>>>, s: S) -> Result<S::Ok, S::Error> {
        crate::io::f17_mat::serialize(x.as_deref().expect("skipped when none"), s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Vec<f64>>>, D::Error> {
        crate::io::f17_mat::deserialize(d).map(Some)
    }
}

impl Serialize for SaitoSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| match p.kind {
                PieceKind::Segment => {
                    let seg = p.segment().expect("segment piece");
                    PieceJson {
                        kind: PieceKind::Segment,
                        j: p.level,
                        endpoints: Some(vec![seg.endpoint_a.into_coords(), seg.endpoint_b.into_coords()]),
                        center: None,
                        dirs: None,
                        z: serde_json::json!(p.directions[0].integer_vector),
                        half_width: None,
                    }
                }
                PieceKind::Diamond => PieceJson {
                    kind: PieceKind::Diamond,
                    j: p.level,
                    endpoints: None,
                    center: Some(p.center.coords().to_vec()),
                    dirs: Some(p.directions.iter().map(|d| d.unit.coords().to_vec()).collect()),
                    z: serde_json::json!(p.directions.iter().map(|d| &d.integer_vector).collect::<Vec<_>>()),
                    half_width: Some(p.half_width),
                },
            })
            .collect();
        SaitoSetJson { d: self.d(), m: self.m(), depth: self.depth, mode: Some(self.mode()), pieces, origin: self.includes_origin }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SaitoSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = SaitoSetJson::deserialize(de)?;
        let mode = raw.mode.unwrap_or(match raw.pieces.first() {
            Some(PieceJson { kind: PieceKind::Diamond, .. }) => Mode::Diamonds,
            _ => Mode::Segments,
        });
        let layout = match mode {
            Mode::Segments => SaitoLayout::segments(raw.d),
            Mode::Diamonds => SaitoLayout::diamonds(raw.d, raw.m),
        }
        .map_err(D::Error::custom)?;
        if !raw.origin {
            return Err(D::Error::custom("origin must be included"));
        }
        if raw.pieces.len() as u64 != raw.depth + 1 {
            return Err(D::Error::custom(format!("expected {} pieces for J = {}", raw.depth + 1, raw.depth)));
        }
        let mut pieces = Vec::with_capacity(raw.pieces.len());
        for (idx, pj) in raw.pieces.into_iter().enumerate() {
            let j = pj.j;
            let zs: Vec<Vec<i64>> = match pj.kind {
                PieceKind::Segment => serde_json::from_value::<Vec<i64>>(pj.z.clone()).map(|z| vec![z]),
                PieceKind::Diamond => serde_json::from_value(pj.z.clone()),
            }
            .map_err(|e| D::Error::custom(format!("pieces[{idx}].z: {e}")))?;
            if j != idx as u64 {
                return Err(D::Error::custom(format!("pieces[{idx}]: level {j} out of order")));
            }
            let dirs = zs
                .into_iter()
                .map(|z| RationalDirection::new(z).and_then(RationalDirection::indexed))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| D::Error::custom(format!("pieces[{idx}].z: {e}")))?;
            let piece = layout.piece_from(j, dirs, 0);
            // Stored geometry must be exactly what the recipe produces.
            let consistent = match (pj.kind, piece.segment()) {
                (PieceKind::Segment, Some(seg)) => pj
                    .endpoints
                    .as_ref()
                    .is_some_and(|e| e.len() == 2 && e[0] == seg.endpoint_a.coords() && e[1] == seg.endpoint_b.coords()),
                (PieceKind::Diamond, _) => match (&pj.center, &pj.dirs, pj.half_width) {
                    (Some(center), Some(dirs), Some(half_width)) => {
                        *center == piece.center.coords()
                            && half_width == piece.half_width
                            && dirs.len() == piece.m()
                            && dirs.iter().zip(&piece.directions).all(|(a, b)| a.as_slice() == b.unit.coords())
                    }
                    _ => false,
                },
                _ => false,
            };
            if !consistent {
                return Err(D::Error::custom(format!("pieces[{idx}]: geometry does not match its level and directions")));
            }
            pieces.push(piece);
        }
        SaitoSet::assemble(layout, raw.depth, pieces).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::segment_distance;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn segment_examples() {
        let s = build_segment(2, 4).unwrap();
        assert_eq!(s.endpoint_a, pt(&[1.0 / 16.0, -1.0 / 64.0]));
        assert_eq!(s.endpoint_b, pt(&[1.0 / 16.0, 1.0 / 64.0]));

        let s = build_segment(2, 6).unwrap();
        assert_eq!(s.endpoint_a, pt(&[3.0 / 256.0, 0.0]));
        assert_eq!(s.endpoint_b, pt(&[5.0 / 256.0, 0.0]));
        assert_eq!(s.length(), 1.0 / 128.0);

        for d in 2..=4 {
            for j in [0u64, 3, 17, 40] {
                let s = build_segment(d, j).unwrap();
                assert_eq!(s.midpoint().norm(), pow2(-(j as i64)));
                assert!((s.length() - pow2(-(j as i64) - 1)).abs() <= 1e-15 * pow2(-(j as i64)));
            }
        }
        assert!(build_segment(1, 0).is_err());
    }

    #[test]
    fn saito_set_examples() {
        let k = build_saito_set(2, 0).unwrap();
        assert_eq!(k.pieces.len(), 1);
        assert_eq!(k.pieces[0].center, pt(&[1.0, 0.0]));
        assert_eq!(k.pieces[0].directions[0].integer_vector, vec![-1, -1]);
        assert!((k.pieces[0].segment().unwrap().length() - 0.5).abs() < 1e-15);

        let k = build_saito_set(2, 8).unwrap();
        assert_eq!(k.pieces.len(), 9);
        assert!(k.includes_origin);
        let segs: Vec<_> = k.pieces.iter().map(|p| p.segment().unwrap()).collect();
        for i in 0..segs.len() {
            assert!(segs[i].distance_to(&Point::origin(2)) > 0.0);
            for j in i + 1..segs.len() {
                assert!(segment_distance(&segs[i], &segs[j]) > 1e-12, "T_{i} meets T_{j}");
            }
        }
        let total: f64 = segs.iter().map(SegmentPiece::length).sum();
        assert!(total < 1.0);
    }

    #[test]
    fn pieces_stay_disjoint_to_depth_24() {
        for d in 2..=3 {
            let k = build_saito_set(d, 24).unwrap();
            for a in &k.pieces {
                for b in &k.pieces {
                    if a.level < b.level {
                        let gap = segment_distance(&a.segment().unwrap(), &b.segment().unwrap());
                        assert!(gap > 1e-12 * pow2(-(b.level as i64)), "levels {} {}", a.level, b.level);
                    }
                }
            }
        }
    }

    #[test]
    fn diamond_examples() {
        let seg = build_saito_set(2, 6).unwrap();
        let dia1 = build_diamond_set(2, 1, 6).unwrap();
        for (a, b) in seg.pieces.iter().zip(&dia1.pieces) {
            assert_eq!(a.center, b.center);
            assert_eq!(a.half_width, b.half_width);
            assert_eq!(a.directions, b.directions);
        }

        let dia = build_diamond_set(2, 2, 4).unwrap();
        assert_eq!(dia.pieces.len(), 5);
        let d0 = &dia.pieces[0];
        assert_eq!(d0.half_width, 1.0 / 8.0);
        assert_eq!(d0.center, pt(&[1.0, 0.0]));
        for j in 0..5u64 {
            let p = &dia.pieces[j as usize];
            // side length along each axis is 1 / (m 2^(j+1))
            assert_eq!(2.0 * p.half_width, 1.0 / (2.0 * pow2(j as i64 + 1)));
        }
        // D_3 uses the pair (xi_0, xi_2)
        assert_eq!(dia.pieces[3].directions[0].index, Some(0));
        assert_eq!(dia.pieces[3].directions[1].index, Some(2));
    }

    #[test]
    fn diameter_decay() {
        for (d, m) in [(2, 1), (2, 2), (3, 2), (3, 3)] {
            let k = build_diamond_set(d, m, 12).unwrap();
            for p in &k.pieces {
                for v in p.vertices() {
                    let off = v.dist(&p.center);
                    assert!(off <= pow2(-(p.level as i64) - 2) * (1.0 + 1e-12));
                }
            }
            assert!(k.bounding_radius() <= 1.25);
        }
    }

    #[test]
    fn membership_examples() {
        let k = build_saito_set(2, 8).unwrap();
        assert_eq!(k.contains(&Point::origin(2), 0.0).unwrap(), Some(Membership::Origin));
        let mid = k.pieces[5].center.clone();
        assert_eq!(k.contains(&mid, 0.0).unwrap(), Some(Membership::Level(5)));
        let tol = 1e-6;
        // displace orthogonally to the piece by 2 tol
        let u = &k.pieces[5].directions[0].unit;
        let normal = pt(&[-u[1], u[0]]);
        let off = mid.add_scaled(2.0 * tol, &normal);
        assert_eq!(k.contains(&off, tol).unwrap(), None);
        assert_eq!(k.contains(&off, 3.0 * tol).unwrap(), Some(Membership::Level(5)));
    }

    #[test]
    fn samples_lie_on_their_piece() {
        let k = build_diamond_set(2, 2, 5).unwrap();
        for p in &k.pieces {
            for q in p.sample(p.half_width / 3.0, 1 << 20).unwrap() {
                assert_eq!(k.contains(&q, 1e-15).unwrap(), Some(Membership::Level(p.level)));
            }
        }
        let seg = build_saito_set(3, 5).unwrap();
        for p in &seg.pieces {
            for q in p.sample(p.half_width / 5.0, 1 << 20).unwrap() {
                assert_eq!(seg.contains(&q, 1e-15).unwrap(), Some(Membership::Level(p.level)));
            }
        }
    }

    #[test]
    fn sample_net_sizes() {
        let k = build_saito_set(2, 0).unwrap();
        let t0 = &k.pieces[0];
        let pts = t0.sample(1.0 / 8.0, 1000).unwrap();
        assert_eq!(pts.len(), 5);
        let pts = t0.sample(1.0, 1000).unwrap();
        assert_eq!(pts.len(), 2);
        let seg = t0.segment().unwrap();
        assert!(pts.contains(&seg.endpoint_a) && pts.contains(&seg.endpoint_b));

        let dia = build_diamond_set(2, 2, 2).unwrap();
        let p = &dia.pieces[1];
        let spacing = 0.01;
        let n = (2.0 * p.half_width / spacing).ceil() as usize + 1;
        assert_eq!(p.sample(spacing, 1 << 20).unwrap().len(), n * n);
        assert!(matches!(dia.sample_points(1e-6, 1000), Err(ApkError::SamplingBudgetExceeded { .. })));
    }

    #[test]
    fn exact_distance_to_a_square() {
        let dia = build_diamond_set(2, 2, 3).unwrap();
        let p = &dia.pieces[3]; // orthogonal pair
        let h = p.half_width;
        // a point straight out from a face: distance equals the offset
        let u = &p.directions[0].unit;
        let face = p.point_at(&[h, 0.0]);
        let out = face.add_scaled(0.01, u);
        assert!((p.distance_to(&out) - 0.01).abs() < 1e-15);
        assert_eq!(p.distance_to(&p.center), 0.0);
    }

    #[test]
    fn deep_levels_in_a_scaled_frame() {
        let layout = SaitoLayout::segments(3).unwrap();
        let j = 600_000_000u64;
        let piece = layout.piece(j, j as i64).unwrap();
        assert_eq!(piece.center, pt(&[1.0, 0.0, 0.0]));
        assert_eq!(piece.half_width, 0.25);
        let q = piece.point_at(&[0.1]);
        assert_eq!(layout.contains(&q, j as i64, 1e-12, j).unwrap(), Some(Membership::Level(j)));
        assert_eq!(layout.contains(&q, j as i64, 1e-12, j - 1).unwrap(), None);
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        for set in [build_saito_set(3, 9).unwrap(), build_diamond_set(3, 2, 6).unwrap()] {
            let text = crate::io::to_json(&set).unwrap();
            let back: SaitoSet = crate::io::from_json(&text).unwrap();
            assert_eq!(back, set);
            assert_eq!(crate::io::to_json(&back).unwrap(), text);
        }
    }

    #[test]
    fn json_rejects_tampered_geometry() {
        let set = build_saito_set(2, 2).unwrap();
        let text = crate::io::to_json(&set).unwrap().replacen("6.2500000000000000e-1", "6.2500000000000011e-1", 1);
        let err = crate::io::from_json::<SaitoSet>(&text).unwrap_err();
        assert!(matches!(err, ApkError::Schema { .. }), "{err:?}");
    }
}
