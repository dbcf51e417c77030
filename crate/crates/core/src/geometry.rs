//! Euclidean primitives: points, closed balls, segments and orientations.
//!
//! Every norm here is the Euclidean norm. Values are immutable once built.

use serde::{Deserialize, Serialize};

use crate::error::{ApkError, Result};

/// Largest orientation size for which binary combinations are enumerated.
pub const MAX_ORIENTATION_SIZE: usize = 20;

/// Relative pivot tolerance of the linear-independence test.
pub const INDEPENDENCE_TOLERANCE: f64 = 1e-10;

/// Exact power of two, saturating to `0.0` or `inf` outside the f64 range.
pub fn pow2(exp: i64) -> f64 {
    if exp > 1023 {
        f64::INFINITY
    } else if exp >= -1022 {
        f64::from_bits(((exp + 1023) as u64) << 52)
    } else if exp >= -1074 {
        f64::from_bits(1u64 << (exp + 1074))
    } else {
        0.0
    }
}

/// A point of R^d with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(ApkError::invalid("a point needs at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(ApkError::invalid(format!("non-finite coordinate in {coords:?}")));
        }
        Ok(Point(coords))
    }

    /// Builds a point without validation; callers guarantee finiteness.
    pub(crate) fn from_vec(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Point(coords)
    }

    pub fn origin(d: usize) -> Self {
        Point(vec![0.0; d])
    }

    /// The i-th standard basis vector scaled by `scale`.
    pub fn axis(d: usize, i: usize, scale: f64) -> Self {
        let mut v = vec![0.0; d];
        v[i] = scale;
        Point(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dist(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        let diff: Vec<f64> = self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect();
        norm(&diff)
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> Point {
        Point(self.0.iter().map(|a| a * s).collect())
    }

    /// `self + s * dir`
    pub fn add_scaled(&self, s: f64, dir: &Point) -> Point {
        Point(self.0.iter().zip(&dir.0).map(|(a, b)| a + s * b).collect())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Euclidean norm that stays accurate when the squares would under- or overflow.
pub fn norm(v: &[f64]) -> f64 {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 || !max.is_finite() {
        return max;
    }
    if (1e-150..1e150).contains(&max) {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let s: f64 = v.iter().map(|x| (x / max) * (x / max)).sum();
    max * s.sqrt()
}

/// Closed ball `{p : |p - center| <= radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(ApkError::invalid(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.dist(p) <= self.radius
    }
}

/// A closed segment `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPiece {
    pub endpoint_a: Point,
    pub endpoint_b: Point,
}

impl SegmentPiece {
    pub fn new(a: Point, b: Point) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(ApkError::invalid("segment endpoints differ in dimension"));
        }
        Ok(SegmentPiece { endpoint_a: a, endpoint_b: b })
    }

    pub fn length(&self) -> f64 {
        self.endpoint_a.dist(&self.endpoint_b)
    }

    pub fn midpoint(&self) -> Point {
        self.endpoint_a.add(&self.endpoint_b).scale(0.5)
    }

    /// Point at parameter `t` in `[0, 1]`.
    pub fn at(&self, t: f64) -> Point {
        let dv = self.endpoint_b.sub(&self.endpoint_a);
        self.endpoint_a.add_scaled(t, &dv)
    }

    pub fn distance_to(&self, p: &Point) -> f64 {
        let dv = self.endpoint_b.sub(&self.endpoint_a);
        let len2 = dv.dot(&dv);
        if len2 == 0.0 {
            return self.endpoint_a.dist(p);
        }
        let t = (p.sub(&self.endpoint_a).dot(&dv) / len2).clamp(0.0, 1.0);
        self.at(t).dist(p)
    }
}

/// Minimum distance between two segments (exact up to rounding).
pub fn segment_distance(s: &SegmentPiece, t: &SegmentPiece) -> f64 {
    let p = &s.endpoint_a;
    let q = &t.endpoint_a;
    let u = s.endpoint_b.sub(p);
    let v = t.endpoint_b.sub(q);
    let w = p.sub(q);
    let a = u.dot(&u);
    let b = u.dot(&v);
    let c = v.dot(&v);
    let d = u.dot(&w);
    let e = v.dot(&w);
    let denom = a * c - b * b;
    let mut best = f64::INFINITY;
    // Interior critical point, when the lines are not parallel.
    if denom > 1e-300 {
        let sc = (b * e - c * d) / denom;
        let tc = (a * e - b * d) / denom;
        if (0.0..=1.0).contains(&sc) && (0.0..=1.0).contains(&tc) {
            best = s.at(sc).dist(&t.at(tc));
        }
    }
    // Otherwise the minimum sits on a boundary: endpoint to segment.
    best = best
        .min(t.distance_to(&s.endpoint_a))
        .min(t.distance_to(&s.endpoint_b))
        .min(s.distance_to(&t.endpoint_a))
        .min(s.distance_to(&t.endpoint_b));
    best
}

/// Sub-segment of `s` lying in the closed ball `b`, or `None` if they are disjoint.
pub fn clip_segment_to_ball(s: &SegmentPiece, b: &Ball) -> Option<SegmentPiece> {
    let dv = s.endpoint_b.sub(&s.endpoint_a);
    let w = s.endpoint_a.sub(&b.center);
    let qa = dv.dot(&dv);
    if qa == 0.0 {
        return b.contains(&s.endpoint_a).then(|| s.clone());
    }
    let qb = 2.0 * w.dot(&dv);
    let qc = w.dot(&w) - b.radius * b.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable pair of roots.
    let q = -0.5 * (qb + qb.signum() * sq);
    let (mut r1, mut r2) = if q != 0.0 { (q / qa, qc / q) } else { (0.0, 0.0) };
    if qb == 0.0 {
        r1 = -sq / (2.0 * qa);
        r2 = sq / (2.0 * qa);
    }
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    let lo = lo.max(0.0);
    let hi = hi.min(1.0);
    if lo > hi {
        return None;
    }
    let a = if lo == 0.0 { s.endpoint_a.clone() } else { s.at(lo) };
    let bpt = if hi == 1.0 { s.endpoint_b.clone() } else { s.at(hi) };
    Some(SegmentPiece { endpoint_a: a, endpoint_b: bpt })
}

/// Minimum distance over distinct pairs.
pub fn min_pairwise_gap(points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(ApkError::InsufficientPoints { needed: 2, got: points.len() });
    }
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.min(p.dist(q));
        }
    }
    Ok(best)
}

/// Norms of all binary combinations `w_1 e_1 + ... + w_m e_m`, indexed by the mask `w`.
pub fn binary_combination_norms(vectors: &[Point]) -> Vec<f64> {
    let m = vectors.len();
    let d = vectors.first().map_or(0, Point::dim);
    let mut out = Vec::with_capacity(1 << m);
    let mut acc = vec![0.0; d];
    for mask in 0u32..(1u32 << m) {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (i, v) in vectors.iter().enumerate() {
            if mask & (1 << i) != 0 {
                acc.iter_mut().zip(v.coords()).for_each(|(a, x)| *a += x);
            }
        }
        out.push(norm(&acc));
    }
    out
}

/// A linearly independent tuple `E = {e_1, ..., e_m}` with cached `ell(E)` and `L(E)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Orientation {
    vectors: Vec<Point>,
    ell: f64,
    big_l: f64,
}

impl Orientation {
    pub fn new(vectors: Vec<Point>) -> Result<Self> {
        let m = vectors.len();
        if m == 0 {
            return Err(ApkError::invalid("orientation needs at least one vector"));
        }
        if m > MAX_ORIENTATION_SIZE {
            return Err(ApkError::invalid(format!("orientation size {m} exceeds the cap of {MAX_ORIENTATION_SIZE}")));
        }
        let d = vectors[0].dim();
        if vectors.iter().any(|v| v.dim() != d) {
            return Err(ApkError::invalid("orientation vectors differ in dimension"));
        }
        if m > d {
            return Err(ApkError::invalid(format!("orientation size {m} exceeds dimension {d}")));
        }
        check_independent(&vectors)?;
        let norms = binary_combination_norms(&vectors);
        let ell = norms[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let big_l = norms.iter().copied().fold(0.0, f64::max);
        Ok(Orientation { vectors, ell, big_l })
    }

    pub fn from_coords(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| Point::new(r.clone())).collect::<Result<_>>()?)
    }

    pub fn vectors(&self) -> &[Point] {
        &self.vectors
    }

    pub fn m(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    /// Minimum norm over the nonzero binary combinations.
    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Maximum norm over all binary combinations.
    pub fn big_l(&self) -> f64 {
        self.big_l
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        Orientation::from_coords(&rows).map_err(serde::de::Error::custom)
    }
}

/// Pivoted Gaussian elimination on the m x d matrix whose rows are `vectors`.
fn check_independent(vectors: &[Point]) -> Result<()> {
    let largest = vectors.iter().map(Point::norm).fold(0.0, f64::max);
    let threshold = INDEPENDENCE_TOLERANCE * largest;
    let mut rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.coords().to_vec()).collect();
    let m = rows.len();
    let d = rows[0].len();
    for k in 0..m {
        // Full pivoting over the remaining submatrix.
        let mut best = (k, 0, 0.0f64);
        for (i, row) in rows.iter().enumerate().skip(k) {
            for (j, x) in row.iter().enumerate() {
                if x.abs() > best.2 {
                    best = (i, j, x.abs());
                }
            }
        }
        if best.2 < threshold || best.2 == 0.0 {
            return Err(ApkError::LinearlyDependent { pivot: best.2, threshold });
        }
        rows.swap(k, best.0);
        let col = best.1;
        let pivot = rows[k][col];
        let pivot_row = rows[k].clone();
        for row in rows.iter_mut().skip(k + 1) {
            let f = row[col] / pivot;
            for j in 0..d {
                row[j] -= f * pivot_row[j];
            }
            row[col] = 0.0;
        }
        rows[k].iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(())
}

/// Solves the square system `a x = b` by partial pivoting; `None` when singular.
pub(crate) fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            let (top, rest) = a.split_at_mut(i);
            for (x, y) in rest[0][k..].iter_mut().zip(&top[k][k..]) {
                *x -= f * y;
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Gram matrix of a list of vectors.
pub(crate) fn gram(vectors: &[Point]) -> Vec<Vec<f64>> {
    vectors.iter().map(|u| vectors.iter().map(|v| u.dot(v)).collect()).collect()
}
