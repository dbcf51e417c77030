//! Arithmetic patches, the exact (k, eps, E)-AP verifier, and finders that
//! place certified approximate patches on a single piece of `K`.
//!
//! A patch is `P = { t + Delta * sum_i x_i e_i : x_i = 0..k-1 }`. A set `Q` is a
//! (k, eps, E)-AP when `#Q = #P` and every point of `P` has a point of `Q`
//! within `eps * Delta`.
//!
//! Finders work in the level frame of the piece they use (coordinates scaled
//! by `2^j0`), because `2^-j0` underflows for the deep levels that small `eps`
//! requires. An [`EpsAP`] records the frame it is expressed in.

use serde::{Deserialize, Serialize};

use crate::construction::{Membership, SaitoLayout};
use crate::directions::{decode_tuple, encode_tuple, nearby_direction, orientation_tuple_at, RationalDirection};
use crate::error::{ApkError, Result};
use crate::geometry::{pow2, Orientation, Point};

/// Finder frames switch from true coordinates to the level frame above this level.
pub const FRAME_SHIFT_THRESHOLD: u64 = 200;

/// Containment tolerance used by the finders, relative to the piece size.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-12;

/// Safety factor applied to the direction-approximation target.
pub const SAFETY_FACTOR: f64 = 0.9;

/// Approximation target used when `eps = 0`: the direction must then be
/// rational, and the verifier decides.
const EXACT_TARGET: f64 = 1e-9;

/// Default cap on the tuple index a diamond finder may land on.
pub const DEFAULT_TUPLE_BUDGET: u128 = i64::MAX as u128;

#[derive(Debug, Clone, PartialEq)]
pub struct ArithmeticPatch {
    pub initial_point: Point,
    pub scale: f64,
    pub orientation: Orientation,
    pub size: usize,
}

impl ArithmeticPatch {
    pub fn new(initial_point: Point, scale: f64, orientation: Orientation, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(ApkError::invalid(format!("patch size must be >= 2, got {size}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(ApkError::invalid(format!("patch scale must be positive, got {scale}")));
        }
        if initial_point.dim() != orientation.dim() {
            return Err(ApkError::invalid("initial point and orientation differ in dimension"));
        }
        point_count(size, orientation.m())?;
        Ok(ArithmeticPatch { initial_point, scale, orientation, size })
    }

    pub fn m(&self) -> usize {
        self.orientation.m()
    }

    /// `k^m`.
    pub fn cardinality(&self) -> usize {
        point_count(self.size, self.m()).expect("checked at construction")
    }
}

fn point_count(k: usize, m: usize) -> Result<usize> {
    k.checked_pow(m as u32).filter(|&n| n <= 1 << 28).ok_or_else(|| ApkError::invalid(format!("patch with k = {k}, m = {m} is too large")))
}

/// All `k^m` patch points; `x_1` varies fastest.
pub fn patch_points(p: &ArithmeticPatch) -> Vec<Point> {
    let m = p.m();
    let k = p.size;
    let vectors = p.orientation.vectors();
    let mut out = Vec::with_capacity(p.cardinality());
    let mut x = vec![0usize; m];
    loop {
        let mut q = p.initial_point.clone();
        for (xi, e) in x.iter().zip(vectors) {
            if *xi > 0 {
                q = q.add_scaled(p.scale * *xi as f64, e);
            }
        }
        out.push(q);
        let mut i = 0;
        loop {
            if i == m {
                return out;
            }
            x[i] += 1;
            if x[i] < k {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    #[serde(with = "crate::io::f17")]
    pub worst_ratio: f64,
}

/// Checks `#Q = k^m` and `max_x min_y |x - y| / Delta <= eps` with no slack.
pub fn verify_eps_ap(q: &[Point], p: &ArithmeticPatch, eps: f64) -> Result<Verdict> {
    if !(0.0..1.0).contains(&eps) {
        return Err(ApkError::invalid(format!("eps must lie in [0, 1), got {eps}")));
    }
    if q.iter().any(|y| y.dim() != p.initial_point.dim()) {
        return Err(ApkError::invalid("Q and the patch differ in dimension"));
    }
    let worst = patch_points(p).iter().map(|x| q.iter().map(|y| x.dist(y)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    let worst_ratio = worst / p.scale;
    Ok(Verdict { pass: q.len() == p.cardinality() && worst_ratio <= eps, worst_ratio })
}

/// The point of `Q` nearest to the patch's initial point; ties go to the lowest index.
pub fn initial_point_of(q: &[Point], p: &ArithmeticPatch, eps: f64) -> Result<Point> {
    let mut best: Option<(f64, &Point)> = None;
    for y in q {
        let dist = y.dist(&p.initial_point);
        if best.map_or(true, |(b, _)| dist < b) {
            best = Some((dist, y));
        }
    }
    match best {
        Some((dist, y)) if dist / p.scale <= eps => Ok(y.clone()),
        _ => Err(ApkError::NoInitialPoint),
    }
}

/// A certified approximate patch: `Q`, its reference patch and tolerance.
///
/// Coordinates are stored in frame `frame_shift`: true coordinates are the
/// stored ones times `2^-frame_shift` (and likewise for `reference.scale`).
#[derive(Debug, Clone, PartialEq)]
pub struct EpsAP {
    pub points: Vec<Point>,
    pub reference: ArithmeticPatch,
    pub epsilon: f64,
    pub initial_point: Point,
    pub level: Option<u64>,
    pub worst_ratio: f64,
    pub frame_shift: i64,
}

impl EpsAP {
    /// Verifies `Q` against `P` and fills in the initial point.
    pub fn certify(points: Vec<Point>, reference: ArithmeticPatch, epsilon: f64, level: Option<u64>, frame_shift: i64) -> Result<Self> {
        let verdict = verify_eps_ap(&points, &reference, epsilon)?;
        if !verdict.pass {
            return Err(ApkError::CertificationFailed(format!(
                "worst ratio {} exceeds eps = {epsilon} (or #Q != k^m)",
                verdict.worst_ratio
            )));
        }
        let initial_point = initial_point_of(&points, &reference, epsilon)?;
        Ok(EpsAP { points, reference, epsilon, initial_point, level, worst_ratio: verdict.worst_ratio, frame_shift })
    }

    pub fn k(&self) -> usize {
        self.reference.size
    }

    pub fn m(&self) -> usize {
        self.reference.m()
    }

    /// `Delta` in true (unscaled) units.
    pub fn true_scale(&self) -> f64 {
        self.reference.scale * pow2(-self.frame_shift)
    }

    /// Points rescaled into frame `frame`.
    pub fn points_in_frame(&self, frame: i64) -> Vec<Point> {
        let s = pow2(frame - self.frame_shift);
        self.points.iter().map(|p| p.scale(s)).collect()
    }
}

/// Where a finder landed, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct FoundAp {
    pub ap: EpsAP,
    pub level: u64,
    pub directions: Vec<RationalDirection>,
}

fn check_k_eps(k: usize, eps: f64) -> Result<()> {
    if k < 3 {
        return Err(ApkError::invalid(format!("k must be >= 3, got {k}")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(ApkError::invalid(format!("eps must lie in [0, 1), got {eps}")));
    }
    Ok(())
}

fn target(budget_denominator: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        EXACT_TARGET
    } else {
        SAFETY_FACTOR * 2.0 * eps / budget_denominator
    }
}

/// Indexed rational approximation of a unit vector. With eps = 0 only an exact
/// hit can pass the verifier, so anything else fails before the costly ranking.
fn approximate(e: &Point, delta: f64, eps: f64) -> Result<RationalDirection> {
    let dir = nearby_direction(e, delta)?;
    if eps == 0.0 && dir.unit != *e {
        return Err(ApkError::CertificationFailed("eps = 0 needs a direction that is exactly rational in floating point".into()));
    }
    dir.indexed()
}

fn frame_for(level: u64) -> Result<i64> {
    let level = i64::try_from(level).map_err(|_| ApkError::Overflow("level does not fit a frame"))?;
    Ok(if level as u64 > FRAME_SHIFT_THRESHOLD { level } else { 0 })
}

/// Rescales level-frame points into `frame` and checks each lies on piece `level`.
fn place_and_check(layout: &SaitoLayout, level: u64, q_level: Vec<Point>, frame: i64) -> Result<Vec<Point>> {
    let level_i = level as i64;
    let hits = layout.contains_all(&q_level, level_i, CONTAINMENT_TOLERANCE, level)?;
    for (q, hit) in q_level.iter().zip(hits) {
        match hit {
            Some(Membership::Level(j)) if j == level => {}
            other => {
                return Err(ApkError::CertificationFailed(format!("point {:?} is not on piece {level} (membership {other:?})", q.coords())))
            }
        }
    }
    let s = pow2(frame - level_i);
    Ok(q_level.into_iter().map(|q| q.scale(s)).collect())
}

/// With eps = 0 the directions equal E exactly, so Q is the reference patch
/// itself, evaluated the same way the verifier does and mapped back to the
/// level frame by the power of two `s`; containment is still checked.
fn exact_points(reference: &ArithmeticPatch, s: f64) -> Vec<Point> {
    patch_points(reference).iter().map(|p| p.scale(1.0 / s)).collect()
}

/// A certified (k, eps, {e})-AP on the segment `T_j0` whose direction is
/// within `0.9 * 2 eps / (k - 1)` of `e`.
pub fn find_ap_in_saito(d: usize, e: &Point, k: usize, eps: f64) -> Result<FoundAp> {
    check_k_eps(k, eps)?;
    let layout = SaitoLayout::segments(d)?;
    if e.dim() != d {
        return Err(ApkError::invalid(format!("direction has dimension {}, expected {d}", e.dim())));
    }
    let xi = approximate(e, target((k - 1) as f64, eps), eps)?;
    let level = xi.index.expect("indexed by approximate");
    let frame = frame_for(level)?;

    // Level frame: T_j0 is centered at e_1 with half-width 1/4 and Delta = 1/(2(k-1)).
    let delta = 1.0 / (2.0 * (k - 1) as f64);
    let e1 = Point::axis(d, 0, 1.0);
    let coef: Vec<f64> = (0..k).map(|i| -0.25 + i as f64 * delta).collect();
    let s = pow2(frame - level as i64);
    let t = e1.add_scaled(-0.25, e).scale(s);
    let reference = ArithmeticPatch::new(t, delta * s, Orientation::new(vec![e.clone()])?, k)?;
    let q_level = if eps == 0.0 { exact_points(&reference, s) } else { coef.iter().map(|&c| e1.add_scaled(c, &xi.unit)).collect() };
    let points = place_and_check(&layout, level, q_level, frame)?;
    let ap = EpsAP::certify(points, reference, eps, Some(level), frame)?;
    Ok(FoundAp { ap, level, directions: vec![xi] })
}

/// How the diamond finder locates the tuple index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TupleSearch {
    /// Approximate each direction, then invert the pairing.
    Direct,
    /// Scan tuple indices from 0 (slow; for cross-validation at large eps).
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiamondSearch {
    pub strategy: TupleSearch,
    pub budget: u128,
}

impl Default for DiamondSearch {
    fn default() -> Self {
        DiamondSearch { strategy: TupleSearch::Direct, budget: DEFAULT_TUPLE_BUDGET }
    }
}

/// A certified (k, eps, E)-AP on the diamond `D_j0` whose directions
/// approximate the normalized `e_i` componentwise.
///
/// The lattice spacing along `xi_i` is proportional to `|e_i|`, and the
/// approximation target is `0.9 * 2 eps / ((k - 1) * sum_i |e_i|)`, which makes
/// `|P_x - Q_x| <= sum_i |coef_i| |e_i/|e_i| - xi_i|` at most `0.9 eps Delta`.
pub fn find_patch_in_diamond(d: usize, m: usize, e: &Orientation, k: usize, eps: f64, search: DiamondSearch) -> Result<FoundAp> {
    check_k_eps(k, eps)?;
    let layout = SaitoLayout::diamonds(d, m)?;
    if e.m() != m || e.dim() != d {
        return Err(ApkError::invalid(format!("orientation must have m = {m} vectors in R^{d}")));
    }
    let norms: Vec<f64> = e.vectors().iter().map(Point::norm).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let units: Vec<Point> = e.vectors().iter().zip(&norms).map(|(v, n)| v.scale(1.0 / n)).collect();
    let delta_target = target((k - 1) as f64 * norms.iter().sum::<f64>(), eps);

    let (level, dirs) = match search.strategy {
        TupleSearch::Direct => {
            let dirs = units.iter().map(|u| approximate(u, delta_target, eps)).collect::<Result<Vec<_>>>()?;
            let comps: Vec<u128> = dirs.iter().map(|x| x.index.expect("indexed") as u128).collect();
            let index = encode_tuple(&comps).map_err(|_| ApkError::TupleBudgetExceeded { index: u128::MAX, cap: search.budget })?;
            if index > search.budget {
                return Err(ApkError::TupleBudgetExceeded { index, cap: search.budget });
            }
            (index, dirs)
        }
        TupleSearch::Linear => linear_tuple_search(d, m, &units, delta_target, search.budget)?,
    };
    let level = u64::try_from(level).map_err(|_| ApkError::TupleBudgetExceeded { index: level, cap: search.budget })?;
    let piece = layout.piece(level, level as i64)?;
    let decoded: Vec<&Vec<i64>> = piece.directions.iter().map(|x| &x.integer_vector).collect();
    if decoded != dirs.iter().map(|x| &x.integer_vector).collect::<Vec<_>>() {
        return Err(ApkError::CertificationFailed(format!("tuple {level} does not decode to the chosen directions")));
    }
    let frame = frame_for(level)?;

    // Level frame: D_j0 is centered at e_1 with half-width 1/(4m).
    let delta = 1.0 / (2.0 * ((k - 1) * m) as f64 * max_norm);
    let mid = (k - 1) as f64 / 2.0;
    let e1 = Point::axis(d, 0, 1.0);
    let reference_level = ArithmeticPatch::new(e1.clone(), delta, e.clone(), k)?;
    let xs = lattice_indices(k, m);
    let coefs: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().zip(&norms).map(|(&xi, n)| (xi as f64 - mid) * delta * n).collect()).collect();
    let s = pow2(frame - level as i64);
    let t = e.vectors().iter().fold(reference_level.initial_point.clone(), |acc, v| acc.add_scaled(-mid * delta, v));
    let reference = ArithmeticPatch::new(t.scale(s), delta * s, e.clone(), k)?;
    let q_level = if eps == 0.0 {
        exact_points(&reference, s)
    } else {
        coefs.iter().map(|c| c.iter().zip(&dirs).fold(e1.clone(), |acc, (ci, xi)| acc.add_scaled(*ci, &xi.unit))).collect()
    };
    let points = place_and_check(&layout, level, q_level, frame)?;
    let ap = EpsAP::certify(points, reference, eps, Some(level), frame)?;
    Ok(FoundAp { ap, level, directions: dirs })
}

/// Multi-indices in patch order (`x_1` fastest).
fn lattice_indices(k: usize, m: usize) -> Vec<Vec<usize>> {
    let n = k.pow(m as u32);
    (0..n)
        .map(|mut c| {
            (0..m)
                .map(|_| {
                    let x = c % k;
                    c /= k;
                    x
                })
                .collect()
        })
        .collect()
}

fn linear_tuple_search(d: usize, m: usize, units: &[Point], delta: f64, budget: u128) -> Result<(u128, Vec<RationalDirection>)> {
    let mut index = 0u128;
    while index <= budget {
        // Skip quickly on components before materializing directions.
        let comps = decode_tuple(index, m)?;
        let tuple = orientation_tuple_at(d, m, index)?;
        debug_assert_eq!(comps.len(), tuple.directions.len());
        if tuple.directions.iter().zip(units).all(|(x, u)| x.unit.dist(u) < delta) {
            return Ok((index, tuple.directions));
        }
        index += 1;
    }
    Err(ApkError::TupleBudgetExceeded { index, cap: budget })
}

// JSON form: {"k","m","eps","scale","t","t_prime","orientation","Q","level","worst_ratio","frame_shift"}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpsApJson {
    k: usize,
    m: usize,
    #[serde(with = "crate::io::f17")]
    eps: f64,
    #[serde(with = "crate::io::f17")]
    scale: f64,
    #[serde(with = "crate::io::f17_vec")]
    t: Vec<f64>,
    #[serde(with = "crate::io::f17_vec")]
    t_prime: Vec<f64>,
    #[serde(with = "crate::io::f17_mat")]
    orientation: Vec<Vec<f64>>,
    #[serde(rename = "Q", with = "crate::io::f17_mat")]
    q: Vec<Vec<f64>>,
    level: Option<u64>,
    #[serde(with = "crate::io::f17")]
    worst_ratio: f64,
    #[serde(default)]
    frame_shift: i64,
}

impl Serialize for EpsAP {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EpsApJson {
            k: self.k(),
            m: self.m(),
            eps: self.epsilon,
            scale: self.reference.scale,
            t: self.reference.initial_point.coords().to_vec(),
            t_prime: self.initial_point.coords().to_vec(),
            orientation: self.reference.orientation.vectors().iter().map(|v| v.coords().to_vec()).collect(),
            q: self.points.iter().map(|p| p.coords().to_vec()).collect(),
            level: self.level,
            worst_ratio: self.worst_ratio,
            frame_shift: self.frame_shift,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EpsAP {
    /// Reads the stored fields as given; nothing is re-verified here.
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = EpsApJson::deserialize(de)?;
        let err = |e: ApkError| D::Error::custom(e.to_string());
        let orientation = Orientation::from_coords(&raw.orientation).map_err(err)?;
        if orientation.m() != raw.m {
            return Err(D::Error::custom(format!("orientation has {} vectors but m = {}", orientation.m(), raw.m)));
        }
        let reference = ArithmeticPatch::new(Point::new(raw.t).map_err(err)?, raw.scale, orientation, raw.k).map_err(err)?;
        let points = raw.q.into_iter().map(Point::new).collect::<Result<Vec<_>>>().map_err(err)?;
        Ok(EpsAP {
            points,
            reference,
            epsilon: raw.eps,
            initial_point: Point::new(raw.t_prime).map_err(err)?,
            level: raw.level,
            worst_ratio: raw.worst_ratio,
            frame_shift: raw.frame_shift,
        })
    }
}
