//! Assouad-dimension evidence: local-exponent scans over covering brackets,
//! and finite-k lower-bound certificates built from approximate patches.
//!
//! A scan record at `(x, R, r)` reports `log N / log(R/r)` for both ends of the
//! bracket on `N(B(x, R) ∩ K, r)`, i.e. the exponent with constant `C = 1`.
//! Lower exponents are certified; upper exponents are evidence only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{Mode, SaitoLayout, SaitoSet};
use crate::covering::{analytic_cover_bound, cover_bracket_with, packing_lower, CoverOptions};
use crate::error::{ApkError, Result};
use crate::geometry::{min_pairwise_gap, pow2, Ball, Orientation, Point};
use crate::io::fmt17;
use crate::patches::{find_ap_in_saito, find_patch_in_diamond, verify_eps_ap, DiamondSearch, EpsAP};

/// Smallest ratio `R/r` admitted into a scan by default.
pub const DEFAULT_RHO_MIN: f64 = 16.0;

/// Slack, in units of the last place, allowed when comparing `C (R/r)^m` with
/// the packing count (the two agree exactly in exact arithmetic).
const CERTIFICATE_ULPS: f64 = 8.0;

/// `log(count) / log(R/r)`.
pub fn local_exponent(count: u64, big_r: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < big_r) {
        return Err(ApkError::invalid(format!("need 0 < r < R, got r = {r}, R = {big_r}")));
    }
    if count == 0 {
        return Err(ApkError::invalid("count must be >= 1"));
    }
    Ok((count as f64).ln() / (big_r / r).ln())
}

/// A scan center with the outer radii to try there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSite {
    #[serde(with = "crate::io::f17_vec")]
    pub center: Vec<f64>,
    #[serde(with = "crate::io::f17_vec")]
    pub radii: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub sites: Vec<ScanSite>,
    #[serde(with = "crate::io::f17_vec")]
    pub rhos: Vec<f64>,
    #[serde(with = "crate::io::f17")]
    pub rho_min: f64,
}

impl ScanPlan {
    /// Centers and radii following the case analysis for `K`.
    ///
    /// The origin is scanned at every dyadic `R = 2^-n`, `n = 0..=J`. For a
    /// segment `T_j` the endpoints carry the local regime (`R = 2^-(j+4)`, the
    /// ball meets `T_j` only) and the transition radii `2^-(j+3)`, `2^-(j+2)`;
    /// midpoints are scanned at `R = 2^-(j+1)` and `2^-j`, where the ball
    /// holds the whole piece. For diamonds the center and corners of `D_j` are
    /// scanned at `R = s_j` and `2 s_j` with `s_j` the side length.
    pub fn proof_guided(set: &SaitoSet, rhos: &[f64]) -> Result<Self> {
        Self::proof_guided_with(set, rhos, DEFAULT_RHO_MIN)
    }

    pub fn proof_guided_with(set: &SaitoSet, rhos: &[f64], rho_min: f64) -> Result<Self> {
        let d = set.d();
        let mut sites =
            vec![ScanSite { center: vec![0.0; d], radii: (0..=set.depth as i64).map(|n| pow2(-n)).collect(), label: "origin".into() }];
        for p in &set.pieces {
            let j = p.level as i64;
            match set.mode() {
                Mode::Segments => {
                    let seg = p.segment().expect("segment piece");
                    for (end, name) in [(&seg.endpoint_a, "a"), (&seg.endpoint_b, "b")] {
                        sites.push(ScanSite {
                            center: end.coords().to_vec(),
                            radii: vec![pow2(-(j + 4)), pow2(-(j + 3)), pow2(-(j + 2))],
                            label: format!("T{j}.{name}"),
                        });
                    }
                    sites.push(ScanSite {
                        center: seg.midpoint().into_coords(),
                        radii: vec![pow2(-(j + 1)), pow2(-j)],
                        label: format!("T{j}.mid"),
                    });
                }
                Mode::Diamonds => {
                    let side = 2.0 * p.half_width;
                    let radii = vec![side, 2.0 * side];
                    sites.push(ScanSite { center: p.center.coords().to_vec(), radii: radii.clone(), label: format!("D{j}.center") });
                    for (i, v) in p.vertices().into_iter().enumerate() {
                        sites.push(ScanSite { center: v.into_coords(), radii: radii.clone(), label: format!("D{j}.v{i}") });
                    }
                }
            }
        }
        Self::new(sites, rhos, rho_min)
    }

    pub fn new(sites: Vec<ScanSite>, rhos: &[f64], rho_min: f64) -> Result<Self> {
        if rhos.is_empty() {
            return Err(ApkError::invalid("scan needs at least one ratio"));
        }
        if !(rho_min > 1.0) {
            return Err(ApkError::invalid(format!("rho_min must exceed 1, got {rho_min}")));
        }
        if let Some(bad) = rhos.iter().find(|&&rho| !(rho >= rho_min) || !rho.is_finite()) {
            return Err(ApkError::invalid(format!("ratio {bad} below rho_min = {rho_min}")));
        }
        for s in &sites {
            if let Some(bad) = s.radii.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
                return Err(ApkError::invalid(format!("site {}: radius {bad} must be positive", s.label)));
            }
        }
        Ok(ScanPlan { sites, rhos: rhos.to_vec(), rho_min })
    }

    /// Number of `(x, R, r)` records the plan produces.
    pub fn len(&self) -> usize {
        self.sites.iter().map(|s| s.radii.len()).sum::<usize>() * self.rhos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub label: String,
    #[serde(with = "crate::io::f17_vec")]
    pub x: Vec<f64>,
    #[serde(rename = "R", with = "crate::io::f17")]
    pub big_r: f64,
    #[serde(with = "crate::io::f17")]
    pub r: f64,
    pub lower: u64,
    pub upper: u64,
    #[serde(with = "crate::io::f17")]
    pub exponent_lower: f64,
    #[serde(with = "crate::io::f17")]
    pub exponent_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub samples: Vec<ScanRecord>,
    #[serde(with = "crate::io::f17")]
    pub sup_exponent_lower: f64,
    #[serde(with = "crate::io::f17")]
    pub sup_exponent_upper: f64,
    pub scan_config: ScanPlan,
}

pub const SCAN_HEADER: [&str; 8] = ["R", "r", "lower", "upper", "analytic_bound", "exponent_lower", "exponent_upper", "center"];

impl ScanRecord {
    /// CSV fields in [`SCAN_HEADER`] order; center coordinates are `;`-separated.
    pub fn fields(&self) -> Result<Vec<String>> {
        Ok(vec![
            fmt17(self.big_r),
            fmt17(self.r),
            self.lower.to_string(),
            self.upper.to_string(),
            fmt17(analytic_cover_bound(self.big_r, self.r)?),
            fmt17(self.exponent_lower),
            fmt17(self.exponent_upper),
            self.x.iter().map(|c| fmt17(*c)).collect::<Vec<_>>().join(";"),
        ])
    }
}

/// Brackets every `(x, R, R/rho)` of the plan; records keep plan order.
pub fn estimate_assouad(set: &SaitoSet, plan: &ScanPlan, opts: CoverOptions) -> Result<DimEstimate> {
    let jobs: Vec<(&ScanSite, f64, f64)> =
        plan.sites.iter().flat_map(|s| s.radii.iter().flat_map(move |&big_r| plan.rhos.iter().map(move |&rho| (s, big_r, rho)))).collect();
    let samples = jobs
        .par_iter()
        .map(|&(site, big_r, rho)| {
            let r = big_r / rho;
            let center = Point::new(site.center.clone())?;
            let b = cover_bracket_with(set, &Ball::new(center, big_r)?, r, opts)?;
            Ok(ScanRecord {
                label: site.label.clone(),
                x: site.center.clone(),
                big_r,
                r,
                lower: b.lower,
                upper: b.upper,
                exponent_lower: local_exponent(b.lower, big_r, r)?,
                exponent_upper: local_exponent(b.upper, big_r, r)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup = |f: fn(&ScanRecord) -> f64| samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(DimEstimate {
        sup_exponent_lower: sup(|s| s.exponent_lower),
        sup_exponent_upper: sup(|s| s.exponent_upper),
        samples,
        scan_config: plan.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCertificate {
    pub k: usize,
    pub m: usize,
    #[serde(with = "crate::io::f17")]
    pub eps: f64,
    pub level: Option<u64>,
    #[serde(with = "crate::io::f17")]
    pub delta_k: f64,
    #[serde(with = "crate::io::f17_vec")]
    pub t_k: Vec<f64>,
    #[serde(rename = "R_k", with = "crate::io::f17")]
    pub big_r_k: f64,
    #[serde(with = "crate::io::f17")]
    pub r_k: f64,
    #[serde(with = "crate::io::f17")]
    pub ratio: f64,
    #[serde(with = "crate::io::f17")]
    pub big_c: f64,
    pub packing_count: u64,
    #[serde(with = "crate::io::f17")]
    pub certified_exponent: f64,
}

fn check_hypothesis(e: &Orientation, eps: f64) -> Result<()> {
    let half_ell = e.ell() / 2.0;
    if !(eps >= 0.0) || !(eps < half_ell) {
        return Err(ApkError::EpsilonHypothesis { eps, half_ell });
    }
    Ok(())
}

/// Checks every inequality of the lower-bound argument for one approximate patch.
///
/// With `Delta` the patch scale: `R = (1+2eps) k Delta (L+1)`,
/// `r = (ell - 2eps) Delta / 2`, `C = ((ell - 2eps) / (2 (1+2eps)(L+1)))^m`.
/// `Q` must be `(ell - 2eps) Delta`-separated, pack `k^m` points at scale `r`,
/// sit inside `B(t', R)` around its initial point, and satisfy
/// `C (R/r)^m <= k^m`.
pub fn certify_ap(ap: &EpsAP, e: &Orientation, eps: f64) -> Result<LowerBoundCertificate> {
    check_hypothesis(e, eps)?;
    if ap.reference.orientation != *e {
        return Err(ApkError::invalid("the patch orientation differs from E"));
    }
    let verdict = verify_eps_ap(&ap.points, &ap.reference, eps)?;
    if !verdict.pass {
        return Err(ApkError::InequalityViolated(format!("approximation: worst ratio {} exceeds eps = {eps}", verdict.worst_ratio)));
    }
    let (k, m) = (ap.k(), ap.m());
    let (ell, big_l) = (e.ell(), e.big_l());
    let delta = ap.reference.scale;
    let big_r = (1.0 + 2.0 * eps) * k as f64 * delta * (big_l + 1.0);
    let r = (ell - 2.0 * eps) * delta / 2.0;
    let ratio = 2.0 * (1.0 + 2.0 * eps) * k as f64 * (big_l + 1.0) / (ell - 2.0 * eps);
    let big_c = ((ell - 2.0 * eps) / (2.0 * (1.0 + 2.0 * eps) * (big_l + 1.0))).powi(m as i32);

    let gap = min_pairwise_gap(&ap.points)?;
    let need = (ell - 2.0 * eps) * delta;
    if gap < need * (1.0 - 1e-12) {
        return Err(ApkError::InequalityViolated(format!("separation: min gap {gap:e} below (ell - 2 eps) Delta = {need:e}")));
    }
    let expected = (k as u64).pow(m as u32);
    let packing_count = packing_lower(&ap.points, r)?;
    if packing_count != expected {
        return Err(ApkError::InequalityViolated(format!("packing: {packing_count} points at scale r_k, expected k^m = {expected}")));
    }
    let t = &ap.initial_point;
    if let Some(far) = ap.points.iter().map(|q| q.dist(t)).find(|&dq| dq > big_r) {
        return Err(ApkError::InequalityViolated(format!("containment: a point of Q is {far:e} from t', beyond R_k = {big_r:e}")));
    }
    let lhs = big_c * ratio.powi(m as i32);
    if lhs > packing_count as f64 * (1.0 + CERTIFICATE_ULPS * f64::EPSILON) {
        return Err(ApkError::InequalityViolated(format!("C (R_k/r_k)^m = {lhs} exceeds the packing count {packing_count}")));
    }
    let s = pow2(-ap.frame_shift);
    Ok(LowerBoundCertificate {
        k,
        m,
        eps,
        level: ap.level,
        delta_k: delta * s,
        t_k: t.scale(s).into_coords(),
        big_r_k: big_r * s,
        r_k: r * s,
        ratio,
        big_c,
        packing_count,
        certified_exponent: (packing_count as f64).ln() / ratio.ln(),
    })
}

/// Certificates for each `k`, with `Q_k` produced by the finder for the layout.
pub fn certify_lower_bound(layout: &SaitoLayout, e: &Orientation, eps: f64, ks: &[usize]) -> Result<Vec<LowerBoundCertificate>> {
    check_hypothesis(e, eps)?;
    if e.dim() != layout.d {
        return Err(ApkError::invalid(format!("orientation lives in R^{}, the set in R^{}", e.dim(), layout.d)));
    }
    if e.m() != layout.m {
        return Err(ApkError::invalid(format!("orientation has {} vectors, the set has m = {}", e.m(), layout.m)));
    }
    ks.par_iter()
        .map(|&k| {
            let unit = e.m() == 1 && (e.vectors()[0].norm() - 1.0).abs() <= 1e-12;
            let found = if layout.mode == Mode::Segments && unit {
                find_ap_in_saito(layout.d, &e.vectors()[0], k, eps)?
            } else {
                find_patch_in_diamond(layout.d, layout.m, e, k, eps, DiamondSearch::default())?
            };
            certify_ap(&found.ap, e, eps)
        })
        .collect()
}
