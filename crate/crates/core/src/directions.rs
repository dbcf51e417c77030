//! The countable dense set of rational directions on the unit sphere.
//!
//! Directions are enumerated shell by shell: for `H = 1, 2, ...` every integer
//! vector with sup-norm exactly `H` is visited in lexicographic order and kept
//! when it is primitive. Each direction therefore appears once, at its smallest
//! integer representative, and `x` and `-x` are distinct entries.
//!
//! Ranking and unranking never walk the whole prefix: the number of primitive
//! vectors in a shell, and the number lexicographically below a given vector,
//! are counted with Moebius inversion over the divisors of the shell height.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{ApkError, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalDirection {
    pub integer_vector: Vec<i64>,
    pub unit: Point,
    pub index: Option<u64>,
}

impl RationalDirection {
    /// Wraps a primitive nonzero integer vector.
    pub fn new(z: Vec<i64>) -> Result<Self> {
        if z.is_empty() || z.iter().all(|&c| c == 0) {
            return Err(ApkError::invalid("direction vector must be nonzero"));
        }
        if gcd_of(&z) != 1 {
            return Err(ApkError::NotPrimitive(z));
        }
        let unit = unit_of(&z);
        Ok(RationalDirection { integer_vector: z, unit, index: None })
    }

    /// Same direction with its enumeration index attached.
    pub fn indexed(mut self) -> Result<Self> {
        self.index = Some(index_of(&self.integer_vector)?);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.integer_vector.len()
    }

    /// Sup-norm shell the integer vector lives in.
    pub fn height(&self) -> u64 {
        sup_norm(&self.integer_vector)
    }
}

fn unit_of(z: &[i64]) -> Point {
    let sq: i128 = z.iter().map(|&c| (c as i128) * (c as i128)).sum();
    let n = (sq as f64).sqrt();
    Point::from_vec(z.iter().map(|&c| c as f64 / n).collect())
}

fn sup_norm(z: &[i64]) -> u64 {
    z.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn gcd_of(z: &[i64]) -> u64 {
    z.iter().fold(0, |g, &c| gcd(g, c.unsigned_abs()))
}

pub fn is_primitive(z: &[i64]) -> bool {
    gcd_of(z) == 1
}

fn divisors_with_mobius(n: u64) -> Vec<(u64, i32)> {
    // Squarefree divisors only: mu vanishes elsewhere.
    let mut primes = Vec::new();
    let mut m = n;
    let mut p = 2;
    while p * p <= m {
        if m % p == 0 {
            primes.push(p);
            while m % p == 0 {
                m /= p;
            }
        }
        p += 1;
    }
    if m > 1 {
        primes.push(m);
    }
    let mut out = vec![(1u64, 1i32)];
    for p in primes {
        let cur = out.clone();
        out.extend(cur.into_iter().map(|(g, mu)| (g * p, -mu)));
    }
    out
}

fn checked_pow(base: u128, exp: usize) -> Result<u128> {
    base.checked_pow(exp as u32).ok_or(ApkError::Overflow("counting lattice shells"))
}

/// Number of integer vectors in `Z^d` with sup-norm exactly `n >= 1`.
fn shell_size(d: usize, n: u64) -> Result<u128> {
    let hi = checked_pow(2 * n as u128 + 1, d)?;
    let lo = checked_pow(2 * n as u128 - 1, d)?;
    Ok(hi - lo)
}

/// Number of primitive integer vectors with sup-norm exactly `h`.
pub fn primitive_shell_count(d: usize, h: u64) -> Result<u128> {
    if h == 0 {
        return Ok(0);
    }
    let mut total: i128 = 0;
    for (g, mu) in divisors_with_mobius(h) {
        total += mu as i128 * shell_size(d, h / g)? as i128;
    }
    Ok(total as u128)
}

/// Prefix sums of the Moebius function, sieved up to a limit and memoized above it.
struct Mertens {
    small: &'static [i32],
    large: HashMap<u64, i64>,
}

/// Moebius prefix sums up to a fixed limit, sieved once per process.
fn mertens_table() -> &'static [i32] {
    const LIMIT: usize = 1 << 21;
    static TABLE: OnceLock<Vec<i32>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut mu = vec![1i8; LIMIT + 1];
        let mut composite = vec![false; LIMIT + 1];
        let mut primes = Vec::new();
        mu[0] = 0;
        for i in 2..=LIMIT {
            if !composite[i] {
                primes.push(i);
                mu[i] = -1;
            }
            for &p in &primes {
                let ip = i * p;
                if ip > LIMIT {
                    break;
                }
                composite[ip] = true;
                if i % p == 0 {
                    mu[ip] = 0;
                    break;
                }
                mu[ip] = -mu[i];
            }
        }
        let mut acc = 0i32;
        mu.into_iter()
            .map(|m| {
                acc += m as i32;
                acc
            })
            .collect()
    })
}

impl Mertens {
    fn new() -> Self {
        Mertens { small: mertens_table(), large: HashMap::new() }
    }

    fn at(&mut self, x: u64) -> i64 {
        if (x as usize) < self.small.len() {
            return self.small[x as usize] as i64;
        }
        if let Some(&v) = self.large.get(&x) {
            return v;
        }
        let mut r = 1i64;
        let mut i = 2u64;
        while i <= x {
            let q = x / i;
            let hi = x / q;
            r -= (hi - i + 1) as i64 * self.at(q);
            i = hi + 1;
        }
        self.large.insert(x, r);
        r
    }
}

/// Number of primitive vectors with sup-norm in `1..=n`:
/// `sum_g mu(g) ((2 floor(n/g) + 1)^d - 1)`, grouped by the value of `floor(n/g)`.
fn primitive_up_to(d: usize, n: u64) -> Result<u128> {
    if n == 0 {
        return Ok(0);
    }
    let overflow = || ApkError::Overflow("counting primitive vectors");
    let mut mertens = Mertens::new();
    let mut total: i128 = 0;
    let mut g = 1u64;
    while g <= n {
        let q = n / g;
        let hi = n / q;
        let weight = (mertens.at(hi) - mertens.at(g - 1)) as i128;
        let cube = i128::try_from(checked_pow(2 * q as u128 + 1, d)? - 1).map_err(|_| overflow())?;
        total = weight.checked_mul(cube).and_then(|w| total.checked_add(w)).ok_or_else(overflow)?;
        g = hi + 1;
    }
    u128::try_from(total).map_err(|_| overflow())
}

/// Index of the first direction of shell `h`.
fn shell_base(d: usize, h: u64) -> Result<u128> {
    primitive_up_to(d, h - 1)
}

/// Counts `w` with sup-norm `n` whose scaled prefix `(g w)[..len]` is
/// lexicographically below `prefix`.
fn count_scaled_below(d: usize, n: u64, g: u64, prefix: &[i64]) -> Result<u128> {
    let n_i = n as i128;
    let g_i = g as i128;
    let full = 2 * n as u128 + 1;
    let inner = 2 * n as u128 - 1;
    let completions = |rem: usize, hit: bool| -> Result<u128> {
        let f = checked_pow(full, rem)?;
        Ok(if hit { f } else { f - checked_pow(inner, rem)? })
    };
    let mut total: u128 = 0;
    let mut hit = false;
    for (i, &zi) in prefix.iter().enumerate() {
        let zi = zi as i128;
        let rem = d - i - 1;
        let hi = n_i.min((zi - 1).div_euclid(g_i));
        if hi >= -n_i {
            let count = (hi + n_i + 1) as u128;
            let boundary: u128 = if hi >= n_i { 2 } else { 1 };
            let interior = count - boundary;
            let on_boundary = boundary.checked_mul(completions(rem, true)?);
            let inside = interior.checked_mul(completions(rem, hit)?);
            let add = on_boundary.zip(inside).and_then(|(a, b)| a.checked_add(b)).ok_or(ApkError::Overflow("ranking within a shell"))?;
            total = total.checked_add(add).ok_or(ApkError::Overflow("ranking within a shell"))?;
        }
        if zi.rem_euclid(g_i) != 0 {
            return Ok(total);
        }
        let w = zi / g_i;
        if w.abs() > n_i {
            return Ok(total);
        }
        hit |= w.abs() == n_i;
    }
    Ok(total)
}

/// Primitive vectors of shell `h` lexicographically below `prefix` (compared on its length).
fn primitive_below(d: usize, h: u64, prefix: &[i64]) -> Result<u128> {
    let mut total: i128 = 0;
    for (g, mu) in divisors_with_mobius(h) {
        total += mu as i128 * count_scaled_below(d, h / g, g, prefix)? as i128;
    }
    Ok(total as u128)
}

fn to_index(v: u128) -> Result<u64> {
    u64::try_from(v).map_err(|_| ApkError::Overflow("converting a direction index to u64"))
}

/// Position of the primitive vector `z` in the fixed enumeration.
pub fn index_of(z: &[i64]) -> Result<u64> {
    if z.is_empty() || z.iter().all(|&c| c == 0) {
        return Err(ApkError::invalid("direction vector must be nonzero"));
    }
    if !is_primitive(z) {
        return Err(ApkError::NotPrimitive(z.to_vec()));
    }
    let d = z.len();
    let h = sup_norm(z);
    let base = shell_base(d, h)?;
    let rank = primitive_below(d, h, z)?;
    to_index(base.checked_add(rank).ok_or(ApkError::Overflow("ranking a direction"))?)
}

/// Total number of directions in dimension 1 (the enumeration is finite there).
const DIM1_TOTAL: u64 = 2;

/// The `j`-th direction of the fixed enumeration.
pub fn direction_at(d: usize, j: u64) -> Result<RationalDirection> {
    if d == 0 {
        return Err(ApkError::invalid("dimension must be >= 1"));
    }
    if d == 1 && j >= DIM1_TOTAL {
        return Err(ApkError::invalid("only two directions exist in dimension 1"));
    }
    let target = j as u128;
    // Smallest h whose prefix count exceeds the target. The count is close to
    // (2h)^d / zeta(d), which brackets h tightly; h <= j + 1 always holds.
    let zeta: f64 = (1..64).map(|n| (n as f64).powi(-(d as i32))).sum();
    let guess = ((target as f64 + 1.0) * zeta).powf(1.0 / d as f64) / 2.0;
    let (mut lo, mut up) = (1u64, j.saturating_add(1));
    let (g_lo, g_up) = ((guess / 2.0) as u64, (2.0 * guess) as u64 + 2);
    if g_lo > lo && primitive_up_to(d, g_lo)? <= target {
        lo = g_lo;
    }
    if g_up < up && primitive_up_to(d, g_up)? > target {
        up = g_up;
    }
    while lo < up {
        let mid = lo + (up - lo) / 2;
        if primitive_up_to(d, mid)? > target {
            up = mid;
        } else {
            lo = mid + 1;
        }
    }
    let h = lo;
    let base = shell_base(d, h)?;
    let t = target - base;
    let hi = h as i64;
    let mut prefix: Vec<i64> = Vec::with_capacity(d);
    for _ in 0..d {
        // Largest v with primitive_below(prefix ++ [v]) <= t.
        let (mut lo, mut up) = (-hi, hi);
        while lo < up {
            let mid = lo + (up - lo + 1) / 2;
            prefix.push(mid);
            let below = primitive_below(d, h, &prefix)?;
            prefix.pop();
            if below <= t {
                lo = mid;
            } else {
                up = mid - 1;
            }
        }
        prefix.push(lo);
    }
    debug_assert_eq!(primitive_below(d, h, &prefix)?, t);
    let mut dir = RationalDirection::new(prefix)?;
    dir.index = Some(j);
    Ok(dir)
}

/// First `count` directions of the fixed enumeration, by direct shell walking.
pub fn enumerate_directions(d: usize, count: usize) -> Result<Vec<RationalDirection>> {
    if d == 0 || count == 0 {
        return Err(ApkError::invalid("need d >= 1 and count >= 1"));
    }
    if d == 1 && count as u64 > DIM1_TOTAL {
        return Err(ApkError::invalid("only two directions exist in dimension 1"));
    }
    let mut out = Vec::with_capacity(count);
    let mut h: i64 = 1;
    while out.len() < count {
        let mut z = vec![-h; d];
        'shell: loop {
            if sup_norm(&z) == h as u64 && is_primitive(&z) {
                let mut dir = RationalDirection::new(z.clone())?;
                dir.index = Some(out.len() as u64);
                out.push(dir);
                if out.len() == count {
                    break 'shell;
                }
            }
            // odometer increment, last coordinate fastest
            let mut i = d;
            loop {
                if i == 0 {
                    break 'shell;
                }
                i -= 1;
                if z[i] < h {
                    z[i] += 1;
                    z[i + 1..].iter_mut().for_each(|c| *c = -h);
                    break;
                }
            }
        }
        h += 1;
    }
    Ok(out)
}

/// A rational direction within `delta` of the unit vector `e`, with its index.
pub fn approximate_direction(e: &Point, delta: f64) -> Result<RationalDirection> {
    nearby_direction(e, delta)?.indexed()
}

/// A rational direction within `delta` of the unit vector `e`, not yet indexed.
///
/// Rounds `q e` to the nearest integer vector for `q = ceil(2 sqrt(d) / delta)`
/// and reduces it to a primitive vector.
pub fn nearby_direction(e: &Point, delta: f64) -> Result<RationalDirection> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ApkError::invalid(format!("delta must be positive and finite, got {delta}")));
    }
    if (e.norm() - 1.0).abs() > 1e-12 {
        return Err(ApkError::invalid(format!("direction must be a unit vector (norm {})", e.norm())));
    }
    let d = e.dim() as f64;
    let mut q = (2.0 * d.sqrt() / delta).ceil();
    // A couple of doublings guard the strict inequality against rounding.
    for _ in 0..4 {
        if q > 2f64.powi(53) {
            return Err(ApkError::Overflow("scaling a direction for rounding"));
        }
        let z: Vec<i64> = e.coords().iter().map(|c| (q * c).round() as i64).collect();
        let g = gcd_of(&z);
        if g != 0 {
            let z: Vec<i64> = z.iter().map(|c| c / g as i64).collect();
            let dir = RationalDirection::new(z)?;
            if e.dist(&dir.unit) < delta {
                return Ok(dir);
            }
        }
        q *= 2.0;
    }
    Err(ApkError::CertificationFailed(format!("no rational direction within {delta} found")))
}

fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Cantor pairing walking antidiagonals as (0,0), (0,1), (1,0), (0,2), ...
pub fn pair(a: u128, b: u128) -> Result<u128> {
    let s = a.checked_add(b).ok_or(ApkError::Overflow("pairing"))?;
    let tri = s.checked_mul(s + 1).map(|x| x / 2).ok_or(ApkError::Overflow("pairing"))?;
    tri.checked_add(a).ok_or(ApkError::Overflow("pairing"))
}

pub fn unpair(n: u128) -> Result<(u128, u128)> {
    let arg = n.checked_mul(8).and_then(|x| x.checked_add(1)).ok_or(ApkError::Overflow("unpairing"))?;
    let w = (isqrt(arg) - 1) / 2;
    let t = w * (w + 1) / 2;
    let a = n - t;
    Ok((a, w - a))
}

/// Splits a tuple index into `m` component indices by iterated pairing.
pub fn decode_tuple(index: u128, m: usize) -> Result<Vec<u128>> {
    if m == 0 {
        return Err(ApkError::invalid("tuple size must be >= 1"));
    }
    let mut out = Vec::with_capacity(m);
    let mut rest = index;
    for _ in 1..m {
        let (a, r) = unpair(rest)?;
        out.push(a);
        rest = r;
    }
    out.push(rest);
    Ok(out)
}

pub fn encode_tuple(components: &[u128]) -> Result<u128> {
    let (last, init) = components.split_last().ok_or_else(|| ApkError::invalid("tuple size must be >= 1"))?;
    init.iter().rev().try_fold(*last, |acc, &a| pair(a, acc))
}

/// An m-tuple of rational directions indexed in the product enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationTuple {
    pub directions: Vec<RationalDirection>,
    pub index: u128,
}

pub fn orientation_tuple_at(d: usize, m: usize, index: u128) -> Result<OrientationTuple> {
    if m == 0 || m > d {
        return Err(ApkError::invalid(format!("need 1 <= m <= d, got m = {m}, d = {d}")));
    }
    let directions = decode_tuple(index, m)?.into_iter().map(|c| direction_at(d, to_index(c)?)).collect::<Result<_>>()?;
    Ok(OrientationTuple { directions, index })
}

pub fn enumerate_orientation_tuples(d: usize, m: usize, count: usize) -> Result<Vec<OrientationTuple>> {
    if m == 0 || m > d || count == 0 {
        return Err(ApkError::invalid(format!("need 1 <= m <= d and count >= 1 (m = {m}, d = {d})")));
    }
    let decoded: Vec<Vec<u128>> = (0..count as u128).map(|n| decode_tuple(n, m)).collect::<Result<_>>()?;
    let max_comp = decoded.iter().flatten().copied().max().unwrap_or(0);
    let dirs = enumerate_directions(d, to_index(max_comp)? as usize + 1)?;
    Ok(decoded
        .into_iter()
        .enumerate()
        .map(|(n, comps)| OrientationTuple { directions: comps.iter().map(|&c| dirs[c as usize].clone()).collect(), index: n as u128 })
        .collect())
}
