//! Map-type constants, partition functions, one-step peeling laws and
//! percolation thresholds, all in exact arithmetic.

use std::fmt;
use std::str::FromStr;
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{PercoError, Result};
use crate::exact::{ratio_series, ratio_series_weighted, ExactValue};
use crate::exploration::PercolationModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapType {
    Tri1,
    Tri2,
    Quad,
}

impl MapType {
    pub const ALL: [MapType; 3] = [MapType::Tri1, MapType::Tri2, MapType::Quad];

    pub fn name(self) -> &'static str {
        match self {
            MapType::Tri1 => "tri1",
            MapType::Tri2 => "tri2",
            MapType::Quad => "quad",
        }
    }

    pub fn is_triangulation(self) -> bool {
        !matches!(self, MapType::Quad)
    }

    /// Smallest boundary length of a finite map of this type.
    pub fn min_perimeter(self) -> u64 {
        match self {
            MapType::Tri1 => 1,
            MapType::Tri2 | MapType::Quad => 2,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MapType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapType {
    type Err = PercoError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tri1" => Ok(MapType::Tri1),
            "tri2" => Ok(MapType::Tri2),
            "quad" => Ok(MapType::Quad),
            other => Err(PercoError::InvalidArgument(format!(
                "unknown map type '{other}' (expected tri1, tri2 or quad)"
            ))),
        }
    }
}

/// Growth and boundary constants of a map type.
///
/// `alpha` is `None` for quadrangulations, where the boundary constant is
/// `sqrt 54` and lies outside Q(sqrt 3); only its square enters the laws.
#[derive(Debug, Clone)]
pub struct MapParams {
    pub map: MapType,
    pub rho: ExactValue,
    pub alpha: Option<ExactValue>,
    pub alpha_squared: ExactValue,
    pub delta: ExactValue,
    /// Asymptotic enumeration constant, diagnostic only.
    pub k_const: f64,
}

impl MapParams {
    pub fn of(map: MapType) -> Self {
        use std::f64::consts::PI;
        match map {
            MapType::Tri1 => MapParams {
                map,
                rho: ExactValue::from_parts((0, 1), (12, 1)),
                alpha: Some(ExactValue::from_integer(12)),
                alpha_squared: ExactValue::from_integer(144),
                delta: ExactValue::from_parts((0, 1), (1, 3)),
                k_const: 1.0 / (36.0 * 2f64.sqrt() * PI),
            },
            MapType::Tri2 => MapParams {
                map,
                rho: ExactValue::from_ratio(27, 2),
                alpha: Some(ExactValue::from_integer(9)),
                alpha_squared: ExactValue::from_integer(81),
                delta: ExactValue::from_ratio(2, 3),
                k_const: 1.0 / (54.0 * PI * 3f64.sqrt()),
            },
            MapType::Quad => MapParams {
                map,
                rho: ExactValue::from_integer(12),
                alpha: None,
                alpha_squared: ExactValue::from_integer(54),
                delta: ExactValue::one(),
                k_const: 1.0 / (8.0 * 3f64.sqrt() * PI),
            },
        }
    }

    /// Probability of the internal-vertex case.
    pub fn q_minus_one(&self) -> ExactValue {
        match &self.alpha {
            Some(a) => a.checked_div(&self.rho).expect("rho is nonzero"),
            None => self
                .alpha_squared
                .checked_div(&(&self.rho * &self.rho))
                .expect("rho is nonzero"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// A single case of the one-step peeling law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PeelCase {
    /// The revealed face has a new vertex in the interior.
    InternalVertex,
    /// Triangulation: the third vertex is on the boundary, `k` edges away.
    Jump(Side, u64),
    /// Quadrangulation, two boundary vertices and an odd number `k` of
    /// swallowed edges.
    QuadOdd(Side, u64),
    /// Quadrangulation, three boundary vertices and an even number `k` of
    /// swallowed edges between the far pair.
    QuadEven(Side, u64),
    /// Quadrangulation, all four vertices on the boundary with odd gaps
    /// `k1` (nearer the root) and `k2`; `placement` counts how many of the
    /// two far vertices are to the right of the root edge.
    QuadDouble { k1: u64, k2: u64, placement: u8 },
    /// Quadrangulation face with a repeated root endpoint enclosing a
    /// Boltzmann 2-gon; exposes one edge and swallows none.
    QuadDigon(Side),
}

impl PeelCase {
    /// `(E, R, L)`: exposed edges, edges swallowed right, edges swallowed
    /// left. The internal-vertex case exposes 2 edges on triangulations and
    /// 3 on quadrangulations.
    pub fn consequence(&self, map: MapType) -> (u64, u64, u64) {
        match *self {
            PeelCase::InternalVertex => (if map.is_triangulation() { 2 } else { 3 }, 0, 0),
            PeelCase::Jump(Side::Right, k) => (1, k, 0),
            PeelCase::Jump(Side::Left, k) => (1, 0, k),
            PeelCase::QuadOdd(Side::Right, k) => (2, k, 0),
            PeelCase::QuadOdd(Side::Left, k) => (2, 0, k),
            PeelCase::QuadEven(Side::Right, k) => (1, k, 0),
            PeelCase::QuadEven(Side::Left, k) => (1, 0, k),
            PeelCase::QuadDouble { k1, k2, placement } => match placement {
                0 => (1, 0, k1 + k2),
                1 => (1, k2, k1),
                _ => (1, k1 + k2, 0),
            },
            PeelCase::QuadDigon(_) => (1, 0, 0),
        }
    }

    pub fn is_valid_for(&self, map: MapType) -> bool {
        match (*self, map) {
            (PeelCase::InternalVertex, _) => true,
            (PeelCase::Jump(_, k), MapType::Tri1) => k <= u64::MAX / 2,
            (PeelCase::Jump(_, k), MapType::Tri2) => k >= 1,
            (PeelCase::QuadOdd(_, k), MapType::Quad) => k % 2 == 1,
            (PeelCase::QuadEven(_, k), MapType::Quad) => k >= 2 && k % 2 == 0,
            (PeelCase::QuadDouble { k1, k2, placement }, MapType::Quad) => {
                k1 % 2 == 1 && k2 % 2 == 1 && placement <= 2
            }
            (PeelCase::QuadDigon(_), MapType::Quad) => true,
            _ => false,
        }
    }

    /// Short tag used in CSV output.
    pub fn tag(&self) -> String {
        match self {
            PeelCase::InternalVertex => "internal_vertex".into(),
            PeelCase::Jump(s, _) => format!("jump_{}", s.name()),
            PeelCase::QuadOdd(s, _) => format!("odd_{}", s.name()),
            PeelCase::QuadEven(s, _) => format!("even_{}", s.name()),
            PeelCase::QuadDouble { placement, .. } => format!("double_{placement}"),
            PeelCase::QuadDigon(s) => format!("digon_{}", s.name()),
        }
    }

    /// Jump size(s) as a CSV field: `k`, `k1+k2`, or empty.
    pub fn size_label(&self) -> String {
        match self {
            PeelCase::InternalVertex | PeelCase::QuadDigon(_) => String::new(),
            PeelCase::Jump(_, k) | PeelCase::QuadOdd(_, k) | PeelCase::QuadEven(_, k) => {
                k.to_string()
            }
            PeelCase::QuadDouble { k1, k2, .. } => format!("{k1}+{k2}"),
        }
    }
}

impl fmt::Display for PeelCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let size = self.size_label();
        if size.is_empty() {
            f.write_str(&self.tag())
        } else {
            write!(f, "{}({size})", self.tag())
        }
    }
}

fn bad_perimeter(map: MapType, p: u64) -> PercoError {
    PercoError::InvalidPerimeter {
        map: map.name().into(),
        perimeter: p,
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

static Z_MEMO: [OnceLock<RwLock<Vec<ExactValue>>>; 3] =
    [OnceLock::new(), OnceLock::new(), OnceLock::new()];

/// Memo index for perimeter `p`: `p` for triangulations, `p/2` for quads.
fn z_index(map: MapType, p: u64) -> Result<u64> {
    match map {
        MapType::Tri1 if p >= 1 => Ok(p),
        MapType::Tri2 if p >= 2 => Ok(p),
        MapType::Quad if p >= 2 && p % 2 == 0 => Ok(p / 2),
        _ => Err(bad_perimeter(map, p)),
    }
}

fn z_first(map: MapType) -> (u64, ExactValue) {
    match map {
        MapType::Tri1 => (1, ExactValue::from_parts((1, 2), (-1, 4))),
        MapType::Tri2 => (2, ExactValue::from_ratio(9, 8)),
        // (-1)!/(-1)! read as the Gamma-function limit 1/3
        MapType::Quad => (1, ExactValue::from_ratio(4, 3)),
    }
}

/// `Z(n+1)/Z(n)` in memo-index units, for `n >= first`.
fn z_step(map: MapType, n: u64) -> ExactValue {
    let n = n as i64;
    match map {
        MapType::Tri1 if n == 1 => ExactValue::from_parts((9, 1), (6, 1)),
        MapType::Tri1 => ExactValue::from_ratio(6 * (2 * n - 3), n + 1),
        MapType::Tri2 => ExactValue::from_ratio(9 * (2 * n - 3), 2 * (n + 1)),
        MapType::Quad => {
            ExactValue::from_ratio(24 * (3 * n - 1) * (3 * n - 2), (2 * n + 2) * (2 * n + 1))
        }
    }
}

/// Partition function of free Boltzmann maps with boundary length `p`.
///
/// Values are memoised per map type; concurrent callers extend the table
/// under a write lock, so every interleaving produces identical values.
pub fn partition_function(map: MapType, p: u64) -> Result<ExactValue> {
    let n = z_index(map, p)?;
    let (first, z0) = z_first(map);
    let slot = (n - first) as usize;
    let lock = Z_MEMO[map.index()].get_or_init(|| RwLock::new(vec![z0]));
    {
        let table = lock.read().expect("memo lock poisoned");
        if let Some(v) = table.get(slot) {
            return Ok(v.clone());
        }
    }
    let mut table = lock.write().expect("memo lock poisoned");
    while table.len() <= slot {
        let last_n = first + table.len() as u64 - 1;
        let next = table.last().expect("memo seeded") * &z_step(map, last_n);
        table.push(next);
    }
    Ok(table[slot].clone())
}

/// Direct closed-form evaluation, independent of the memo recurrence.
pub fn partition_function_closed_form(map: MapType, p: u64) -> Result<ExactValue> {
    use crate::exact::{double_factorial, factorial};
    let n = z_index(map, p)?;
    match map {
        MapType::Tri1 if p == 1 => Ok(z_first(map).1),
        MapType::Tri1 => {
            let num = double_factorial(2 * p as i64 - 5)? * BigInt::from(6).pow(p as u32);
            let den = BigInt::from(8) * factorial(p);
            // 1/sqrt 3 = sqrt 3 / 3
            Ok(ExactValue::new(
                BigRational::from_integer(0.into()),
                BigRational::new(num, den * 3),
            ))
        }
        MapType::Tri2 => {
            let num = factorial(2 * p - 4) * BigInt::from(9).pow(p as u32 - 1);
            let den = factorial(p - 2) * factorial(p) * BigInt::from(4).pow(p as u32 - 1);
            Ok(ExactValue::rational(BigRational::new(num, den)))
        }
        MapType::Quad if n == 1 => Ok(z_first(map).1),
        MapType::Quad => {
            let num = BigInt::from(8).pow(n as u32) * factorial(3 * n - 4);
            let den = factorial(n - 2) * factorial(2 * n);
            Ok(ExactValue::rational(BigRational::new(num, den)))
        }
    }
}

fn rational_pow(base: &ExactValue, e: u64) -> ExactValue {
    base.pow(e as u32)
}

/// Exact probability of one peeling case.
pub fn peel_weight(map: MapType, case: &PeelCase) -> Result<ExactValue> {
    if !case.is_valid_for(map) {
        return Err(PercoError::InvalidCase {
            map: map.name().into(),
            case: case.to_string(),
        });
    }
    let params = MapParams::of(map);
    let a2 = &params.alpha_squared;
    match *case {
        PeelCase::InternalVertex => Ok(params.q_minus_one()),
        PeelCase::Jump(_, k) => {
            let alpha = params.alpha.clone().expect("triangulation alpha");
            let z = partition_function(map, k + 1)?;
            z.checked_div(&rational_pow(&alpha, k))
        }
        PeelCase::QuadOdd(_, k) => {
            // Z(k+1) alpha^{1-k} / rho, with 1-k even
            let z = partition_function(map, k + 1)?;
            z.checked_div(&(rational_pow(a2, (k - 1) / 2) * &params.rho))
        }
        PeelCase::QuadEven(_, k) => {
            let z = partition_function(map, k + 2)?;
            z.checked_div(&(rational_pow(a2, k / 2) * &params.rho))
        }
        PeelCase::QuadDouble { k1, k2, .. } => {
            let z = partition_function(map, k1 + 1)? * partition_function(map, k2 + 1)?;
            z.checked_div(&rational_pow(a2, (k1 + k2) / 2))
        }
        PeelCase::QuadDigon(_) => partition_function(map, 2)?.checked_div(&params.rho),
    }
}

/// Per-side jump-size law `w_j, j >= 1`, described by its first term, the
/// rational step ratio and closed-form asymptotics.
#[derive(Clone, Copy)]
pub(crate) struct JumpFamily {
    pub name: &'static str,
    pub first: fn() -> ExactValue,
    /// `w_{j+1}/w_j` as an integer fraction.
    pub ratio: fn(u64) -> (i128, i128),
    /// Number of swallowed edges for index `j`.
    pub size: fn(u64) -> u64,
    /// `lim (j + shift)^{5/2} w_j`.
    pub limit: f64,
    pub shift: f64,
    /// Closed-form `ln w_j` (valid for all `j >= 1`).
    pub ln_weight: fn(u64) -> f64,
    /// Largest ratio `size(j) / (j + shift)`.
    pub size_factor: f64,
}

fn lg(x: f64) -> f64 {
    ln_gamma(x)
}

fn tri2_ln_q(j: u64) -> f64 {
    let k = j as f64;
    lg(2.0 * k - 1.0) - k * 4f64.ln() - lg(k) - lg(k + 2.0)
}

fn quad_ln_z(n: u64) -> f64 {
    if n == 1 {
        return (4.0f64 / 3.0).ln();
    }
    let n = n as f64;
    n * 8f64.ln() + lg(3.0 * n - 3.0) - lg(n - 1.0) - lg(2.0 * n + 1.0)
}

pub(crate) const TRI2_JUMPS: JumpFamily = JumpFamily {
    name: "tri2_jump",
    first: || ExactValue::from_ratio(1, 8),
    ratio: |j| {
        let j = j as i128;
        (2 * j - 1, 2 * (j + 2))
    },
    size: |j| j,
    limit: 0.141_047_395_886_939_07, // 1/(4 sqrt pi)
    shift: 0.0,
    ln_weight: tri2_ln_q,
    size_factor: 1.0,
};

pub(crate) const TRI1_JUMPS: JumpFamily = JumpFamily {
    name: "tri1_jump",
    first: || ExactValue::from_parts((0, 1), (1, 16)),
    ratio: TRI2_JUMPS.ratio,
    size: |j| j,
    limit: 0.122_150_997_395_834_17, // sqrt 3 /(8 sqrt pi)
    shift: 0.0,
    ln_weight: |j| tri2_ln_q(j) + (3f64.sqrt() / 2.0).ln(),
    size_factor: 1.0,
};

pub(crate) const QUAD_ODD: JumpFamily = JumpFamily {
    name: "quad_odd",
    first: || ExactValue::from_ratio(1, 9),
    ratio: |j| {
        let j = j as i128;
        (4 * (3 * j - 1) * (3 * j - 2), 9 * (2 * j + 2) * (2 * j + 1))
    },
    size: |j| 2 * j - 1,
    limit: 0.027_144_587_303_043_15, // 1/(12 sqrt(3 pi))
    shift: 0.0,
    ln_weight: |j| quad_ln_z(j) + (1.0 - j as f64) * 54f64.ln() - 12f64.ln(),
    size_factor: 2.0,
};

pub(crate) const QUAD_EVEN: JumpFamily = JumpFamily {
    name: "quad_even",
    first: || ExactValue::from_ratio(2, 243),
    ratio: |j| {
        let j = j as i128;
        (4 * (3 * j + 2) * (3 * j + 1), 9 * (2 * j + 4) * (2 * j + 3))
    },
    size: |j| 2 * j,
    limit: 0.027_144_587_303_043_15,
    shift: 1.0,
    ln_weight: |j| quad_ln_z(j + 1) - j as f64 * 54f64.ln() - 12f64.ln(),
    size_factor: 2.0,
};

impl JumpFamily {
    /// Exact `sum_{j <= n} w_j` and `sum_{j <= n} size(j) w_j`.
    pub fn partial_sums(&self, n: u64) -> (ExactValue, ExactValue) {
        let ratio = |j: u64| {
            let (a, b) = (self.ratio)(j);
            (BigInt::from(a), BigInt::from(b))
        };
        let first = (self.first)();
        let mass = ratio_series(n, ratio);
        let moment = ratio_series_weighted(n, ratio, |j| BigInt::from((self.size)(j)));
        (first.scale(&mass), first.scale(&moment))
    }

    /// Constant `C` with `(j + shift)^{5/2} w_j <= C` for all `j > n`.
    ///
    /// Uses that `(j + shift)^{5/2} w_j` is eventually monotone with limit
    /// `limit` (checked numerically by [`envelope_is_monotone`]), so the
    /// supremum beyond `n` is attained either at `n + 1` or at infinity.
    pub fn envelope(&self, n: u64) -> f64 {
        // the monotone regime starts by j = 3 for every family
        let scaled = |j: u64| (self.ln_weight_stable(j) + 2.5 * (j as f64 + self.shift).ln()).exp();
        let hi = (n + 1).max(MONOTONE_FROM);
        (n + 1..=hi).map(scaled).fold(self.limit, f64::max) * (1.0 + 1e-9)
    }

    /// `ln w_j`, switching to the asymptotic form with a fitted `1/j`
    /// correction where direct log-gamma differences lose precision.
    pub fn ln_weight_stable(&self, j: u64) -> f64 {
        const J: u64 = 1_000_000;
        if j <= J {
            return (self.ln_weight)(j);
        }
        let ln_l = self.limit.ln();
        let corr_at_j = (self.ln_weight)(J) - ln_l + 2.5 * (J as f64 + self.shift).ln();
        ln_l - 2.5 * (j as f64 + self.shift).ln() + corr_at_j * (J as f64 / j as f64)
    }

    /// Upper bound on `sum_{j > n} w_j`.
    pub fn tail_mass_bound(&self, n: u64) -> f64 {
        let c = self.envelope(n);
        2.0 / 3.0 * c * (n as f64 + self.shift).powf(-1.5)
    }

    /// Upper bound on `sum_{j > n} size(j) w_j`.
    pub fn tail_moment_bound(&self, n: u64) -> f64 {
        let c = self.envelope(n);
        2.0 * self.size_factor * c * (n as f64 + self.shift).powf(-0.5)
    }

    /// Largest `j` with `size(j) <= k`.
    pub fn last_index_within(&self, k: u64) -> u64 {
        let mut lo = 0u64;
        let mut hi = k + 1;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if (self.size)(mid) <= k {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }
}

pub(crate) const MONOTONE_FROM: u64 = 3;

/// Checks on `j0 <= j <= j1` that `(j+shift)^{5/2} w_j` moves monotonically
/// toward its limit, using the exact step ratio in double precision.
#[cfg(test)]
pub(crate) fn envelope_is_monotone(f: &JumpFamily, j0: u64, j1: u64) -> bool {
    let mut lw = (f.ln_weight)(j0);
    let mut prev = lw + 2.5 * (j0 as f64 + f.shift).ln();
    let mut dir = 0i8;
    for j in j0..j1 {
        let (a, b) = (f.ratio)(j);
        lw += (a as f64 / b as f64).ln();
        let cur = lw + 2.5 * ((j + 1) as f64 + f.shift).ln();
        let d = if cur > prev + 1e-13 {
            1
        } else if cur < prev - 1e-13 {
            -1
        } else {
            0
        };
        if d != 0 {
            if dir != 0 && d != dir {
                return false;
            }
            dir = d;
        }
        prev = cur;
    }
    let lim = f.limit.ln();
    (dir >= 0 && prev <= lim + 1e-9) || (dir <= 0 && prev >= lim - 1e-9)
}

pub(crate) fn families(map: MapType) -> &'static [JumpFamily] {
    match map {
        MapType::Tri1 => &[TRI1_JUMPS],
        MapType::Tri2 => &[TRI2_JUMPS],
        MapType::Quad => &[QUAD_ODD, QUAD_EVEN],
    }
}

/// Tri1 self-loop weight `q_0 = Z(1)`, per side.
pub fn tri1_q0() -> ExactValue {
    ExactValue::from_parts((1, 2), (-1, 4))
}

#[derive(Debug, Clone)]
pub struct NormalizationDefect {
    /// Exact probability of every case whose jump sizes are all at most `K`.
    pub partial_sum: ExactValue,
    /// Rigorous bound on the omitted probability.
    pub tail_bound: f64,
}

impl NormalizationDefect {
    pub fn defect(&self) -> ExactValue {
        ExactValue::one() - &self.partial_sum
    }
}

/// Truncated sum of all peeling-case probabilities with jump sizes `<= K`.
pub fn normalization_defect(map: MapType, k_max: u64) -> Result<NormalizationDefect> {
    if k_max == 0 {
        return Err(PercoError::InvalidArgument(
            "truncation K must be >= 1".into(),
        ));
    }
    let params = MapParams::of(map);
    let two = ExactValue::from_integer(2);
    match map {
        MapType::Tri1 | MapType::Tri2 => {
            let fam = families(map)[0];
            let n = fam.last_index_within(k_max);
            let (mass, _) = fam.partial_sums(n);
            let mut partial = params.q_minus_one() + &two * &mass;
            if map == MapType::Tri1 {
                partial = partial + &two * &tri1_q0();
            }
            Ok(NormalizationDefect {
                partial_sum: partial,
                tail_bound: 2.0 * fam.tail_mass_bound(n),
            })
        }
        MapType::Quad => {
            let (odd, even) = (QUAD_ODD, QUAD_EVEN);
            let no = odd.last_index_within(k_max);
            let ne = even.last_index_within(k_max);
            let (mo, _) = odd.partial_sums(no);
            let (me, _) = even.partial_sums(ne);
            // double jumps: 3 placements of 54 g_{j1} g_{j2}, g_j = (2/9) w_j
            let g = mo.scale(&rat(2, 9));
            let double = (&g * &g).scale(&rat(3 * 54, 1));
            let digon = peel_weight(map, &PeelCase::QuadDigon(Side::Left))?;
            let partial = params.q_minus_one() + &two * &mo + &two * &me + double + &two * &digon;
            let tail_o = odd.tail_mass_bound(no);
            let g_total = 1.0 / 36.0;
            let tail_double = 3.0 * 54.0 * 2.0 * g_total * (2.0 / 9.0) * tail_o;
            Ok(NormalizationDefect {
                partial_sum: partial,
                tail_bound: 2.0 * tail_o + 2.0 * even.tail_mass_bound(ne) + tail_double,
            })
        }
    }
}

/// An exact lower value plus a nonnegative float allowance above it.
#[derive(Debug, Clone)]
pub struct Bracket {
    pub lower: ExactValue,
    pub width: f64,
}

impl Bracket {
    pub fn upper_f64(&self) -> f64 {
        self.lower.to_f64() + self.width
    }

    /// `lower <= x <= lower + width`, the first comparison exact.
    pub fn contains(&self, x: &ExactValue) -> bool {
        self.lower <= *x && x.to_f64() <= self.upper_f64()
    }
}

#[derive(Debug, Clone)]
pub struct Moments {
    pub exposed: Bracket,
    pub swallowed_right: Bracket,
}

/// Truncated exact first moments of `E` and `R` with tail allowances.
pub fn moments(map: MapType, k_max: u64) -> Result<Moments> {
    if k_max == 0 {
        return Err(PercoError::InvalidArgument(
            "truncation K must be >= 1".into(),
        ));
    }
    let params = MapParams::of(map);
    let q = params.q_minus_one();
    match map {
        MapType::Tri1 | MapType::Tri2 => {
            let fam = families(map)[0];
            let n = fam.last_index_within(k_max);
            let (_, first) = fam.partial_sums(n);
            // E = 2 on internal vertex, 1 otherwise
            Ok(Moments {
                exposed: Bracket {
                    lower: ExactValue::one() + q,
                    width: 0.0,
                },
                swallowed_right: Bracket {
                    lower: first,
                    width: fam.tail_moment_bound(n),
                },
            })
        }
        MapType::Quad => {
            let (odd, even) = (QUAD_ODD, QUAD_EVEN);
            let no = odd.last_index_within(k_max);
            let ne = even.last_index_within(k_max);
            let (mo, so) = odd.partial_sums(no);
            let (me, se) = even.partial_sums(ne);
            let g = mo.scale(&rat(2, 9));
            let gm = so.scale(&rat(2, 9));
            let digon = peel_weight(map, &PeelCase::QuadDigon(Side::Left))?;
            let two = ExactValue::from_integer(2);
            // E: 3 internal vertex, 2 odd jumps, 1 everything else
            let double_mass = (&g * &g).scale(&rat(3 * 54, 1));
            let exposed = ExactValue::from_integer(3) * &q
                + ExactValue::from_integer(4) * &mo
                + &two * &me
                + double_mass
                + &two * &digon;
            // R: odd right + even right + placement 2 (k1+k2) + placement 1 (k2)
            let swallowed = &so + &se + (&g * &gm).scale(&rat(3 * 54, 1));
            let tail_o = odd.tail_mass_bound(no);
            let tail_e = even.tail_mass_bound(ne);
            let g_total = 1.0 / 36.0;
            let tail_g = 2.0 / 9.0 * tail_o;
            let tail_gm = 2.0 / 9.0 * odd.tail_moment_bound(no);
            let gm_upper = gm.to_f64() + tail_gm;
            let exposed_tail = 4.0 * tail_o + 2.0 * tail_e + 3.0 * 54.0 * 2.0 * g_total * tail_g;
            let swallowed_tail = odd.tail_moment_bound(no)
                + even.tail_moment_bound(ne)
                + 3.0 * 54.0 * (g_total * tail_gm + gm_upper * tail_g);
            Ok(Moments {
                exposed: Bracket {
                    lower: exposed,
                    width: exposed_tail,
                },
                swallowed_right: Bracket {
                    lower: swallowed,
                    width: swallowed_tail,
                },
            })
        }
    }
}

/// Critical probability of a percolation model on a map type.
pub fn threshold(map: MapType, model: PercolationModel) -> Result<ExactValue> {
    let d = MapParams::of(map).delta;
    let two = ExactValue::from_integer(2);
    let v = match model {
        PercolationModel::Site => {
            if map == MapType::Quad {
                return Err(PercoError::Unsupported {
                    model: model.name().into(),
                    map: map.name().into(),
                    reason: "the site percolation threshold on half-plane quadrangulations \
                             is an open problem"
                        .into(),
                });
            }
            ExactValue::from_ratio(1, 2)
        }
        PercolationModel::Bond => d.checked_div(&(&two + &d))?,
        PercolationModel::BondDual => two.checked_div(&(&two + &d))?,
        PercolationModel::Face => (&d + &two).checked_div(&(&two * &d + &two))?,
        PercolationModel::FacePrime => d.checked_div(&(&two * &d + &two))?,
    };
    Ok(v)
}

/// Enumerates every case with all jump sizes `<= k_max`, in a fixed order.
pub fn enumerate_cases(map: MapType, k_max: u64) -> Vec<PeelCase> {
    let mut out = vec![PeelCase::InternalVertex];
    let sides = [Side::Right, Side::Left];
    match map {
        MapType::Tri1 | MapType::Tri2 => {
            let k0 = if map == MapType::Tri1 { 0 } else { 1 };
            for side in sides {
                for k in k0..=k_max {
                    out.push(PeelCase::Jump(side, k));
                }
            }
        }
        MapType::Quad => {
            for side in sides {
                out.extend((1..=k_max).step_by(2).map(|k| PeelCase::QuadOdd(side, k)));
                out.extend((2..=k_max).step_by(2).map(|k| PeelCase::QuadEven(side, k)));
                out.push(PeelCase::QuadDigon(side));
            }
            for placement in 0..=2u8 {
                for k1 in (1..=k_max).step_by(2) {
                    for k2 in (1..=k_max).step_by(2) {
                        out.push(PeelCase::QuadDouble { k1, k2, placement });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_function_examples() {
        assert_eq!(
            partition_function(MapType::Tri1, 1).unwrap(),
            ExactValue::from_parts((1, 2), (-1, 4))
        );
        assert_eq!(
            partition_function(MapType::Tri2, 2).unwrap(),
            ExactValue::from_ratio(9, 8)
        );
        assert_eq!(
            partition_function(MapType::Quad, 4).unwrap(),
            ExactValue::from_ratio(16, 3)
        );
        assert!(partition_function(MapType::Quad, 3).is_err());
        assert!(partition_function(MapType::Tri2, 1).is_err());
    }

    #[test]
    fn memo_agrees_with_closed_form() {
        for map in MapType::ALL {
            let step = if map == MapType::Quad { 2 } else { 1 };
            let mut p = map.min_perimeter();
            while p <= 60 {
                assert_eq!(
                    partition_function(map, p).unwrap(),
                    partition_function_closed_form(map, p).unwrap(),
                    "{map} p={p}"
                );
                p += step;
            }
        }
    }

    #[test]
    fn peel_weight_examples() {
        assert_eq!(
            peel_weight(MapType::Tri2, &PeelCase::InternalVertex).unwrap(),
            ExactValue::from_ratio(2, 3)
        );
        assert_eq!(
            peel_weight(MapType::Tri2, &PeelCase::Jump(Side::Right, 1)).unwrap(),
            ExactValue::from_ratio(1, 8)
        );
        assert_eq!(
            peel_weight(MapType::Quad, &PeelCase::InternalVertex).unwrap(),
            ExactValue::from_ratio(3, 8)
        );
        assert!(peel_weight(MapType::Tri2, &PeelCase::Jump(Side::Left, 0)).is_err());
        assert!(peel_weight(MapType::Quad, &PeelCase::QuadOdd(Side::Left, 2)).is_err());
    }

    #[test]
    fn family_ratios_match_peel_weights() {
        for (map, fam) in [
            (MapType::Tri1, TRI1_JUMPS),
            (MapType::Tri2, TRI2_JUMPS),
            (MapType::Quad, QUAD_ODD),
            (MapType::Quad, QUAD_EVEN),
        ] {
            let mut w = (fam.first)();
            for j in 1..25u64 {
                let k = (fam.size)(j);
                let case = match fam.name {
                    "quad_odd" => PeelCase::QuadOdd(Side::Right, k),
                    "quad_even" => PeelCase::QuadEven(Side::Right, k),
                    _ => PeelCase::Jump(Side::Right, k),
                };
                assert_eq!(peel_weight(map, &case).unwrap(), w, "{} j={j}", fam.name);
                let lw = (fam.ln_weight)(j);
                assert!((lw - w.to_f64().ln()).abs() < 1e-11, "{} j={j}", fam.name);
                let (a, b) = (fam.ratio)(j);
                w = w.scale(&BigRational::new(a.into(), b.into()));
            }
        }
    }

    #[test]
    fn double_jump_weight_factorises() {
        let g = |k: u64| {
            peel_weight(MapType::Quad, &PeelCase::QuadOdd(Side::Right, k))
                .unwrap()
                .scale(&rat(2, 9))
        };
        let w = peel_weight(
            MapType::Quad,
            &PeelCase::QuadDouble {
                k1: 3,
                k2: 5,
                placement: 1,
            },
        )
        .unwrap();
        assert_eq!(w, (g(3) * g(5)).scale(&rat(54, 1)));
    }

    #[test]
    fn small_truncation_example() {
        let nd = normalization_defect(MapType::Tri2, 1).unwrap();
        assert_eq!(nd.partial_sum, ExactValue::from_ratio(11, 12));
        assert!(nd.tail_bound > 1.0 / 12.0);
    }

    #[test]
    fn tail_envelopes_are_monotone() {
        for fam in [TRI1_JUMPS, TRI2_JUMPS, QUAD_ODD, QUAD_EVEN] {
            assert!(envelope_is_monotone(&fam, 3, 1_000_000), "{}", fam.name);
        }
    }

    #[test]
    fn family_totals_are_known_constants() {
        // Exact per-side masses: (1 - q_{-1})/2 minus the Tri1 loop,
        // 1/8 for quad odd jumps, 1/72 for quad even jumps.
        let cases = [
            (TRI2_JUMPS, 1.0 / 6.0),
            (TRI1_JUMPS, 3f64.sqrt() / 12.0),
            (QUAD_ODD, 1.0 / 8.0),
            (QUAD_EVEN, 1.0 / 72.0),
        ];
        for (fam, total) in cases {
            let n = 4000;
            let (m, _) = fam.partial_sums(n);
            let gap = total - m.to_f64();
            assert!(
                gap >= -1e-15 && gap <= fam.tail_mass_bound(n),
                "{}",
                fam.name
            );
        }
    }

    #[test]
    fn thresholds() {
        use PercolationModel::*;
        assert_eq!(
            threshold(MapType::Tri2, Bond).unwrap(),
            ExactValue::from_ratio(1, 4)
        );
        assert_eq!(
            threshold(MapType::Quad, Face).unwrap(),
            ExactValue::from_ratio(3, 4)
        );
        assert_eq!(
            threshold(MapType::Tri1, Site).unwrap(),
            ExactValue::from_ratio(1, 2)
        );
        let err = threshold(MapType::Quad, Site).unwrap_err();
        assert!(err.to_string().contains("open problem"));
        for map in MapType::ALL {
            let one = ExactValue::one();
            assert_eq!(
                threshold(map, Bond).unwrap() + threshold(map, BondDual).unwrap(),
                one
            );
            assert_eq!(
                threshold(map, Face).unwrap() + threshold(map, FacePrime).unwrap(),
                one
            );
        }
    }

    #[test]
    fn prop3_small_jump_law() {
        // P(E=1, R=0) = 1 - q_{-1} - sum_{k>=1} q_k must equal q_0 + (1 - q_{-1})/2
        for map in [MapType::Tri1, MapType::Tri2] {
            let q = MapParams::of(map).q_minus_one();
            let q0 = if map == MapType::Tri1 {
                tri1_q0()
            } else {
                ExactValue::zero()
            };
            let want = (&q0 + &(ExactValue::one() - &q).scale(&rat(1, 2))).to_f64();
            let fam = families(map)[0];
            let n = 3000;
            let (right, _) = fam.partial_sums(n);
            let upper = (ExactValue::one() - &q - right).to_f64();
            assert!(upper >= want - 1e-15);
            assert!(upper - fam.tail_mass_bound(n) <= want + 1e-15);
        }
        let mut sum = ExactValue::zero();
        for case in enumerate_cases(MapType::Tri2, 40) {
            let (e, r, _) = case.consequence(MapType::Tri2);
            if e == 1 && r == 0 {
                sum = sum + peel_weight(MapType::Tri2, &case).unwrap();
            }
        }
        assert!(sum < ExactValue::from_ratio(1, 6));
        assert!(sum.to_f64() > 1.0 / 6.0 - TRI2_JUMPS.tail_mass_bound(40));
    }

    #[test]
    fn map_type_parsing() {
        assert_eq!("Tri2".parse::<MapType>().unwrap(), MapType::Tri2);
        assert!("hex".parse::<MapType>().is_err());
    }
}
