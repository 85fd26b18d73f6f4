//! Samplers for the one-step peeling law and for volumes of free Boltzmann
//! maps.

use std::sync::OnceLock;

use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{PercoError, Result};
use crate::exact::ExactValue;
use crate::lattice::{
    families, partition_function, tri1_q0, JumpFamily, MapParams, MapType, PeelCase, Side,
};

/// Number of jump sizes per family held in the cumulative tables.
pub const TABLE_LEN: usize = 1 << 16;

/// Outcome of one peeling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeelStep {
    pub case: PeelCase,
    pub exposed: u64,
    pub swallowed_right: u64,
    pub swallowed_left: u64,
}

impl PeelStep {
    pub fn new(map: MapType, case: PeelCase) -> Self {
        let (e, r, l) = case.consequence(map);
        PeelStep {
            case,
            exposed: e,
            swallowed_right: r,
            swallowed_left: l,
        }
    }
}

/// Normalised sampler for the index `j >= 1` of one jump family.
///
/// Indices up to [`TABLE_LEN`] come from a cumulative table; beyond it a
/// rejection sampler with a discrete Pareto(3/2) proposal is exact up to
/// floating-point evaluation of the weights.
pub struct JumpLaw {
    fam: JumpFamily,
    weights: Vec<f64>,
    cum: Vec<f64>,
    /// `guide[i]` is the first table index whose cumulative weight exceeds
    /// `i / GUIDE_LEN` of the table mass.
    guide: Vec<u32>,
    tail: f64,
    total: f64,
}

const GUIDE_LEN: usize = 4096;

impl JumpLaw {
    fn new(fam: JumpFamily) -> Self {
        let mut weights = Vec::with_capacity(TABLE_LEN);
        let mut w = (fam.first)().to_f64();
        for j in 1..=TABLE_LEN as u64 {
            weights.push(w);
            let (a, b) = (fam.ratio)(j);
            w *= a as f64 / b as f64;
        }
        let mut cum = Vec::with_capacity(TABLE_LEN);
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cum.push(acc);
        }
        let total = family_total(&fam).to_f64();
        // summing the far tail backwards keeps the relative error small
        let tail = tail_sum(&fam, TABLE_LEN as u64);
        let in_table = cum[TABLE_LEN - 1];
        let mut guide = Vec::with_capacity(GUIDE_LEN);
        let mut idx = 0usize;
        for i in 0..GUIDE_LEN {
            let level = in_table * i as f64 / GUIDE_LEN as f64;
            while idx < TABLE_LEN - 1 && cum[idx] <= level {
                idx += 1;
            }
            guide.push(idx as u32);
        }
        JumpLaw {
            fam,
            weights,
            cum,
            guide,
            tail,
            total,
        }
    }

    /// Mass of the whole family (not normalised to 1).
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Unnormalised weight `w_j`.
    pub fn weight(&self, j: u64) -> f64 {
        if j >= 1 && j as usize <= TABLE_LEN {
            self.weights[j as usize - 1]
        } else {
            self.fam.ln_weight_stable(j).exp()
        }
    }

    pub fn ln_weight(&self, j: u64) -> f64 {
        if j >= 1 && j as usize <= TABLE_LEN {
            self.weights[j as usize - 1].ln()
        } else {
            self.fam.ln_weight_stable(j)
        }
    }

    /// Mass of indices `>= j`.
    pub fn mass_at_least(&self, j: u64) -> f64 {
        if j as usize > TABLE_LEN {
            return tail_sum(&self.fam, j - 1);
        }
        let below = if j <= 1 {
            0.0
        } else {
            self.cum[j as usize - 2]
        };
        (self.cum[TABLE_LEN - 1] - below) + self.tail
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let in_table = self.cum[TABLE_LEN - 1];
        let target = rng.gen::<f64>() * (in_table + self.tail);
        if target >= in_table {
            return self.sample_tail(TABLE_LEN as u64 + 1, rng);
        }
        self.locate(target) as u64 + 1
    }

    /// Table index of the first cumulative weight above `target`.
    fn locate(&self, target: f64) -> usize {
        // most of the mass sits on the first few indices
        for (i, &c) in self.cum[..8].iter().enumerate() {
            if c > target {
                return i;
            }
        }
        let in_table = self.cum[TABLE_LEN - 1];
        let slot = (((target / in_table) * GUIDE_LEN as f64) as usize).min(GUIDE_LEN - 1);
        // the answer lies in [guide[slot], guide[slot + 1]] up to rounding
        // in the slot computation, which the widening below absorbs
        let lo = (self.guide[slot] as usize).saturating_sub(1);
        let hi = if slot + 1 < GUIDE_LEN {
            (self.guide[slot + 1] as usize + 2).min(TABLE_LEN)
        } else {
            TABLE_LEN
        };
        let idx = if self.cum[lo] > target {
            self.cum[..=lo].partition_point(|&c| c <= target)
        } else {
            lo + self.cum[lo..hi].partition_point(|&c| c <= target)
        };
        idx.min(TABLE_LEN - 1)
    }

    /// Draws from the law conditioned on `j >= m`.
    pub fn sample_at_least<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> u64 {
        let m = m.max(1);
        if m as usize > TABLE_LEN {
            return self.sample_tail(m, rng);
        }
        let below = if m == 1 {
            0.0
        } else {
            self.cum[m as usize - 2]
        };
        let in_table = self.cum[TABLE_LEN - 1] - below;
        // two-stage draw: decide table versus tail first so the tail mass is
        // never lost to rounding of a single uniform
        let u: f64 = rng.gen();
        if u * (in_table + self.tail) >= in_table {
            return self.sample_tail(TABLE_LEN as u64 + 1, rng);
        }
        let v: f64 = rng.gen();
        let target = below + v * in_table;
        let idx = self.cum[m as usize - 1..].partition_point(|&c| c <= target);
        (m as usize + idx).min(TABLE_LEN) as u64
    }

    /// Rejection sampler for `j >= m`, proposal `round((m - 1/2) U^{-2/3})`.
    fn sample_tail<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> u64 {
        let base = m as f64 - 0.5;
        let c = self.fam.envelope(m - 1);
        let s = self.fam.shift;
        let slack = ((m as f64 + 0.5) / (m as f64 + s)).max(1.0).powf(2.5);
        let ln_b = (c / 1.5 * slack).ln();
        loop {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let x = base * u.powf(-2.0 / 3.0);
            if !(x < 4e18) {
                continue;
            }
            let j = (x.round() as u64).max(m);
            let ln_accept = self.fam.ln_weight_stable(j) - ln_pareto_cell(j) - ln_b;
            let v: f64 = 1.0 - rng.gen::<f64>();
            if v.ln() <= ln_accept {
                return j;
            }
        }
    }
}

/// `ln((j - 1/2)^{-3/2} - (j + 1/2)^{-3/2})` without cancellation.
fn ln_pareto_cell(j: u64) -> f64 {
    let a = j as f64 - 0.5;
    let b = j as f64 + 0.5;
    (a * a + a * b + b * b).ln() - (a.powf(1.5) + b.powf(1.5)).ln() - 1.5 * (a * b).ln()
}

pub(crate) fn family_total(fam: &JumpFamily) -> ExactValue {
    match fam.name {
        "tri2_jump" => ExactValue::from_ratio(1, 6),
        "tri1_jump" => ExactValue::from_parts((0, 1), (1, 12)),
        "quad_odd" => ExactValue::from_ratio(1, 8),
        "quad_even" => ExactValue::from_ratio(1, 72),
        other => unreachable!("unknown family {other}"),
    }
}

/// `sum_{j > n} w_j` in double precision: explicit summation over the next
/// block of indices, then the integral of the `j^{-5/2}` asymptote.
fn tail_sum(fam: &JumpFamily, n: u64) -> f64 {
    const BLOCK: u64 = 1 << 20;
    let mut lw = fam.ln_weight_stable(n + 1);
    let mut terms = Vec::with_capacity(BLOCK as usize);
    for j in n + 1..=n + BLOCK {
        terms.push(lw.exp());
        let (a, b) = (fam.ratio)(j);
        lw += (a as f64 / b as f64).ln();
    }
    let end = (n + BLOCK) as f64 + fam.shift + 0.5;
    let far = fam.ln_weight_stable(n + BLOCK + 1).exp()
        * ((n + BLOCK + 1) as f64 + fam.shift).powf(2.5)
        * (2.0 / 3.0)
        * end.powf(-1.5);
    terms.iter().rev().sum::<f64>() + far
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TopCase {
    InternalVertex,
    Loop(Side),
    Jump(Side, usize),
    Double(u8),
    Digon(Side),
}

/// The full one-step law of a map type: a table of case families followed
/// by per-family jump-size samplers.
pub struct PeelLaw {
    map: MapType,
    top: Vec<(TopCase, f64)>,
    laws: Vec<JumpLaw>,
}

static LAWS: [OnceLock<PeelLaw>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];

impl PeelLaw {
    /// Shared, lazily built law for a map type.
    pub fn get(map: MapType) -> &'static PeelLaw {
        LAWS[map as usize].get_or_init(|| PeelLaw::build(map))
    }

    fn build(map: MapType) -> Self {
        let params = MapParams::of(map);
        let laws: Vec<JumpLaw> = families(map).iter().map(|f| JumpLaw::new(*f)).collect();
        let mut top = vec![(TopCase::InternalVertex, params.q_minus_one().to_f64())];
        let sides = [Side::Right, Side::Left];
        match map {
            MapType::Tri1 | MapType::Tri2 => {
                for side in sides {
                    if map == MapType::Tri1 {
                        top.push((TopCase::Loop(side), tri1_q0().to_f64()));
                    }
                    top.push((TopCase::Jump(side, 0), laws[0].total()));
                }
            }
            MapType::Quad => {
                for side in sides {
                    top.push((TopCase::Jump(side, 0), 1.0 / 8.0));
                    top.push((TopCase::Jump(side, 1), 1.0 / 72.0));
                    top.push((TopCase::Digon(side), 1.0 / 9.0));
                }
                for placement in 0..3 {
                    top.push((TopCase::Double(placement), 1.0 / 24.0));
                }
            }
        }
        let mut acc = 0.0;
        for entry in top.iter_mut() {
            acc += entry.1;
            entry.1 = acc;
        }
        PeelLaw { map, top, laws }
    }

    pub fn map(&self) -> MapType {
        self.map
    }

    pub fn jump_law(&self, family: usize) -> &JumpLaw {
        &self.laws[family]
    }

    /// Draws one step. Consumes one uniform for the case family, then one
    /// or more for each jump size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PeelStep {
        let u: f64 = rng.gen::<f64>() * self.top.last().expect("nonempty law").1;
        let idx = self.top.partition_point(|&(_, c)| c <= u);
        let top = self.top[idx.min(self.top.len() - 1)].0;
        let case = match top {
            TopCase::InternalVertex => PeelCase::InternalVertex,
            TopCase::Loop(side) => PeelCase::Jump(side, 0),
            TopCase::Digon(side) => PeelCase::QuadDigon(side),
            TopCase::Jump(side, f) => {
                let law = &self.laws[f];
                let k = (law.fam.size)(law.sample(rng));
                match (self.map, f) {
                    (MapType::Quad, 0) => PeelCase::QuadOdd(side, k),
                    (MapType::Quad, _) => PeelCase::QuadEven(side, k),
                    _ => PeelCase::Jump(side, k),
                }
            }
            TopCase::Double(placement) => {
                let law = &self.laws[0];
                let k1 = (law.fam.size)(law.sample(rng));
                let k2 = (law.fam.size)(law.sample(rng));
                PeelCase::QuadDouble { k1, k2, placement }
            }
        };
        PeelStep::new(self.map, case)
    }
}

/// A peeling-step sampler owning its random stream.
pub struct PeelSampler<R> {
    law: &'static PeelLaw,
    rng: R,
}

impl<R: Rng> PeelSampler<R> {
    pub fn new(map: MapType, rng: R) -> Self {
        PeelSampler {
            law: PeelLaw::get(map),
            rng,
        }
    }

    pub fn map(&self) -> MapType {
        self.law.map
    }

    pub fn sample_peel_step(&mut self) -> PeelStep {
        self.law.sample(&mut self.rng)
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// Outcome of peeling the root edge of a finite Boltzmann map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoltzmannOutcome {
    /// The map is a single edge (perimeter 2 only).
    EmptyMap,
    /// A new vertex: one child of perimeter `p + 1`.
    InternalVertex,
    /// Third vertex on the boundary `k` edges to the right of the root:
    /// children of perimeters `k + 1` and `p - k`.
    Split(u64),
}

fn check_boltzmann_perimeter(map: MapType, p: u64) -> Result<()> {
    let ok = match map {
        MapType::Tri1 => p >= 1,
        MapType::Tri2 => p >= 2,
        MapType::Quad => false,
    };
    if ok {
        Ok(())
    } else if map == MapType::Quad {
        Err(PercoError::Unsupported {
            model: "boltzmann volume".into(),
            map: map.name().into(),
            reason: "finite quadrangulation peeling is not implemented".into(),
        })
    } else {
        Err(PercoError::InvalidPerimeter {
            map: map.name().into(),
            perimeter: p,
        })
    }
}

fn split_range(map: MapType, p: u64) -> std::ops::RangeInclusive<u64> {
    match map {
        MapType::Tri1 => 0..=p - 1,
        _ => 1..=p.saturating_sub(2),
    }
}

/// Exact law of the first peeling step of a free Boltzmann triangulation of
/// the `p`-gon.
pub fn boltzmann_split_distribution(
    map: MapType,
    p: u64,
) -> Result<Vec<(BoltzmannOutcome, ExactValue)>> {
    check_boltzmann_perimeter(map, p)?;
    let rho = MapParams::of(map).rho;
    let z = |n: u64| partition_function(map, n);
    let zp = z(p)?;
    let mut out = Vec::new();
    if p == 2 {
        out.push((BoltzmannOutcome::EmptyMap, zp.inverse()?));
    }
    out.push((
        BoltzmannOutcome::InternalVertex,
        z(p + 1)?.checked_div(&(&rho * &zp))?,
    ));
    for k in split_range(map, p) {
        out.push((
            BoltzmannOutcome::Split(k),
            (z(k + 1)? * z(p - k)?).checked_div(&zp)?,
        ));
    }
    Ok(out)
}

/// Result of a volume draw that may have hit its cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeSample {
    pub volume: u64,
    pub censored: bool,
}

/// Volume of a free Boltzmann triangulation obtained by peeling it to
/// completion, depth first on an explicit stack.
///
/// Tri2 is the reference case; Tri1 is experimental.
pub struct BoltzmannSampler {
    map: MapType,
    step_budget: u64,
    volume_cap: u64,
    pending: Vec<u64>,
}

/// Splits with `min(k, p-1-k)` at most this value are enumerated; larger
/// ones are drawn by rejection.
const SPLIT_SCAN: u64 = 8;

impl BoltzmannSampler {
    pub fn new(map: MapType, step_budget: u64, volume_cap: u64) -> Result<Self> {
        check_boltzmann_perimeter(map, map.min_perimeter())?;
        Ok(BoltzmannSampler {
            map,
            step_budget,
            volume_cap,
            pending: Vec::new(),
        })
    }

    /// Draws the number of internal vertices. Exceeding the step budget is
    /// an error; reaching the volume cap returns a censored sample.
    pub fn sample_volume<R: Rng + ?Sized>(&mut self, p: u64, rng: &mut R) -> Result<VolumeSample> {
        check_boltzmann_perimeter(self.map, p)?;
        let law = PeelLaw::get(self.map).jump_law(0);
        self.pending.clear();
        self.pending.push(p);
        let mut volume = 0u64;
        let mut steps = 0u64;
        while let Some(p) = self.pending.pop() {
            if steps >= self.step_budget {
                return Err(PercoError::BudgetExceeded {
                    budget: self.step_budget,
                });
            }
            steps += 1;
            match split_step(self.map, law, p, rng) {
                BoltzmannOutcome::EmptyMap => {}
                BoltzmannOutcome::InternalVertex => {
                    volume += 1;
                    if volume >= self.volume_cap {
                        return Ok(VolumeSample {
                            volume,
                            censored: true,
                        });
                    }
                    self.pending.push(p + 1);
                }
                BoltzmannOutcome::Split(k) => {
                    self.pending.push(k + 1);
                    self.pending.push(p - k);
                }
            }
        }
        Ok(VolumeSample {
            volume,
            censored: false,
        })
    }
}

/// `q_k` of a triangulation including the Tri1 loop weight at `k = 0`.
fn tri_q(map: MapType, law: &JumpLaw, k: u64) -> f64 {
    if k == 0 {
        debug_assert_eq!(map, MapType::Tri1);
        tri1_q0_f64()
    } else {
        law.weight(k)
    }
}

fn tri1_q0_f64() -> f64 {
    static Q0: OnceLock<f64> = OnceLock::new();
    *Q0.get_or_init(|| tri1_q0().to_f64())
}

fn p_internal_vertex(map: MapType, p: u64) -> f64 {
    let pf = p as f64;
    match map {
        MapType::Tri2 => (2.0 * pf - 3.0) / (3.0 * (pf + 1.0)),
        MapType::Tri1 if p == 1 => (2.0 + 3f64.sqrt()) / 4.0,
        MapType::Tri1 => (2.0 * pf - 3.0) / (2.0 * 3f64.sqrt() * (pf + 1.0)),
        MapType::Quad => unreachable!(),
    }
}

fn p_empty(map: MapType, p: u64) -> f64 {
    match (map, p) {
        (MapType::Tri2, 2) => 8.0 / 9.0,
        (MapType::Tri1, 2) => 4.0 * 3f64.sqrt() / 9.0,
        _ => 0.0,
    }
}

/// One draw from the split law of a `p`-gon in double precision.
fn split_step<R: Rng + ?Sized>(
    map: MapType,
    law: &JumpLaw,
    p: u64,
    rng: &mut R,
) -> BoltzmannOutcome {
    let u: f64 = rng.gen();
    let mut acc = p_empty(map, p);
    if u < acc {
        return BoltzmannOutcome::EmptyMap;
    }
    acc += p_internal_vertex(map, p);
    if u < acc {
        return BoltzmannOutcome::InternalVertex;
    }
    let range = split_range(map, p);
    let (m0, top) = (*range.start(), *range.end());
    if top < m0 {
        return BoltzmannOutcome::InternalVertex;
    }
    // split k and p-1-k have equal weight; scan m = min(k, p-1-k)
    let mid = (p - 1) / 2;
    let qp = tri_q(map, law, p - 1);
    let scan_end = mid.min(m0 + SPLIT_SCAN);
    for m in m0..=scan_end {
        let w = tri_q(map, law, m) * tri_q(map, law, p - 1 - m) / qp;
        let w = if 2 * m == p - 1 { w } else { 2.0 * w };
        acc += w;
        if u < acc {
            return BoltzmannOutcome::Split(m);
        }
    }
    if scan_end == mid {
        return BoltzmannOutcome::Split(mid);
    }
    // m in (scan_end, mid]: propose from the jump law, correct by the
    // partner weight, which is largest at m = mid
    let ln_top = law.ln_weight(p - 1 - mid);
    loop {
        let m = law.sample_at_least(scan_end + 1, rng);
        if m > mid {
            continue;
        }
        let mut ln_acc = law.ln_weight(p - 1 - m) - ln_top;
        if 2 * m == p - 1 {
            ln_acc -= std::f64::consts::LN_2;
        }
        let v: f64 = 1.0 - rng.gen::<f64>();
        if v.ln() <= ln_acc {
            return BoltzmannOutcome::Split(m);
        }
    }
}

/// Exact mean volume of a free Boltzmann Tri2 map of the `p`-gon,
/// `(2p-3)(p-1)/3`.
pub fn tri2_mean_volume(p: u64) -> Result<ExactValue> {
    if p < 2 {
        return Err(PercoError::InvalidPerimeter {
            map: "tri2".into(),
            perimeter: p,
        });
    }
    let p = p as i64;
    Ok(ExactValue::rational(BigRational::new(
        ((2 * p - 3) * (p - 1)).into(),
        3.into(),
    )))
}

/// Number of type-2 triangulations of the `p`-gon with `n` internal
/// vertices, `2^{n+1} (2m+1)! (2m+3n)! / (m!^2 n! (2m+2n+2)!)`, `m = p - 2`.
pub fn tri2_count(n: u64, p: u64) -> Result<num_bigint::BigInt> {
    use crate::exact::factorial;
    if p < 2 {
        return Err(PercoError::InvalidPerimeter {
            map: "tri2".into(),
            perimeter: p,
        });
    }
    let m = p - 2;
    let num = num_bigint::BigInt::from(2).pow(n as u32 + 1)
        * factorial(2 * m + 1)
        * factorial(2 * m + 3 * n);
    let den = factorial(m) * factorial(m) * factorial(n) * factorial(2 * m + 2 * n + 2);
    Ok(num / den)
}

fn stirling_remainder(x: f64) -> f64 {
    let x2 = x * x;
    1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2)
}

/// `ln P(V_p = n)` for the volume of a free Boltzmann Tri2 map.
pub fn tri2_volume_ln_pmf(p: u64, n: u64) -> f64 {
    let pf = p as f64;
    let m = pf - 2.0;
    let nf = n as f64;
    let ln_z = ln_gamma(2.0 * pf - 3.0) - ln_gamma(pf - 1.0) - ln_gamma(pf + 1.0)
        + (pf - 1.0) * (9.0f64 / 4.0).ln();
    let konst = std::f64::consts::LN_2 + ln_gamma(2.0 * m + 2.0) - 2.0 * ln_gamma(m + 1.0) - ln_z;
    let terms = [
        (1.0, 3.0, 2.0 * m + 1.0),
        (-1.0, 1.0, 1.0),
        (-1.0, 2.0, 2.0 * m + 3.0),
    ];
    let var = if n < 1_000_000 {
        terms
            .iter()
            .map(|&(s, a, b)| s * ln_gamma(a * nf + b))
            .sum::<f64>()
            + nf * (std::f64::consts::LN_2 - 13.5f64.ln())
    } else {
        // Stirling with the O(n) and O(n ln n) parts cancelled analytically
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        terms
            .iter()
            .map(|&(s, a, b)| {
                let x = a * nf + b;
                s * ((b - 0.5) * (a.ln() + nf.ln()) + (x - 0.5) * (b / (a * nf)).ln_1p() - b
                    + half_ln_2pi
                    + stirling_remainder(x))
            })
            .sum::<f64>()
    };
    konst + var
}

/// Scale of the proposal for [`sample_tri2_volume`] in units of `p^2`.
const VOLUME_PROPOSAL_SCALE: f64 = 0.3;
/// Bound on `P(V_p = n) / g_p(n)` over all `p` and `n`, checked in tests.
pub(crate) const VOLUME_REJECTION_BOUND: f64 = 2.5;

fn volume_proposal_scale(p: u64) -> f64 {
    VOLUME_PROPOSAL_SCALE * (p as f64) * (p as f64) + 1.0
}

/// `ln g_p(n)` for the discrete Lomax proposal
/// `g(n) = (a/(n+a))^{3/2} - (a/(n+1+a))^{3/2}`.
pub(crate) fn volume_proposal_ln_pmf(p: u64, n: u64) -> f64 {
    let a = volume_proposal_scale(p);
    let x = n as f64 + a;
    let y = x + 1.0;
    1.5 * a.ln() + (x * x + x * y + y * y).ln()
        - (x.powf(1.5) + y.powf(1.5)).ln()
        - 1.5 * (x * y).ln()
}

/// Perimeters below this use a tabulated distribution function.
const VOLUME_TABLE_PERIMETER: u64 = 32;
/// Volumes tabulated per perimeter; larger ones come from the rejection
/// sampler restricted to `n >= VOLUME_TABLE_LEN`.
const VOLUME_TABLE_LEN: usize = 1024;

fn volume_cdf_table() -> &'static [Vec<f64>] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (2..VOLUME_TABLE_PERIMETER)
            .map(|p| {
                let mut acc = 0.0;
                (0..VOLUME_TABLE_LEN as u64)
                    .map(|n| {
                        acc += tri2_volume_ln_pmf(p, n).exp();
                        acc
                    })
                    .collect()
            })
            .collect()
    })
}

/// Exact draw of the Tri2 Boltzmann volume from its closed-form law.
/// Small perimeters invert a tabulated distribution function; otherwise
/// (and for the far tail) a discrete Lomax(3/2) proposal is thinned by
/// rejection. Expected cost is O(1) in `p`, against O(p^2) for
/// [`BoltzmannSampler`].
pub fn sample_tri2_volume<R: Rng + ?Sized>(p: u64, rng: &mut R) -> u64 {
    debug_assert!(p >= 2);
    if p < VOLUME_TABLE_PERIMETER {
        let cdf = &volume_cdf_table()[p as usize - 2];
        let u: f64 = rng.gen();
        if u < cdf[VOLUME_TABLE_LEN - 1] {
            return cdf.partition_point(|&c| c <= u) as u64;
        }
        return volume_rejection(p, VOLUME_TABLE_LEN as u64, rng);
    }
    volume_rejection(p, 0, rng)
}

/// Rejection sampler for `V_p` conditioned on `V_p >= lo`.
fn volume_rejection<R: Rng + ?Sized>(p: u64, lo: u64, rng: &mut R) -> u64 {
    let a = volume_proposal_scale(p);
    let ln_m = VOLUME_REJECTION_BOUND.ln();
    // proposal survival function at `lo`
    let s_lo = (a / (lo as f64 + a)).powf(1.5);
    loop {
        let u: f64 = (1.0 - rng.gen::<f64>()) * s_lo;
        let x = a * (u.powf(-2.0 / 3.0) - 1.0);
        if !(x < 4e18) {
            continue;
        }
        let n = (x.floor() as u64).max(lo);
        let ln_acc = tri2_volume_ln_pmf(p, n) - volume_proposal_ln_pmf(p, n) - ln_m;
        let v: f64 = 1.0 - rng.gen::<f64>();
        if v.ln() <= ln_acc {
            return n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn split_distribution_examples() {
        let d = boltzmann_split_distribution(MapType::Tri2, 2).unwrap();
        assert_eq!(
            d,
            vec![
                (BoltzmannOutcome::EmptyMap, ExactValue::from_ratio(8, 9)),
                (
                    BoltzmannOutcome::InternalVertex,
                    ExactValue::from_ratio(1, 9)
                ),
            ]
        );
        let d = boltzmann_split_distribution(MapType::Tri2, 3).unwrap();
        assert_eq!(
            d,
            vec![
                (
                    BoltzmannOutcome::InternalVertex,
                    ExactValue::from_ratio(1, 4)
                ),
                (BoltzmannOutcome::Split(1), ExactValue::from_ratio(3, 4)),
            ]
        );
        assert!(boltzmann_split_distribution(MapType::Tri2, 1).is_err());
        assert!(boltzmann_split_distribution(MapType::Quad, 4).is_err());
    }

    #[test]
    fn tri1_split_distribution_sums_to_one() {
        for p in 1..=12 {
            let d = boltzmann_split_distribution(MapType::Tri1, p).unwrap();
            let s: ExactValue = d.into_iter().map(|(_, w)| w).sum();
            assert_eq!(s, ExactValue::one(), "p={p}");
        }
    }

    #[test]
    fn float_split_law_matches_exact() {
        for map in [MapType::Tri1, MapType::Tri2] {
            for p in map.min_perimeter()..30 {
                let d = boltzmann_split_distribution(map, p).unwrap();
                for (o, w) in d {
                    let f = match o {
                        BoltzmannOutcome::EmptyMap => p_empty(map, p),
                        BoltzmannOutcome::InternalVertex => p_internal_vertex(map, p),
                        BoltzmannOutcome::Split(k) => {
                            let law = PeelLaw::get(map).jump_law(0);
                            tri_q(map, law, k) * tri_q(map, law, p - 1 - k) / tri_q(map, law, p - 1)
                        }
                    };
                    assert!((f - w.to_f64()).abs() < 1e-12, "{map} p={p} {o:?}");
                }
            }
        }
    }

    #[test]
    fn count_formula_satisfies_decomposition() {
        // W_p(x) = [p=2] + x W_{p+1}(x) + sum_{k=1}^{p-2} W_{k+1}(x) W_{p-k}(x)
        let t = |n: u64, p: u64| tri2_count(n, p).unwrap();
        for p in 2..9u64 {
            for n in 0..6u64 {
                let mut rhs = num_bigint::BigInt::from((p == 2 && n == 0) as u8);
                if n >= 1 {
                    rhs += t(n - 1, p + 1);
                }
                for k in 1..=p.saturating_sub(2) {
                    for i in 0..=n {
                        rhs += t(i, k + 1) * t(n - i, p - k);
                    }
                }
                assert_eq!(t(n, p), rhs, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn volume_pmf_matches_exact_counts() {
        for p in [2u64, 3, 7, 15] {
            let z = partition_function(MapType::Tri2, p).unwrap().to_f64();
            for n in [0u64, 1, 5, 40] {
                let c = tri2_count(n, p).unwrap();
                let exact =
                    c.to_string().parse::<f64>().unwrap() * (2.0f64 / 27.0).powi(n as i32) / z;
                let got = tri2_volume_ln_pmf(p, n).exp();
                assert!((got / exact - 1.0).abs() < 1e-9, "p={p} n={n}");
            }
        }
    }

    #[test]
    fn volume_pmf_branches_agree() {
        // the two evaluation branches meet at n = 10^6
        for p in [2u64, 50, 3000] {
            let n = 999_999;
            let direct = tri2_volume_ln_pmf(p, n);
            let stable = tri2_volume_ln_pmf(p, n + 1);
            // consecutive pmf values differ by O(1/n) in log scale
            assert!(
                (direct - stable).abs() < 1e-5,
                "p={p}: {direct} vs {stable}"
            );
        }
    }

    #[test]
    fn volume_rejection_bound_holds() {
        let mut worst: f64 = 0.0;
        let ps: Vec<u64> = (2..80)
            .chain([100, 300, 1000, 3000, 10_000, 100_000])
            .collect();
        for p in ps {
            let scale = (p * p) as f64;
            let mut ns: Vec<u64> = (0..2000).collect();
            let mut x = 1.0f64;
            while x < 1e8 * scale {
                ns.push(x as u64);
                x *= 1.01;
            }
            for n in ns {
                let r = tri2_volume_ln_pmf(p, n) - volume_proposal_ln_pmf(p, n);
                worst = worst.max(r);
            }
        }
        assert!(
            worst.exp() < VOLUME_REJECTION_BOUND,
            "sup ratio {}",
            worst.exp()
        );
    }

    #[test]
    fn direct_and_peeled_volumes_agree_in_mean() {
        let mut r = rng(11);
        let p = 6;
        let n = 40_000;
        let mut sampler = BoltzmannSampler::new(MapType::Tri2, 1 << 40, u64::MAX).unwrap();
        let exact = tri2_mean_volume(p).unwrap().to_f64();
        // medians are robust to the heavy tail; compare both samplers'
        // empirical distribution at a few quantile points
        let mut a: Vec<u64> = (0..n).map(|_| sample_tri2_volume(p, &mut r)).collect();
        let mut b: Vec<u64> = (0..n)
            .map(|_| sampler.sample_volume(p, &mut r).unwrap().volume)
            .collect();
        a.sort_unstable();
        b.sort_unstable();
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let i = (q * n as f64) as usize;
            let (x, y) = (a[i] as f64, b[i] as f64);
            assert!(
                (x - y).abs() <= 0.1 * exact.max(x) + 2.0,
                "q={q}: {x} vs {y}"
            );
        }
    }

    #[test]
    fn volume_table_and_tail_paths_match_law() {
        // small perimeter: frequencies of V = 0, 1 and of the tail beyond
        // the table against the exact law
        let mut r = rng(12);
        let p = 3;
        let n = 400_000;
        let mut hits = [0u64; 3];
        for _ in 0..n {
            match sample_tri2_volume(p, &mut r) {
                0 => hits[0] += 1,
                1 => hits[1] += 1,
                v if v >= VOLUME_TABLE_LEN as u64 => hits[2] += 1,
                _ => {}
            }
        }
        let tail = 1.0 - volume_cdf_table()[p as usize - 2][VOLUME_TABLE_LEN - 1];
        for (k, want) in [
            (0, tri2_volume_ln_pmf(p, 0).exp()),
            (1, tri2_volume_ln_pmf(p, 1).exp()),
            (2, tail),
        ] {
            let f = hits[k] as f64 / n as f64;
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!((f - want).abs() < 5.0 * se, "bin {k}: {f} vs {want}");
        }
        // conditional tail: P(V >= 2L | V >= L) with L the table length
        let lo = VOLUME_TABLE_LEN as u64;
        let draws = 20_000;
        let above = (0..draws)
            .filter(|_| volume_rejection(p, lo, &mut r) >= 2 * lo)
            .count() as f64
            / draws as f64;
        let mass = |from: u64| -> f64 {
            (from..from + 2_000_000)
                .map(|n| tri2_volume_ln_pmf(p, n).exp())
                .sum::<f64>()
        };
        let want = mass(2 * lo) / mass(lo);
        let se = (want * (1.0 - want) / draws as f64).sqrt();
        assert!((above - want).abs() < 5.0 * se, "{above} vs {want}");
    }

    #[test]
    fn guide_table_agrees_with_binary_search() {
        let mut r = rng(21);
        for map in MapType::ALL {
            for law in &PeelLaw::get(map).laws {
                let top = law.cum[TABLE_LEN - 1];
                let mut targets: Vec<f64> = (0..200_000).map(|_| r.gen::<f64>() * top).collect();
                targets.extend(law.cum.iter().step_by(97).copied());
                for t in targets {
                    let want = law.cum.partition_point(|&c| c <= t).min(TABLE_LEN - 1);
                    assert_eq!(law.locate(t), want, "{} target {t}", law.fam.name);
                }
            }
        }
    }

    #[test]
    fn peel_law_cumulative_is_normalised() {
        for map in MapType::ALL {
            let law = PeelLaw::get(map);
            let total = law.top.last().unwrap().1;
            assert!((total - 1.0).abs() < 1e-14, "{map}: {total}");
            for f in &law.laws {
                let t = f.cum[TABLE_LEN - 1] + f.tail;
                assert!(
                    (t / f.total - 1.0).abs() < 1e-11,
                    "{}: {t} vs {}",
                    f.fam.name,
                    f.total
                );
            }
        }
    }

    #[test]
    fn tail_sampler_respects_lower_bound() {
        let law = PeelLaw::get(MapType::Tri2).jump_law(0);
        let mut r = rng(3);
        for m in [1u64, 5, 1000, TABLE_LEN as u64 + 7] {
            for _ in 0..2000 {
                assert!(law.sample_at_least(m, &mut r) >= m);
            }
        }
    }

    #[test]
    fn tail_sampler_matches_conditional_law() {
        // P(j >= 2m | j >= m) from the sampler against the exact ratio
        let law = PeelLaw::get(MapType::Tri2).jump_law(0);
        let mut r = rng(5);
        let m = TABLE_LEN as u64 + 1;
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| law.sample_at_least(m, &mut r) >= 2 * m)
            .count();
        let want = law.mass_at_least(2 * m) / law.mass_at_least(m);
        let sd = (want * (1.0 - want) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - want).abs() < 4.0 * sd);
    }

    #[test]
    fn single_step_examples() {
        let law = PeelLaw::get(MapType::Tri2);
        // the first family bucket is [0, 2/3)
        let step = PeelStep::new(MapType::Tri2, PeelCase::InternalVertex);
        assert_eq!(
            (step.exposed, step.swallowed_right, step.swallowed_left),
            (2, 0, 0)
        );
        assert!((law.top[0].1 - 2.0 / 3.0).abs() < 1e-15);
        let mut r = rng(1);
        for _ in 0..10_000 {
            let s = law.sample(&mut r);
            assert!(s.swallowed_right == 0 || s.swallowed_left == 0);
        }
    }
}
