//! Percolation explorations as boundary-length walks driven by the peeling
//! process.
//!
//! Each model keeps a boundary count `S` whose recursion depends only on
//! the colour draw `eps` and the peeling step `(E, R, L)`:
//!
//! | model      | `S_0` | update                                            |
//! |------------|-------|---------------------------------------------------|
//! | site       | 1     | `S + eps 1{E=2} - R`, absorbed when `<= 0`        |
//! | face       | 1     | `(S - R - 1)^+ + eps E`, absorbed at 0            |
//! | bond       | 0     | white: `S + 1`; black: peel, `(S - R)^+`          |
//! | bond-dual  | 1     | white: `(S - 1 - R)^+ + E`; black: `S - 1`        |
//! | face-prime | 1     | `(S - R)^+ + eps E`                               |
//!
//! Bond and face-prime have no natural stopping time: the cluster is
//! declared finite when a black step at `S = 0` swallows at least one edge
//! on the right, which blocks the junction vertex.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PercoError, Result};
use crate::exact::ExactValue;
use crate::lattice::{threshold, MapParams, MapType};
use crate::peeling::{sample_tri2_volume, BoltzmannSampler, PeelLaw, PeelStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercolationModel {
    Site,
    Face,
    Bond,
    BondDual,
    FacePrime,
}

impl PercolationModel {
    pub const ALL: [PercolationModel; 5] = [
        PercolationModel::Site,
        PercolationModel::Face,
        PercolationModel::Bond,
        PercolationModel::BondDual,
        PercolationModel::FacePrime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PercolationModel::Site => "site",
            PercolationModel::Face => "face",
            PercolationModel::Bond => "bond",
            PercolationModel::BondDual => "bonddual",
            PercolationModel::FacePrime => "faceprime",
        }
    }

    pub fn is_valid_for(self, map: MapType) -> bool {
        !(self == PercolationModel::Site && map == MapType::Quad)
    }

    /// Whether a black colour draw skips the peeling step.
    fn peels_on(self, eps: bool) -> bool {
        match self {
            PercolationModel::Bond => !eps,
            PercolationModel::BondDual => eps,
            _ => true,
        }
    }

    fn initial_s(self) -> u64 {
        match self {
            PercolationModel::Bond => 0,
            _ => 1,
        }
    }
}

impl fmt::Display for PercolationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PercolationModel {
    type Err = PercoError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "site" => Ok(PercolationModel::Site),
            "face" => Ok(PercolationModel::Face),
            "bond" => Ok(PercolationModel::Bond),
            "bonddual" | "bond-dual" | "bond'" => Ok(PercolationModel::BondDual),
            "faceprime" | "face-prime" | "face'" => Ok(PercolationModel::FacePrime),
            other => Err(PercoError::InvalidArgument(format!(
                "unknown model '{other}' (expected site, face, bond, bonddual or faceprime)"
            ))),
        }
    }
}

/// Every supported `(map, model)` pair, in a fixed order.
pub fn valid_pairs() -> Vec<(MapType, PercolationModel)> {
    MapType::ALL
        .iter()
        .flat_map(|&m| {
            PercolationModel::ALL
                .iter()
                .filter(move |model| model.is_valid_for(m))
                .map(move |&model| (m, model))
        })
        .collect()
}

fn check_pair(model: PercolationModel, map: MapType) -> Result<()> {
    if model.is_valid_for(map) {
        Ok(())
    } else {
        // reuse the open-problem message
        threshold(map, model).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    AbsorbedFinite,
    SurvivedCensored,
    EscapedSupercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationState {
    pub s: u64,
    /// Left black-boundary fluctuation (site model only).
    pub y: i64,
    /// `min(Y_0, ..., Y_{steps-1})`, or `Y_0` before the first step.
    pub y_min: i64,
    pub steps: u64,
    pub status: Status,
}

impl ExplorationState {
    pub fn initial(model: PercolationModel) -> Self {
        ExplorationState {
            s: model.initial_s(),
            y: 0,
            y_min: 0,
            steps: 0,
            status: Status::Running,
        }
    }

    /// Same state with a different boundary count, for tests and demos.
    pub fn with_s(mut self, s: u64) -> Self {
        self.s = s;
        self
    }

    /// `Y_steps - min_{j < steps} Y_j`.
    pub fn dh1(&self) -> u64 {
        (self.y - self.y_min).max(0) as u64
    }
}

/// Applies one step of `model`. `peel` must be present exactly when the
/// model peels on this colour draw.
pub fn step(
    model: PercolationModel,
    state: &ExplorationState,
    peel: Option<&PeelStep>,
    eps: bool,
) -> Result<ExplorationState> {
    if state.status != Status::Running {
        return Err(PercoError::Terminated);
    }
    let needs_peel = model.peels_on(eps);
    let peel = match (needs_peel, peel) {
        (true, Some(p)) => Some(p),
        (false, None) => None,
        (true, None) => {
            return Err(PercoError::InvalidArgument(format!(
                "{model} step with eps={eps} needs a peeling step"
            )))
        }
        (false, Some(_)) => {
            return Err(PercoError::InvalidArgument(format!(
                "{model} step with eps={eps} takes no peeling step"
            )))
        }
    };
    let mut next = *state;
    next.steps += 1;
    next.y_min = if state.steps == 0 {
        state.y
    } else {
        state.y_min.min(state.y)
    };
    let s = state.s as i128;
    let (e, r, l) = peel
        .map(|p| {
            (
                p.exposed as i128,
                p.swallowed_right as i128,
                p.swallowed_left as i128,
            )
        })
        .unwrap_or((0, 0, 0));
    let ei = eps as i128;
    let absorbed;
    let new_s: i128 = match model {
        PercolationModel::Site => {
            let raw = s + ei * (e == 2) as i128 - r;
            next.y += ((e == 2) as i128 * (1 - ei) - l) as i64;
            absorbed = raw <= 0;
            raw.max(0)
        }
        PercolationModel::Face => {
            let v = (s - r - 1).max(0) + ei * e;
            absorbed = v == 0;
            v
        }
        PercolationModel::Bond => {
            if eps {
                absorbed = false;
                s + 1
            } else {
                absorbed = s == 0 && r >= 1;
                (s - r).max(0)
            }
        }
        PercolationModel::BondDual => {
            let v = if eps { (s - 1 - r).max(0) + e } else { s - 1 };
            absorbed = v <= 0;
            v.max(0)
        }
        PercolationModel::FacePrime => {
            absorbed = s == 0 && !eps && r >= 1;
            (s - r).max(0) + ei * e
        }
    };
    next.s = new_s.min(u64::MAX as i128) as u64;
    if absorbed {
        next.status = Status::AbsorbedFinite;
    }
    Ok(next)
}

/// Increment of `S` without the positive-part truncation; its mean is
/// [`drift`].
pub fn free_increment(model: PercolationModel, peel: Option<&PeelStep>, eps: bool) -> i64 {
    let (e, r) = peel
        .map(|p| {
            (
                p.exposed as i64,
                p.swallowed_right.min(i64::MAX as u64 / 4) as i64,
            )
        })
        .unwrap_or((0, 0));
    let ei = eps as i64;
    match model {
        PercolationModel::Site => ei * (e == 2) as i64 - r,
        PercolationModel::Face => ei * e - r - 1,
        PercolationModel::Bond => {
            if eps {
                1
            } else {
                -r
            }
        }
        PercolationModel::BondDual => {
            if eps {
                e - r - 1
            } else {
                -1
            }
        }
        PercolationModel::FacePrime => ei * e - r,
    }
}

/// Exact mean increment of `S` away from the boundary.
pub fn drift(model: PercolationModel, map: MapType, p: &ExactValue) -> Result<ExactValue> {
    check_pair(model, map)?;
    if *p < ExactValue::zero() || *p > ExactValue::one() {
        return Err(PercoError::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    let d = MapParams::of(map).delta;
    let one = ExactValue::one();
    let half = ExactValue::from_ratio(1, 2);
    let v = match model {
        PercolationModel::Site => &d * &(p - &half),
        PercolationModel::Bond => {
            p - &(&(&one - p) * &d.scale(&BigRational::new(1.into(), 2.into())))
        }
        PercolationModel::Face => &(p * &(&one + &d)) - &(&(&d * &half) + &one),
        PercolationModel::BondDual => &(p * &(&one + &(&d * &half))) - &one,
        PercolationModel::FacePrime => &(p * &(&one + &d)) - &(&d * &half),
    };
    Ok(v)
}

/// Survival probability of the origin cluster for site percolation on
/// type-2 triangulations: `(p - 1/2)/p` above `1/2`, zero otherwise.
pub fn exact_theta_site_tri2(p: &ExactValue) -> Result<ExactValue> {
    let half = ExactValue::from_ratio(1, 2);
    if *p < ExactValue::zero() || *p > ExactValue::one() {
        return Err(PercoError::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    if *p <= half {
        return Ok(ExactValue::zero());
    }
    (p - &half).checked_div(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_steps: u64,
    pub escape_height: u64,
    /// Cap on the accumulated hull volume; hitting it marks the volume as
    /// censored but the walk continues.
    pub volume_budget: u64,
    /// Track the hull volume (site model on triangulations only).
    pub track_hull: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 10_000_000,
            escape_height: 10_000,
            volume_budget: 1_000_000_000_000,
            track_hull: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub status: Status,
    pub survived: bool,
    /// Absorption step when the cluster is finite.
    pub tau: Option<u64>,
    pub steps: u64,
    /// Sum of hull contributions over steps before the last.
    pub hull_volume: Option<u64>,
    /// Boltzmann volume enclosed by the absorbing jump, diagnostic only.
    pub last_jump_volume: Option<u64>,
    pub volume_censored: bool,
    /// `Y_tau - min_{j < tau} Y_j` (site model), or the value at the
    /// stopping step for unabsorbed walks.
    pub dh1: Option<u64>,
    pub peel_draws: u64,
    pub white_draws: u64,
    pub final_s: u64,
    /// Largest value of `S` reached; `peak_s >= h` is the escape event for
    /// any height `h` up to the configured one.
    pub peak_s: u64,
}

/// Runs one exploration. Random draws per step are taken in the fixed
/// order: colour, peeling case, jump size(s), Boltzmann volume.
pub fn run_trial<R: Rng + ?Sized>(
    model: PercolationModel,
    map: MapType,
    p: f64,
    limits: &Limits,
    rng: &mut R,
) -> Result<TrialRecord> {
    check_pair(model, map)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(PercoError::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    if limits.max_steps == 0 || limits.escape_height == 0 {
        return Err(PercoError::InvalidArgument(
            "limits must be positive".into(),
        ));
    }
    let law = PeelLaw::get(map);
    let hull = limits.track_hull && model == PercolationModel::Site;
    let mut tri1_sampler = if hull && map == MapType::Tri1 {
        Some(BoltzmannSampler::new(map, u64::MAX, limits.volume_budget)?)
    } else {
        None
    };
    let mut state = ExplorationState::initial(model);
    let mut volume: u64 = 0;
    let mut censored = false;
    let mut last_jump_volume = None;
    let mut peel_draws = 0u64;
    let mut white_draws = 0u64;
    let mut peak_s = state.s;
    while state.status == Status::Running {
        if state.steps >= limits.max_steps {
            state.status = Status::SurvivedCensored;
            break;
        }
        let eps = rng.gen::<f64>() < p;
        white_draws += eps as u64;
        let peel = if model.peels_on(eps) {
            peel_draws += 1;
            Some(law.sample(rng))
        } else {
            None
        };
        let next = step(model, &state, peel.as_ref(), eps)?;
        if hull {
            let pk = peel.expect("site always peels");
            debug_assert!(
                map == MapType::Quad || next.s == state.s || next.y == state.y,
                "a triangulation step moved both S and Y"
            );
            let mut z = (pk.exposed == 2) as u64;
            if pk.swallowed_right > 0 {
                let perimeter = pk.swallowed_right + 1;
                let v = match tri1_sampler.as_mut() {
                    None => sample_tri2_volume(perimeter, rng),
                    Some(s) => {
                        let out = s.sample_volume(perimeter, rng)?;
                        censored |= out.censored;
                        out.volume
                    }
                };
                if next.status == Status::AbsorbedFinite {
                    last_jump_volume = Some(v);
                    z = 0;
                } else {
                    z += v;
                }
            }
            if !censored {
                volume = volume.saturating_add(z);
                if volume >= limits.volume_budget {
                    volume = limits.volume_budget;
                    censored = true;
                }
            }
        }
        state = next;
        peak_s = peak_s.max(state.s);
        if state.status == Status::Running && state.s >= limits.escape_height {
            state.status = Status::EscapedSupercritical;
        }
    }
    let absorbed = state.status == Status::AbsorbedFinite;
    Ok(TrialRecord {
        status: state.status,
        survived: !absorbed,
        tau: absorbed.then_some(state.steps),
        steps: state.steps,
        hull_volume: hull.then_some(volume),
        last_jump_volume,
        // a walk stopped before absorption only gives a lower bound
        volume_censored: hull && (censored || !absorbed),
        dh1: (model == PercolationModel::Site).then(|| state.dh1()),
        peel_draws,
        white_draws,
        final_s: state.s,
        peak_s,
    })
}

/// States visited by one exploration, starting with the initial state and
/// ending at absorption, escape or after `max_steps` steps. Draws follow
/// [`run_trial`] without hull tracking.
pub fn trace<R: Rng + ?Sized>(
    model: PercolationModel,
    map: MapType,
    p: f64,
    max_steps: u64,
    escape_height: u64,
    rng: &mut R,
) -> Result<Vec<ExplorationState>> {
    check_pair(model, map)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(PercoError::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    let law = PeelLaw::get(map);
    let mut state = ExplorationState::initial(model);
    let mut path = vec![state];
    while state.status == Status::Running && state.steps < max_steps {
        let eps = rng.gen::<f64>() < p;
        let peel = model.peels_on(eps).then(|| law.sample(rng));
        state = step(model, &state, peel.as_ref(), eps)?;
        if state.status == Status::Running && state.s >= escape_height {
            state.status = Status::EscapedSupercritical;
        }
        path.push(state);
    }
    Ok(path)
}

/// Runs the free (unkilled) walk for `n` steps and returns `S_n - S_0`
/// together with the sum of increments and of their squares.
pub fn run_free_walk<R: Rng + ?Sized>(
    model: PercolationModel,
    map: MapType,
    p: f64,
    n: u64,
    rng: &mut R,
) -> Result<FreeWalk> {
    check_pair(model, map)?;
    let law = PeelLaw::get(map);
    let mut pos: i64 = 0;
    let mut sum_sq: f64 = 0.0;
    for _ in 0..n {
        let eps = rng.gen::<f64>() < p;
        let peel = model.peels_on(eps).then(|| law.sample(rng));
        let x = free_increment(model, peel.as_ref(), eps);
        pos = pos.saturating_add(x);
        sum_sq += (x as f64) * (x as f64);
    }
    Ok(FreeWalk {
        displacement: pos,
        sum_squares: sum_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeWalk {
    pub displacement: i64,
    pub sum_squares: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{PeelCase, Side};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tri2(case: PeelCase) -> PeelStep {
        PeelStep::new(MapType::Tri2, case)
    }

    #[test]
    fn trace_matches_run_trial() {
        let limits = Limits {
            max_steps: 5_000,
            escape_height: 300,
            ..Limits::default()
        };
        for seed in 0..50 {
            let rec = run_trial(
                PercolationModel::Face,
                MapType::Quad,
                0.76,
                &limits,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
            let path = trace(
                PercolationModel::Face,
                MapType::Quad,
                0.76,
                5_000,
                300,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
            let last = path.last().unwrap();
            assert_eq!(last.steps, rec.steps);
            assert_eq!(last.s, rec.final_s);
            assert_eq!(path.iter().map(|s| s.s).max().unwrap(), rec.peak_s);
        }
    }

    #[test]
    fn site_examples() {
        let s = ExplorationState::initial(PercolationModel::Site).with_s(3);
        let next = step(
            PercolationModel::Site,
            &s,
            Some(&tri2(PeelCase::Jump(Side::Right, 5))),
            true,
        )
        .unwrap();
        assert_eq!(next.s, 0);
        assert_eq!(next.status, Status::AbsorbedFinite);
        let next = step(
            PercolationModel::Site,
            &s,
            Some(&tri2(PeelCase::InternalVertex)),
            true,
        )
        .unwrap();
        assert_eq!((next.s, next.y), (4, 0));
        let next = step(
            PercolationModel::Site,
            &s,
            Some(&tri2(PeelCase::InternalVertex)),
            false,
        )
        .unwrap();
        assert_eq!((next.s, next.y), (3, 1));
        assert!(step(PercolationModel::Site, &next.with_s(0), None, true).is_err());
    }

    #[test]
    fn face_example() {
        let s = ExplorationState::initial(PercolationModel::Face).with_s(2);
        let next = step(
            PercolationModel::Face,
            &s,
            Some(&tri2(PeelCase::InternalVertex)),
            true,
        )
        .unwrap();
        assert_eq!(next.s, 3);
    }

    #[test]
    fn bond_rules() {
        let s = ExplorationState::initial(PercolationModel::Bond);
        assert_eq!(s.s, 0);
        let w = step(PercolationModel::Bond, &s, None, true).unwrap();
        assert_eq!(w.s, 1);
        assert!(step(
            PercolationModel::Bond,
            &s,
            Some(&tri2(PeelCase::InternalVertex)),
            true
        )
        .is_err());
        let b = step(
            PercolationModel::Bond,
            &s,
            Some(&tri2(PeelCase::Jump(Side::Left, 3))),
            false,
        )
        .unwrap();
        assert_eq!(b.status, Status::Running);
        let b = step(
            PercolationModel::Bond,
            &s,
            Some(&tri2(PeelCase::Jump(Side::Right, 1))),
            false,
        )
        .unwrap();
        assert_eq!(b.status, Status::AbsorbedFinite);
    }

    #[test]
    fn terminated_state_rejects_steps() {
        let mut s = ExplorationState::initial(PercolationModel::Face);
        s.status = Status::AbsorbedFinite;
        assert!(matches!(
            step(
                PercolationModel::Face,
                &s,
                Some(&tri2(PeelCase::InternalVertex)),
                true
            ),
            Err(PercoError::Terminated)
        ));
    }

    #[test]
    fn drift_examples() {
        let half = ExactValue::from_ratio(1, 2);
        assert!(drift(PercolationModel::Site, MapType::Tri2, &half)
            .unwrap()
            .is_zero());
        assert!(drift(
            PercolationModel::Bond,
            MapType::Tri2,
            &ExactValue::from_ratio(1, 4)
        )
        .unwrap()
        .is_zero());
        assert!(drift(
            PercolationModel::Face,
            MapType::Quad,
            &ExactValue::from_ratio(3, 4)
        )
        .unwrap()
        .is_zero());
        assert!(drift(PercolationModel::Site, MapType::Quad, &half).is_err());
    }

    #[test]
    fn drift_vanishes_at_thresholds_and_increases() {
        for (map, model) in valid_pairs() {
            let pc = threshold(map, model).unwrap();
            assert!(drift(model, map, &pc).unwrap().is_zero(), "{map} {model}");
            let mut prev = None;
            for i in 0..=20 {
                let p = ExactValue::from_ratio(i, 20);
                let d = drift(model, map, &p).unwrap();
                if let Some(prev) = prev {
                    assert!(d > prev, "{map} {model}");
                }
                prev = Some(d);
            }
        }
    }

    #[test]
    fn theta_examples() {
        let th = |n, d| exact_theta_site_tri2(&ExactValue::from_ratio(n, d)).unwrap();
        assert!(th(1, 2).is_zero());
        assert_eq!(th(3, 4), ExactValue::from_ratio(1, 3));
        assert_eq!(th(1, 1), ExactValue::from_ratio(1, 2));
    }

    #[test]
    fn fourteen_valid_pairs() {
        assert_eq!(valid_pairs().len(), 14);
    }

    #[test]
    fn subcritical_site_dies_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let r = run_trial(
                PercolationModel::Site,
                MapType::Tri2,
                0.0,
                &Limits::default(),
                &mut rng,
            )
            .unwrap();
            assert!(!r.survived);
            assert!(r.tau.unwrap() < 10_000);
        }
    }

    #[test]
    fn bond_peels_only_on_black() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let limits = Limits {
            max_steps: 5_000,
            escape_height: 1_000,
            ..Limits::default()
        };
        for _ in 0..100 {
            let r = run_trial(
                PercolationModel::Bond,
                MapType::Quad,
                0.3,
                &limits,
                &mut rng,
            )
            .unwrap();
            assert_eq!(r.peel_draws + r.white_draws, r.steps);
        }
    }

    #[test]
    fn hull_tracking_records_volumes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let limits = Limits {
            max_steps: 100_000,
            track_hull: true,
            ..Limits::default()
        };
        let mut seen_positive = false;
        for _ in 0..300 {
            let r = run_trial(
                PercolationModel::Site,
                MapType::Tri2,
                0.5,
                &limits,
                &mut rng,
            )
            .unwrap();
            let v = r.hull_volume.unwrap();
            seen_positive |= v > 0;
            if r.survived {
                assert!(r.volume_censored);
            }
        }
        assert!(seen_positive);
    }
}
