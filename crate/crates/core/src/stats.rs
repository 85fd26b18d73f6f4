//! Survival curves, power-law tail fits and chi-square tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{PercoError, Result};
use crate::exact::ExactValue;

/// One observation, possibly right-censored at `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub value: f64,
    pub censored: bool,
}

impl Observation {
    pub fn exact(value: f64) -> Self {
        Observation {
            value,
            censored: false,
        }
    }

    pub fn censored(value: f64) -> Self {
        Observation {
            value,
            censored: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub thresholds: Vec<f64>,
    /// Observations known to exceed each threshold.
    pub counts_exceeding: Vec<u64>,
    /// Kaplan-Meier estimate of `P(X > t)`; equals `count / total` without
    /// censoring.
    pub exceed_frac: Vec<f64>,
    pub total: u64,
    pub censored: u64,
}

impl SurvivalCurve {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.total as f64
    }
}

/// Exceedance counts on `grid`. A sample censored at `c` counts as
/// exceeding every threshold below `c` and is dropped from the risk set
/// from `c` on.
pub fn survival_curve(samples: &[Observation], grid: &[f64]) -> Result<SurvivalCurve> {
    if samples.is_empty() {
        return Err(PercoError::InsufficientData("no samples".into()));
    }
    let mut sorted: Vec<Observation> = samples.to_vec();
    sorted.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.censored.cmp(&b.censored))
    });
    let n = sorted.len();
    let mut thresholds: Vec<f64> = grid.to_vec();
    thresholds.sort_by(f64::total_cmp);
    let mut counts = Vec::with_capacity(thresholds.len());
    let mut fracs = Vec::with_capacity(thresholds.len());
    // Kaplan-Meier over distinct event values, events before censorings at ties
    let mut km = 1.0f64;
    let mut i = 0usize;
    for &t in &thresholds {
        while i < n && sorted[i].value <= t {
            let v = sorted[i].value;
            let at_risk = (n - i) as f64;
            let mut events = 0usize;
            let mut j = i;
            while j < n && sorted[j].value == v {
                events += !sorted[j].censored as usize;
                j += 1;
            }
            if events > 0 {
                km *= 1.0 - events as f64 / at_risk;
            }
            i = j;
        }
        counts.push((n - i) as u64);
        fracs.push(km);
    }
    Ok(SurvivalCurve {
        thresholds,
        counts_exceeding: counts,
        exceed_frac: fracs,
        total: n as u64,
        censored: samples.iter().filter(|o| o.censored).count() as u64,
    })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Slope of `ln P(X > n)` against `ln n`.
    pub exponent: f64,
    pub stderr: f64,
    pub fit_range: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
    /// Censored-Pareto maximum-likelihood (Hill) exponent above the lower
    /// end of the range, with its standard error.
    pub hill: Option<(f64, f64)>,
}

/// Minimum exceedance count for a grid point to enter a fit.
pub const MIN_FIT_COUNT: u64 = 100;
/// Minimum number of usable grid points.
pub const MIN_FIT_POINTS: usize = 5;

/// Least-squares slope of the log-log survival curve over `range`.
pub fn fit_tail_exponent(curve: &SurvivalCurve, range: (f64, f64)) -> Result<TailFit> {
    let pts: Vec<(f64, f64)> = curve
        .thresholds
        .iter()
        .zip(&curve.counts_exceeding)
        .zip(&curve.exceed_frac)
        .filter(|((&t, &c), &f)| t >= range.0 && t <= range.1 && c >= MIN_FIT_COUNT && f > 0.0)
        .map(|((&t, _), &f)| (t.ln(), f.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        let usable: Vec<f64> = curve
            .thresholds
            .iter()
            .zip(&curve.counts_exceeding)
            .filter(|(_, &c)| c >= MIN_FIT_COUNT)
            .map(|(&t, _)| t)
            .collect();
        let span = match (usable.first(), usable.last()) {
            (Some(a), Some(b)) => format!("[{a}, {b}]"),
            _ => "empty".into(),
        };
        return Err(PercoError::InsufficientData(format!(
            "{} usable points in [{}, {}] (need {MIN_FIT_POINTS} with count >= {MIN_FIT_COUNT}); usable range {span}",
            pts.len(),
            range.0,
            range.1
        )));
    }
    let (slope, stderr, r2) = linear_fit(&pts);
    Ok(TailFit {
        exponent: slope,
        stderr,
        fit_range: (pts[0].0.exp(), pts[pts.len() - 1].0.exp()),
        r_squared: r2,
        points: pts.len(),
        hill: None,
    })
}

/// Tail fit plus the Hill cross-check computed from the raw samples.
pub fn fit_tail_exponent_with_hill(
    curve: &SurvivalCurve,
    samples: &[Observation],
    range: (f64, f64),
) -> Result<TailFit> {
    let mut fit = fit_tail_exponent(curve, range)?;
    fit.hill = hill_estimate(samples, fit.fit_range.0);
    Ok(fit)
}

/// `(slope, stderr, r^2)` of ordinary least squares.
fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt().max(f64::MIN_POSITIVE);
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    (slope, stderr, r2)
}

/// Maximum-likelihood Pareto exponent above `u` allowing right censoring:
/// `alpha = (#uncensored > u) / sum ln(x/u)`. Returned as `(-alpha, se)`.
pub fn hill_estimate(samples: &[Observation], u: f64) -> Option<(f64, f64)> {
    let mut events = 0usize;
    let mut exposure = 0.0f64;
    for o in samples.iter().filter(|o| o.value > u) {
        exposure += (o.value / u).ln();
        events += !o.censored as usize;
    }
    if events < 2 || exposure <= 0.0 {
        return None;
    }
    let alpha = events as f64 / exposure;
    Some((-alpha, alpha / (events as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Minimum expected count per retained bin.
pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson goodness of fit of `observed` counts against exact cell
/// probabilities. Adjacent bins are merged left to right until each has
/// expected count at least 5; a short remainder joins the last bin.
pub fn chi_square_gof(observed: &[u64], probs: &[ExactValue]) -> Result<GofResult> {
    if observed.len() != probs.len() {
        return Err(PercoError::InvalidArgument(format!(
            "{} observed bins but {} probabilities",
            observed.len(),
            probs.len()
        )));
    }
    let p: Vec<f64> = probs.iter().map(ExactValue::to_f64).collect();
    let total_p: f64 = p.iter().sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(PercoError::InvalidArgument(format!(
            "cell probabilities sum to {total_p}, not 1"
        )));
    }
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &q) in observed.iter().zip(&p) {
        o_acc += o as f64;
        e_acc += q * nf;
        if e_acc >= MIN_EXPECTED {
            merged.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if o_acc > 0.0 || e_acc > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => merged.push((o_acc, e_acc)),
        }
    }
    if merged.len() < 2 {
        return Err(PercoError::InsufficientData(
            "chi-square test needs at least two bins with expected count >= 5".into(),
        ));
    }
    let stat: f64 = merged.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = merged.len() - 1;
    Ok(GofResult {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
        bins: merged.len(),
    })
}

/// Chi-square test of homogeneity between two histograms over the same
/// bins; sparse bins are merged on the pooled counts.
pub fn two_sample_chi_square(a: &[u64], b: &[u64]) -> Result<GofResult> {
    if a.len() != b.len() {
        return Err(PercoError::InvalidArgument(
            "histogram lengths differ".into(),
        ));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut xa, mut xb) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        xa += x as f64;
        xb += y as f64;
        let pooled = xa + xb;
        if pooled * na.min(nb) / n >= MIN_EXPECTED {
            merged.push((xa, xb));
            xa = 0.0;
            xb = 0.0;
        }
    }
    if xa + xb > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += xa;
                last.1 += xb;
            }
            None => merged.push((xa, xb)),
        }
    }
    if merged.len() < 2 {
        return Err(PercoError::InsufficientData(
            "need at least two bins".into(),
        ));
    }
    let mut stat = 0.0;
    for (x, y) in &merged {
        let pooled = x + y;
        let ea = pooled * na / n;
        let eb = pooled * nb / n;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = merged.len() - 1;
    Ok(GofResult {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
        bins: merged.len(),
    })
}

fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(f64::NAN)
}

/// Mean and standard error of a sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard error of a binomial frequency.
pub fn binomial_se(successes: u64, n: u64) -> f64 {
    let f = successes as f64 / n as f64;
    (f * (1.0 - f) / n as f64).sqrt()
}

/// Escape probability extrapolated to infinite height from the fractions
/// of `n` walks reaching `h` and `h/4`, assuming a bias `c h^{-1/2}`:
/// `2 P(reach h) - P(reach h/4)`, with its standard error.
pub fn extrapolated_escape(reach_h: u64, reach_quarter: u64, n: u64) -> (f64, f64) {
    debug_assert!(reach_h <= reach_quarter && reach_quarter <= n);
    let n = n as f64;
    let mean = (2.0 * reach_h as f64 - reach_quarter as f64) / n;
    // per-walk values are 1, -1 or 0 with E[X^2] = P(reach h/4)
    let var = reach_quarter as f64 / n - mean * mean;
    (mean, (var.max(0.0) / n).sqrt())
}
