//! ε-schedules and log-space growth sequences.
//!
//! An [`EpsilonSchedule`] assigns a width `ε_n ∈ (0, 1)` to each index of its
//! domain. A schedule over an index set `A` is *admissible* when
//!
//! * `n·ε_n → ∞` along `A`,
//! * `ε_n → 0`,
//! * `Σ ε_n²/n < ∞`,
//! * `Σ ε_n/n = ∞`.
//!
//! [`check_admissible`] decides these from a table of integral-test results for
//! the analytic kinds and falls back to dyadic trend diagnostics for tables.
//!
//! A [`LogSequence`] stores `log y_n` and exponentiates only on demand, so the
//! growth profiles below stay finite even where `y_n` overflows.

use crate::primes::{RealInterval, Sieve};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonKind {
    /// `ε_n = 1/log n`
    ReciprocalLog,
    /// `ε_n = (log n)^{-1} exp(−(1−β)n/(3βt₀))`
    BetaDamped { beta: f64, t0: f64 },
    /// `ε_n = n^{−γ}`
    Power { gamma: f64 },
    /// `ε_n = c_ℓ` on the index run of platoon `ℓ`.
    Platoon {
        constants: PlatoonConstants,
        runs: Vec<PlatoonRun>,
    },
    /// `ε_n = values[n − start]`; zero widths are accepted here so that
    /// degenerate families can be built.
    Explicit { values: Vec<f64> },
}

/// Inclusive index run carrying the constant of platoon `ell`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatoonRun {
    pub ell: u64,
    pub first: u64,
    pub last: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PlatoonConstants {
    /// `c_ℓ = 1/log(ℓ + shift)`
    ReciprocalLog { shift: f64 },
    /// `c_ℓ = values[ℓ − first_ell]`
    Table { first_ell: u64, values: Vec<f64> },
}

impl PlatoonConstants {
    pub fn c(&self, ell: u64) -> Result<f64> {
        match self {
            Self::ReciprocalLog { shift } => {
                let v = 1.0 / (ell as f64 + shift).ln();
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::pre(format!("c_{ell} = {v} outside (0, 1)")));
                }
                Ok(v)
            }
            Self::Table { first_ell, values } => ell
                .checked_sub(*first_ell)
                .and_then(|i| values.get(i as usize).copied())
                .ok_or_else(|| Error::pre(format!("c_ℓ table has no entry for ℓ = {ell}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    #[serde(flatten)]
    pub kind: EpsilonKind,
    pub domain_start: u64,
}

impl EpsilonSchedule {
    pub fn reciprocal_log() -> Self {
        Self {
            kind: EpsilonKind::ReciprocalLog,
            domain_start: 3,
        }
    }

    pub fn power(gamma: f64) -> Self {
        Self {
            kind: EpsilonKind::Power { gamma },
            domain_start: 2,
        }
    }

    pub fn beta_damped(beta: f64, t0: f64) -> Self {
        Self {
            kind: EpsilonKind::BetaDamped { beta, t0 },
            domain_start: 3,
        }
    }

    /// Table starting at index `start`.
    pub fn explicit(start: u64, values: Vec<f64>) -> Self {
        Self {
            kind: EpsilonKind::Explicit { values },
            domain_start: start,
        }
    }

    /// The same width on every index of `[start, end]`.
    pub fn constant(value: f64, start: u64, end: u64) -> Self {
        let len = end.saturating_sub(start) + 1;
        Self::explicit(start, vec![value; len as usize])
    }

    pub fn platoon(constants: PlatoonConstants, runs: Vec<PlatoonRun>) -> Result<Self> {
        for w in runs.windows(2) {
            if w[1].ell <= w[0].ell || w[1].first <= w[0].last {
                return Err(Error::pre("platoon runs must be ascending and disjoint"));
            }
            if constants.c(w[1].ell)? > constants.c(w[0].ell)? {
                return Err(Error::pre("platoon constants must be non-increasing"));
            }
        }
        if let Some(r) = runs.iter().find(|r| r.first > r.last) {
            return Err(Error::pre(format!("platoon run {} is empty", r.ell)));
        }
        let domain_start = runs.first().map(|r| r.first).unwrap_or(2).max(1);
        Ok(Self {
            kind: EpsilonKind::Platoon { constants, runs },
            domain_start,
        })
    }

    /// `ε_n`.
    pub fn eps(&self, n: u64) -> Result<f64> {
        if n < self.domain_start || n < 1 {
            return Err(Error::pre(format!(
                "ε_{n} requested below domain start {}",
                self.domain_start
            )));
        }
        let x = n as f64;
        let v = match &self.kind {
            EpsilonKind::ReciprocalLog => 1.0 / x.ln(),
            EpsilonKind::BetaDamped { beta, t0 } => {
                if !(*beta > 0.0 && *beta <= 1.0 && *t0 > 0.0) {
                    return Err(Error::pre("β-damped schedule needs β ∈ (0,1], t₀ > 0"));
                }
                (-(1.0 - beta) * x / (3.0 * beta * t0)).exp() / x.ln()
            }
            EpsilonKind::Power { gamma } => {
                if !(*gamma > 0.0) {
                    return Err(Error::pre("power schedule needs γ > 0"));
                }
                x.powf(-gamma)
            }
            EpsilonKind::Platoon { constants, runs } => {
                let i = runs.partition_point(|r| r.last < n);
                match runs.get(i) {
                    Some(r) if r.first <= n => constants.c(r.ell)?,
                    _ => return Err(Error::pre(format!("index {n} lies in no platoon run"))),
                }
            }
            EpsilonKind::Explicit { values } => {
                let v = values
                    .get((n - self.domain_start) as usize)
                    .copied()
                    .ok_or_else(|| Error::pre(format!("explicit schedule has no entry for {n}")))?;
                if !(0.0..1.0).contains(&v) {
                    return Err(Error::pre(format!("ε_{n} = {v} outside [0, 1)")));
                }
                return Ok(v);
            }
        };
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::pre(format!("ε_{n} = {v} outside (0, 1)")));
        }
        Ok(v)
    }

    /// Last index the schedule is defined on, if bounded.
    pub fn domain_end(&self) -> Option<u64> {
        match &self.kind {
            EpsilonKind::Explicit { values } => {
                Some(self.domain_start + values.len() as u64).map(|e| e.saturating_sub(1))
            }
            EpsilonKind::Platoon { runs, .. } => runs.last().map(|r| r.last),
            _ => None,
        }
    }
}

/// Index set for admissibility checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSet {
    /// Every integer from the schedule's domain start on.
    AllFromStart,
    /// A finite ascending list.
    Explicit(Vec<u64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Decided from the integral-test table.
    Symbolic,
    /// Read off finite trends; not a decision.
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub basis: Basis,
}

impl Verdict {
    fn symbolic(holds: bool) -> Self {
        Self {
            holds,
            basis: Basis::Symbolic,
        }
    }

    fn heuristic(holds: bool) -> Self {
        Self {
            holds,
            basis: Basis::Heuristic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// `n·ε_n → ∞`
    pub n_eps_unbounded: Verdict,
    /// `ε_n → 0`
    pub eps_vanishes: Verdict,
    /// `Σ ε_n²/n < ∞`
    pub square_sum_finite: Verdict,
    /// `Σ ε_n/n = ∞`
    pub sum_infinite: Verdict,
    pub evidence: Vec<String>,
}

impl AdmissibilityReport {
    pub fn all_hold(&self) -> bool {
        self.n_eps_unbounded.holds
            && self.eps_vanishes.holds
            && self.square_sum_finite.holds
            && self.sum_infinite.holds
    }

    fn symbolic(c1: bool, c2: bool, c3: bool, c4: bool, note: &str) -> Self {
        Self {
            n_eps_unbounded: Verdict::symbolic(c1),
            eps_vanishes: Verdict::symbolic(c2),
            square_sum_finite: Verdict::symbolic(c3),
            sum_infinite: Verdict::symbolic(c4),
            evidence: vec![note.to_string()],
        }
    }
}

/// Decay exponent of dyadic block increments of `Σ f(n)` over `idx`.
///
/// Increments over `[2^j, 2^{j+1})` decaying like `j^{-κ}` indicate
/// convergence for `κ > 1`; geometric decay shows up as a large `κ`.
fn dyadic_decay_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let mut blocks: Vec<(f64, f64)> = Vec::new();
    for &(n, v) in points {
        let j = n.log2().floor();
        match blocks.last_mut() {
            Some((bj, acc)) if *bj == j => *acc += v,
            _ => blocks.push((j, v)),
        }
    }
    // The first and last blocks are usually partial; the local slope is read
    // off the upper half of the rest, where geometric decay shows up steeply.
    if blocks.len() > 4 {
        blocks.remove(0);
        blocks.pop();
    }
    if blocks.len() >= 6 {
        blocks.drain(..blocks.len() / 2);
    }
    let pts: Vec<(f64, f64)> = blocks
        .iter()
        .filter(|(j, v)| *j > 0.0 && *v > 0.0)
        .map(|(j, v)| (j.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in &pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Some(-sxy / sxx)
}

const DECAY_THRESHOLD: f64 = 1.5;

fn trend_report(points: &[(f64, f64)], label: &str) -> AdmissibilityReport {
    // Head and tail are the first and last quarters on a log scale of n.
    let (l0, l1) = (points[0].0.ln(), points[points.len() - 1].0.ln());
    let head_end = (0.75 * l0 + 0.25 * l1).exp();
    let tail_start = (0.25 * l0 + 0.75 * l1).exp();
    let head: Vec<_> = points.iter().copied().filter(|p| p.0 <= head_end).collect();
    let tail: Vec<_> = points.iter().copied().filter(|p| p.0 >= tail_start).collect();
    let mean = |s: &[(f64, f64)], f: &dyn Fn(f64, f64) -> f64| {
        s.iter().map(|&(n, e)| f(n, e)).sum::<f64>() / s.len() as f64
    };
    let (head, tail) = (&head[..], &tail[..]);
    let ne_head = mean(head, &|n, e| n * e);
    let ne_tail = mean(tail, &|n, e| n * e);
    let e_head = mean(head, &|_, e| e);
    let e_tail = mean(tail, &|_, e| e);
    let sq: Vec<(f64, f64)> = points.iter().map(|&(n, e)| (n, e * e / n)).collect();
    let lin: Vec<(f64, f64)> = points.iter().map(|&(n, e)| (n, e / n)).collect();
    let k_sq = dyadic_decay_exponent(&sq);
    let k_lin = dyadic_decay_exponent(&lin);
    let mut evidence = vec![
        format!("{label}: {} indices, heuristic trends only", points.len()),
        format!("mean n·ε head {ne_head:.6e} tail {ne_tail:.6e}"),
        format!("mean ε head {e_head:.6e} tail {e_tail:.6e}"),
    ];
    match (k_sq, k_lin) {
        (Some(a), Some(b)) => evidence.push(format!(
            "dyadic decay exponents: ε²/n {a:.3}, ε/n {b:.3} (threshold {DECAY_THRESHOLD})"
        )),
        _ => evidence.push("fewer than three full dyadic blocks".to_string()),
    }
    AdmissibilityReport {
        n_eps_unbounded: Verdict::heuristic(ne_tail > 1.5 * ne_head),
        eps_vanishes: Verdict::heuristic(e_tail < 0.75 * e_head),
        square_sum_finite: Verdict::heuristic(k_sq.is_some_and(|k| k > DECAY_THRESHOLD)),
        sum_infinite: Verdict::heuristic(k_lin.is_some_and(|k| k <= DECAY_THRESHOLD)),
        evidence,
    }
}

/// Checks the four admissibility conditions for `sched` over `set`.
pub fn check_admissible(sched: &EpsilonSchedule, set: &IndexSet) -> Result<AdmissibilityReport> {
    if let IndexSet::Explicit(idx) = set {
        if idx.len() < 2 {
            return Err(Error::pre("explicit index set needs at least two indices"));
        }
        if idx.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::pre("explicit index set must be strictly ascending"));
        }
        let pts = idx
            .iter()
            .map(|&n| sched.eps(n).map(|e| (n as f64, e)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(trend_report(&pts, "explicit index list"));
    }
    Ok(match &sched.kind {
        EpsilonKind::ReciprocalLog => AdmissibilityReport::symbolic(
            true,
            true,
            true,
            true,
            "ε = 1/log n: n/log n → ∞; Σ 1/(n log² n) < ∞; Σ 1/(n log n) = ∞",
        ),
        EpsilonKind::Power { gamma } => {
            let g = *gamma;
            if !(g > 0.0) {
                return Err(Error::pre("power schedule needs γ > 0"));
            }
            AdmissibilityReport::symbolic(
                g < 1.0,
                true,
                true,
                false,
                "ε = n^{-γ}: n^{1-γ} → ∞ iff γ < 1; Σ n^{-1-2γ} < ∞; Σ n^{-1-γ} < ∞",
            )
        }
        EpsilonKind::BetaDamped { beta, .. } => {
            if *beta >= 1.0 {
                AdmissibilityReport::symbolic(true, true, true, true, "β = 1 reduces to 1/log n")
            } else {
                AdmissibilityReport::symbolic(
                    false,
                    true,
                    true,
                    false,
                    "β < 1: ε decays exponentially, so n·ε → 0 and Σ ε/n < ∞",
                )
            }
        }
        EpsilonKind::Platoon { constants, runs } => match constants {
            PlatoonConstants::ReciprocalLog { .. } => AdmissibilityReport::symbolic(
                true,
                true,
                true,
                true,
                "c_ℓ = 1/log(ℓ+shift) with platoon harmonic sums in (1/(2ℓ), 1/ℓ): \
                 Σ c_ℓ/ℓ = ∞, Σ c_ℓ²/ℓ < ∞, ℓ·c_ℓ → ∞",
            ),
            PlatoonConstants::Table { .. } => {
                let pts = runs
                    .iter()
                    .map(|r| constants.c(r.ell).map(|c| (r.ell as f64, c)))
                    .collect::<Result<Vec<_>>>()?;
                if pts.len() < 2 {
                    return Err(Error::pre("platoon table needs at least two runs"));
                }
                trend_report(&pts, "platoon constants over ℓ")
            }
        },
        EpsilonKind::Explicit { values } => {
            let pts: Vec<(f64, f64)> = values
                .iter()
                .enumerate()
                .map(|(i, &e)| ((sched.domain_start + i as u64) as f64, e))
                .collect();
            if pts.len() < 2 {
                return Err(Error::pre("explicit schedule needs at least two entries"));
            }
            trend_report(&pts, "explicit table")
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogKind {
    /// `log y_n = c·n / log^s n`
    Stretched { s: f64, c: f64 },
    /// `log y_n = a·log n`
    Power { a: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSequence {
    #[serde(flatten)]
    pub kind: LogKind,
    pub domain_start: u64,
}

impl LogSequence {
    pub fn stretched(s: f64, c: f64) -> Result<Self> {
        if !(s > 1.0 && c > 0.0 && s.is_finite() && c.is_finite()) {
            return Err(Error::pre(format!("stretched sequence needs s > 1, c > 0 (got s={s}, c={c})")));
        }
        Ok(Self {
            kind: LogKind::Stretched { s, c },
            domain_start: 3,
        })
    }

    pub fn power(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::pre(format!("power sequence needs a > 0 (got {a})")));
        }
        Ok(Self {
            kind: LogKind::Power { a },
            domain_start: 2,
        })
    }

    pub fn with_start(mut self, start: u64) -> Result<Self> {
        if start < 2 {
            return Err(Error::pre("domain start must be at least 2"));
        }
        self.domain_start = start;
        Ok(self)
    }

    /// `log y_n`.
    pub fn log_value(&self, n: u64) -> Result<f64> {
        if n < self.domain_start {
            return Err(Error::pre(format!(
                "index {n} below domain start {}",
                self.domain_start
            )));
        }
        Ok(self.log_value_unchecked(n))
    }

    fn log_value_unchecked(&self, n: u64) -> f64 {
        let x = n as f64;
        match self.kind {
            LogKind::Stretched { s, c } => c * x / x.ln().powf(s),
            LogKind::Power { a } => a * x.ln(),
        }
    }

    /// `log y_{n+1} − log y_n`, without cancellation at large `n`.
    pub fn log_increment(&self, n: u64) -> Result<f64> {
        self.log_value(n)?;
        Ok(self.log_increment_unchecked(n))
    }

    fn log_increment_unchecked(&self, n: u64) -> f64 {
        let x = n as f64;
        let step = (1.0 / x).ln_1p();
        match self.kind {
            LogKind::Stretched { s, c } => {
                let ln = x.ln();
                // (n+1)·L(n+1)^{-s} − n·L(n)^{-s}, with L(n+1) = L(n)(1 + step/L(n))
                let rel = (-s * (step / ln).ln_1p()).exp_m1();
                c * ((ln + step).powf(-s) + x * ln.powf(-s) * rel)
            }
            LogKind::Power { a } => a * step,
        }
    }

    /// `y_n`; may be infinite.
    pub fn value(&self, n: u64) -> Result<f64> {
        self.log_value(n).map(f64::exp)
    }

    /// First index from which the sequence is strictly increasing.
    pub fn monotone_start(&self) -> u64 {
        match self.kind {
            LogKind::Stretched { s, .. } => self.domain_start.max(s.exp().ceil() as u64),
            LogKind::Power { .. } => self.domain_start,
        }
    }

    fn stretched_params(&self) -> Result<(f64, f64)> {
        match self.kind {
            LogKind::Stretched { s, c } => Ok((s, c)),
            LogKind::Power { .. } => Err(Error::pre("profile requires a stretched sequence")),
        }
    }

    /// Smallest index `n ≥ start` with `y_n > x`, searching up to `max_n`.
    pub fn first_index_above(&self, x: f64, max_n: u64) -> Option<u64> {
        let lx = x.ln();
        let mut lo = self.monotone_start();
        if self.log_value_unchecked(lo) > lx {
            return Some(lo);
        }
        if self.log_value_unchecked(max_n) <= lx {
            return None;
        }
        let mut hi = max_n;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.log_value_unchecked(mid) > lx {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

fn check_range(seq: &LogSequence, lo: u64, hi: u64) -> Result<()> {
    if lo > hi {
        return Err(Error::pre(format!("empty index range [{lo}, {hi}]")));
    }
    if lo < seq.domain_start {
        return Err(Error::pre(format!(
            "range start {lo} below domain start {}",
            seq.domain_start
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRatio {
    pub n: u64,
    /// `((y_{n+1} − y_n)/y_n)·log^s n / c`
    pub ratio: f64,
    /// `((log y_{n+1} − log y_n)/c)·log^s n`; independent of `c`.
    pub log_ratio: f64,
}

/// Relative growth of a stretched sequence, normalised by its predicted rate.
pub fn growth_ratio_profile(seq: &LogSequence, lo: u64, hi: u64) -> Result<Vec<GrowthRatio>> {
    let (s, c) = seq.stretched_params()?;
    check_range(seq, lo, hi)?;
    Ok((lo..=hi)
        .map(|n| {
            let d = seq.log_increment_unchecked(n);
            let scale = (n as f64).ln().powf(s);
            GrowthRatio {
                n,
                ratio: d.exp_m1() * scale / c,
                log_ratio: d / c * scale,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalCount {
    pub n: u64,
    /// `π(y_{n+1}) − π(y_n)`
    pub alpha: u64,
    /// `c·y_n / ((log y_n)(log log y_n)^s)`, when `y_n > e`.
    pub predicted: Option<f64>,
    pub ratio: Option<f64>,
}

/// Prime counts of the intervals `(y_n, y_{n+1}]` against their predicted size.
pub fn interval_prime_count_profile(
    seq: &LogSequence,
    lo: u64,
    hi: u64,
    sieve: &Sieve,
) -> Result<Vec<IntervalCount>> {
    let (s, c) = seq.stretched_params()?;
    check_range(seq, lo, hi)?;
    let top = seq.value(hi + 1)?;
    if !(top <= sieve.limit() as f64) {
        return Err(Error::range(
            "interval prime count profile",
            if top.is_finite() { top as u64 } else { u64::MAX },
            sieve.limit(),
        ));
    }
    (lo..=hi)
        .map(|n| {
            let l0 = seq.log_value_unchecked(n);
            let y0 = l0.exp();
            let y1 = seq.log_value_unchecked(n + 1).exp();
            let alpha = if y1 < 3.0 || y1 <= y0 {
                0
            } else {
                sieve.count_in(&RealInterval::left_open(y0, y1)?)?
            };
            let predicted = if y1 >= 3.0 && l0 > 1.0 {
                Some(c * y0 / (l0 * l0.ln().powf(s)))
            } else {
                None
            };
            Ok(IntervalCount {
                n,
                alpha,
                predicted,
                ratio: predicted.map(|p| alpha as f64 / p),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeDensityGrowth {
    pub n: u64,
    /// `(y_n/log² y_n) / (y_{n+1}/log y_{n+1} − y_n/log y_n)`; tends to 0.
    pub relative_step: f64,
    /// `(y_{n+1}/log y_{n+1} − y_n/log y_n)·(log y_n)(log log y_n)^s / (c·y_n)`;
    /// tends to 1.
    pub normalized_increment: f64,
}

/// Increments of `y/log y` along a stretched sequence, in forms where `y_n`
/// cancels so no exponentiation is needed.
pub fn density_growth_profile(seq: &LogSequence, lo: u64, hi: u64) -> Result<Vec<PrimeDensityGrowth>> {
    let (s, c) = seq.stretched_params()?;
    check_range(seq, lo, hi)?;
    (lo..=hi)
        .map(|n| {
            let l0 = seq.log_value_unchecked(n);
            let g = seq.log_increment_unchecked(n);
            let l1 = l0 + g;
            if l0 <= 1.0 {
                return Err(Error::pre(format!("log y_{n} = {l0} must exceed 1")));
            }
            // y_{n+1}/L1 − y_n/L0 = y_n·(L0·expm1(g) − g)/(L0·L1)
            let core = l0 * g.exp_m1() - g;
            Ok(PrimeDensityGrowth {
                n,
                relative_step: l1 / (l0 * core),
                normalized_increment: core * l0.ln().powf(s) / (c * l1),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn verdict_table() {
        let r = check_admissible(&EpsilonSchedule::reciprocal_log(), &IndexSet::AllFromStart).unwrap();
        assert!(r.all_hold());
        let r = check_admissible(&EpsilonSchedule::power(1.0), &IndexSet::AllFromStart).unwrap();
        assert!(!r.n_eps_unbounded.holds);
        let r = check_admissible(&EpsilonSchedule::power(1.0 / 3.0), &IndexSet::AllFromStart).unwrap();
        assert!(r.n_eps_unbounded.holds && r.square_sum_finite.holds);
        assert!(!r.sum_infinite.holds);
        let r = check_admissible(&EpsilonSchedule::beta_damped(0.5, 1.0), &IndexSet::AllFromStart).unwrap();
        assert!(!r.n_eps_unbounded.holds && !r.sum_infinite.holds);
    }

    #[test]
    fn heuristic_verdicts_on_index_lists() {
        let idx: Vec<u64> = (3..200_000).collect();
        let r = check_admissible(&EpsilonSchedule::reciprocal_log(), &IndexSet::Explicit(idx.clone())).unwrap();
        assert_eq!(r.sum_infinite.basis, Basis::Heuristic);
        assert!(r.all_hold(), "{:?}", r.evidence);
        let r = check_admissible(&EpsilonSchedule::power(1.0), &IndexSet::Explicit(idx.clone())).unwrap();
        assert!(!r.n_eps_unbounded.holds);
        assert!(!r.sum_infinite.holds);
        let r = check_admissible(&EpsilonSchedule::power(0.3), &IndexSet::Explicit(idx)).unwrap();
        assert!(!r.sum_infinite.holds);
    }

    #[test]
    fn platoon_schedule_lookup() {
        let runs = vec![
            PlatoonRun { ell: 2, first: 4, last: 9 },
            PlatoonRun { ell: 3, first: 12, last: 40 },
        ];
        let s = EpsilonSchedule::platoon(PlatoonConstants::ReciprocalLog { shift: 1.0 }, runs).unwrap();
        assert!((s.eps(5).unwrap() - 1.0 / 3f64.ln()).abs() < 1e-15);
        assert!((s.eps(40).unwrap() - 1.0 / 4f64.ln()).abs() < 1e-15);
        assert!(s.eps(10).is_err());
        assert!(check_admissible(&s, &IndexSet::AllFromStart).unwrap().all_hold());
        let bad = vec![
            PlatoonRun { ell: 2, first: 4, last: 9 },
            PlatoonRun { ell: 3, first: 9, last: 40 },
        ];
        assert!(EpsilonSchedule::platoon(PlatoonConstants::ReciprocalLog { shift: 1.0 }, bad).is_err());
    }

    #[test]
    fn explicit_schedule_bounds() {
        let s = EpsilonSchedule::constant(0.2, 3, 10);
        assert_eq!(s.eps(3).unwrap(), 0.2);
        assert_eq!(s.eps(10).unwrap(), 0.2);
        assert!(s.eps(11).is_err());
        assert_eq!(EpsilonSchedule::constant(0.0, 3, 5).eps(4).unwrap(), 0.0);
        assert!(EpsilonSchedule::explicit(3, vec![1.0]).eps(3).is_err());
    }

    #[test]
    fn log_value_examples() {
        let y = LogSequence::stretched(2.0, 1.0).unwrap().with_start(2).unwrap();
        assert!((y.log_value(4).unwrap() - 2.081_368_981_005_4).abs() < 1e-12);
        let p = LogSequence::power(3.0).unwrap();
        assert!((p.log_value(10).unwrap() - 6.907_755_278_982_137).abs() < 1e-12);
        assert!(LogSequence::stretched(2.0, 1.0).unwrap().log_value(2).is_err());
        assert!(LogSequence::stretched(1.0, 1.0).is_err());
    }

    #[test]
    fn growth_ratio_approaches_one() {
        // 50-digit reference values of expm1(Δ log y)·log² n.
        let y = LogSequence::stretched(2.0, 1.0).unwrap();
        let at = |n| growth_ratio_profile(&y, n, n).unwrap()[0].ratio;
        assert!((at(10_000) - 0.786_468_766_591_684_6).abs() < 1e-9);
        assert!((at(1_000_000) - 0.857_154_032_521_352).abs() < 1e-9);
        assert!((at(1_000_000_000_000_000_000) - 0.952_008_760_576_234_9).abs() < 1e-9);
        assert!((0.95..=1.05).contains(&at(1_000_000_000_000_000_000)));
        assert!(growth_ratio_profile(&LogSequence::power(2.0).unwrap(), 3, 5).is_err());
    }

    #[test]
    fn log_ratio_is_scale_free_and_ratio_converges_across_scales() {
        let y1 = LogSequence::stretched(2.0, 1.0).unwrap();
        let y2 = LogSequence::stretched(2.0, 2.0).unwrap();
        let a = growth_ratio_profile(&y1, 10, 5000).unwrap();
        let b = growth_ratio_profile(&y2, 10, 5000).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u.log_ratio - v.log_ratio).abs() <= 1e-12 * u.log_ratio.abs());
        }
        for (u, v) in a.iter().zip(&b) {
            let d = u.log_ratio / (u.n as f64).ln().powi(2);
            let expect = u.log_ratio * (2.0 * d).exp_m1() / (2.0 * d);
            assert!((v.ratio - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn relative_step_falls_below_threshold() {
        let y = LogSequence::stretched(2.0, 1.0).unwrap();
        let hit = (2..8)
            .map(|e| 10u64.pow(e))
            .map(|n| density_growth_profile(&y, n, n).unwrap()[0].relative_step)
            .any(|v| v < 0.05);
        assert!(hit);
        let at = |n| density_growth_profile(&y, n, n).unwrap()[0];
        assert!((at(10_000).relative_step - 0.922_864_564_935_368_6).abs() < 1e-9);
        assert!((at(1_000_000).relative_step - 0.042_510_084_719_393_73).abs() < 1e-11);
        assert!((at(10_000).normalized_increment - 0.209_118_813_519_744_4).abs() < 1e-9);
        let incr: Vec<f64> = [4, 6, 9, 12, 15, 18]
            .iter()
            .map(|&e| at(10u64.pow(e)).normalized_increment)
            .collect();
        assert!(incr.windows(2).all(|w| w[1] > w[0]), "{incr:?}");
        assert!((at(1_000_000_000_000_000_000).normalized_increment - 0.640_566_505_749_655).abs() < 1e-8);
    }

    #[test]
    fn first_index_above_brackets() {
        let y = LogSequence::stretched(2.0, 1.0).unwrap();
        let n = y.first_index_above(1e6, 10_000).unwrap();
        assert!(y.value(n).unwrap() > 1e6);
        assert!(y.value(n - 1).unwrap() <= 1e6);
    }

    proptest! {
        #[test]
        fn stretched_log_value_increasing(s in 1.1f64..4.0, c in 0.1f64..5.0, k in 0u64..5000) {
            let y = LogSequence::stretched(s, c).unwrap();
            let n = y.monotone_start() + k;
            prop_assert!(y.log_value(n + 1).unwrap() > y.log_value(n).unwrap());
        }

        #[test]
        fn log_value_linear_in_c(s in 1.1f64..4.0, c in 0.1f64..5.0, n in 3u64..100_000) {
            let a = LogSequence::stretched(s, c).unwrap().log_value(n).unwrap();
            let b = LogSequence::stretched(s, 2.0 * c).unwrap().log_value(n).unwrap();
            prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
        }

        #[test]
        fn reciprocal_log_in_unit_interval(n in 3u64..u64::MAX / 2) {
            let e = EpsilonSchedule::reciprocal_log().eps(n).unwrap();
            prop_assert!(e > 0.0 && e < 1.0);
        }
    }
}
