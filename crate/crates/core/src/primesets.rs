//! Prime block families and witness pairs.
//!
//! A family is a run of disjoint prime blocks
//! `B_n = 𝒫 ∩ (e^{(n+a)/s}, e^{(n+a+ε_n)/s}]` with `s = t₀` (unit scale) or
//! `s = β·t₀` (β-scaled), each block emitted only once `ε_n < β·t₀`. Blocks
//! holding more primes than the configured cutoff keep only their count and
//! reciprocal sum; consumers that need the primes re-enumerate them from the
//! sieve.
//!
//! Witness pairs match primes of two nearby blocks so that `p^β/q^β` is pinned
//! into a shrinking window around a target ratio.

use crate::primes::{Closure, RealInterval, Sieve};
use crate::schedules::EpsilonSchedule;
use crate::summation::CompensatedSum;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_CARDINALITY_CUTOFF: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentScale {
    /// Endpoints `e^{(n+a)/t₀}`.
    Unit,
    /// Endpoints `e^{(n+a)/(β t₀)}`.
    BetaScaled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub beta: f64,
    pub t0: f64,
    pub a: f64,
    pub schedule: EpsilonSchedule,
    pub scale: ExponentScale,
    pub closure: Closure,
    /// Auxiliary exponent of the β < 1 existence argument. Recorded only; the
    /// blocks do not depend on it.
    pub beta0: Option<f64>,
    pub cardinality_cutoff: u64,
}

impl BlockSpec {
    /// Left-open unit-scale blocks `(e^{(n+a)/t₀}, e^{(n+a+ε_n)/t₀}]`.
    pub fn unit(beta: f64, t0: f64, a: f64, schedule: EpsilonSchedule) -> Self {
        Self {
            beta,
            t0,
            a,
            schedule,
            scale: ExponentScale::Unit,
            closure: Closure::LeftOpen,
            beta0: None,
            cardinality_cutoff: DEFAULT_CARDINALITY_CUTOFF,
        }
    }

    /// Right-open β-scaled blocks `[e^{(n+1/2)/βt₀}, e^{(n+1/2+ε_n)/βt₀})` with
    /// the β-damped schedule: the family whose kernel series converges exactly
    /// on `ℤ·t₀`.
    pub fn lattice(beta: f64, t0: f64) -> Self {
        Self {
            beta,
            t0,
            a: 0.5,
            schedule: EpsilonSchedule::beta_damped(beta, t0),
            scale: ExponentScale::BetaScaled,
            closure: Closure::RightOpen,
            beta0: None,
            cardinality_cutoff: DEFAULT_CARDINALITY_CUTOFF,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::pre(format!("β must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::pre(format!("t₀ must be positive, got {}", self.t0)));
        }
        if !self.a.is_finite() {
            return Err(Error::pre("shift a must be finite"));
        }
        if let Some(b0) = self.beta0 {
            if !(b0 >= self.beta && b0 <= 1.0) {
                return Err(Error::pre(format!("β₀ = {b0} must lie in [β, 1]")));
            }
        }
        Ok(())
    }

    fn divisor(&self) -> f64 {
        match self.scale {
            ExponentScale::Unit => self.t0,
            ExponentScale::BetaScaled => self.beta * self.t0,
        }
    }

    /// Block interval at index `n` with width `eps`.
    pub fn interval(&self, n: u64, eps: f64) -> Result<RealInterval> {
        let d = self.divisor();
        let lo = ((n as f64 + self.a) / d).exp();
        let hi = ((n as f64 + self.a + eps) / d).exp();
        RealInterval::new(lo, hi, self.closure)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub n: u64,
    pub eps: f64,
    pub interval: RealInterval,
    pub count: u64,
    /// `Σ p^{−β}` over the block, ascending.
    pub reciprocal_sum: f64,
    /// Present when `count` does not exceed the cardinality cutoff.
    pub primes: Option<Vec<u64>>,
}

impl Block {
    /// Visits the block's primes in ascending order, from the stored list or
    /// the sieve.
    pub fn for_each_prime(&self, sieve: &Sieve, mut f: impl FnMut(u64)) -> Result<()> {
        match &self.primes {
            Some(ps) => {
                ps.iter().for_each(|&p| f(p));
                Ok(())
            }
            None => sieve.for_each_prime_in(&self.interval, f),
        }
    }

    pub fn primes_vec(&self, sieve: &Sieve) -> Result<Vec<u64>> {
        match &self.primes {
            Some(ps) => Ok(ps.clone()),
            None => sieve.primes_in(&self.interval),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeBlockFamily {
    pub spec: BlockSpec,
    pub blocks: Vec<Block>,
    /// Indices skipped because `ε_n ≥ β·t₀`.
    pub skipped: Vec<u64>,
}

/// Per-block summary without prime lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub n: u64,
    pub eps: f64,
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub reciprocal_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub spec: BlockSpec,
    pub blocks: Vec<BlockSummary>,
    pub skipped: Vec<u64>,
    pub total_count: u64,
}

fn build_block(spec: &BlockSpec, n: u64, eps: f64, sieve: &Sieve) -> Result<Block> {
    let interval = spec.interval(n, eps)?;
    let mut acc = CompensatedSum::<f64>::new();
    let mut count = 0u64;
    let keep = sieve.count_in(&interval)? <= spec.cardinality_cutoff;
    let mut list = Vec::new();
    sieve.for_each_prime_in(&interval, |p| {
        count += 1;
        acc.add((p as f64).powf(-spec.beta));
        if keep {
            list.push(p);
        }
    })?;
    Ok(Block {
        n,
        eps,
        interval,
        count,
        reciprocal_sum: acc.value(),
        primes: keep.then_some(list),
    })
}

/// Builds the blocks for `n ∈ [n_lo, n_hi]`.
pub fn build_family(spec: &BlockSpec, n_lo: u64, n_hi: u64, sieve: &Sieve) -> Result<PrimeBlockFamily> {
    spec.validate()?;
    if n_lo > n_hi {
        return Err(Error::pre(format!("empty block range [{n_lo}, {n_hi}]")));
    }
    let mut emitted = Vec::new();
    let mut skipped = Vec::new();
    for n in n_lo..=n_hi {
        let eps = spec.schedule.eps(n)?;
        if eps < spec.beta * spec.t0 {
            emitted.push((n, eps));
        } else {
            skipped.push(n);
        }
    }
    if let Some(&(n, eps)) = emitted.last() {
        let iv = spec.interval(n, eps)?;
        if iv.hi > sieve.limit() as f64 {
            return Err(Error::range("block family", iv.hi.ceil() as u64, sieve.limit()));
        }
    }
    let blocks = emitted
        .par_iter()
        .map(|&(n, eps)| build_block(spec, n, eps, sieve))
        .collect::<Result<Vec<_>>>()?;
    let fam = PrimeBlockFamily {
        spec: spec.clone(),
        blocks,
        skipped,
    };
    fam.check_disjoint()?;
    Ok(fam)
}

impl PrimeBlockFamily {
    /// Blocks have strictly increasing, pairwise disjoint integer ranges.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut prev: Option<u64> = None;
        for b in &self.blocks {
            if let Some((first, last)) = b.interval.integer_bounds() {
                if prev.is_some_and(|p| first <= p) {
                    return Err(Error::Verification(format!("block {} overlaps its predecessor", b.n)));
                }
                prev = Some(last);
            }
        }
        Ok(())
    }

    /// Every stored prime lies in its block's interval, is prime, and counts
    /// agree with the sieve.
    pub fn verify(&self, sieve: &Sieve) -> Result<()> {
        self.check_disjoint()?;
        for b in &self.blocks {
            if sieve.count_in(&b.interval)? != b.count {
                return Err(Error::Verification(format!("block {} count mismatch", b.n)));
            }
            if let Some(ps) = &b.primes {
                if ps.len() as u64 != b.count
                    || ps.iter().any(|&p| !b.interval.contains_int(p) || !sieve.is_prime(p))
                    || ps.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(Error::Verification(format!("block {} prime list invalid", b.n)));
                }
            }
        }
        Ok(())
    }

    pub fn total_count(&self) -> u64 {
        self.blocks.iter().map(|b| b.count).sum()
    }

    pub fn summary(&self) -> FamilySummary {
        FamilySummary {
            spec: self.spec.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockSummary {
                    n: b.n,
                    eps: b.eps,
                    lo: b.interval.lo,
                    hi: b.interval.hi,
                    count: b.count,
                    reciprocal_sum: b.reciprocal_sum,
                })
                .collect(),
            skipped: self.skipped.clone(),
            total_count: self.total_count(),
        }
    }

    /// All primes of the family, ascending.
    pub fn primes(&self, sieve: &Sieve) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(self.total_count() as usize);
        for b in &self.blocks {
            b.for_each_prime(sieve, |p| out.push(p))?;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSum {
    pub n: u64,
    pub value: f64,
}

/// `(n/ε_n)·Σ_{p∈B_n} 1/p` per block.
pub fn normalized_block_sums(fam: &PrimeBlockFamily) -> Result<Vec<NormalizedSum>> {
    if fam.spec.scale != ExponentScale::Unit || fam.spec.beta != 1.0 {
        return Err(Error::pre("normalized block sums need a unit-scale family with β = 1"));
    }
    Ok(fam
        .blocks
        .iter()
        .map(|b| NormalizedSum {
            n: b.n,
            value: if b.count == 0 {
                0.0
            } else {
                b.n as f64 / b.eps * b.reciprocal_sum
            },
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub n: u64,
    pub cumulative_count: u64,
    pub pi_hi: u64,
    pub cumulative_density: f64,
}

/// Share of all primes up to each block's upper end that the family has
/// collected so far.
pub fn density_profile(fam: &PrimeBlockFamily, sieve: &Sieve) -> Result<Vec<DensityPoint>> {
    let mut cum = 0u64;
    fam.blocks
        .iter()
        .map(|b| {
            cum += b.count;
            let pi_hi = match b.interval.integer_bounds() {
                Some((_, last)) => sieve.count_between(0, last)?,
                None => sieve.count_primes(b.interval.hi.floor())?,
            };
            Ok(DensityPoint {
                n: b.n,
                cumulative_count: cum,
                pi_hi,
                cumulative_density: if pi_hi == 0 { 0.0 } else { cum as f64 / pi_hi as f64 },
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// Pairs from consecutive lattice blocks, ratio target `λ^{−2}`.
    Powers,
    /// Pairs from blocks shifted by `log λ`, ratio target `λ`.
    FullSpectrum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub p: u64,
    pub q: u64,
}

impl WitnessPair {
    /// `β·(log p − log q)`.
    pub fn log_ratio(&self, beta: f64) -> f64 {
        beta * ((self.p as f64).ln() - (self.q as f64).ln())
    }

    pub fn ratio(&self, beta: f64) -> f64 {
        self.log_ratio(beta).exp()
    }
}

/// Pairs of one block, with the open window `(e^{log_lo}, e^{log_hi})` that
/// every `p^β/q^β` lies in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessBlock {
    pub n: u64,
    pub eps: f64,
    pub p_interval: RealInterval,
    pub q_interval: RealInterval,
    pub log_lo: f64,
    pub log_hi: f64,
    pub pairs: Vec<WitnessPair>,
}

impl WitnessBlock {
    pub fn enclosure(&self) -> (f64, f64) {
        (self.log_lo.exp(), self.log_hi.exp())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPairing {
    pub n: u64,
    pub p_count: u64,
    pub q_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPairs {
    pub kind: WitnessKind,
    pub beta: f64,
    pub lambda: f64,
    pub target: f64,
    pub blocks: Vec<WitnessBlock>,
    pub skipped: Vec<SkippedPairing>,
    /// Intervals whose lower end was raised to keep them clear of the
    /// previous interval.
    pub clipped: Vec<u64>,
}

impl WitnessPairs {
    pub fn pair_count(&self) -> usize {
        self.blocks.iter().map(|b| b.pairs.len()).sum()
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = (&WitnessBlock, &WitnessPair)> {
        self.blocks.iter().flat_map(|b| b.pairs.iter().map(move |p| (b, p)))
    }

    /// Number of pairs whose ratio falls outside its block's enclosure.
    pub fn enclosure_violations(&self) -> usize {
        self.iter_pairs()
            .filter(|(b, p)| {
                let l = p.log_ratio(self.beta);
                !(l > b.log_lo && l < b.log_hi)
            })
            .count()
    }

    /// Whether all primes across all pairs are distinct.
    pub fn all_distinct(&self) -> bool {
        let mut all: Vec<u64> = self.iter_pairs().flat_map(|(_, p)| [p.p, p.q]).collect();
        let len = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == len
    }
}

fn pair_first_k(ps: &[u64], qs: &[u64]) -> Vec<WitnessPair> {
    ps.iter().zip(qs).map(|(&p, &q)| WitnessPair { p, q }).collect()
}

/// Raises the lower end of `iv` to `floor` when they overlap, so that the
/// integer range starts after `floor`.
fn clip_above(iv: RealInterval, floor: Option<f64>) -> Result<(RealInterval, bool)> {
    match floor {
        Some(f) if f >= iv.lo => {
            let lo = f.floor().min(iv.hi);
            Ok((RealInterval::new(lo, iv.hi.max(lo), Closure::LeftOpen)?, true))
        }
        _ => Ok((iv, false)),
    }
}

/// Witness pairs over `n ∈ [n_lo, n_hi]`.
///
/// `Powers` matches the lattice blocks `B_{2n+1}` (p side) with `B_{2n}`
/// (q side) for the `t₀` with `2 t₀ log λ = −1`; `n` ranges over the pair
/// index. `FullSpectrum` matches `B_{n,log λ}` (p side) with `B_{n,0}` (q
/// side), using `(e^{(n+a)/β}, e^{(n+a+ε_n)/β}]` and `ε_n = 1/log n`. In both
/// cases the first `k` primes of each side are paired ascending, with `k` the
/// smaller cardinality.
pub fn build_witness_pairs(
    kind: WitnessKind,
    beta: f64,
    lambda: f64,
    n_lo: u64,
    n_hi: u64,
    sieve: &Sieve,
) -> Result<WitnessPairs> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::pre(format!("β must lie in (0, 1], got {beta}")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::pre(format!("λ must lie in (0, 1), got {lambda}")));
    }
    if n_lo > n_hi {
        return Err(Error::pre(format!("empty pair range [{n_lo}, {n_hi}]")));
    }
    let mut out = WitnessPairs {
        kind,
        beta,
        lambda,
        target: 0.0,
        blocks: Vec::new(),
        skipped: Vec::new(),
        clipped: Vec::new(),
    };
    match kind {
        WitnessKind::Powers => {
            let t0 = -1.0 / (2.0 * lambda.ln());
            out.target = (1.0 / t0).exp();
            let spec = BlockSpec::lattice(beta, t0);
            let fam = build_family(&spec, 2 * n_lo, 2 * n_hi + 1, sieve)?;
            let by_n = |m: u64| fam.blocks.iter().find(|b| b.n == m);
            for n in n_lo..=n_hi {
                let (Some(bp), Some(bq)) = (by_n(2 * n + 1), by_n(2 * n)) else {
                    continue;
                };
                if bp.count == 0 || bq.count == 0 {
                    out.skipped.push(SkippedPairing {
                        n,
                        p_count: bp.count,
                        q_count: bq.count,
                    });
                    continue;
                }
                let ps = bp.primes_vec(sieve)?;
                let qs = bq.primes_vec(sieve)?;
                out.blocks.push(WitnessBlock {
                    n,
                    eps: bq.eps.max(bp.eps),
                    p_interval: bp.interval,
                    q_interval: bq.interval,
                    log_lo: (1.0 - bq.eps) / t0,
                    log_hi: (1.0 + bp.eps) / t0,
                    pairs: pair_first_k(&ps, &qs),
                });
            }
        }
        WitnessKind::FullSpectrum => {
            let a = lambda.ln();
            out.target = lambda;
            let sched = EpsilonSchedule::reciprocal_log();
            let start = n_lo.max(sched.domain_start);
            let last_hi = ((n_hi as f64 + 1.0 / (n_hi as f64).ln()) / beta).exp();
            if last_hi > sieve.limit() as f64 {
                return Err(Error::range("witness pairs", last_hi.ceil() as u64, sieve.limit()));
            }
            let mut floor: Option<f64> = None;
            for n in start..=n_hi {
                let eps = sched.eps(n)?;
                let iv = |shift: f64| {
                    RealInterval::left_open(
                        ((n as f64 + shift) / beta).exp(),
                        ((n as f64 + shift + eps) / beta).exp(),
                    )
                };
                let (p_iv, clip_p) = clip_above(iv(a)?, floor)?;
                let (q_iv, clip_q) = clip_above(iv(0.0)?, Some(p_iv.hi))?;
                if clip_p || clip_q {
                    out.clipped.push(n);
                }
                floor = Some(q_iv.hi);
                let ps = sieve.primes_in(&p_iv)?;
                let qs = sieve.primes_in(&q_iv)?;
                if ps.is_empty() || qs.is_empty() {
                    out.skipped.push(SkippedPairing {
                        n,
                        p_count: ps.len() as u64,
                        q_count: qs.len() as u64,
                    });
                    continue;
                }
                out.blocks.push(WitnessBlock {
                    n,
                    eps,
                    p_interval: p_iv,
                    q_interval: q_iv,
                    log_lo: a - eps,
                    log_hi: a + eps,
                    pairs: pair_first_k(&ps, &qs),
                });
            }
        }
    }
    Ok(out)
}
