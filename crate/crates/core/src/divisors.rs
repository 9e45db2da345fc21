//! Divisors and the rescalings between them.
//!
//! A divisor is a non-decreasing sequence tending to infinity. It is stored as
//! a strictly increasing base `a′` (a [`LogSequence`]) with multiplicities
//! `m_n ≥ 1`. Two divisors are equivalent when some bijection of their terms
//! makes `Σ |1/a_k − 1/b_{φ(k)}|` finite. Everything here reports the
//! truncations of such sums on a finite range; none of it proves equivalence.
//!
//! Whenever a construction has to pick `k` primes out of an interval, it takes
//! the `k` smallest.

use crate::primes::{RealInterval, Sieve};
use crate::schedules::{LogKind, LogSequence};
use crate::summation::CompensatedSum;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Run-length encoding for multiplicity lists.
mod rle {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[u64], ser: S) -> Result<S::Ok, S::Error> {
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for &v in m {
            match runs.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => runs.push((v, 1)),
            }
        }
        runs.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u64>, D::Error> {
        let runs = Vec::<(u64, u64)>::deserialize(de)?;
        Ok(runs.into_iter().flat_map(|(v, c)| std::iter::repeat_n(v, c as usize)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divisor {
    pub base: LogSequence,
    /// Index of the first multiplicity.
    pub domain_start: u64,
    /// `m_n` for `n = domain_start, domain_start + 1, …`, as `[value, run]`
    /// pairs on the wire.
    #[serde(with = "rle")]
    pub multiplicities: Vec<u64>,
}

impl Divisor {
    pub fn new(base: LogSequence, domain_start: u64, multiplicities: Vec<u64>) -> Result<Self> {
        if domain_start < base.monotone_start() {
            return Err(Error::pre(format!(
                "divisor start {domain_start} precedes the increasing range of its base (from {})",
                base.monotone_start()
            )));
        }
        if let Some(i) = multiplicities.iter().position(|&m| m == 0) {
            return Err(Error::pre(format!("multiplicity at n = {} is zero", domain_start + i as u64)));
        }
        Ok(Self {
            base,
            domain_start,
            multiplicities,
        })
    }

    /// Last index with a multiplicity.
    pub fn end(&self) -> u64 {
        self.domain_start + self.multiplicities.len() as u64 - 1
    }

    pub fn multiplicity(&self, n: u64) -> Option<u64> {
        n.checked_sub(self.domain_start)
            .and_then(|i| self.multiplicities.get(i as usize).copied())
    }

    pub fn expanded_len(&self) -> u64 {
        self.multiplicities.iter().sum()
    }

    /// `1/a_k` for the first `limit` expanded terms.
    pub fn reciprocals(&self, limit: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(limit.min(self.expanded_len() as usize));
        for (i, &m) in self.multiplicities.iter().enumerate() {
            let r = (-self.base.log_value(self.domain_start + i as u64)?).exp();
            for _ in 0..m {
                if out.len() == limit {
                    return Ok(out);
                }
                out.push(r);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "map", rename_all = "snake_case")]
pub enum Pairing {
    Identity,
    /// `φ(k)` for `k = 0, 1, …` (zero-based positions).
    Explicit(Vec<usize>),
}

impl Pairing {
    pub fn inverse(&self, n: usize) -> Result<Pairing> {
        match self {
            Pairing::Identity => Ok(Pairing::Identity),
            Pairing::Explicit(map) => {
                let mut inv = vec![usize::MAX; n];
                for (k, &j) in map.iter().enumerate().take(n) {
                    if j >= n || inv[j] != usize::MAX {
                        return Err(Error::pre("pairing is not a bijection of the range"));
                    }
                    inv[j] = k;
                }
                Ok(Pairing::Explicit(inv))
            }
        }
    }
}

/// `Σ_{k<n} |a_k − b_{φ(k)}|` over reciprocal lists (the divisor terms
/// already inverted and expanded). Terms are summed in ascending order, which
/// makes the result symmetric under swapping the lists and inverting `φ`.
pub fn equivalence_gap(a_recip: &[f64], b_recip: &[f64], pairing: &Pairing, n: usize) -> Result<f64> {
    if n > a_recip.len() {
        return Err(Error::pre(format!("first divisor has {} terms, {n} requested", a_recip.len())));
    }
    let mut seen = vec![false; b_recip.len()];
    let mut terms = Vec::with_capacity(n);
    for (k, &ak) in a_recip.iter().enumerate().take(n) {
        let j = match pairing {
            Pairing::Identity => k,
            Pairing::Explicit(map) => *map
                .get(k)
                .ok_or_else(|| Error::pre(format!("pairing undefined at {k}")))?,
        };
        if j >= b_recip.len() || seen[j] {
            return Err(Error::pre(format!("pairing not total or not injective at {k}")));
        }
        seen[j] = true;
        terms.push((ak - b_recip[j]).abs());
    }
    terms.sort_by(f64::total_cmp);
    Ok(crate::summation::compensated_sum(terms))
}

fn stretched_s(seq: &LogSequence) -> Result<f64> {
    match seq.kind {
        LogKind::Stretched { s, .. } => Ok(s),
        LogKind::Power { .. } => Err(Error::pre("operation requires a stretched sequence")),
    }
}

/// `(x_n, x_{n+1}]` as reals.
fn step_interval(seq: &LogSequence, n: u64) -> Result<RealInterval> {
    RealInterval::left_open(seq.value(n)?, seq.value(n + 1)?)
}

fn check_index_range(seq: &LogSequence, n_lo: u64, n_hi: u64) -> Result<()> {
    if n_lo > n_hi {
        return Err(Error::pre(format!("empty index range [{n_lo}, {n_hi}]")));
    }
    if n_lo < seq.monotone_start() {
        return Err(Error::pre(format!(
            "index range must start at or after {} where the sequence increases",
            seq.monotone_start()
        )));
    }
    Ok(())
}

fn check_sieve(sieve: &Sieve, top: f64, what: &'static str) -> Result<()> {
    if !(top <= sieve.limit() as f64) {
        return Err(Error::range(what, top.min(u64::MAX as f64) as u64, sieve.limit()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalReport {
    pub divisor: Divisor,
    /// `B` restricted to the range, plus one adjoined prime per empty block.
    pub primes: Vec<u64>,
    /// Indices whose block was empty and received an adjoined prime.
    pub padded: Vec<u64>,
    /// Indices whose interval holds no prime at all; the divisor keeps
    /// `m_n = 1` there with no partner.
    pub defects: Vec<u64>,
    /// `sup (x_{n+1} − x_n)/x_n · (log log x_n)^s` over the range.
    pub growth_constant: f64,
    /// `Σ_{p} |1/p − 1/x_{n(p)}|` over `primes`.
    pub gap: f64,
}

/// Reads `B` against the steps of `x`: `m_n = |B ∩ (x_n, x_{n+1}]|` for
/// `n ∈ [n_lo, n_hi]`, with empty blocks padded by their smallest prime.
pub fn principal_from_primes(
    x: &LogSequence,
    b: &[u64],
    n_lo: u64,
    n_hi: u64,
    growth_s: f64,
    sieve: &Sieve,
) -> Result<PrincipalReport> {
    check_index_range(x, n_lo, n_hi)?;
    if b.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::pre("prime set must be strictly ascending"));
    }
    check_sieve(sieve, x.value(n_hi + 1)?, "principal divisor range")?;
    if x.value(n_lo)? <= std::f64::consts::E {
        return Err(Error::pre("x_n must exceed e so that log log x_n is positive"));
    }
    let per_block: Vec<(Vec<u64>, bool, bool, f64, f64)> = (n_lo..=n_hi)
        .into_par_iter()
        .map(|n| -> Result<_> {
            let iv = step_interval(x, n)?;
            let (lo, hi) = (iv.lo, iv.hi);
            let start = b.partition_point(|&p| (p as f64) <= lo);
            let end = b.partition_point(|&p| (p as f64) <= hi);
            let mut ps = b[start..end].to_vec();
            let (mut padded, mut defect) = (false, false);
            if ps.is_empty() {
                match sieve.primes_in(&iv)?.first() {
                    Some(&q) => {
                        ps.push(q);
                        padded = true;
                    }
                    None => defect = true,
                }
            }
            let growth = x.log_increment(n)?.exp_m1() * x.log_value(n)?.ln().powf(growth_s);
            Ok((ps, padded, defect, growth, lo))
        })
        .collect::<Result<_>>()?;

    let mut primes = Vec::new();
    let mut padded = Vec::new();
    let mut defects = Vec::new();
    let mut m = Vec::with_capacity(per_block.len());
    let mut growth_constant: f64 = 0.0;
    let mut terms = Vec::new();
    for (i, (ps, pad, defect, growth, xn)) in per_block.into_iter().enumerate() {
        let n = n_lo + i as u64;
        if pad {
            padded.push(n);
        }
        if defect {
            defects.push(n);
        }
        growth_constant = growth_constant.max(growth);
        m.push((ps.len() as u64).max(1));
        for &p in &ps {
            terms.push((1.0 / xn - 1.0 / p as f64).abs());
        }
        primes.extend(ps);
    }
    terms.sort_by(f64::total_cmp);
    Ok(PrincipalReport {
        divisor: Divisor::new(*x, n_lo, m)?,
        primes,
        padded,
        defects,
        growth_constant,
        gap: crate::summation::compensated_sum(terms),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftBlock {
    pub n: u64,
    pub requested: u64,
    pub available: u64,
    /// `c·y_n / (2 log y_n (log log y_n)^s)`.
    pub bound: f64,
    pub filled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    /// Union of the filled blocks, ascending.
    pub primes: Vec<u64>,
    pub blocks: Vec<LiftBlock>,
    /// Indices whose interval held fewer primes than requested.
    pub shortfalls: Vec<u64>,
    /// `Σ |1/p − 1/y_n|` over the filled blocks.
    pub gap: f64,
}

impl LiftReport {
    pub fn shortfall_rate(&self) -> f64 {
        if self.blocks.is_empty() {
            0.0
        } else {
            self.shortfalls.len() as f64 / self.blocks.len() as f64
        }
    }
}

/// Realizes `y^m` by primes: `B_n` is the first `m_n` primes of
/// `(y_n, y_{n+1}]`. Blocks without enough primes stay empty and are listed as
/// shortfalls.
pub fn lift_to_primes(y: &LogSequence, m: &[u64], start: u64, sieve: &Sieve) -> Result<LiftReport> {
    let s = stretched_s(y)?;
    let c = match y.kind {
        LogKind::Stretched { c, .. } => c,
        LogKind::Power { .. } => unreachable!(),
    };
    if m.is_empty() {
        return Ok(LiftReport {
            primes: vec![],
            blocks: vec![],
            shortfalls: vec![],
            gap: 0.0,
        });
    }
    if m.contains(&0) {
        return Err(Error::pre("multiplicities must be at least 1"));
    }
    let n_hi = start + m.len() as u64 - 1;
    check_index_range(y, start, n_hi)?;
    check_sieve(sieve, y.value(n_hi + 1)?, "lift range")?;
    let blocks: Vec<(LiftBlock, Vec<u64>, f64)> = m
        .par_iter()
        .enumerate()
        .map(|(i, &mn)| -> Result<_> {
            let n = start + i as u64;
            let iv = step_interval(y, n)?;
            let ly = y.log_value(n)?;
            let bound = c * (ly - std::f64::consts::LN_2 - ly.ln() - s * ly.ln().ln()).exp();
            let all = sieve.primes_in(&iv)?;
            let available = all.len() as u64;
            let filled = available >= mn;
            let chosen = if filled { all[..mn as usize].to_vec() } else { Vec::new() };
            Ok((
                LiftBlock {
                    n,
                    requested: mn,
                    available,
                    bound,
                    filled,
                },
                chosen,
                iv.lo,
            ))
        })
        .collect::<Result<_>>()?;
    let mut primes = Vec::new();
    let mut shortfalls = Vec::new();
    let mut acc = CompensatedSum::<f64>::new();
    let mut out_blocks = Vec::with_capacity(blocks.len());
    for (blk, chosen, yn) in blocks {
        if !blk.filled {
            shortfalls.push(blk.n);
        }
        for &p in &chosen {
            acc.add(1.0 / yn - 1.0 / p as f64);
        }
        primes.extend(chosen);
        out_blocks.push(blk);
    }
    Ok(LiftReport {
        primes,
        blocks: out_blocks,
        shortfalls,
        gap: acc.value(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    /// `max |r_n − s_n| (log y_n)(log log y_n)^{s+2} / y_n`.
    pub m_sup: f64,
    /// `Σ |r_n − s_n| / y_n`.
    pub gap: f64,
    /// `Σ 1/((log y_n)(log log y_n)^{s+2})`.
    pub envelope: f64,
    pub holds: bool,
}

/// Compares `y^r` and `y^{s_mult}` over `n ∈ [start, start + len)`.
pub fn perturb_multiplicities(y: &LogSequence, r: &[u64], s_mult: &[u64], start: u64) -> Result<PerturbReport> {
    let s = stretched_s(y)?;
    if r.len() != s_mult.len() {
        return Err(Error::pre("multiplicity sequences differ in length"));
    }
    if r.contains(&0) || s_mult.contains(&0) {
        return Err(Error::pre("multiplicities must be at least 1"));
    }
    if !r.is_empty() {
        check_index_range(y, start, start + r.len() as u64 - 1)?;
        if y.log_value(start)? <= 1.0 {
            return Err(Error::pre("y_n must exceed e so that log log y_n is positive"));
        }
    }
    let mut m_sup: f64 = 0.0;
    let mut gap = CompensatedSum::<f64>::new();
    let mut env = CompensatedSum::<f64>::new();
    for (i, (&a, &b)) in r.iter().zip(s_mult).enumerate() {
        let ly = y.log_value(start + i as u64)?;
        let w = ly.ln() + (s + 2.0) * ly.ln().ln();
        env.add((-w).exp());
        let d = a.abs_diff(b);
        if d > 0 {
            let ld = (d as f64).ln();
            gap.add((ld - ly).exp());
            m_sup = m_sup.max((ld + w - ly).exp());
        }
    }
    let (gap, envelope) = (gap.value(), env.value());
    Ok(PerturbReport {
        m_sup,
        gap,
        envelope,
        holds: gap <= m_sup * envelope * (1.0 + 1e-12),
    })
}

/// `⌈y_n / ((log y_n)(log log y_n)^{s+2})⌉`, the multiplicity floor a
/// homothety needs before `m′_n` grows without bound.
pub fn homothety_floor(y: &LogSequence, n: u64) -> Result<u64> {
    let s = stretched_s(y)?;
    let ly = y.log_value(n)?;
    if ly <= 1.0 {
        return Err(Error::pre("y_n must exceed e"));
    }
    Ok((ly - ly.ln() - (s + 2.0) * ly.ln().ln()).exp().ceil().max(1.0) as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomothetyResult {
    pub z: LogSequence,
    pub start: u64,
    /// `⌊m_n z_n / y_n⌋`; `None` where it exceeds `u64`.
    pub m_prime: Vec<Option<u64>>,
    /// `log(m_n z_n / y_n)`, always reported.
    pub log_m_prime: Vec<f64>,
    pub zeros: Vec<u64>,
    pub unrepresentable: Vec<u64>,
}

/// `z = y(s, c/λ)` (so `z_n^λ = y_n`) and `m′_n = ⌊m_n z_n / y_n⌋`, evaluated
/// in log space.
pub fn homothety_rescale(y: &LogSequence, m: &[u64], start: u64, lambda: f64) -> Result<HomothetyResult> {
    let (s, c) = match y.kind {
        LogKind::Stretched { s, c } => (s, c),
        LogKind::Power { .. } => return Err(Error::pre("homothety requires a stretched sequence")),
    };
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::pre("λ must be positive"));
    }
    let z = LogSequence::stretched(s, c / lambda)?.with_start(y.domain_start)?;
    let mut out = HomothetyResult {
        z,
        start,
        m_prime: Vec::with_capacity(m.len()),
        log_m_prime: Vec::with_capacity(m.len()),
        zeros: vec![],
        unrepresentable: vec![],
    };
    for (i, &mn) in m.iter().enumerate() {
        let n = start + i as u64;
        let shift = if lambda == 1.0 { 0.0 } else { z.log_value(n)? - y.log_value(n)? };
        let lv = (mn as f64).ln() + shift;
        out.log_m_prime.push(lv);
        let v = if shift == 0.0 { Some(mn) } else { floor_exp(lv) };
        match v {
            None => out.unrepresentable.push(n),
            Some(0) => out.zeros.push(n),
            _ => {}
        }
        out.m_prime.push(v);
    }
    Ok(out)
}

fn floor_exp(lv: f64) -> Option<u64> {
    // 2^64 ≈ e^{44.36}
    if lv >= 64.0 * std::f64::consts::LN_2 {
        None
    } else {
        Some(lv.exp().floor() as u64)
    }
}

/// `⌊m_n / factor⌋`, the constant-rescaling step of a homothety with a
/// caller-supplied constant. Returns the scaled list and the indices that
/// dropped to zero.
pub fn scale_multiplicities(m: &[u64], start: u64, factor: f64) -> Result<(Vec<u64>, Vec<u64>)> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::pre("scaling factor must be positive"));
    }
    let out: Vec<u64> = m.iter().map(|&v| (v as f64 / factor).floor() as u64).collect();
    let zeros = out
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 0)
        .map(|(i, _)| start + i as u64)
        .collect();
    Ok((out, zeros))
}

/// Constant of the polynomial-scale windows.
pub const C0: f64 = 0.535;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeBlock {
    pub n: u64,
    pub primes: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockBijection {
    pub source_blocks: Vec<PrimeBlock>,
    pub target_blocks: Vec<PrimeBlock>,
}

impl BlockBijection {
    /// Pairs `(p, φ(p))`, ascending matched to ascending within each block.
    pub fn pairs(&self) -> Vec<(u64, u64)> {
        self.source_blocks
            .iter()
            .zip(&self.target_blocks)
            .flat_map(|(s, t)| s.primes.iter().copied().zip(t.primes.iter().copied()))
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        for (s, t) in self.source_blocks.iter().zip(&self.target_blocks) {
            if s.n != t.n || s.primes.len() != t.primes.len() {
                return Err(Error::Verification(format!("block {} unbalanced", s.n)));
            }
        }
        if self.source_blocks.len() != self.target_blocks.len() {
            return Err(Error::Verification("block lists differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    /// `Σ |p^{−β₀} − φ(p)^{−β}|`.
    L1,
    /// `Σ (p^{−β₀/2} − φ(p)^{−β/2})²`.
    L2Bhattacharyya,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RescaleBlocks {
    /// Source steps of `y(s, 1)`, target steps of `y(s, 1/β)`; needs `β₀ = 1`.
    Stretched { s: f64 },
    /// Source `(n^{a/β₀}, (n+1)^{a/β₀}]`, target `(n^{a/β}, (n+1)^{a/β}]`.
    Power { a: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleReport {
    pub beta0: f64,
    pub beta: f64,
    pub mode: RescaleMode,
    pub blocks: RescaleBlocks,
    pub bijection: BlockBijection,
    /// Indices whose target interval held fewer primes than the source block.
    pub excluded: Vec<u64>,
    /// Cumulative gap after each paired block.
    pub gaps: Vec<f64>,
}

impl RescaleReport {
    pub fn gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(0.0)
    }
}

fn check_power_window(beta0: f64, beta: f64, a: f64, mode: RescaleMode) -> Result<()> {
    if beta0 == beta {
        return Ok(());
    }
    if !(0.0 < beta && beta < beta0 && beta0 < 1.0) {
        return Err(Error::pre("power blocks need 0 < β < β₀ < 1"));
    }
    let (k, min_a) = match mode {
        RescaleMode::L1 => (1.0, beta0),
        RescaleMode::L2Bhattacharyya => (2.0, 2.0 * beta0),
    };
    let lo = (beta / (1.0 - C0)).max(min_a);
    let hi = k * beta0 / (1.0 - beta0);
    if !(a > lo && a < hi) {
        return Err(Error::pre(format!("a = {a} outside the admissible window ({lo}, {hi})")));
    }
    Ok(())
}

/// Moves the primes of `b` (read at exponent `β₀`) to primes read at exponent
/// `β`: each source block is matched to the first `|B_n|` primes of the
/// corresponding target interval.
pub fn beta_rescale(
    b: &[u64],
    beta0: f64,
    beta: f64,
    blocks: RescaleBlocks,
    mode: RescaleMode,
    n_lo: u64,
    n_hi: u64,
    sieve: &Sieve,
) -> Result<RescaleReport> {
    if b.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::pre("prime set must be strictly ascending"));
    }
    if n_lo > n_hi || n_lo == 0 {
        return Err(Error::pre("index range must be non-empty and start at 1 or later"));
    }
    let (src, dst): (Box<dyn Fn(u64) -> Result<RealInterval> + Sync>, Box<dyn Fn(u64) -> Result<RealInterval> + Sync>) =
        match blocks {
            RescaleBlocks::Stretched { s } => {
                if beta0 != 1.0 || !(beta > 0.0 && beta <= 1.0) {
                    return Err(Error::pre("stretched blocks need β₀ = 1 and β ∈ (0, 1]"));
                }
                let y = LogSequence::stretched(s, 1.0)?;
                let x = LogSequence::stretched(s, 1.0 / beta)?;
                check_index_range(&y, n_lo, n_hi)?;
                (
                    Box::new(move |n| step_interval(&y, n)),
                    Box::new(move |n| step_interval(&x, n)),
                )
            }
            RescaleBlocks::Power { a } => {
                check_power_window(beta0, beta, a, mode)?;
                let (e0, e1) = (a / beta0, a / beta);
                (
                    Box::new(move |n| RealInterval::left_open((n as f64).powf(e0), ((n + 1) as f64).powf(e0))),
                    Box::new(move |n| RealInterval::left_open((n as f64).powf(e1), ((n + 1) as f64).powf(e1))),
                )
            }
        };
    check_sieve(sieve, dst(n_hi)?.hi, "rescale target range")?;
    let per_block: Vec<(u64, Vec<u64>, Option<Vec<u64>>)> = (n_lo..=n_hi)
        .into_par_iter()
        .map(|n| -> Result<_> {
            let si = src(n)?;
            let start = b.partition_point(|&p| (p as f64) <= si.lo);
            let end = b.partition_point(|&p| (p as f64) <= si.hi);
            let ps = b[start..end].to_vec();
            let targets = sieve.primes_in(&dst(n)?)?;
            let chosen = (targets.len() >= ps.len()).then(|| targets[..ps.len()].to_vec());
            Ok((n, ps, chosen))
        })
        .collect::<Result<_>>()?;

    let mut report = RescaleReport {
        beta0,
        beta,
        mode,
        blocks,
        bijection: BlockBijection {
            source_blocks: vec![],
            target_blocks: vec![],
        },
        excluded: vec![],
        gaps: vec![],
    };
    let mut acc = CompensatedSum::<f64>::new();
    for (n, ps, chosen) in per_block {
        let Some(qs) = chosen else {
            report.excluded.push(n);
            continue;
        };
        for (&p, &q) in ps.iter().zip(&qs) {
            let (lp, lq) = ((p as f64).ln(), (q as f64).ln());
            acc.add(match mode {
                RescaleMode::L1 => ((-beta0 * lp).exp() - (-beta * lq).exp()).abs(),
                RescaleMode::L2Bhattacharyya => ((-0.5 * beta0 * lp).exp() - (-0.5 * beta * lq).exp()).powi(2),
            });
        }
        report.gaps.push(acc.value());
        report.bijection.source_blocks.push(PrimeBlock { n, primes: ps });
        report.bijection.target_blocks.push(PrimeBlock { n, primes: qs });
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPrincipalReport {
    /// `y(βa)^m`.
    pub divisor: Divisor,
    pub padded: Vec<u64>,
    pub defects: Vec<u64>,
    /// `Σ_{p∈B} |p^{−β} − n_p^{−βa}|`.
    pub gap: f64,
}

/// Reads `B` (at exponent `β`) against the power steps `(n^a, (n+1)^a]`,
/// producing `y(βa)^m` with `m_n = |B ∩ (n^a, (n+1)^a]|` and empty blocks
/// padded by their smallest prime. Needs `β ∈ (1/2, 1)`, `a > 2` and
/// `βa > a − 1`.
pub fn principal_from_primes_power(
    b: &[u64],
    beta: f64,
    a: f64,
    n_lo: u64,
    n_hi: u64,
    sieve: &Sieve,
) -> Result<PowerPrincipalReport> {
    if !(beta > 0.5 && beta < 1.0 && a > 2.0 && beta * a > a - 1.0) {
        return Err(Error::pre("need β ∈ (1/2, 1), a > 2 and βa > a − 1"));
    }
    if n_lo < 2 || n_lo > n_hi {
        return Err(Error::pre("index range must be non-empty and start at 2 or later"));
    }
    if b.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::pre("prime set must be strictly ascending"));
    }
    check_sieve(sieve, ((n_hi + 1) as f64).powf(a), "power principal range")?;
    let mut m = Vec::new();
    let (mut padded, mut defects) = (vec![], vec![]);
    let mut terms = Vec::new();
    for n in n_lo..=n_hi {
        let iv = RealInterval::left_open((n as f64).powf(a), ((n + 1) as f64).powf(a))?;
        let start = b.partition_point(|&p| (p as f64) <= iv.lo);
        let end = b.partition_point(|&p| (p as f64) <= iv.hi);
        let mut ps = b[start..end].to_vec();
        if ps.is_empty() {
            match sieve.primes_in(&iv)?.first() {
                Some(&q) => {
                    ps.push(q);
                    padded.push(n);
                }
                None => defects.push(n),
            }
        }
        let target = (-beta * a * (n as f64).ln()).exp();
        for &p in &ps {
            terms.push(((-beta * (p as f64).ln()).exp() - target).abs());
        }
        m.push((ps.len() as u64).max(1));
    }
    terms.sort_by(f64::total_cmp);
    Ok(PowerPrincipalReport {
        divisor: Divisor::new(LogSequence::power(beta * a)?.with_start(n_lo)?, n_lo, m)?,
        padded,
        defects,
        gap: crate::summation::compensated_sum(terms),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLiftReport {
    pub lift: LiftReport,
    /// `max n^{1−a} m_n log n` over the upper half of the range.
    pub tail_growth: f64,
}

/// Realizes `y(βa)^m` by primes read at exponent `β`: the first `m_n` primes
/// of `(n^a, (n+1)^a]`. Needs `c₀ < 1 − 1/a < β`. The reported gap is
/// `Σ |p^{−β} − n^{−βa}|`.
pub fn lift_power(m: &[u64], start: u64, beta: f64, a: f64, sieve: &Sieve) -> Result<PowerLiftReport> {
    if !(C0 < 1.0 - 1.0 / a && 1.0 - 1.0 / a < beta && beta <= 1.0) {
        return Err(Error::pre("need c₀ < 1 − 1/a < β ≤ 1"));
    }
    if start < 1 || m.contains(&0) {
        return Err(Error::pre("start must be at least 1 and multiplicities at least 1"));
    }
    let n_hi = start + m.len() as u64;
    check_sieve(sieve, (n_hi as f64).powf(a), "power lift range")?;
    let mut primes = Vec::new();
    let mut blocks = Vec::with_capacity(m.len());
    let mut shortfalls = Vec::new();
    let mut acc = CompensatedSum::<f64>::new();
    let mut tail_growth: f64 = 0.0;
    for (i, &mn) in m.iter().enumerate() {
        let n = start + i as u64;
        let x = n as f64;
        let iv = RealInterval::left_open(x.powf(a), (x + 1.0).powf(a))?;
        let all = sieve.primes_in(&iv)?;
        let filled = all.len() as u64 >= mn;
        if filled {
            let target = (-beta * a * x.ln()).exp();
            for &p in &all[..mn as usize] {
                acc.add(((-beta * (p as f64).ln()).exp() - target).abs());
            }
            primes.extend_from_slice(&all[..mn as usize]);
        } else {
            shortfalls.push(n);
        }
        if i >= m.len() / 2 {
            tail_growth = tail_growth.max(x.powf(1.0 - a) * mn as f64 * x.ln());
        }
        blocks.push(LiftBlock {
            n,
            requested: mn,
            available: all.len() as u64,
            bound: f64::NAN,
            filled,
        });
    }
    Ok(PowerLiftReport {
        lift: LiftReport {
            primes,
            blocks,
            shortfalls,
            gap: acc.value(),
        },
        tail_growth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::PrimeRange;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn sieve() -> &'static Sieve {
        static S: OnceLock<Sieve> = OnceLock::new();
        S.get_or_init(|| Sieve::build(&PrimeRange::new(20_000_000)).unwrap())
    }

    fn y2() -> LogSequence {
        LogSequence::stretched(2.0, 1.0).unwrap()
    }

    #[test]
    fn gap_examples() {
        let a: Vec<f64> = (1..=2000u64).map(|n| 1.0 / (n * n) as f64).collect();
        let b: Vec<f64> = (1..=2000u64).map(|n| 1.0 / (n * n + 1) as f64).collect();
        assert_eq!(equivalence_gap(&a, &a, &Pairing::Identity, 2000).unwrap(), 0.0);
        // Σ_{n≥1} 1/(n²(n²+1)) = π²/6 − (π coth π − 1)/2.
        let pi = std::f64::consts::PI;
        let limit = pi * pi / 6.0 - (pi / pi.tanh() - 1.0) / 2.0;
        let mut prev = 0.0;
        for n in [1, 10, 100, 2000] {
            let g = equivalence_gap(&a, &b, &Pairing::Identity, n).unwrap();
            let direct: f64 = (1..=n as u64).map(|k| 1.0 / ((k * k) as f64 * (k * k + 1) as f64)).sum();
            assert!((g - direct).abs() < 1e-14);
            assert!(g >= prev && g < limit);
            prev = g;
        }
        assert!(limit - prev < 1e-9);
        let a2: Vec<f64> = a.iter().flat_map(|&v| [v, v]).collect();
        let b2: Vec<f64> = b.iter().flat_map(|&v| [v, v]).collect();
        let g1 = equivalence_gap(&a, &b, &Pairing::Identity, 2000).unwrap();
        let g2 = equivalence_gap(&a2, &b2, &Pairing::Identity, 4000).unwrap();
        assert!((g2 - 2.0 * g1).abs() < 1e-15);
        assert!(equivalence_gap(&a, &b[..10], &Pairing::Identity, 11).is_err());
        assert!(equivalence_gap(&a, &b, &Pairing::Explicit(vec![0, 0]), 2).is_err());
    }

    #[test]
    fn divisor_json_round_trip() {
        let d = Divisor::new(y2(), 10, vec![1, 1, 1, 4, 4, 2]).unwrap();
        let js = serde_json::to_string(&d).unwrap();
        assert!(js.contains("[[1,3],[4,2],[2,1]]"), "{js}");
        let back: Divisor = serde_json::from_str(&js).unwrap();
        assert_eq!(back, d);
        assert!(Divisor::new(y2(), 10, vec![1, 0]).is_err());
        assert_eq!(d.end(), 15);
        assert_eq!(d.reciprocals(100).unwrap().len(), 13);
    }

    #[test]
    fn principal_single_block_and_padding() {
        let x = y2();
        let (n_lo, n_hi) = (280u64, 320u64);
        let iv = step_interval(&x, 300).unwrap();
        let b = sieve().primes_in(&iv).unwrap();
        assert!(b.len() > 1);
        let rep = principal_from_primes(&x, &b, n_lo, n_hi, 2.0, sieve()).unwrap();
        assert_eq!(rep.divisor.multiplicity(300), Some(b.len() as u64));
        let others: Vec<u64> = (n_lo..=n_hi).filter(|&n| n != 300).collect();
        assert_eq!(rep.padded.len() + rep.defects.len(), others.len());
        for n in others {
            assert_eq!(rep.divisor.multiplicity(n), Some(1));
        }
        let empty = principal_from_primes(&x, &[], n_lo, n_hi, 2.0, sieve()).unwrap();
        assert_eq!(empty.padded.len() + empty.defects.len(), (n_hi - n_lo + 1) as usize);
    }

    #[test]
    fn principal_gap_under_proof_bound() {
        let x = y2();
        let (n_lo, n_hi) = (300u64, 480u64);
        let iv = RealInterval::left_open(x.value(n_lo).unwrap(), x.value(n_hi + 1).unwrap()).unwrap();
        let b = sieve().primes_in(&iv).unwrap();
        let rep = principal_from_primes(&x, &b, n_lo, n_hi, 2.0, sieve()).unwrap();
        assert!(b.iter().all(|p| rep.primes.binary_search(p).is_ok()));
        assert_eq!(rep.primes.len(), b.len() + rep.padded.len());
        // 0 ≤ 1/x_n − 1/p < c/(p (log log x_n)²) with the realized c.
        let mut bound = 0.0;
        for n in n_lo..=n_hi {
            let iv = step_interval(&x, n).unwrap();
            for &p in rep.primes.iter().filter(|&&p| iv.contains_int(p)) {
                bound += rep.growth_constant / (p as f64 * iv.lo.ln().ln().powi(2));
            }
        }
        assert!(rep.gap < bound, "{} vs {bound}", rep.gap);
        // The divisor read back against the primes reproduces the gap.
        let recips = rep.divisor.reciprocals(usize::MAX).unwrap();
        let pr: Vec<f64> = rep.primes.iter().map(|&p| 1.0 / p as f64).collect();
        let g = equivalence_gap(&recips, &pr, &Pairing::Identity, pr.len()).unwrap();
        assert!(rep.defects.is_empty());
        assert!((g - rep.gap).abs() <= 1e-10 * rep.gap);
    }

    #[test]
    fn lift_one_per_block() {
        let y = y2();
        let m = vec![1u64; 200];
        // Short early steps can miss every prime.
        let early = lift_to_primes(&y, &m, 30, sieve()).unwrap();
        assert!(!early.shortfalls.is_empty());
        let rep = lift_to_primes(&y, &m, 300, sieve()).unwrap();
        assert!(rep.shortfalls.is_empty());
        assert_eq!(rep.primes.len(), 200);
        for (blk, p) in rep.blocks.iter().zip(&rep.primes) {
            let iv = step_interval(&y, blk.n).unwrap();
            assert!(iv.contains_int(*p));
        }
        assert!(lift_to_primes(&y, &[1, 0], 30, sieve()).is_err());
    }

    #[test]
    fn lift_at_bound_shortfalls_shrink() {
        // With m_n at c·y_n/(2 log y_n (log log y_n)^s) the available count
        // trails the request at these heights; the coverage ratio must improve.
        let y = y2();
        let (lo, hi) = (300u64, 560u64);
        let m: Vec<u64> = (lo..=hi)
            .map(|n| {
                let ly = y.log_value(n).unwrap();
                (ly - std::f64::consts::LN_2 - ly.ln() - 2.0 * ly.ln().ln()).exp().floor().max(1.0) as u64
            })
            .collect();
        let rep = lift_to_primes(&y, &m, lo, sieve()).unwrap();
        let cover = |b: &LiftBlock| b.available as f64 / b.requested as f64;
        let head: f64 = rep.blocks[..20].iter().map(cover).sum::<f64>() / 20.0;
        let tail: f64 = rep.blocks[rep.blocks.len() - 20..].iter().map(cover).sum::<f64>() / 20.0;
        assert!(tail > head, "{head} {tail}");
        assert!(rep.shortfall_rate() <= 1.0);
    }

    #[test]
    fn perturb_examples() {
        let y = y2();
        let r: Vec<u64> = (20..400).map(|n| 3 + n % 5).collect();
        let same = perturb_multiplicities(&y, &r, &r, 20).unwrap();
        assert_eq!((same.m_sup, same.gap), (0.0, 0.0));
        let s1: Vec<u64> = r.iter().map(|v| v + 1).collect();
        let rep = perturb_multiplicities(&y, &r, &s1, 20).unwrap();
        let direct: f64 = (20..400u64).map(|n| 1.0 / y.value(n).unwrap()).sum();
        assert!((rep.gap - direct).abs() <= 1e-12 * direct);
        let bumps: Vec<u64> = (20..2000u64)
            .map(|n| {
                let ly = y.log_value(n).unwrap();
                (ly - ly.ln() - 4.0 * ly.ln().ln()).exp().floor() as u64
            })
            .collect();
        let base = vec![1u64; bumps.len()];
        let shifted: Vec<u64> = bumps.iter().map(|b| b + 1).collect();
        let rep = perturb_multiplicities(&y, &base, &shifted, 20).unwrap();
        assert!(rep.m_sup.is_finite() && rep.holds, "{rep:?}");
    }

    #[test]
    fn homothety_examples() {
        let y = y2();
        let m: Vec<u64> = (10..60).map(|n| n % 7 + 1).collect();
        let id = homothety_rescale(&y, &m, 10, 1.0).unwrap();
        assert_eq!(id.z, y);
        assert_eq!(id.m_prime, m.iter().map(|&v| Some(v)).collect::<Vec<_>>());
        // z_n/y_n = 2.5 at n = 10 when 1/λ − 1 = log 2.5 · log² 10 / 10.
        let l10 = 10f64.ln();
        let lambda = 1.0 / (1.0 + 2.5f64.ln() * l10 * l10 / 10.0);
        let r = homothety_rescale(&y, &[10], 10, lambda).unwrap();
        let mp = r.log_m_prime[0].exp();
        assert!((mp - 25.0).abs() < 1e-9, "{mp}");

        let (lo, hi) = (200u64, 1500u64);
        let floor: Vec<u64> = (lo..=hi).map(|n| homothety_floor(&y, n).unwrap()).collect();
        let r = homothety_rescale(&y, &floor, lo, 2.0).unwrap();
        let first_ok = r.m_prime.iter().position(|v| v.is_some_and(|v| v >= 1)).unwrap();
        let tail: Vec<u64> = r.m_prime[first_ok..].iter().map(|v| v.unwrap()).collect();
        assert!(tail.iter().all(|&v| v >= 1));
        assert!(tail.last().unwrap() > &tail[0]);
        let (sc, zeros) = scale_multiplicities(&[10, 3, 7], 5, 4.0).unwrap();
        assert_eq!((sc, zeros), (vec![2, 0, 1], vec![6]));
    }

    #[test]
    fn homothety_overflow_is_marked() {
        let y = y2();
        let r = homothety_rescale(&y, &[5], 5000, 0.5).unwrap();
        assert_eq!(r.unrepresentable, vec![5000]);
        assert!(r.log_m_prime[0] > 44.0);
    }

    #[test]
    fn beta_rescale_identity() {
        let b = sieve().primes_between(2, 100_000).unwrap();
        let r = beta_rescale(&b, 0.8, 0.8, RescaleBlocks::Power { a: 2.2 }, RescaleMode::L1, 1, 20, sieve()).unwrap();
        assert_eq!(r.gap(), 0.0);
        assert!(r.excluded.is_empty());
        r.bijection.check().unwrap();
        assert!(r.bijection.pairs().iter().all(|(p, q)| p == q));
    }

    #[test]
    fn beta_rescale_stretched_under_block_bound() {
        let y = y2();
        let (lo, hi) = (9u64, 240u64);
        let iv = RealInterval::left_open(y.value(lo).unwrap(), y.value(hi + 1).unwrap()).unwrap();
        let b = sieve().primes_in(&iv).unwrap();
        let r = beta_rescale(&b, 1.0, 0.5, RescaleBlocks::Stretched { s: 2.0 }, RescaleMode::L1, lo, hi, sieve())
            .unwrap();
        assert!(r.gaps.windows(2).all(|w| w[1] >= w[0]));
        r.bijection.check().unwrap();
        // Both 1/p and q^{-β} lie in [1/y_{n+1}, 1/y_n).
        let mut env = 0.0;
        for (k, blk) in r.bijection.source_blocks.iter().enumerate() {
            let (a, bb) = (y.value(blk.n).unwrap(), y.value(blk.n + 1).unwrap());
            env += blk.primes.len() as f64 * (1.0 / a - 1.0 / bb);
            assert!(r.gaps[k] <= env * (1.0 + 1e-12));
        }
        let harm: f64 = (lo..=hi).map(|n| 1.0 / (n as f64 * (n as f64).ln().powi(2))).sum();
        assert!(r.gap() < harm, "{} vs {harm}", r.gap());
    }

    #[test]
    fn beta_rescale_power_l2_under_envelope() {
        let (b0, b1, a) = (0.8, 0.5, 2.2);
        let b = sieve().primes_between(2, 200_000).unwrap();
        let (lo, hi) = (2u64, 40u64);
        let r = beta_rescale(&b, b0, b1, RescaleBlocks::Power { a }, RescaleMode::L2Bhattacharyya, lo, hi, sieve())
            .unwrap();
        let mut env = 0.0;
        for (k, blk) in r.bijection.source_blocks.iter().enumerate() {
            let x = blk.n as f64;
            let w = x.powf(-a / 2.0) - (x + 1.0).powf(-a / 2.0);
            env += blk.primes.len() as f64 * w * w;
            assert!(r.gaps[k] <= env * (1.0 + 1e-12));
        }
        assert!(beta_rescale(&b, b0, b1, RescaleBlocks::Power { a: 1.0 }, RescaleMode::L2Bhattacharyya, lo, hi, sieve())
            .is_err());
        assert!(beta_rescale(&b, b0, b1, RescaleBlocks::Power { a: 9.0 }, RescaleMode::L2Bhattacharyya, lo, hi, sieve())
            .is_err());
    }

    #[test]
    fn power_principal_and_lift() {
        let (beta, a) = (0.8, 3.0);
        let b = sieve().primes_between(2, 1_000_000).unwrap();
        let rep = principal_from_primes_power(&b, beta, a, 2, 90, sieve()).unwrap();
        let env: f64 = b
            .iter()
            .filter(|&&p| p > 8 && (p as f64) <= 91f64.powi(3))
            .map(|&p| (p as f64).powf(-beta - 1.0 / a))
            .sum();
        assert!(rep.gap <= beta * a * env, "{} {env}", rep.gap);
        assert!(principal_from_primes_power(&b, 0.6, 3.0, 2, 10, sieve()).is_err());
        let m = vec![1u64; 100];
        let lift = lift_power(&m, 2, 0.9, 3.0, sieve()).unwrap();
        assert!(lift.lift.shortfalls.is_empty());
        assert!(lift_power(&m, 2, 0.6, 3.0, sieve()).is_err());
    }

    proptest! {
        #[test]
        fn gap_symmetric_under_inverse(seed in 0u64..1000, n in 1usize..200) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut map: Vec<usize> = (0..n).collect();
            map.shuffle(&mut rng);
            let a: Vec<f64> = (0..n).map(|k| 1.0 / (k as f64 + 2.0)).collect();
            let b: Vec<f64> = (0..n).map(|k| 1.0 / (k as f64 * 1.5 + 3.0)).collect();
            let p = Pairing::Explicit(map);
            let g1 = equivalence_gap(&a, &b, &p, n).unwrap();
            let g2 = equivalence_gap(&b, &a, &p.inverse(n).unwrap(), n).unwrap();
            prop_assert_eq!(g1, g2);
        }

        #[test]
        fn homothety_round_trip(lambda in 0.2f64..=1.0, m0 in 1u64..5000, n in 20u64..300) {
            let y = y2();
            let there = homothety_rescale(&y, &[m0], n, lambda).unwrap();
            let mp = there.m_prime[0].unwrap();
            prop_assume!(mp >= 1);
            let back = homothety_rescale(&there.z, &[mp], n, 1.0 / lambda).unwrap();
            let m2 = back.m_prime[0].unwrap();
            prop_assert!(m2.abs_diff(m0) <= 1, "{} -> {} -> {}", m0, mp, m2);
        }
    }
}
