//! Diophantine separation: platoons, admissible index sets, ε-liftings and
//! separating prime sets.
//!
//! A *platoon* for targets `t_1..t_k` at level `ℓ` is a finite ascending set
//! `q_1 < … < q_r` with `q_1 ≥ 2N₀`, a harmonic sum `Σ 1/q_i` inside a window
//! fixed by `ℓ`, and `‖q_i t_s‖ ≤ √k/ℓ` for every `i, s`. Stacking platoons
//! for `ℓ = ℓ₀, ℓ₀+1, …` with widths `ε_q = c_ℓ` gives an admissible index set
//! along which every target stays close to `ℤ`. Lifting an index set `A`
//! picks the primes with `|n − log p| < ε_n`.
//!
//! [`separate`] runs the whole pipeline for a finitely generated group
//! `G = ℤt_1 + … + ℤt_k` (with `t_k = 1`) and a point `u ∉ G`. Index values
//! may be half-integers: when `u` is rational modulo `ℤt_1 + … + ℤt_{k−1}`
//! only through its coefficient on `t_k = 1`, integer indices cannot keep `u`
//! away from `{0, 1/2}`, and the construction runs on `A ⊂ ½ℕ` instead.
//!
//! Certificates are re-checked by [`check_certificate`], which evaluates
//! `‖q·t‖` in 96-bit fixed point and shares no code with the search.

use crate::primes::{RealInterval, Sieve};
use crate::schedules::{check_admissible, AdmissibilityReport, EpsilonSchedule, IndexSet, PlatoonConstants, PlatoonRun};
use crate::series::{classify, trace, Kernel, Label, PrimeSource, SeriesTrace};
use crate::summation::CompensatedSum;
use crate::twoterm::TwoTerm;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::twoterm::fractional_distance;

/// Error allowance on `‖q·t‖` for `q ≤ 2³⁰`; search acceptance shrinks by it.
pub const DIST_MARGIN: f64 = 1.0 / (1u64 << 40) as f64;
const WINDOW_MARGIN: f64 = 1e-12;
const MAX_CUBES: u64 = 1 << 24;

/// `{q·t}` in `[0, 1)`, search side.
fn frac_of(t: TwoTerm, q: u64) -> f64 {
    let qf = q as f64;
    let p = t.hi * qf;
    let e = t.hi.mul_add(qf, -p);
    let r = p - p.floor();
    let v = r + (e + t.lo * qf);
    let f = v - v.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[inline]
fn dist(t: TwoTerm, q: u64, shift: f64) -> f64 {
    t.frac_dist_scaled(q as i64, shift)
}

/// Independent `‖·‖` evaluation in 96-bit fixed point.
mod fixed {
    use crate::twoterm::TwoTerm;

    const BITS: u32 = 96;
    const MASK: u128 = (1u128 << BITS) - 1;

    /// `x·2⁹⁶ mod 2⁹⁶`, truncated.
    fn frac96(x: f64) -> u128 {
        if x == 0.0 || !x.is_finite() {
            return 0;
        }
        let bits = x.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let shift = exp + BITS as i32;
        let v = if shift >= 128 {
            0
        } else if shift >= 0 {
            (mant as u128) << shift
        } else if shift <= -64 {
            0
        } else {
            (mant >> (-shift)) as u128
        } & MASK;
        if x < 0.0 {
            (MASK + 1 - v) & MASK
        } else {
            v
        }
    }

    pub fn of(t: TwoTerm) -> u128 {
        (frac96(t.hi) + frac96(t.lo)) & MASK
    }

    /// `‖q·t − shift‖`.
    pub fn distance(t: TwoTerm, q: u64, shift: TwoTerm) -> f64 {
        let v = (q as u128).wrapping_mul(of(t)).wrapping_sub(of(shift)) & MASK;
        let d = v.min((MASK + 1) - v);
        d as f64 / (MASK as f64 + 1.0)
    }
}

// ---------------------------------------------------------------------------
// Platoons

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatoonMode {
    /// Harmonic window `(1/(2ℓ^k), 1/ℓ^k)`.
    Single,
    /// Harmonic window `(1/(2ℓ), 1/ℓ)`, built from consecutive single platoons.
    Chained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatoonCertificate {
    pub ell: u64,
    pub targets: Vec<TwoTerm>,
    pub n0: u64,
    pub q: Vec<u64>,
    pub harmonic_sum: f64,
    pub max_dist: f64,
    pub mode: PlatoonMode,
}

fn window(mode: PlatoonMode, ell: u64, k: usize) -> (f64, f64) {
    let e = match mode {
        PlatoonMode::Single => (ell as f64).powi(k as i32),
        PlatoonMode::Chained => ell as f64,
    };
    (0.5 / e, 1.0 / e)
}

impl PlatoonCertificate {
    /// Open harmonic window of the certificate's mode.
    pub fn window(&self) -> (f64, f64) {
        window(self.mode, self.ell, self.targets.len())
    }

    /// `√k/ℓ`.
    pub fn dist_bound(&self) -> f64 {
        (self.targets.len() as f64).sqrt() / self.ell as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub start_ok: bool,
    pub increasing: bool,
    pub harmonic_sum: f64,
    pub window_ok: bool,
    pub max_dist: f64,
    pub dist_ok: bool,
}

impl CertificateCheck {
    pub fn passed(&self) -> bool {
        self.start_ok && self.increasing && self.window_ok && self.dist_ok
    }
}

/// Re-evaluates the three platoon conditions from scratch.
pub fn check_certificate(cert: &PlatoonCertificate) -> CertificateCheck {
    let k = cert.targets.len();
    let e = match cert.mode {
        PlatoonMode::Single => (cert.ell as f64).powi(k as i32),
        PlatoonMode::Chained => cert.ell as f64,
    };
    let mut h = 0.0;
    for &q in cert.q.iter().rev() {
        h += 1.0 / q as f64;
    }
    let mut max_dist: f64 = 0.0;
    for &q in &cert.q {
        for &t in &cert.targets {
            max_dist = max_dist.max(fixed::distance(t, q, TwoTerm::ZERO));
        }
    }
    CertificateCheck {
        start_ok: cert.q.first().is_some_and(|&q| q >= 2 * cert.n0),
        increasing: cert.q.windows(2).all(|w| w[0] < w[1]),
        harmonic_sum: h,
        window_ok: 2.0 * e * h > 1.0 && e * h < 1.0,
        max_dist,
        dist_ok: k > 0 && max_dist * cert.ell as f64 <= (k as f64).sqrt(),
    }
}

fn harmonic(q: &[u64]) -> f64 {
    let mut s = CompensatedSum::<f64>::new();
    q.iter().for_each(|&x| s.add(1.0 / x as f64));
    s.value()
}

/// The pigeonhole construction; `None` when its scan range exceeds `budget`.
fn pigeonhole(targets: &[TwoTerm], ell: u64, n0: u64, budget: u64) -> Option<Vec<u64>> {
    let k = targets.len() as u32;
    let cubes = ell.checked_pow(k).filter(|&c| c <= MAX_CUBES)?;
    let n = n0.max(cubes + 1);
    let bound = n.checked_mul(4)?.checked_mul(cubes)?.checked_add(1)?;
    if bound > budget {
        return None;
    }
    let cube = |q: u64| {
        targets.iter().fold(0u64, |acc, &t| {
            let c = ((frac_of(t, q) * ell as f64) as u64).min(ell - 1);
            acc * ell + c
        })
    };
    let need = 4 * n + 1;
    let mut counts = vec![0u64; cubes as usize];
    for q in 1..=bound {
        counts[cube(q) as usize] += 1;
    }
    let target = counts.iter().position(|&c| c >= need)? as u64;
    let members: Vec<u64> = (1..=bound).filter(|&q| cube(q) == target).take(need as usize).collect();
    let diffs: Vec<u64> = members[1..].iter().map(|m| m - members[0]).collect();
    // d_{2n}, …, d_{4n}
    let mut q = diffs[(2 * n - 1) as usize..].to_vec();
    let upper = 1.0 / cubes as f64;
    while q.len() > 1 && harmonic(&q) >= upper * (1.0 - WINDOW_MARGIN) {
        q.pop();
    }
    Some(q)
}

/// Greedy ascending scan from `start`: admit `q` when every target is within
/// the distance bound and the running sum stays below the window's top.
fn scan(targets: &[TwoTerm], ell: u64, start: u64, win: (f64, f64), budget: u64) -> Result<Vec<u64>> {
    let bound = (targets.len() as f64).sqrt() / ell as f64 - DIST_MARGIN;
    let (lo, hi) = (win.0 * (1.0 + WINDOW_MARGIN), win.1 * (1.0 - WINDOW_MARGIN));
    let mut acc = CompensatedSum::<f64>::new();
    let mut out = Vec::new();
    let mut q = start.max(1);
    while q <= budget {
        let r = 1.0 / q as f64;
        if acc.value() + r < hi && targets.iter().all(|&t| dist(t, q, 0.0) <= bound) {
            acc.add(r);
            out.push(q);
            if acc.value() > lo {
                return Ok(out);
            }
        }
        q += 1;
    }
    Err(Error::BudgetExceeded(format!(
        "platoon scan for ℓ = {ell} passed q = {budget} with harmonic sum {}",
        acc.value()
    )))
}

fn single(targets: &[TwoTerm], ell: u64, n0: u64, budget: u64) -> Result<Vec<u64>> {
    if let Some(q) = pigeonhole(targets, ell, n0, budget) {
        let cert = PlatoonCertificate {
            ell,
            targets: targets.to_vec(),
            n0,
            harmonic_sum: harmonic(&q),
            max_dist: 0.0,
            q,
            mode: PlatoonMode::Single,
        };
        if check_certificate(&cert).passed() {
            return Ok(cert.q);
        }
    }
    scan(targets, ell, 2 * n0, window(PlatoonMode::Single, ell, targets.len()), budget)
}

/// Finds a platoon certificate; `budget` caps the largest `q` examined.
///
/// Single mode follows the pigeonhole argument over `ℓ^k` cubes when its scan
/// range `4N₀ℓ^k + 1` fits the budget, and otherwise scans greedily. Chained
/// mode concatenates single platoons, each starting above half the previous
/// maximum, until the sum enters `(1/(2ℓ), 1/ℓ)`.
pub fn platoon(targets: &[TwoTerm], ell: u64, n0: u64, mode: PlatoonMode, budget: u64) -> Result<PlatoonCertificate> {
    let k = targets.len();
    if k == 0 {
        return Err(Error::pre("platoon needs at least one target"));
    }
    if ell < 2 || n0 < 1 {
        return Err(Error::pre("platoon needs ℓ ≥ 2 and N₀ ≥ 1"));
    }
    if targets.iter().any(|t| !t.to_f64().is_finite()) {
        return Err(Error::pre("platoon targets must be finite"));
    }
    let q = match mode {
        PlatoonMode::Single => single(targets, ell, n0, budget)?,
        PlatoonMode::Chained => {
            let (lo, _) = window(PlatoonMode::Chained, ell, k);
            let cubes = ell.saturating_pow(k as u32);
            let mut q: Vec<u64> = Vec::new();
            let mut n = n0;
            while harmonic(&q) <= lo * (1.0 + WINDOW_MARGIN) {
                if let Some(&last) = q.last() {
                    n = (last / 2 + 1).max(cubes.saturating_add(1));
                }
                let part = scan(targets, ell, 2 * n, window(PlatoonMode::Single, ell, k), budget)?;
                q.extend(part);
            }
            q
        }
    };
    let mut cert = PlatoonCertificate {
        ell,
        targets: targets.to_vec(),
        n0,
        harmonic_sum: harmonic(&q),
        max_dist: 0.0,
        q,
        mode,
    };
    let check = check_certificate(&cert);
    cert.max_dist = check.max_dist;
    if !check.passed() {
        return Err(Error::Verification(format!("platoon certificate for ℓ = {ell} rejected: {check:?}")));
    }
    Ok(cert)
}

// ---------------------------------------------------------------------------
// Index sets with widths

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Index value is `num/den` for the set's `den`.
    pub num: u64,
    /// Platoon level, 0 when the entry did not come from a platoon.
    pub ell: u64,
    pub eps: f64,
}

/// Finite index set `A ⊂ (1/den)·ℕ` with widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexedSet {
    pub den: u64,
    pub entries: Vec<IndexEntry>,
}

impl IndexedSet {
    /// Integer indices `lo..=hi` with widths from `sched`.
    pub fn from_schedule(sched: &EpsilonSchedule, lo: u64, hi: u64) -> Result<Self> {
        let entries = (lo..=hi)
            .map(|n| {
                Ok(IndexEntry {
                    num: n,
                    ell: 0,
                    eps: sched.eps(n)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { den: 1, entries })
    }

    pub fn value(&self, e: &IndexEntry) -> f64 {
        e.num as f64 / self.den as f64
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| self.value(e)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.den == 0 {
            return Err(Error::pre("index denominator must be positive"));
        }
        if self.entries.windows(2).any(|w| w[1].num <= w[0].num) {
            return Err(Error::pre("index set must be strictly ascending"));
        }
        if self.entries.iter().any(|e| !(e.eps >= 0.0 && e.eps.is_finite())) {
            return Err(Error::pre("widths must be finite and non-negative"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Admissible sets

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub targets: Vec<TwoTerm>,
    pub constants: PlatoonConstants,
    pub certificates: Vec<PlatoonCertificate>,
    pub set: IndexedSet,
    pub schedule: Option<EpsilonSchedule>,
    pub ell_reached: u64,
    /// Why construction stopped before `ell_max`, if it did.
    pub truncated: Option<String>,
    pub admissibility: Option<AdmissibilityReport>,
}

fn check_constants(constants: &PlatoonConstants, ell_start: u64, ell_max: u64) -> Result<()> {
    let mut prev = f64::INFINITY;
    for ell in ell_start..=ell_max {
        let c = constants.c(ell)?;
        if c > prev {
            return Err(Error::pre(format!("c_ℓ increases at ℓ = {ell}")));
        }
        if (ell as f64) * c < 1.0 {
            return Err(Error::pre(format!("ℓ·c_ℓ = {} < 1 at ℓ = {ell}", ell as f64 * c)));
        }
        prev = c;
    }
    Ok(())
}

/// Stacks chained platoons for `ℓ = ell_start..=ell_max` into an index set
/// with `ε_q = c_ℓ` on platoon `ℓ`.
///
/// When a platoon exceeds `budget` the set built so far is returned with
/// `truncated` set.
pub fn build_admissible(
    targets: &[TwoTerm],
    constants: &PlatoonConstants,
    ell_start: u64,
    ell_max: u64,
    budget: u64,
) -> Result<AdmissibleSet> {
    if ell_start < 2 || ell_max < ell_start {
        return Err(Error::pre("need 2 ≤ ell_start ≤ ell_max"));
    }
    check_constants(constants, ell_start, ell_max)?;
    let k = targets.len() as f64;
    let mut certificates = Vec::new();
    let mut entries = Vec::new();
    let mut runs = Vec::new();
    let mut truncated = None;
    let mut n0 = 1;
    for ell in ell_start..=ell_max {
        let cert = match platoon(targets, ell, n0, PlatoonMode::Chained, budget) {
            Ok(c) => c,
            Err(Error::BudgetExceeded(msg)) if !certificates.is_empty() => {
                truncated = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        let c = constants.c(ell)?;
        if cert.max_dist > k.sqrt() * c {
            return Err(Error::Verification(format!("‖q·t‖ exceeds c_ℓ√k at ℓ = {ell}")));
        }
        let (first, last) = (cert.q[0], *cert.q.last().unwrap());
        runs.push(PlatoonRun { ell, first, last });
        entries.extend(cert.q.iter().map(|&q| IndexEntry { num: q, ell, eps: c }));
        n0 = last / 2 + 1;
        certificates.push(cert);
    }
    let ell_reached = certificates.last().map(|c| c.ell).unwrap_or(0);
    let schedule = EpsilonSchedule::platoon(constants.clone(), runs)?;
    let nums: Vec<u64> = entries.iter().map(|e| e.num).collect();
    let admissibility = if nums.len() >= 2 {
        Some(check_admissible(&schedule, &IndexSet::Explicit(nums))?)
    } else {
        None
    };
    Ok(AdmissibleSet {
        targets: targets.to_vec(),
        constants: constants.clone(),
        certificates,
        set: IndexedSet { den: 1, entries },
        schedule: Some(schedule),
        ell_reached,
        truncated,
        admissibility,
    })
}

// ---------------------------------------------------------------------------
// ε-liftings

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftBlock {
    pub n: f64,
    pub eps: f64,
    pub primes: Vec<u64>,
    pub reciprocal_sum: f64,
    /// `(n/ε_n)·Σ 1/p`; absent for `ε_n = 0`.
    pub normalized: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedSet {
    pub den: u64,
    pub blocks: Vec<LiftBlock>,
    /// Indices dropped because `e^{n+ε_n}` exceeds the sieve limit.
    pub truncated: Vec<f64>,
    /// `max_p |h(p) − log p|/ε_{h(p)}`, at most 1.
    pub max_h_ratio: f64,
}

impl LiftedSet {
    pub fn primes(&self) -> Vec<u64> {
        self.blocks.iter().flat_map(|b| b.primes.iter().copied()).collect()
    }

    /// Block index `h(p)` of a lifted prime.
    pub fn h(&self, p: u64) -> Option<f64> {
        self.blocks.iter().find(|b| b.primes.binary_search(&p).is_ok()).map(|b| b.n)
    }
}

/// `B_n = {p : |n − log p| < ε_n}` for every `n` of the set.
pub fn lift(set: &IndexedSet, sieve: &Sieve) -> Result<LiftedSet> {
    set.validate()?;
    if let Some(e) = set.entries.iter().find(|e| 2.0 * e.eps >= 1.0) {
        return Err(Error::pre(format!("ε = {} at n = {} violates 2ε < 1", e.eps, set.value(e))));
    }
    let limit = sieve.limit() as f64;
    let mut truncated = Vec::new();
    let mut keep = Vec::new();
    for e in &set.entries {
        let n = set.value(e);
        if (n + e.eps).exp() > limit {
            truncated.push(n);
        } else {
            keep.push((n, e.eps));
        }
    }
    let blocks = keep
        .par_iter()
        .map(|&(n, eps)| {
            let primes = if eps > 0.0 {
                sieve.primes_in(&RealInterval::open((n - eps).exp(), (n + eps).exp())?)?
            } else {
                Vec::new()
            };
            let mut s = CompensatedSum::<f64>::new();
            primes.iter().for_each(|&p| s.add(1.0 / p as f64));
            let reciprocal_sum = s.value();
            Ok(LiftBlock {
                n,
                eps,
                normalized: (eps > 0.0).then(|| n / eps * reciprocal_sum),
                primes,
                reciprocal_sum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_h_ratio: f64 = 0.0;
    for b in &blocks {
        for &p in &b.primes {
            let r = ((p as f64).ln() - b.n).abs() / b.eps;
            if !(r <= 1.0) {
                return Err(Error::Verification(format!("prime {p} sits {r}·ε from its block {}", b.n)));
            }
            max_h_ratio = max_h_ratio.max(r);
        }
    }
    for w in blocks.windows(2) {
        if let (Some(&a), Some(&b)) = (w[0].primes.last(), w[1].primes.first()) {
            if a >= b {
                return Err(Error::Verification(format!("blocks {} and {} overlap", w[0].n, w[1].n)));
            }
        }
    }
    Ok(LiftedSet {
        den: set.den,
        blocks,
        truncated,
        max_h_ratio,
    })
}

// ---------------------------------------------------------------------------
// H_a(ε) evidence

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipScore {
    /// `max_n ‖n·t − a‖/ε_n`.
    pub sup_ratio: f64,
    pub argmax: f64,
    /// Same maximum over the first and the second half of the index set.
    pub head_sup: f64,
    pub tail_sup: f64,
}

/// Realized `sup ‖n·t − a‖/ε_n` over a finite index set, as evidence for or
/// against `t ∈ H_a(ε)`. Entries with `ε_n = 0` are skipped.
pub fn h_membership_score(t: TwoTerm, a: f64, set: &IndexedSet) -> Result<MembershipScore> {
    set.validate()?;
    let td = t.div_f64(set.den as f64);
    let ratios: Vec<(f64, f64)> = set
        .entries
        .iter()
        .filter(|e| e.eps > 0.0)
        .map(|e| (set.value(e), dist(td, e.num, a) / e.eps))
        .collect();
    let max_of = |xs: &[(f64, f64)]| xs.iter().map(|x| x.1).fold(0.0, f64::max);
    let half = ratios.len() / 2;
    let (argmax, sup_ratio) = ratios
        .iter()
        .copied()
        .fold((f64::NAN, 0.0), |best, x| if x.1 > best.1 || best.0.is_nan() { x } else { best });
    Ok(MembershipScore {
        sup_ratio,
        argmax,
        head_sup: max_of(&ratios[..half]),
        tail_sup: max_of(&ratios[half..]),
    })
}

// ---------------------------------------------------------------------------
// Separation

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: i64,
    pub den: u64,
}

impl Rational {
    pub fn is_integer(&self) -> bool {
        self.den == 1
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `G = ℤt_1 + … + ℤt_k` with `t_k = 1`, and `u = Σ r_j t_j + u″`.
///
/// Linear independence of `1, t_1, …, t_{k−1}, u″` over `ℚ` is part of the
/// input contract; it is not and cannot be checked numerically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationInstance {
    pub generators: Vec<TwoTerm>,
    pub coefficients: Vec<Rational>,
    pub irrational: TwoTerm,
}

impl SeparationInstance {
    pub fn u(&self) -> TwoTerm {
        self.generators
            .iter()
            .zip(&self.coefficients)
            .fold(self.irrational, |acc, (t, r)| acc.add(t.mul_f64(r.num as f64).div_f64(r.den as f64)))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.generators.len();
        if k == 0 || self.coefficients.len() != k {
            return Err(Error::pre("instance needs k ≥ 1 generators and one coefficient each"));
        }
        if self.generators[k - 1] != TwoTerm::from_f64(1.0) {
            return Err(Error::pre("the last generator must be exactly 1"));
        }
        for (j, r) in self.coefficients.iter().enumerate() {
            if r.den == 0 || gcd(r.num.unsigned_abs(), r.den) != 1 || (r.num == 0 && r.den != 1) {
                return Err(Error::pre(format!("coefficient {} must be a reduced fraction", j + 1)));
            }
        }
        if self.irrational.is_zero() && self.coefficients.iter().all(Rational::is_integer) {
            return Err(Error::pre("u lies in G: u″ = 0 and every coefficient is an integer"));
        }
        Ok(())
    }

    /// `C = 2 + √k + Σ_{j<k} (|a_j| + b_j)`.
    pub fn constant(&self) -> f64 {
        let k = self.generators.len();
        2.0 + (k as f64).sqrt()
            + self.coefficients[..k - 1]
                .iter()
                .map(|r| r.num.unsigned_abs() as f64 + r.den as f64)
                .sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum SeparationBranch {
    /// `u″ ≠ 0`, `a = 1/4`, every generator in `H_0`.
    Irrational,
    /// `u″ = 0` with `r_s ∉ ℤ` for some `s < k` (1-based `s`), `a = r_s/2`,
    /// `t_s ∈ H_{1/2}`.
    Coefficient { s: usize },
    /// `u″ = 0` and only `r_k = a_k/b_k ∉ ℤ`: indices `n = m/2` with
    /// `m ≡ 1 mod 2b_k`, `a = r_k/2`, `t_k = 1 ∈ H_{1/2}`.
    HalfLattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub constants: PlatoonConstants,
    pub ell_start: u64,
    pub ell_max: u64,
    /// Largest number of Kronecker candidates examined per level.
    pub kronecker_budget: u64,
    /// Largest platoon `q` examined per level.
    pub platoon_budget: u64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            constants: PlatoonConstants::ReciprocalLog { shift: 5.0 },
            ell_start: 3,
            ell_max: 64,
            kronecker_budget: 1 << 24,
            platoon_budget: 1 << 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationLevel {
    pub ell: u64,
    pub c: f64,
    pub m0: u64,
    pub platoon: PlatoonCertificate,
    /// Index numerators `q + m0` (or `m0 + 2b_k·q` on the half lattice).
    pub numerators: Vec<u64>,
    /// `Σ 1/n` over the level's indices.
    pub harmonic_sum: f64,
    pub window: (f64, f64),
    pub max_u_dist: f64,
    /// Per generator, `max ‖n·t_j − a_j‖` with `a_j ∈ {0, 1/2}` its residue.
    pub max_generator_dist: Vec<f64>,
    /// `C·c_ℓ`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub instance: SeparationInstance,
    pub branch: SeparationBranch,
    pub a: f64,
    pub constant: f64,
    /// Residue of each generator along the index set.
    pub residues: Vec<f64>,
    pub levels: Vec<SeparationLevel>,
    pub set: IndexedSet,
    pub truncated: Option<String>,
}

/// First `m = base + step·j`, `j < budget`, with `‖m·x − shift‖ < c` for
/// every condition. Chunks are scanned in parallel; the lowest hit wins.
pub fn kronecker_scan(conds: &[(TwoTerm, f64)], c: f64, base: u64, step: u64, budget: u64) -> Result<u64> {
    const CHUNK: u64 = 1 << 14;
    const BATCH: u64 = 64;
    let ok = |j: u64| {
        let m = base + step * j;
        conds.iter().all(|&(x, sh)| dist(x, m, sh) < c)
    };
    let mut start = 0;
    while start < budget {
        let end = start.saturating_add(CHUNK * BATCH).min(budget);
        let starts: Vec<u64> = (start..end).step_by(CHUNK as usize).collect();
        let hit = starts
            .par_iter()
            .find_map_first(|&s| (s..(s + CHUNK).min(end)).find(|&j| ok(j)));
        if let Some(j) = hit {
            return Ok(base + step * j);
        }
        start = end;
    }
    Err(Error::BudgetExceeded(format!("Kronecker scan found no m₀ below {budget} candidates (c = {c})")))
}

fn rational_value(r: &Rational) -> f64 {
    r.num as f64 / r.den as f64
}

/// Builds the index set of the separation construction, level by level,
/// stopping before indices exceed `max_index`.
pub fn separation_levels(instance: &SeparationInstance, config: &SeparationConfig, max_index: f64) -> Result<Separation> {
    instance.validate()?;
    check_constants(&config.constants, config.ell_start, config.ell_max)?;
    let k = instance.generators.len();
    let gens = &instance.generators;
    let coef = &instance.coefficients;
    let u = instance.u();
    let bk = coef[k - 1].den;

    let branch = if !instance.irrational.is_zero() {
        SeparationBranch::Irrational
    } else if let Some(s) = coef[..k - 1].iter().position(|r| !r.is_integer()) {
        SeparationBranch::Coefficient { s: s + 1 }
    } else {
        SeparationBranch::HalfLattice
    };
    let frac_half = |x: f64| x - x.floor();
    let (a, den, base, step) = match branch {
        SeparationBranch::Irrational => (0.25, 1, bk, bk),
        SeparationBranch::Coefficient { s } => (frac_half(rational_value(&coef[s - 1]) / 2.0), 1, bk, bk),
        SeparationBranch::HalfLattice => (frac_half(rational_value(&coef[k - 1]) / 2.0), 2, 1, 2 * bk),
    };
    let mut residues = vec![0.0; k];
    match branch {
        SeparationBranch::Coefficient { s } => residues[s - 1] = 0.5,
        SeparationBranch::HalfLattice => residues[k - 1] = 0.5,
        SeparationBranch::Irrational => {}
    }

    // Kronecker conditions ‖m₀·x − shift‖ < c_ℓ.
    let mut conds: Vec<(TwoTerm, f64)> = Vec::new();
    match branch {
        SeparationBranch::Irrational => {
            conds.push((instance.irrational, 0.25));
            for j in 0..k - 1 {
                conds.push((gens[j].div_f64(coef[j].den as f64), 0.0));
            }
        }
        SeparationBranch::Coefficient { s } => {
            for j in 0..k - 1 {
                let b = coef[j].den as f64;
                let shift = if j == s - 1 { 0.5 / b } else { 0.0 };
                conds.push((gens[j].div_f64(b), shift));
            }
        }
        SeparationBranch::HalfLattice => {
            for g in &gens[..k - 1] {
                conds.push((g.div_f64(2.0), 0.0));
            }
        }
    }

    // Platoon targets.
    let targets: Vec<TwoTerm> = match branch {
        SeparationBranch::HalfLattice => {
            let u_int = gens[..k - 1]
                .iter()
                .zip(coef)
                .fold(TwoTerm::ZERO, |acc, (t, r)| acc.add(t.mul_f64(r.num as f64)));
            let mut ts = vec![u_int.mul_f64(bk as f64)];
            ts.extend(gens[..k - 1].iter().map(|t| t.mul_f64(bk as f64)));
            ts
        }
        _ => {
            let mut ts = vec![u];
            ts.extend_from_slice(&gens[..k - 1]);
            ts
        }
    };

    let big_c = instance.constant();
    let half = TwoTerm::from_f64(0.5);
    let a_tt = TwoTerm::from_f64(a);
    let u_scaled = u.div_f64(den as f64);
    let gens_scaled: Vec<TwoTerm> = gens.iter().map(|t| t.div_f64(den as f64)).collect();
    let mut levels: Vec<SeparationLevel> = Vec::new();
    let mut entries = Vec::new();
    let mut truncated = None;
    let mut prev_max = 0u64;
    for ell in config.ell_start..=config.ell_max {
        let c = config.constants.c(ell)?;
        let m0 = match kronecker_scan(&conds, c, base, step, config.kronecker_budget) {
            Ok(m) => m,
            Err(Error::BudgetExceeded(msg)) => {
                truncated = Some(format!("ℓ = {ell}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let n0 = match branch {
            SeparationBranch::HalfLattice => (prev_max / (4 * bk) + 1).max(m0 / 2 + 1),
            _ => (prev_max / 2 + 1).max(m0 / 2 + 1),
        };
        let cert = match platoon(&targets, ell, n0, PlatoonMode::Chained, config.platoon_budget) {
            Ok(c) => c,
            Err(Error::BudgetExceeded(msg)) => {
                truncated = Some(format!("ℓ = {ell}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let numerators: Vec<u64> = match branch {
            SeparationBranch::HalfLattice => cert.q.iter().map(|&q| m0 + 2 * bk * q).collect(),
            _ => cert.q.iter().map(|&q| q + m0).collect(),
        };
        if (numerators[0] as f64 / den as f64) > max_index {
            truncated = Some(format!("ℓ = {ell}: first index {} exceeds {max_index}", numerators[0] as f64 / den as f64));
            break;
        }
        if numerators[0] <= prev_max {
            return Err(Error::Verification(format!("level {ell} does not start above level {}", ell - 1)));
        }
        let mut h = CompensatedSum::<f64>::new();
        numerators.iter().for_each(|&m| h.add(den as f64 / m as f64));
        let harmonic_sum = h.value();
        let window = match branch {
            SeparationBranch::HalfLattice => (1.0 / ((2 * bk + 1) as f64 * ell as f64), 1.0 / (bk as f64 * ell as f64)),
            _ => (0.25 / ell as f64, 1.0 / ell as f64),
        };
        if !(harmonic_sum > window.0 && harmonic_sum < window.1) {
            return Err(Error::Verification(format!(
                "level {ell}: harmonic sum {harmonic_sum} outside ({}, {})",
                window.0, window.1
            )));
        }
        let max_u_dist = numerators
            .iter()
            .map(|&m| fixed::distance(u_scaled, m, a_tt))
            .fold(0.0, f64::max);
        let max_generator_dist: Vec<f64> = gens_scaled
            .iter()
            .zip(&residues)
            .map(|(&t, &r)| {
                let shift = if r == 0.5 { half } else { TwoTerm::ZERO };
                numerators.iter().map(|&m| fixed::distance(t, m, shift)).fold(0.0, f64::max)
            })
            .collect();
        let bound = big_c * c;
        if max_u_dist > bound || max_generator_dist.iter().any(|&d| d > bound) {
            return Err(Error::Verification(format!(
                "level {ell}: distances {max_u_dist}, {max_generator_dist:?} exceed C·c_ℓ = {bound}"
            )));
        }
        entries.extend(numerators.iter().map(|&m| IndexEntry { num: m, ell, eps: c }));
        prev_max = *numerators.last().unwrap();
        levels.push(SeparationLevel {
            ell,
            c,
            m0,
            platoon: cert,
            numerators,
            harmonic_sum,
            window,
            max_u_dist,
            max_generator_dist,
            bound,
        });
    }
    Ok(Separation {
        instance: instance.clone(),
        branch,
        a,
        constant: big_c,
        residues,
        levels,
        set: IndexedSet { den, entries },
        truncated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidencePoint {
    pub t: f64,
    /// `generator` or `excluded`.
    pub role: String,
    pub final_sum: f64,
    pub label: Option<Label>,
    pub score: Option<f64>,
    /// Why no label was produced, when none was.
    pub note: Option<String>,
    pub trace: Option<SeriesTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub separation: Separation,
    pub lifted: LiftedSet,
    pub evidence: Vec<EvidencePoint>,
}

const EVIDENCE_CUTOFFS: usize = 64;

fn evidence_at(kernel: &Kernel<f64>, primes: &[u64], t: f64, role: &str) -> Result<EvidencePoint> {
    let mut point = EvidencePoint {
        t,
        role: role.to_string(),
        final_sum: 0.0,
        label: None,
        score: None,
        note: None,
        trace: None,
    };
    let (Some(&lo), Some(&hi)) = (primes.first(), primes.last()) else {
        point.note = Some("lifted set is empty".to_string());
        return Ok(point);
    };
    let (l0, l1) = ((lo as f64).ln(), (hi as f64).ln());
    let mut cutoffs: Vec<f64> = (0..EVIDENCE_CUTOFFS)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (EVIDENCE_CUTOFFS - 1) as f64).exp().floor())
        .collect();
    cutoffs.push(hi as f64);
    cutoffs.sort_by(f64::total_cmp);
    cutoffs.dedup();
    let tr = trace(kernel, &PrimeSource::List(primes), t, &cutoffs)?;
    point.final_sum = tr.last().unwrap_or(0.0);
    match classify(&tr, None) {
        Ok(c) => {
            point.label = Some(c.label);
            point.score = Some(c.score);
        }
        Err(e) => point.note = Some(e.to_string()),
    }
    point.trace = Some(tr);
    Ok(point)
}

/// Runs the separation construction up to the sieve range, lifts the index
/// set to primes and evaluates `f_B` (β = 1, ω = 2π) at every generator and
/// at `u`.
pub fn separate(instance: &SeparationInstance, config: &SeparationConfig, sieve: &Sieve) -> Result<SeparationReport> {
    let max_index = (sieve.limit() as f64).ln();
    let separation = separation_levels(instance, config, max_index)?;
    if separation.levels.is_empty() {
        return Err(Error::range("separation: first level", 0, sieve.limit()));
    }
    let lifted = lift(&separation.set, sieve)?;
    let primes = lifted.primes();
    let kernel = Kernel::<f64>::two_pi();
    let mut evidence = Vec::new();
    for g in &instance.generators {
        evidence.push(evidence_at(&kernel, &primes, g.to_f64(), "generator")?);
    }
    evidence.push(evidence_at(&kernel, &primes, instance.u().to_f64(), "excluded")?);
    Ok(SeparationReport {
        separation,
        lifted,
        evidence,
    })
}

// ---------------------------------------------------------------------------
// Truncation and assembly

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub primes: Vec<u64>,
    /// `(t, f_{I₀}(t))` at the points that must stay small.
    pub small: Vec<(f64, f64)>,
    /// `(t, f_{I₀}(t))` at the points that must be large.
    pub large: Vec<(f64, f64)>,
    pub small_threshold: f64,
    pub large_threshold: f64,
}

/// Cuts a finite `I₀ ⊂ I` with `min I₀ ≥ n_min`, `f_{I₀} < m` on `small_at`
/// and `f_{I₀} > big_m` on `large_at`.
///
/// The head is dropped until the tail of `I` is below `m` at every small
/// point, then primes are taken in order until every large point exceeds
/// `big_m`. Both conditions are re-evaluated on the result.
pub fn truncate_separating(
    candidates: &[u64],
    small_at: &[f64],
    large_at: &[f64],
    m: f64,
    big_m: f64,
    n_min: u64,
    kernel: &Kernel<f64>,
) -> Result<Truncation> {
    if candidates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::pre("candidate primes must be strictly ascending"));
    }
    if !(m > 0.0) || !big_m.is_finite() {
        return Err(Error::pre("thresholds must satisfy m > 0 and finite M"));
    }
    let first = candidates.partition_point(|&p| p < n_min);
    let ps = &candidates[first..];

    // Smallest start whose tail is below m at every small point.
    let mut start = 0;
    for &t in small_at {
        let mut acc = CompensatedSum::<f64>::new();
        let mut cross = ps.len();
        for i in (0..ps.len()).rev() {
            acc.add(kernel.term(ps[i] as f64, t));
            if acc.value() >= m {
                break;
            }
            cross = i;
        }
        start = start.max(cross);
    }
    if start == ps.len() && !large_at.is_empty() {
        return Err(Error::Verification(format!(
            "no tail of the candidates stays below m = {m} at every small point"
        )));
    }

    let mut end = start;
    if !large_at.is_empty() {
        let mut acc = vec![CompensatedSum::<f64>::new(); large_at.len()];
        while end < ps.len() && !acc.iter().all(|a| a.value() > big_m) {
            for (a, &t) in acc.iter_mut().zip(large_at) {
                a.add(kernel.term(ps[end] as f64, t));
            }
            end += 1;
        }
        if !acc.iter().all(|a| a.value() > big_m) {
            let achieved: Vec<f64> = acc.iter().map(|a| a.value()).collect();
            return Err(Error::Verification(format!(
                "candidates exhausted below M = {big_m}; achieved {achieved:?}"
            )));
        }
    }
    let primes = ps[start..end].to_vec();
    let eval = |t: f64| -> Result<f64> {
        match primes.last() {
            Some(&hi) => crate::series::partial_sum(kernel, &PrimeSource::List(&primes), t, hi as f64),
            None => Ok(0.0),
        }
    };
    let small = small_at.iter().map(|&t| Ok((t, eval(t)?))).collect::<Result<Vec<_>>>()?;
    let large = large_at.iter().map(|&t| Ok((t, eval(t)?))).collect::<Result<Vec<_>>>()?;
    if small.iter().any(|&(_, f)| !(f < m)) || large.iter().any(|&(_, f)| !(f > big_m)) {
        return Err(Error::Verification(format!("truncation failed direct evaluation: {small:?} {large:?}")));
    }
    Ok(Truncation {
        primes,
        small,
        large,
        small_threshold: m,
        large_threshold: big_m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatorLevel {
    pub candidates: Vec<u64>,
    pub small_at: Vec<f64>,
    pub large_at: Vec<f64>,
}

/// Level thresholds: `f < small/n²` on the small points and `f > large` on
/// the large points at level `n`. The theorem uses `small = large = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub small: f64,
    pub large: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { small: 1.0, large: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separator {
    pub levels: Vec<Truncation>,
    pub primes: Vec<u64>,
}

fn at_level(e: Error, n: usize) -> Error {
    match e {
        Error::Verification(m) => Error::Verification(format!("level {n}: {m}")),
        Error::Precondition(m) => Error::Precondition(format!("level {n}: {m}")),
        Error::BudgetExceeded(m) => Error::BudgetExceeded(format!("level {n}: {m}")),
        other => other,
    }
}

/// Truncates each level above the previous one and takes the union.
pub fn assemble_separator(levels: &[SeparatorLevel], thresholds: Thresholds, kernel: &Kernel<f64>) -> Result<Separator> {
    let mut out = Vec::new();
    let mut floor = 2;
    for (i, lvl) in levels.iter().enumerate() {
        let n = i + 1;
        let m = thresholds.small / (n * n) as f64;
        let t = truncate_separating(&lvl.candidates, &lvl.small_at, &lvl.large_at, m, thresholds.large, floor, kernel)
            .map_err(|e| at_level(e, n))?;
        if let Some(&last) = t.primes.last() {
            floor = last + 1;
        }
        out.push(t);
    }
    let primes = out.iter().flat_map(|t| t.primes.iter().copied()).collect();
    Ok(Separator { levels: out, primes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::PrimeRange;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    const SQRT2: &str = "1.41421356237309504880168872420969807856967187537694";
    const PHI: &str = "1.61803398874989484820458683436563811772030917980576";
    const PI: &str = "3.14159265358979323846264338327950288419716939937510";
    const E: &str = "2.71828182845904523536028747135266249775724709369995";

    fn tt(s: &str) -> TwoTerm {
        TwoTerm::parse_decimal(s).unwrap()
    }

    fn sieve() -> &'static Sieve {
        static S: OnceLock<Sieve> = OnceLock::new();
        S.get_or_init(|| Sieve::build(&PrimeRange::new(1 << 30)).unwrap())
    }

    /// Naive `‖x‖` for exact small rationals.
    fn naive(x: f64) -> f64 {
        let f = x.rem_euclid(1.0);
        f.min(1.0 - f)
    }

    #[test]
    fn fractional_distance_examples() {
        assert_eq!(fractional_distance(0.5), 0.5);
        assert!((fractional_distance(-0.2) - 0.2).abs() < 1e-15);
        assert!((fractional_distance(3.7) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_matches_two_term() {
        let t = tt(SQRT2);
        for q in [1u64, 7, 1 << 20, (1 << 30) - 3] {
            let a = fixed::distance(t, q, TwoTerm::ZERO);
            let b = dist(t, q, 0.0);
            assert!((a - b).abs() < DIST_MARGIN, "q = {q}: {a} vs {b}");
        }
        assert!((fixed::distance(TwoTerm::from_f64(-0.2), 1, TwoTerm::ZERO) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn platoon_zero_target() {
        let c = platoon(&[TwoTerm::ZERO], 2, 1, PlatoonMode::Single, 1 << 20).unwrap();
        assert!(c.q[0] >= 2);
        assert!(c.harmonic_sum > 0.25 && c.harmonic_sum < 0.5);
        assert_eq!(c.max_dist, 0.0);
    }

    #[test]
    fn platoon_half_exhaustive() {
        let t = TwoTerm::from_f64(0.5);
        for mode in [PlatoonMode::Single, PlatoonMode::Chained] {
            let c = platoon(&[t], 3, 2, mode, 1 << 20).unwrap();
            let bound = 4 * 2 * 3 + 1;
            let admissible: Vec<u64> = (1..=bound).filter(|&q| naive(q as f64 * 0.5) <= 1.0 / 3.0).collect();
            assert!(admissible.iter().all(|q| q % 2 == 0));
            for &q in &c.q {
                assert_eq!(q % 2, 0);
                if q <= bound {
                    assert!(admissible.contains(&q));
                }
            }
            assert!(check_certificate(&c).passed());
        }
    }

    #[test]
    fn platoon_two_irrationals() {
        let ts = [tt(SQRT2), tt(PHI)];
        for mode in [PlatoonMode::Single, PlatoonMode::Chained] {
            let c = platoon(&ts, 4, 2, mode, 1 << 26).unwrap();
            assert!(c.q[0] >= 4);
            let (lo, hi) = c.window();
            let h: f64 = c.q.iter().map(|&q| 1.0 / q as f64).sum();
            assert!(h > lo && h < hi);
            for &q in &c.q {
                for (s, x) in [(SQRT2, 2f64.sqrt()), (PHI, (1.0 + 5f64.sqrt()) / 2.0)] {
                    let d = tt(s).frac_dist_scaled(q as i64, 0.0);
                    assert!(d <= 2f64.sqrt() / 4.0, "q = {q}");
                    assert!((d - naive(q as f64 * x)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn platoon_rejects_bad_input() {
        assert!(platoon(&[], 3, 1, PlatoonMode::Single, 100).is_err());
        assert!(platoon(&[TwoTerm::ZERO], 1, 1, PlatoonMode::Single, 100).is_err());
        assert!(matches!(
            platoon(&[tt(SQRT2)], 8, 5, PlatoonMode::Chained, 11),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn checker_catches_tampering() {
        let mut c = platoon(&[tt(SQRT2)], 5, 3, PlatoonMode::Chained, 1 << 20).unwrap();
        assert!(check_certificate(&c).passed());
        let q0 = c.q[0];
        c.q[0] = 1;
        assert!(!check_certificate(&c).passed());
        c.q[0] = q0;
        c.q.push(*c.q.last().unwrap());
        assert!(!check_certificate(&c).passed());
    }

    #[test]
    fn admissible_zero_target() {
        let consts = PlatoonConstants::ReciprocalLog { shift: 1.0 };
        let a = build_admissible(&[TwoTerm::ZERO], &consts, 2, 30, 1 << 24).unwrap();
        assert_eq!(a.ell_reached, 30);
        assert!(a.truncated.is_none());
        assert!(a.certificates.iter().all(|c| c.max_dist == 0.0));
    }

    #[test]
    fn admissible_sqrt2() {
        let consts = PlatoonConstants::ReciprocalLog { shift: 1.0 };
        let a = build_admissible(&[tt(SQRT2)], &consts, 2, 12, 1 << 30).unwrap();
        assert_eq!(a.ell_reached, 12);
        let sched = a.schedule.as_ref().unwrap();
        for w in a.set.entries.windows(2) {
            assert!(w[0].num < w[1].num);
        }
        for e in &a.set.entries {
            let d = naive_sqrt2(e.num);
            assert!(d <= 1.0 / e.ell as f64 + 1e-9);
            assert!(d <= consts.c(e.ell).unwrap());
            assert_eq!(sched.eps(e.num).unwrap(), e.eps);
        }
        let adm = a.admissibility.unwrap();
        assert!(adm.all_hold());
    }

    /// `‖q√2‖` from an exact integer square root.
    fn naive_sqrt2(q: u64) -> f64 {
        // q√2 = √(2q²); the distance to the nearest integer from the floor and ceiling.
        let v = 2 * (q as u128) * (q as u128);
        let mut r = (v as f64).sqrt() as u128;
        while r * r > v {
            r -= 1;
        }
        while (r + 1) * (r + 1) <= v {
            r += 1;
        }
        let x = (q as f64) * std::f64::consts::SQRT_2;
        let lo = x - r as f64;
        lo.min(1.0 - lo)
    }

    #[test]
    fn admissible_two_irrationals() {
        let consts = PlatoonConstants::ReciprocalLog { shift: 1.0 };
        let a = build_admissible(&[tt(SQRT2), tt(PI)], &consts, 2, 8, 1 << 30).unwrap();
        assert_eq!(a.ell_reached, 8);
        assert!(a.certificates.iter().all(|c| check_certificate(c).passed()));
    }

    #[test]
    fn admissible_rejects_small_constants() {
        let consts = PlatoonConstants::ReciprocalLog { shift: 20.0 };
        assert!(build_admissible(&[tt(SQRT2)], &consts, 2, 5, 1 << 20).is_err());
    }

    #[test]
    fn lift_examples() {
        let one = IndexedSet {
            den: 1,
            entries: vec![IndexEntry { num: 3, ell: 0, eps: 0.1 }],
        };
        let l = lift(&one, sieve()).unwrap();
        assert_eq!(l.blocks[0].primes, vec![19]);
        assert_eq!(l.h(19), Some(3.0));

        let zero = IndexedSet::from_schedule(&EpsilonSchedule::constant(0.0, 3, 12), 3, 12).unwrap();
        let l = lift(&zero, sieve()).unwrap();
        assert!(l.blocks.iter().all(|b| b.primes.is_empty()));

        let wide = IndexedSet {
            den: 1,
            entries: vec![IndexEntry { num: 3, ell: 0, eps: 0.5 }],
        };
        assert!(lift(&wide, sieve()).is_err());
    }

    #[test]
    fn lift_normalized_sums() {
        let set = IndexedSet::from_schedule(&EpsilonSchedule::reciprocal_log(), 15, 20).unwrap();
        let l = lift(&set, sieve()).unwrap();
        assert!(l.max_h_ratio <= 1.0);
        let kept: Vec<f64> = l.blocks.iter().map(|b| b.normalized.unwrap()).collect();
        assert!(!kept.is_empty());
        assert_eq!(kept.len() + l.truncated.len(), 6);
        for v in kept {
            assert!((1.5..=2.5).contains(&v), "{v}");
        }
    }

    #[test]
    fn membership_scores() {
        let zero = IndexedSet::from_schedule(&EpsilonSchedule::reciprocal_log(), 3, 40).unwrap();
        assert_eq!(h_membership_score(TwoTerm::ZERO, 0.0, &zero).unwrap().sup_ratio, 0.0);

        let consts = PlatoonConstants::ReciprocalLog { shift: 1.0 };
        let a = build_admissible(&[tt(SQRT2)], &consts, 2, 40, 1 << 30).unwrap();
        let on = h_membership_score(tt(SQRT2), 0.0, &a.set).unwrap();
        assert!(on.sup_ratio <= 1.0);
        let off = h_membership_score(TwoTerm::from_f64(1.0).div_f64(3.0), 0.0, &a.set).unwrap();
        assert!(off.sup_ratio > on.sup_ratio);
        assert!(off.tail_sup >= on.tail_sup * 2.0);
    }

    #[test]
    fn kronecker_example() {
        assert_eq!(kronecker_scan(&[(tt(SQRT2), 0.25)], 0.05, 1, 1, 1000).unwrap(), 3);
        let got = kronecker_scan(&[(tt(SQRT2), 0.25)], 1e-4, 1, 1, 1 << 20).unwrap();
        let exhaustive = (1..).find(|&m| naive(m as f64 * 2f64.sqrt() - 0.25) < 1e-4).unwrap();
        assert_eq!(got, exhaustive);
        assert!(matches!(
            kronecker_scan(&[(tt(SQRT2), 0.25)], 1e-9, 1, 1, 1000),
            Err(Error::BudgetExceeded(_))
        ));
    }

    fn integers_half() -> SeparationInstance {
        SeparationInstance {
            generators: vec![TwoTerm::from_f64(1.0)],
            coefficients: vec![Rational { num: 1, den: 2 }],
            irrational: TwoTerm::ZERO,
        }
    }

    #[test]
    fn separation_half_lattice() {
        let s = separation_levels(&integers_half(), &SeparationConfig::default(), 200.0).unwrap();
        assert_eq!(s.branch, SeparationBranch::HalfLattice);
        assert_eq!(s.a, 0.25);
        assert_eq!(s.set.den, 2);
        for e in &s.set.entries {
            assert_eq!(e.num % 4, 1);
            let n = e.num as f64 / 2.0;
            assert_eq!(naive(n - 0.5), 0.0);
            assert_eq!(naive(n * 0.5 - 0.25), 0.0);
        }
        for w in s.levels.windows(2) {
            assert!(w[0].numerators.last() < w[1].numerators.first());
        }
        assert!(s.levels.len() >= 2);
    }

    #[test]
    fn separation_irrational_part() {
        let inst = SeparationInstance {
            generators: vec![tt(SQRT2), TwoTerm::from_f64(1.0)],
            coefficients: vec![Rational { num: 0, den: 1 }, Rational { num: 0, den: 1 }],
            irrational: tt(E),
        };
        let s = separation_levels(&inst, &SeparationConfig::default(), 1e5).unwrap();
        assert_eq!(s.branch, SeparationBranch::Irrational);
        assert!(!s.levels.is_empty());
        for l in &s.levels {
            let e = std::f64::consts::E;
            assert!(naive(l.m0 as f64 * e - 0.25) < l.c);
            assert!(l.max_u_dist <= l.bound);
        }
    }

    #[test]
    fn separation_coefficient_branch() {
        let inst = SeparationInstance {
            generators: vec![tt(SQRT2), TwoTerm::from_f64(1.0)],
            coefficients: vec![Rational { num: 1, den: 3 }, Rational { num: 0, den: 1 }],
            irrational: TwoTerm::ZERO,
        };
        let s = separation_levels(&inst, &SeparationConfig::default(), 1e5).unwrap();
        assert_eq!(s.branch, SeparationBranch::Coefficient { s: 1 });
        assert!((s.a - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(s.residues, vec![0.5, 0.0]);
        assert!(!s.levels.is_empty());
    }

    #[test]
    fn separation_rejects_members() {
        let inst = SeparationInstance {
            generators: vec![tt(SQRT2), TwoTerm::from_f64(1.0)],
            coefficients: vec![Rational { num: 2, den: 1 }, Rational { num: -1, den: 1 }],
            irrational: TwoTerm::ZERO,
        };
        assert!(matches!(inst.validate(), Err(Error::Precondition(_))));
        let bad = SeparationInstance {
            generators: vec![tt(SQRT2)],
            coefficients: vec![Rational { num: 1, den: 2 }],
            irrational: TwoTerm::ZERO,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn separate_runs_end_to_end() {
        let r = separate(&integers_half(), &SeparationConfig::default(), sieve()).unwrap();
        assert!(!r.lifted.blocks.is_empty());
        assert!(r.lifted.max_h_ratio <= 1.0);
        assert_eq!(r.evidence.len(), 2);
        assert_eq!(r.evidence[1].role, "excluded");
    }

    #[test]
    fn truncation_examples() {
        let ps = sieve().primes_between(2, 1_000_000).unwrap();
        let k = Kernel::<f64>::two_pi();
        let t = truncate_separating(&ps, &[0.0], &[1.0], 0.01, 1.0, 2, &k).unwrap();
        assert_eq!(t.small[0].1, 0.0);
        assert!(t.large[0].1 > 1.0);

        let err = truncate_separating(&ps[..50], &[0.3], &[1.0], 1e-12, 1.0, 2, &k).unwrap_err();
        assert!(matches!(err, Error::Verification(_)));
        let err = truncate_separating(&ps[..50], &[], &[1.0], 1e-3, 100.0, 2, &k).unwrap_err();
        assert!(err.to_string().contains("achieved"));
    }

    #[test]
    fn assembly_levels() {
        let ps = sieve().primes_between(2, 1_000_000).unwrap();
        let k = Kernel::<f64>::two_pi();
        let single = assemble_separator(
            &[SeparatorLevel { candidates: ps.clone(), small_at: vec![0.0], large_at: vec![1.0] }],
            Thresholds::default(),
            &k,
        )
        .unwrap();
        let direct = truncate_separating(&ps, &[0.0], &[1.0], 1.0, 1.0, 2, &k).unwrap();
        assert_eq!(single.primes, direct.primes);

        let two = assemble_separator(
            &[
                SeparatorLevel { candidates: ps.clone(), small_at: vec![0.0], large_at: vec![0.5] },
                SeparatorLevel { candidates: ps.clone(), small_at: vec![0.0], large_at: vec![] },
            ],
            Thresholds { small: 1.0, large: 0.5 },
            &k,
        )
        .unwrap();
        assert!(two.levels[1].primes.is_empty());
        let err = assemble_separator(
            &[SeparatorLevel { candidates: ps[..10].to_vec(), small_at: vec![], large_at: vec![0.5] }],
            Thresholds::default(),
            &k,
        )
        .unwrap_err();
        assert!(err.to_string().contains("level 1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_certificates_pass(
            k in 1usize..=3,
            ell in 2u64..=6,
            n0 in 1u64..=5,
            seeds in prop::collection::vec(0.0f64..1.0, 3),
            chained in any::<bool>(),
        ) {
            let ts: Vec<TwoTerm> = seeds[..k].iter().map(|&x| TwoTerm::from_f64(x * 7.0 + 0.1)).collect();
            let mode = if chained { PlatoonMode::Chained } else { PlatoonMode::Single };
            let c = platoon(&ts, ell, n0, mode, 1 << 30).unwrap();
            prop_assert!(check_certificate(&c).passed());
        }

        #[test]
        fn checker_agrees_with_naive_for_rationals(num in 0u64..50, den in 1u64..50, q in 1u64..10_000) {
            let t = TwoTerm::from_f64(num as f64).div_f64(den as f64);
            let exact = ((q * num) % den) as f64 / den as f64;
            let exact = exact.min(1.0 - exact);
            prop_assert!((fixed::distance(t, q, TwoTerm::ZERO) - exact).abs() < 1e-12);
        }

        #[test]
        fn fractional_distance_range(x in -1e6f64..1e6) {
            let d = fractional_distance(x);
            prop_assert!((0.0..=0.5).contains(&d));
            prop_assert!((d - fractional_distance(-x)).abs() < 1e-9);
        }
    }
}
