//! Kernel series over prime sets.
//!
//! The kernel term is `sin²(ω·t·log p)/p^β`. The three conventions in use are
//! `ω = 2π, β = 1` ([`Kernel::two_pi`]), `ω = β/2` ([`Kernel::half_beta`], the
//! small-`x` form of [`exact_t_term`]) and `ω = 2πβ` ([`Kernel::lattice`]).
//! Configurations always state `ω` explicitly.
//!
//! The argument `ω·t·log p` is reduced mod π in double precision. For
//! `|ω·t·log p| < 2⁵⁰` this costs at most about `10⁻⁶` absolute in `sin²`.
//!
//! Traces sum block by block in parallel and merge the compensated partial
//! sums in block order, so the worker count never changes a result.
//!
//! [`classify`] is a heuristic. No finite truncation decides whether a series
//! converges. The labels say which envelope the increments resemble.

use crate::primes::Sieve;
use crate::primesets::{Block, PrimeBlockFamily};
use crate::schedules::EpsilonSchedule;
use crate::summation::CompensatedSum;
use crate::{Error, Result, Scalar};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel<S> {
    pub beta: S,
    pub omega: S,
}

impl<S: Scalar> Kernel<S> {
    pub fn new(beta: S, omega: S) -> Result<Self> {
        if !(beta > S::zero() && beta <= S::one()) {
            return Err(Error::pre("kernel β must lie in (0, 1]"));
        }
        if !(omega > S::zero() && omega.is_finite()) {
            return Err(Error::pre("kernel ω must be positive"));
        }
        Ok(Self { beta, omega })
    }

    /// `ω = 2π`, `β = 1`.
    pub fn two_pi() -> Self {
        Self {
            beta: S::one(),
            omega: S::TAU(),
        }
    }

    /// `ω = β/2`.
    pub fn half_beta(beta: S) -> Result<Self> {
        Self::new(beta, beta / (S::one() + S::one()))
    }

    /// `ω = 2πβ`.
    pub fn lattice(beta: S) -> Result<Self> {
        Self::new(beta, S::TAU() * beta)
    }

    /// `sin²(ω t log p)/p^β` for `p > 0`.
    #[inline]
    pub fn term(&self, p: S, t: S) -> S {
        self.term_ln(p.ln(), t)
    }

    /// Same as [`term`](Self::term) with `log p` supplied.
    #[inline]
    pub fn term_ln(&self, ln_p: S, t: S) -> S {
        let s = reduced_sin(self.omega * t * ln_p);
        s * s * (-self.beta * ln_p).exp()
    }
}

/// `sin x` after reducing `x` to `[−π/2, π/2]`; the sign is irrelevant to
/// `sin²`.
#[inline]
fn reduced_sin<S: Scalar>(x: S) -> S {
    let k = (x / S::PI()).round();
    (x - k * S::PI()).sin()
}

/// `1 − (1 − x)/|1 − x e^{−iθ}|` with `x = p^{−β}`, `θ = β t log p`.
///
/// Evaluated as `4x sin²(θ/2) / ((1 − x + m)·m)`, `m` the complex modulus, which
/// avoids cancelling `m` against `1 − x`.
pub fn exact_t_term<S: Scalar>(p: S, beta: S, t: S) -> S {
    let ln_p = p.ln();
    let x = (-beta * ln_p).exp();
    let two = S::one() + S::one();
    let theta = beta * t * ln_p;
    let k = (theta / S::TAU()).round();
    let theta = theta - k * S::TAU();
    let z = Complex::new(S::one(), S::zero()) - Complex::from_polar(x, -theta);
    let m = z.norm();
    let h = (theta / two).sin();
    two * two * x * h * h / ((S::one() - x + m) * m)
}

/// Prime set a series runs over.
#[derive(Clone, Copy, Debug)]
pub enum PrimeSource<'a> {
    /// Ascending primes.
    List(&'a [u64]),
    Family {
        family: &'a PrimeBlockFamily,
        sieve: &'a Sieve,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSum {
    pub n: u64,
    pub eps: f64,
    /// Largest integer in the block's range.
    pub end: f64,
    /// `Σ` of kernel terms over the block.
    pub sum: f64,
    /// `Σ p^{−β}` over the block.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTrace {
    pub beta: f64,
    pub omega: f64,
    pub t: f64,
    pub cutoffs: Vec<f64>,
    /// Envelope index at each cutoff: the block index for families, `⌊log c⌋`
    /// for plain lists.
    pub index: Vec<u64>,
    pub partial_sums: Vec<f64>,
    pub block_sums: Option<Vec<BlockSum>>,
}

impl SeriesTrace {
    /// Trace whose cutoffs are the block ends of `blocks`.
    pub fn from_block_sums(beta: f64, omega: f64, t: f64, blocks: Vec<BlockSum>) -> Self {
        let mut acc = CompensatedSum::<f64>::new();
        let mut partial_sums = Vec::with_capacity(blocks.len());
        for b in &blocks {
            acc.add(b.sum);
            partial_sums.push(acc.value());
        }
        Self {
            beta,
            omega,
            t,
            cutoffs: blocks.iter().map(|b| b.end).collect(),
            index: blocks.iter().map(|b| b.n).collect(),
            partial_sums,
            block_sums: Some(blocks),
        }
    }

    pub fn last(&self) -> Option<f64> {
        self.partial_sums.last().copied()
    }
}

struct Segment<'a> {
    first: u64,
    last: u64,
    n: u64,
    eps: f64,
    primes: SegPrimes<'a>,
}

enum SegPrimes<'a> {
    Slice(&'a [u64]),
    Block(&'a Block, &'a Sieve),
}

impl Segment<'_> {
    fn for_each(&self, f: impl FnMut(u64)) -> Result<()> {
        match self.primes {
            SegPrimes::Slice(s) => {
                s.iter().copied().for_each(f);
                Ok(())
            }
            SegPrimes::Block(b, sieve) => b.for_each_prime(sieve, f),
        }
    }
}

const LIST_CHUNK: usize = 1 << 16;

fn segments<'a>(src: &PrimeSource<'a>) -> Result<Vec<Segment<'a>>> {
    match *src {
        PrimeSource::List(ps) => {
            if ps.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::pre("prime list must be strictly ascending"));
            }
            Ok(ps
                .chunks(LIST_CHUNK)
                .map(|c| Segment {
                    first: c[0],
                    last: c[c.len() - 1],
                    n: (c[c.len() - 1] as f64).ln().floor().max(2.0) as u64,
                    eps: 0.0,
                    primes: SegPrimes::Slice(c),
                })
                .collect())
        }
        PrimeSource::Family { family, sieve } => Ok(family
            .blocks
            .iter()
            .filter_map(|b| {
                b.interval.integer_bounds().map(|(first, last)| Segment {
                    first,
                    last,
                    n: b.n,
                    eps: b.eps,
                    primes: SegPrimes::Block(b, sieve),
                })
            })
            .collect()),
    }
}

struct SegResult {
    sum: CompensatedSum<f64>,
    bound: CompensatedSum<f64>,
    /// Partial sums at cutoffs that fall inside the segment.
    inner: Vec<(usize, CompensatedSum<f64>)>,
}

fn sum_segment(seg: &Segment, kernel: &Kernel<f64>, t: f64, cutoffs: &[f64]) -> Result<SegResult> {
    let mut inner_idx: Vec<usize> = (0..cutoffs.len())
        .filter(|&i| {
            let c = cutoffs[i].floor();
            c >= seg.first as f64 && c < seg.last as f64
        })
        .collect();
    inner_idx.reverse();
    let mut sum = CompensatedSum::new();
    let mut bound = CompensatedSum::new();
    let mut inner = Vec::new();
    seg.for_each(|p| {
        while let Some(&i) = inner_idx.last() {
            if (p as f64) > cutoffs[i] {
                inner.push((i, sum));
                inner_idx.pop();
            } else {
                break;
            }
        }
        let lp = (p as f64).ln();
        sum.add(kernel.term_ln(lp, t));
        bound.add((-kernel.beta * lp).exp());
    })?;
    for i in inner_idx.into_iter().rev() {
        inner.push((i, sum));
    }
    Ok(SegResult { sum, bound, inner })
}

/// Partial sums of the kernel series at each cutoff (primes `p ≤ cutoff`).
pub fn trace(kernel: &Kernel<f64>, src: &PrimeSource, t: f64, cutoffs: &[f64]) -> Result<SeriesTrace> {
    if cutoffs.windows(2).any(|w| !(w[1] > w[0])) || cutoffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::pre("cutoffs must be finite and strictly ascending"));
    }
    if let (PrimeSource::Family { sieve, .. }, Some(&c)) = (src, cutoffs.last()) {
        if c > sieve.limit() as f64 {
            return Err(Error::range("series cutoff", c as u64, sieve.limit()));
        }
    }
    let segs = segments(src)?;
    let results = segs
        .par_iter()
        .map(|s| sum_segment(s, kernel, t, cutoffs))
        .collect::<Result<Vec<_>>>()?;

    let mut running = CompensatedSum::<f64>::new();
    let mut partial = vec![0.0; cutoffs.len()];
    let mut index = vec![0u64; cutoffs.len()];
    let mut next = 0usize;
    let mut last_n = segs.first().map(|s| s.n).unwrap_or(2);
    for (seg, res) in segs.iter().zip(&results) {
        while next < cutoffs.len() && cutoffs[next].floor() < seg.first as f64 {
            partial[next] = running.value();
            index[next] = last_n;
            next += 1;
        }
        for (i, acc) in &res.inner {
            let mut v = running;
            v.merge(acc);
            partial[*i] = v.value();
            index[*i] = seg.n;
        }
        while next < cutoffs.len() && cutoffs[next].floor() < seg.last as f64 {
            next += 1;
        }
        running.merge(&res.sum);
        last_n = seg.n;
    }
    while next < cutoffs.len() {
        partial[next] = running.value();
        index[next] = last_n;
        next += 1;
    }
    let block_sums = match src {
        PrimeSource::Family { .. } => Some(
            segs.iter()
                .zip(&results)
                .map(|(s, r)| BlockSum {
                    n: s.n,
                    eps: s.eps,
                    end: s.last as f64,
                    sum: r.sum.value(),
                    bound: r.bound.value(),
                })
                .collect(),
        ),
        PrimeSource::List(_) => None,
    };
    Ok(SeriesTrace {
        beta: kernel.beta,
        omega: kernel.omega,
        t,
        cutoffs: cutoffs.to_vec(),
        index,
        partial_sums: partial,
        block_sums,
    })
}

/// Kernel series over primes `≤ cutoff`.
pub fn partial_sum(kernel: &Kernel<f64>, src: &PrimeSource, t: f64, cutoff: f64) -> Result<f64> {
    Ok(trace(kernel, src, t, &[cutoff])?.partial_sums[0])
}

/// Trace with one cutoff at the end of every block of a family.
pub fn trace_blocks(kernel: &Kernel<f64>, family: &PrimeBlockFamily, sieve: &Sieve, t: f64) -> Result<SeriesTrace> {
    let cutoffs: Vec<f64> = family
        .blocks
        .iter()
        .filter_map(|b| b.interval.integer_bounds().map(|(_, last)| last as f64))
        .collect();
    trace(kernel, &PrimeSource::Family { family, sieve }, t, &cutoffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "convergent-like")]
    ConvergentLike,
    #[serde(rename = "divergent-like")]
    DivergentLike,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::ConvergentLike => "convergent-like",
            Label::DivergentLike => "divergent-like",
            Label::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyDiagnostics {
    /// Increments used in the fit.
    pub points: usize,
    /// Fitted exponent `γ` in `increment ∝ (log n)^γ · envelope_div`.
    pub slope: f64,
    pub rss_divergent: f64,
    pub rss_convergent: f64,
    pub first_index: u64,
    pub last_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub score: f64,
    pub diagnostics: ClassifyDiagnostics,
}

pub const MIN_CUTOFFS: usize = 8;
pub const SCORE_THRESHOLD: f64 = 1.0;
const MAX_FIT_POINTS: usize = 64;
const RSS_FLOOR: f64 = 1e-12;

/// Labels a trace by which envelope its increments follow.
///
/// With `ε_n` from `eps` (default `1/log n`), increments between cutoffs are
/// divided by the matching increments of `Σ ε_n/n`, giving `y_j`. Over the
/// upper half of the (log-thinned) points, `y_j` is fitted against
/// `x_j = log log n_j` twice: once with the slope held `≥ 0` (increments no
/// thinner than `ε_n/n`, divergent) and once held `≤ −2` (increments at most
/// `ε_n³/n`, convergent). The score is `log(RSS_conv/RSS_div)`, and
/// `|score| ≤ 1` is inconclusive.
pub fn classify(trace: &SeriesTrace, eps: Option<&EpsilonSchedule>) -> Result<Classification> {
    let m = trace.cutoffs.len();
    if m < MIN_CUTOFFS {
        return Err(Error::pre(format!("classification needs at least {MIN_CUTOFFS} cutoffs, got {m}")));
    }
    if !(trace.cutoffs[0] > 0.0 && trace.cutoffs[m - 1] / trace.cutoffs[0] >= 1e3) {
        return Err(Error::pre("classification needs cutoffs spanning at least three decades"));
    }
    let default_eps = EpsilonSchedule::reciprocal_log();
    let eps = eps.unwrap_or(&default_eps);

    // Keep at most MAX_FIT_POINTS cutoffs, spread evenly in log n.
    let (n0, n1) = (trace.index[0].max(2) as f64, trace.index[m - 1].max(2) as f64);
    let mut keep: Vec<usize> = Vec::new();
    let mut next_mark = n0.ln();
    let step = (n1.ln() - n0.ln()) / MAX_FIT_POINTS as f64;
    for j in 0..m {
        let ln_n = (trace.index[j].max(2) as f64).ln();
        if j == 0 || j == m - 1 || ln_n >= next_mark {
            if keep.last().is_none_or(|&k| trace.index[k] < trace.index[j]) || j == m - 1 {
                keep.push(j);
            }
            next_mark = ln_n + step;
        }
    }
    keep.dedup_by_key(|j| trace.index[*j]);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for w in keep.windows(2) {
        let (a, b) = (trace.index[w[0]], trace.index[w[1]]);
        let ds = trace.partial_sums[w[1]] - trace.partial_sums[w[0]];
        if b <= a || !(ds > 0.0) {
            continue;
        }
        let mut de = CompensatedSum::<f64>::new();
        for k in a + 1..=b {
            let e = eps.eps(k.max(eps.domain_start))?;
            de.add(e / k as f64);
        }
        let de = de.value();
        if !(de > 0.0) {
            continue;
        }
        xs.push(((a as f64) * (b as f64)).sqrt().ln().ln());
        ys.push((ds / de).ln());
    }
    let half = xs.len() / 2;
    let (xs, ys) = (&xs[half..], &ys[half..]);
    let diag = |slope, rd, rc| ClassifyDiagnostics {
        points: xs.len(),
        slope,
        rss_divergent: rd,
        rss_convergent: rc,
        first_index: trace.index[0],
        last_index: trace.index[m - 1],
    };
    if xs.len() < 3 {
        return Ok(Classification {
            label: Label::Inconclusive,
            score: 0.0,
            diagnostics: diag(f64::NAN, f64::NAN, f64::NAN),
        });
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rss = |g: f64| {
        let a = my - g * mx;
        xs.iter().zip(ys).map(|(x, y)| (y - a - g * x).powi(2)).sum::<f64>()
    };
    let rd = rss(slope.max(0.0));
    let rc = rss(slope.min(-2.0));
    let floor = RSS_FLOOR * k;
    let score = ((rc + floor) / (rd + floor)).ln();
    let label = if score > SCORE_THRESHOLD {
        Label::DivergentLike
    } else if score < -SCORE_THRESHOLD {
        Label::ConvergentLike
    } else {
        Label::Inconclusive
    };
    Ok(Classification {
        label,
        score,
        diagnostics: diag(slope, rd, rc),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// `√(p(1−p)/N)`.
    pub sigma: f64,
    pub samples: u64,
    /// `8c` for the sublevel-set estimate, `2c` for the single frequency.
    pub reference: f64,
    /// `estimate ≤ reference + 3σ`.
    pub within_bound: bool,
}

const MC_CHUNK: u64 = 4096;
pub const MIN_SAMPLES: u64 = 1000;

/// Counts hits of `pred(t)` over `samples` uniform `t ∈ [0, 1)`. Each chunk
/// draws from its own ChaCha stream, so the count ignores the worker count.
fn mc_count(samples: u64, seed: u64, pred: impl Fn(f64) -> bool + Sync) -> u64 {
    let chunks = samples.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            (0..len).filter(|_| pred(rng.gen::<f64>())).count() as u64
        })
        .sum()
}

fn estimate(hits: u64, samples: u64, reference: f64) -> McEstimate {
    let p = hits as f64 / samples as f64;
    let sigma = (p * (1.0 - p) / samples as f64).sqrt();
    McEstimate {
        estimate: p,
        sigma,
        samples,
        reference,
        within_bound: p <= reference + 3.0 * sigma,
    }
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Measure of `{t ∈ [0,1]: {t·a} ∈ [0,c] ∪ [1−c,1)}`; tends to `2c` as `a`
/// grows.
pub fn single_frequency_mc(a: f64, c: f64, samples: u64, seed: u64) -> Result<McEstimate> {
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::pre("c must lie in (0, 1/2)"));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::pre(format!("at least {MIN_SAMPLES} samples required")));
    }
    let hits = mc_count(samples, seed, |t| {
        let f = frac(t * a);
        f <= c || f >= 1.0 - c
    });
    Ok(estimate(hits, samples, 2.0 * c))
}

/// Measure of `{t ∈ [0,1]: f_{n,c}(t) < V_n/2}` where
/// `f_{n,c}(t) = Σ_{k≤n} χ_{[c,1−c]}({t a_k})/p_k` and `V_n = Σ_{k≤n} 1/p_k`.
/// The reference bound is `8c`.
pub fn measure_zero_mc(a: &[f64], p: &[f64], c: f64, n: usize, samples: u64, seed: u64) -> Result<McEstimate> {
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::pre("c must lie in (0, 1/2)"));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::pre(format!("at least {MIN_SAMPLES} samples required")));
    }
    if n == 0 || n > a.len() || n > p.len() {
        return Err(Error::pre("n must lie within both sequences"));
    }
    if a[..n].windows(2).any(|w| w[1] <= w[0]) || p[..n].iter().any(|&x| !(x > 0.0)) {
        return Err(Error::pre("a must increase and p must be positive"));
    }
    let (a, w): (Vec<f64>, Vec<f64>) = (a[..n].to_vec(), p[..n].iter().map(|x| 1.0 / x).collect());
    let half_v = 0.5 * crate::summation::compensated_sum(w.iter().copied());
    let hits = mc_count(samples, seed, |t| {
        let mut f = 0.0;
        for (ak, wk) in a.iter().zip(&w) {
            let x = frac(t * ak);
            if x >= c && x <= 1.0 - c {
                f += wk;
            }
        }
        f < half_v
    });
    Ok(estimate(hits, samples, 8.0 * c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::PrimeRange;
    use proptest::prelude::*;
    use std::f64::consts::{LN_2, PI};
    use std::sync::OnceLock;

    fn sieve() -> &'static Sieve {
        static S: OnceLock<Sieve> = OnceLock::new();
        S.get_or_init(|| Sieve::build(&PrimeRange::new(5_000_000)).unwrap())
    }

    #[test]
    fn kernel_examples() {
        let k = Kernel::<f64>::two_pi();
        let v = partial_sum(&k, &PrimeSource::List(&[2]), 1.0, 10.0).unwrap();
        let direct = (2.0 * PI * LN_2).sin().powi(2) / 2.0;
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.438_866_115_516_939_4).abs() < 1e-12);
        let v = partial_sum(&k, &PrimeSource::List(&[2, 3, 5]), 1.0, 10.0).unwrap();
        let direct: f64 = [2.0f64, 3.0, 5.0].iter().map(|&p| (2.0 * PI * p.ln()).sin().powi(2) / p).sum();
        assert!((v - direct).abs() < 1e-15);
        assert_eq!(partial_sum(&k, &PrimeSource::List(&[2, 3, 5]), 0.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn exact_term_examples() {
        assert_eq!(exact_t_term(7.0f64, 1.0, 0.0), 0.0);
        // Direct complex evaluation of 1 − (1 − 1/2)/|1 − e^{−(1+i)ln 2}|.
        let z = Complex::new(1.0, 0.0) - Complex::new(-LN_2, -LN_2).exp();
        let direct = 1.0 - 0.5 / z.norm();
        let v = exact_t_term(2.0f64, 1.0, 1.0);
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.2789).abs() < 1e-4, "{v}");
        let p = 1_000_003.0f64;
        let s2 = (p.ln() / 2.0).sin().powi(2);
        assert!(s2 > 0.1);
        let r = exact_t_term(p, 1.0, 1.0) / (s2 / p);
        assert!((r - 2.0).abs() < 1e-3, "{r}");
        let v32 = exact_t_term(2.0f32, 1.0, 1.0);
        assert!((v32 as f64 - v).abs() < 1e-6);
    }

    fn fam() -> PrimeBlockFamily {
        let spec = crate::primesets::BlockSpec::lattice(1.0, 1.0);
        crate::primesets::build_family(&spec, 3, 14, sieve()).unwrap()
    }

    #[test]
    fn trace_block_sums_add_up() {
        let f = fam();
        let k = Kernel::lattice(1.0).unwrap();
        let tr = trace_blocks(&k, &f, sieve(), 0.5).unwrap();
        let bs = tr.block_sums.as_ref().unwrap();
        let total: f64 = bs.iter().map(|b| b.sum).sum();
        let last = tr.last().unwrap();
        assert!((total - last).abs() <= 1e-10 * last);
        assert!(tr.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        let zero = trace_blocks(&k, &f, sieve(), 0.0).unwrap();
        assert!(zero.partial_sums.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_cutoffs_inside_blocks_match_list() {
        let f = fam();
        let primes = f.primes(sieve()).unwrap();
        let k = Kernel::lattice(1.0).unwrap();
        let cutoffs = [100.0, 5_000.0, 50_000.5, 400_000.0, 1_500_000.0];
        let a = trace(&k, &PrimeSource::Family { family: &f, sieve: sieve() }, 0.3, &cutoffs).unwrap();
        let b = trace(&k, &PrimeSource::List(&primes), 0.3, &cutoffs).unwrap();
        for (x, y) in a.partial_sums.iter().zip(&b.partial_sums) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
        for (i, &c) in cutoffs.iter().enumerate() {
            let direct: f64 = primes
                .iter()
                .filter(|&&p| p as f64 <= c)
                .map(|&p| k.term(p as f64, 0.3))
                .sum();
            assert!((a.partial_sums[i] - direct).abs() <= 1e-12 * direct.max(1e-300));
        }
        let single = partial_sum(&k, &PrimeSource::List(&primes), 0.3, 400_000.0).unwrap();
        assert_eq!(single, b.partial_sums[3]);
    }

    #[test]
    fn cutoff_beyond_sieve_is_range_error() {
        let f = fam();
        let k = Kernel::lattice(1.0).unwrap();
        let e = trace(&k, &PrimeSource::Family { family: &f, sieve: sieve() }, 0.3, &[1e9]).unwrap_err();
        assert!(matches!(e, Error::RangeExceeded { .. }));
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> SeriesTrace {
        let blocks = (2..=10_000u64)
            .map(|n| BlockSum {
                n,
                eps: 0.0,
                end: n as f64,
                sum: f(n as f64),
                bound: 0.0,
            })
            .collect();
        SeriesTrace::from_block_sums(1.0, 1.0, 1.0, blocks)
    }

    #[test]
    fn classifier_synthetic_envelopes() {
        let div = classify(&synthetic(|n| 1.0 / (n * n.ln())), None).unwrap();
        assert_eq!(div.label, Label::DivergentLike, "{div:?}");
        let conv = classify(&synthetic(|n| n.powf(-1.5)), None).unwrap();
        assert_eq!(conv.label, Label::ConvergentLike, "{conv:?}");
        let conv3 = classify(&synthetic(|n| 1.0 / (n * n.ln().powi(3))), None).unwrap();
        assert_eq!(conv3.label, Label::ConvergentLike);
        let mid = classify(&synthetic(|n| 1.0 / (n * n.ln().powi(2))), None).unwrap();
        assert_eq!(mid.label, Label::Inconclusive, "{mid:?}");
    }

    #[test]
    fn classifier_rejects_short_traces() {
        let mut t = synthetic(|n| 1.0 / n);
        t.cutoffs.truncate(7);
        t.partial_sums.truncate(7);
        t.index.truncate(7);
        assert!(classify(&t, None).is_err());
        let narrow = synthetic(|n| 1.0 / n);
        let mut n2 = narrow.clone();
        n2.cutoffs = n2.cutoffs[..500].to_vec();
        n2.index.truncate(500);
        n2.partial_sums.truncate(500);
        assert!(classify(&n2, None).is_err());
    }

    #[test]
    fn single_frequency_near_2c() {
        let e = single_frequency_mc(1000.0, 0.1, 100_000, 7).unwrap();
        assert!((0.18..=0.22).contains(&e.estimate), "{e:?}");
        assert_eq!(single_frequency_mc(1000.0, 0.1, 20_000, 7).unwrap(), single_frequency_mc(1000.0, 0.1, 20_000, 7).unwrap());
        assert!(single_frequency_mc(1000.0, 0.1, 999, 7).is_err());
    }

    #[test]
    fn mc_independent_of_pool_size() {
        let run = |w| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .unwrap()
                .install(|| single_frequency_mc(37.5, 0.2, 50_000, 3).unwrap())
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn harmonic_instance_within_envelope() {
        let a: Vec<f64> = (1..=1000).map(|k| (k * k) as f64).collect();
        let p: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        let e = measure_zero_mc(&a, &p, 0.05, 1000, 20_000, 11).unwrap();
        assert!(e.within_bound, "{e:?}");
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_subadditive(p in 2u64..10_000_000, t1 in -50.0f64..50.0, t2 in -50.0f64..50.0) {
            let k = Kernel::<f64>::two_pi();
            let x = p as f64;
            prop_assert_eq!(k.term(x, -t1), k.term(x, t1));
            let lhs = k.term(x, t1 + t2);
            let rhs = 2.0 * (k.term(x, t1) + k.term(x, t2));
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
            prop_assert!(lhs <= 1.0 / x * (1.0 + 1e-15));
        }

        #[test]
        fn kernel_lipschitz(x in 0.01f64..1e6, y in 0.01f64..1e6, t in 0.0f64..20.0) {
            let k = Kernel::new(1.0, 1.0).unwrap();
            let d = (k.term(x, t) - k.term(y, t)).abs();
            prop_assert!(d <= (2.0 * t + 1.0) * (1.0 / x - 1.0 / y).abs() * (1.0 + 1e-9) + 1e-15);
        }

        #[test]
        fn exact_term_in_unit_interval(p in 2u64..u32::MAX as u64, beta in 0.05f64..=1.0, t in -1e3f64..1e3) {
            let v = exact_t_term(p as f64, beta, t);
            prop_assert!((0.0..1.0).contains(&v));
        }
    }
}
