//! Overlap defects between factor states and the criterion sums built from
//! them.
//!
//! A geometric state of ratio `a` has eigenvalues `(1−a)aᵏ`, `k ≥ 0`. A
//! two-level state of ratio `r` has eigenvalues `1/(1+r)` and `r/(1+r)`. The
//! overlap defect of two states is `1 − Σ_k √(λ_k μ_k)`.
//!
//! Every closed form below is rewritten as `(1 − P²)/(1 + P)` with `1 − P²`
//! expanded symbolically, so defects of nearly equal states keep full relative
//! accuracy.
//!
//! Nothing here decides isomorphism. The sums are finite truncations, reported
//! as traces.

use crate::summation::CompensatedSum;
use crate::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum State<S> {
    Geometric { ratio: S },
    TwoLevel { ratio: S },
}

impl<S: Scalar> State<S> {
    pub fn geometric(ratio: S) -> Result<Self> {
        Self::check(ratio)?;
        Ok(State::Geometric { ratio })
    }

    pub fn two_level(ratio: S) -> Result<Self> {
        Self::check(ratio)?;
        Ok(State::TwoLevel { ratio })
    }

    /// Geometric state of ratio `p^{−β}`.
    pub fn prime(p: u64, beta: S) -> Result<Self> {
        let p = S::from_u64(p).ok_or_else(|| Error::pre("prime not representable"))?;
        Self::geometric((-beta * p.ln()).exp())
    }

    fn check(ratio: S) -> Result<()> {
        if ratio > S::zero() && ratio < S::one() {
            Ok(())
        } else {
            Err(Error::pre(format!("state ratio {ratio:?} outside (0, 1)")))
        }
    }

    pub fn ratio(&self) -> S {
        match *self {
            State::Geometric { ratio } | State::TwoLevel { ratio } => ratio,
        }
    }

    pub fn eigenvalue(&self, k: u32) -> S {
        match *self {
            State::Geometric { ratio } => (S::one() - ratio) * ratio.powi(k as i32),
            State::TwoLevel { ratio } => match k {
                0 => S::one() / (S::one() + ratio),
                1 => ratio / (S::one() + ratio),
                _ => S::zero(),
            },
        }
    }

    /// Number of nonzero eigenvalues, `None` when infinite.
    pub fn rank(&self) -> Option<u32> {
        match self {
            State::Geometric { .. } => None,
            State::TwoLevel { .. } => Some(2),
        }
    }
}

/// `1 − Σ_k √(λ_k μ_k)` in closed form.
pub fn overlap_defect<S: Scalar>(s1: &State<S>, s2: &State<S>) -> S {
    let one = S::one();
    let two = one + one;
    match (*s1, *s2) {
        (State::Geometric { ratio: a }, State::Geometric { ratio: b }) => {
            // 1 − √((1−a)(1−b))/(1−√(ab)); (1−√ab)² − (1−a)(1−b) = (√a−√b)².
            let g = (a * b).sqrt();
            let d = a.sqrt() - b.sqrt();
            let q = ((one - a) * (one - b)).sqrt();
            d * d / ((one - g) * (one - g + q))
        }
        (State::TwoLevel { ratio: a }, State::TwoLevel { ratio: b }) => {
            let p = (one + (a * b).sqrt()) / ((one + a) * (one + b)).sqrt();
            let d = a.sqrt() - b.sqrt();
            d * d / ((one + a) * (one + b) * (one + p))
        }
        (State::Geometric { ratio: a }, State::TwoLevel { ratio: r })
        | (State::TwoLevel { ratio: r }, State::Geometric { ratio: a }) => {
            // P = √((1−a)/(1+r))·(1 + √(ar)).
            let g = (a * r).sqrt();
            let p = ((one - a) / (one + r)).sqrt() * (one + g);
            let d = a.sqrt() - r.sqrt();
            let num = d * d + a * (two * g - r * (one - a));
            num / ((one + r) * (one + p))
        }
    }
}

/// `1 − Σ_k √(λ_k μ_k)` by explicit summation of `½Σ_k (√λ_k − √μ_k)²`, which
/// equals it because both eigenvalue lists sum to 1.
///
/// Geometric pairs stop once `max(a, b)^k < 1e−18` and add the remaining
/// geometric tails in closed form.
pub fn overlap_defect_explicit<S: Scalar>(s1: &State<S>, s2: &State<S>) -> S {
    let half = S::from_f64(0.5).unwrap();
    let cutoff = S::from_f64(1e-18).unwrap();
    let mut acc = CompensatedSum::<S>::new();
    let mut term = |k: u32| {
        let d = s1.eigenvalue(k).sqrt() - s2.eigenvalue(k).sqrt();
        acc.add(half * d * d);
    };
    match (s1.rank(), s2.rank()) {
        (None, None) => {
            let (a, b) = (s1.ratio(), s2.ratio());
            let m = a.max(b);
            let mut pow = S::one();
            let mut k = 0u32;
            while pow >= cutoff {
                term(k);
                pow = pow * m;
                k += 1;
            }
            let g = (a * b).sqrt();
            let cross = ((S::one() - a) * (S::one() - b)).sqrt() * g.powi(k as i32) / (S::one() - g);
            let tail = half * (a.powi(k as i32) + b.powi(k as i32)) - cross;
            acc.add(tail);
        }
        (Some(r1), Some(r2)) => (0..r1.max(r2)).for_each(term),
        (None, Some(r)) | (Some(r), None) => {
            (0..r).for_each(&mut term);
            let a = if s1.rank().is_none() { s1.ratio() } else { s2.ratio() };
            acc.add(half * a.powi(r as i32));
        }
    }
    acc.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `1 − √(xy) − √((1−x)(1−y)) ≤ (√x − √y)² + √(xy)(√x − √y)²`.
pub fn overlap_inequality_check(x: f64, y: f64) -> Result<InequalityCheck> {
    if !((0.0..1.0).contains(&x) && (0.0..1.0).contains(&y) && x + y < 1.0) {
        return Err(Error::pre(format!("need x, y ∈ [0, 1) with x + y < 1, got ({x}, {y})")));
    }
    let g = (x * y).sqrt();
    let d = x.sqrt() - y.sqrt();
    let d2 = d * d;
    let lhs = d2 / ((1.0 - g) + ((1.0 - x) * (1.0 - y)).sqrt());
    let rhs = d2 * (1.0 + g);
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// `(p^{−β/2} − q^{−β′/2})²`.
    SqrtDifference,
    /// Overlap defect of the geometric states `p^{−β}` and `q^{−β′}`.
    OverlapDefect,
    /// `|p^{−β} − q^{−β′}|`.
    L1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionTrace {
    pub kind: CriterionKind,
    pub beta: f64,
    pub beta_prime: f64,
    /// Number of pairs summed at each record.
    pub counts: Vec<usize>,
    pub sums: Vec<f64>,
}

impl CriterionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("count,sum\n");
        for (c, s) in self.counts.iter().zip(&self.sums) {
            out.push_str(&format!("{c},{s:.17e}\n"));
        }
        out
    }

    pub fn last(&self) -> Option<f64> {
        self.sums.last().copied()
    }
}

fn criterion_term(p: u64, q: u64, beta: f64, beta_prime: f64, kind: CriterionKind) -> Result<f64> {
    let (lp, lq) = ((p as f64).ln(), (q as f64).ln());
    Ok(match kind {
        CriterionKind::SqrtDifference => {
            let d = (-0.5 * beta * lp).exp() - (-0.5 * beta_prime * lq).exp();
            d * d
        }
        CriterionKind::L1 => ((-beta * lp).exp() - (-beta_prime * lq).exp()).abs(),
        CriterionKind::OverlapDefect => overlap_defect(
            &State::geometric((-beta * lp).exp())?,
            &State::geometric((-beta_prime * lq).exp())?,
        ),
    })
}

/// Truncated criterion sums over the first `n` pairs `(p, φ(p))`, recorded
/// every `stride` pairs and at `n`.
pub fn criterion_sum(
    pairs: &[(u64, u64)],
    beta: f64,
    beta_prime: f64,
    kind: CriterionKind,
    n: usize,
    stride: usize,
) -> Result<CriterionTrace> {
    if n > pairs.len() {
        return Err(Error::pre(format!("pairing covers {} elements, {n} requested", pairs.len())));
    }
    if !(beta > 0.0 && beta_prime > 0.0) {
        return Err(Error::pre("β and β′ must be positive"));
    }
    if pairs[..n].iter().any(|&(p, q)| p < 2 || q < 2) {
        return Err(Error::pre("paired elements must be at least 2"));
    }
    let stride = stride.max(1);
    let mut acc = CompensatedSum::<f64>::new();
    let mut trace = CriterionTrace {
        kind,
        beta,
        beta_prime,
        counts: Vec::new(),
        sums: Vec::new(),
    };
    for (i, &(p, q)) in pairs[..n].iter().enumerate() {
        acc.add(criterion_term(p, q, beta, beta_prime, kind)?);
        if (i + 1) % stride == 0 || i + 1 == n {
            trace.counts.push(i + 1);
            trace.sums.push(acc.value());
        }
    }
    Ok(trace)
}

/// Primes of one block paired with the two-level state of ratio `ratio`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelBlock {
    pub n: u64,
    pub ratio: f64,
    pub primes: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub beta: f64,
    pub n: Vec<u64>,
    /// Cumulative `Σ` of overlap defects through block `n`.
    pub sums: Vec<f64>,
}

/// Cumulative overlap defects between the geometric states `p^{−β}` and the
/// two-level state of each block.
pub fn two_level_reduction_sum(blocks: &[TwoLevelBlock], beta: f64) -> Result<ReductionTrace> {
    let mut acc = CompensatedSum::<f64>::new();
    let mut out = ReductionTrace {
        beta,
        n: Vec::with_capacity(blocks.len()),
        sums: Vec::with_capacity(blocks.len()),
    };
    for b in blocks {
        let s = State::two_level(b.ratio)?;
        for &p in &b.primes {
            acc.add(overlap_defect(&State::prime(p, beta)?, &s));
        }
        out.n.push(b.n);
        out.sums.push(acc.value());
    }
    Ok(out)
}
