//! Segmented odd-only sieve of Eratosthenes with prime counting and
//! real-endpoint interval queries.
//!
//! The sieve stores one bit per odd number up to the limit. Bit `i` stands for
//! `2i + 1`. A prefix table of popcounts every eight words turns `π(x)` into a
//! table lookup plus at most eight popcounts.
//!
//! Segments are sieved independently, so splitting them across any number of
//! workers yields the same bitset. Built sieves can be persisted to a cache
//! file: a little-endian header (magic, version, limit, word count) followed by
//! the raw words.
//!
//! Real endpoints map to integer bounds exactly. A prime `p` lies in `(lo, hi]`
//! iff `⌊lo⌋ < p ≤ ⌊hi⌋`, and in `[lo, hi)` iff `⌈lo⌉ ≤ p < ⌈hi⌉`. The
//! comparison is between an integer and the stored `f64`, so it is total.

use crate::summation::CompensatedSum;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const DEFAULT_LIMIT: u64 = 1 << 31;
pub const DEFAULT_SEGMENT: u64 = 1 << 21;
pub const MIN_SEGMENT: u64 = 1 << 10;
/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "TGROUPS_CACHE_DIR";

const MAGIC: &[u8; 8] = b"TGSIEVE\0";
const VERSION: u32 = 1;
const WORDS_PER_BLOCK: usize = 8;

/// Which ends of a real interval are closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// `(lo, hi]`
    LeftOpen,
    /// `[lo, hi)`
    RightOpen,
    /// `(lo, hi)`
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealInterval {
    pub lo: f64,
    pub hi: f64,
    pub closure: Closure,
}

impl RealInterval {
    pub fn new(lo: f64, hi: f64, closure: Closure) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
            return Err(Error::pre(format!("invalid interval ({lo}, {hi})")));
        }
        Ok(Self { lo, hi, closure })
    }

    /// `(lo, hi]`
    pub fn left_open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, Closure::LeftOpen)
    }

    /// `[lo, hi)`
    pub fn right_open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, Closure::RightOpen)
    }

    /// `(lo, hi)`
    pub fn open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, Closure::Open)
    }

    /// Inclusive integer bounds `[first, last]`, or `None` when no integer fits.
    pub fn integer_bounds(&self) -> Option<(u64, u64)> {
        let first = match self.closure {
            Closure::LeftOpen | Closure::Open => self.lo.floor() + 1.0,
            Closure::RightOpen => self.lo.ceil(),
        };
        let last = match self.closure {
            Closure::LeftOpen => self.hi.floor(),
            Closure::RightOpen | Closure::Open => self.hi.ceil() - 1.0,
        };
        if last < first || last < 0.0 {
            return None;
        }
        Some((first.max(0.0) as u64, last as u64))
    }

    /// Whether an integer lies in the interval, by the same rule as
    /// [`integer_bounds`](Self::integer_bounds).
    pub fn contains_int(&self, p: u64) -> bool {
        self.integer_bounds()
            .map(|(a, b)| a <= p && p <= b)
            .unwrap_or(false)
    }
}

/// Sieve parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrimeRange {
    pub limit: u64,
    pub segment_size: u64,
    pub cache_path: Option<PathBuf>,
}

impl PrimeRange {
    pub fn new(limit: u64) -> Self {
        Self {
            limit,
            segment_size: DEFAULT_SEGMENT,
            cache_path: None,
        }
    }

    /// Uses the default cache file for this limit.
    pub fn cached(limit: u64) -> Self {
        Self {
            cache_path: Some(default_cache_path(limit)),
            ..Self::new(limit)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.limit < 2 {
            return Err(Error::pre("sieve limit must be at least 2"));
        }
        if self.limit > 1 << 40 {
            return Err(Error::Unsupported("sieve limits above 2^40".into()));
        }
        if self.segment_size < MIN_SEGMENT || self.segment_size % 128 != 0 {
            return Err(Error::pre(format!(
                "segment size must be a multiple of 128 and at least {MIN_SEGMENT}"
            )));
        }
        Ok(())
    }
}

/// Cache file for `limit` under `$TGROUPS_CACHE_DIR`, or the system temp dir.
pub fn default_cache_path(limit: u64) -> PathBuf {
    let dir = std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tgroups-cache"));
    dir.join(format!("sieve-odd-v{VERSION}-{limit}.bin"))
}

pub struct Sieve {
    limit: u64,
    words: Vec<u64>,
    block_counts: Vec<u64>,
}

impl std::fmt::Debug for Sieve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sieve").field("limit", &self.limit).finish()
    }
}

fn simple_odd_primes(bound: u64) -> Vec<u64> {
    let n = bound as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    let mut i = 3;
    while i <= n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += 2 * i;
            }
        }
        i += 2;
    }
    out
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

fn sieve_segment(seg: &mut [u64], first_bit: u64, base: &[u64]) {
    seg.fill(u64::MAX);
    let nbits = seg.len() as u64 * 64;
    let lo_num = 2 * first_bit + 1;
    let hi_num = 2 * (first_bit + nbits - 1) + 1;
    for &p in base {
        let sq = p * p;
        if sq > hi_num {
            break;
        }
        let mut m = if sq >= lo_num {
            sq
        } else {
            lo_num.div_ceil(p) * p
        };
        if m % 2 == 0 {
            m += p;
        }
        let mut idx = (m - 1) / 2 - first_bit;
        while idx < nbits {
            seg[(idx >> 6) as usize] &= !(1u64 << (idx & 63));
            idx += p;
        }
    }
}

impl Sieve {
    /// Sieves in the current rayon pool.
    pub fn build(range: &PrimeRange) -> Result<Self> {
        range.validate()?;
        let limit = range.limit;
        let nbits = (limit + 1) / 2;
        let nwords = nbits.div_ceil(64) as usize;
        let base = simple_odd_primes(isqrt(limit));
        let seg_words = (range.segment_size / 128) as usize;
        let mut words = vec![0u64; nwords];
        words
            .par_chunks_mut(seg_words)
            .enumerate()
            .for_each(|(i, seg)| sieve_segment(seg, (i * seg_words * 64) as u64, &base));
        words[0] &= !1;
        let tail = nbits % 64;
        if tail != 0 {
            words[nwords - 1] &= (1u64 << tail) - 1;
        }
        Ok(Self::from_words(limit, words))
    }

    /// Sieves on a dedicated pool of `workers` threads.
    pub fn build_with_workers(range: &PrimeRange, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| Self::build(range))
    }

    /// Loads the cache file named in `range` if it matches, otherwise sieves
    /// and writes it.
    pub fn load_or_build(range: &PrimeRange) -> Result<Self> {
        range.validate()?;
        let Some(path) = &range.cache_path else {
            return Self::build(range);
        };
        if path.exists() {
            match Self::load(path) {
                Ok(s) if s.limit == range.limit => return Ok(s),
                _ => {}
            }
        }
        let s = Self::build(range)?;
        s.save(path)?;
        Ok(s)
    }

    fn from_words(limit: u64, words: Vec<u64>) -> Self {
        let nblocks = words.len().div_ceil(WORDS_PER_BLOCK);
        let mut block_counts = Vec::with_capacity(nblocks + 1);
        let mut acc = 0u64;
        for chunk in words.chunks(WORDS_PER_BLOCK) {
            block_counts.push(acc);
            acc += chunk.iter().map(|w| w.count_ones() as u64).sum::<u64>();
        }
        block_counts.push(acc);
        Self {
            limit,
            words,
            block_counts,
        }
    }

    /// Writes the cache file atomically (temp file in the same directory, then
    /// rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.{}.tmp",
            path.file_name().and_then(|s| s.to_str()).unwrap_or("sieve"),
            std::process::id()
        ));
        {
            let mut w = BufWriter::with_capacity(1 << 20, fs::File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            w.write_all(&0u32.to_le_bytes())?;
            w.write_all(&self.limit.to_le_bytes())?;
            w.write_all(&(self.words.len() as u64).to_le_bytes())?;
            for word in &self.words {
                w.write_all(&word.to_le_bytes())?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |reason: &str| Error::Cache {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let mut r = BufReader::with_capacity(1 << 20, fs::File::open(path)?);
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(err("bad magic"));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(err("unsupported version"));
        }
        let limit = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let nwords = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
        if limit < 2 || nwords != ((limit + 1) / 2).div_ceil(64) as usize {
            return Err(err("header inconsistent with limit"));
        }
        let mut words = vec![0u64; nwords];
        let mut buf = vec![0u8; 1 << 16];
        let mut filled = 0usize;
        while filled < nwords {
            let take = (nwords - filled).min(buf.len() / 8);
            r.read_exact(&mut buf[..take * 8])?;
            for (k, chunk) in buf[..take * 8].chunks_exact(8).enumerate() {
                words[filled + k] = u64::from_le_bytes(chunk.try_into().unwrap());
            }
            filled += take;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(err("trailing bytes"));
        }
        let s = Self::from_words(limit, words);
        if limit >= 10_000 && s.pi(10_000) != 1229 {
            return Err(err("spot check π(10⁴) failed"));
        }
        Ok(s)
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// The raw odd-only bitset, for equality checks across builds.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn check(&self, what: &str, n: u64) -> Result<()> {
        if n > self.limit {
            Err(Error::range(what, n, self.limit))
        } else {
            Ok(())
        }
    }

    /// Odd primes among the odd numbers with bit index `≤ idx`.
    fn odd_count_upto_bit(&self, idx: u64) -> u64 {
        let w = (idx / 64) as usize;
        let b = w / WORDS_PER_BLOCK;
        let mut c = self.block_counts[b];
        for word in &self.words[b * WORDS_PER_BLOCK..w] {
            c += word.count_ones() as u64;
        }
        let bit = idx % 64;
        let mask = if bit == 63 {
            u64::MAX
        } else {
            (1u64 << (bit + 1)) - 1
        };
        c + (self.words[w] & mask).count_ones() as u64
    }

    /// `π(n)` for an integer argument.
    pub fn pi(&self, n: u64) -> u64 {
        assert!(n <= self.limit, "pi({n}) beyond sieve limit {}", self.limit);
        if n < 2 {
            return 0;
        }
        1 + self.odd_count_upto_bit((n - 1) / 2)
    }

    /// `π(⌊x⌋)`.
    pub fn count_primes(&self, x: f64) -> Result<u64> {
        if !(x >= 0.0) {
            return Err(Error::pre(format!("count_primes needs x ≥ 0, got {x}")));
        }
        let n = x.floor();
        if n > self.limit as f64 {
            return Err(Error::range("count_primes", n as u64, self.limit));
        }
        Ok(self.pi(n as u64))
    }

    pub fn is_prime(&self, n: u64) -> bool {
        assert!(n <= self.limit);
        if n == 2 {
            return true;
        }
        if n < 2 || n % 2 == 0 {
            return false;
        }
        let i = (n - 1) / 2;
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    /// Calls `f` on every prime in `[first, last]`, ascending.
    pub fn for_each_prime_between(&self, first: u64, last: u64, mut f: impl FnMut(u64)) -> Result<()> {
        self.check("prime enumeration", last)?;
        if last < first || last < 2 {
            return Ok(());
        }
        if first <= 2 {
            f(2);
        }
        let lo_bit = first.max(3) / 2;
        let hi_bit = (last - 1) / 2;
        if hi_bit < lo_bit {
            return Ok(());
        }
        let (w0, w1) = ((lo_bit / 64) as usize, (hi_bit / 64) as usize);
        for w in w0..=w1 {
            let mut word = self.words[w];
            if w == w0 {
                word &= u64::MAX << (lo_bit % 64);
            }
            if w == w1 && hi_bit % 64 != 63 {
                word &= (1u64 << (hi_bit % 64 + 1)) - 1;
            }
            while word != 0 {
                let tz = word.trailing_zeros() as u64;
                f(2 * (w as u64 * 64 + tz) + 1);
                word &= word - 1;
            }
        }
        Ok(())
    }

    pub fn primes_between(&self, first: u64, last: u64) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        self.for_each_prime_between(first, last, |p| out.push(p))?;
        Ok(out)
    }

    /// Number of primes in `[first, last]`.
    pub fn count_between(&self, first: u64, last: u64) -> Result<u64> {
        self.check("prime count", last)?;
        if last < first {
            return Ok(0);
        }
        Ok(self.pi(last) - if first == 0 { 0 } else { self.pi(first - 1) })
    }

    /// Primes in a real interval, ascending.
    pub fn primes_in(&self, iv: &RealInterval) -> Result<Vec<u64>> {
        match iv.integer_bounds() {
            Some((a, b)) => self.primes_between(a, b),
            None => Ok(Vec::new()),
        }
    }

    pub fn count_in(&self, iv: &RealInterval) -> Result<u64> {
        match iv.integer_bounds() {
            Some((a, b)) => self.count_between(a, b),
            None => Ok(0),
        }
    }

    pub fn for_each_prime_in(&self, iv: &RealInterval, f: impl FnMut(u64)) -> Result<()> {
        match iv.integer_bounds() {
            Some((a, b)) => self.for_each_prime_between(a, b, f),
            None => Ok(()),
        }
    }

    /// `Σ p^{−β}` over the primes of `iv`, compensated, in ascending order.
    pub fn reciprocal_power_sum(&self, iv: &RealInterval, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::pre(format!("β must lie in (0, 1], got {beta}")));
        }
        let mut acc = CompensatedSum::<f64>::new();
        self.for_each_prime_in(iv, |p| acc.add((p as f64).powf(-beta)))?;
        Ok(acc.value())
    }
}
