//! Batch experiment driver behind the `tgroups` binary.
//!
//! A run reads one config file of flat dotted keys (`key = value`, `#`
//! comments), applies `--set key=value` overrides, resolves every default,
//! and writes its reports into `output.dir`. Every report starts with the
//! resolved config, so a report alone is enough to repeat the run. Reports are
//! rendered in memory and written through a temporary file and a rename; a
//! failed run leaves no files behind.
//!
//! Classification labels are heuristics read off finite truncations. No
//! finite computation decides whether a series converges.
//!
//! Exit codes: 0 success, 2 config or precondition error, 3 range exceeded,
//! 4 budget exceeded, 5 verification failure, 6 I/O or cache error, 1 other.

use crate::isomorphy::{criterion_sum, CriterionKind};
use crate::primes::{PrimeRange, Sieve};
use crate::primesets::{build_family, build_witness_pairs, normalized_block_sums, BlockSpec, WitnessKind};
use crate::schedules::{
    check_admissible, density_growth_profile, growth_ratio_profile, interval_prime_count_profile, EpsilonSchedule,
    IndexSet, LogSequence, PlatoonConstants,
};
use crate::separation::{lift, separate, IndexedSet, Rational, SeparationConfig, SeparationInstance};
use crate::series::{classify, single_frequency_mc, trace_blocks, Kernel};
use crate::twoterm::TwoTerm;
use crate::{divisors, Error, Result};
use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Construct,
    Evaluate,
    Classify,
    Witnesses,
    Rescale,
    Lift,
    Criterion,
    Separate,
    Profile,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Construct => "construct",
            Self::Evaluate => "evaluate",
            Self::Classify => "classify",
            Self::Witnesses => "witnesses",
            Self::Rescale => "rescale",
            Self::Lift => "lift",
            Self::Criterion => "criterion",
            Self::Separate => "separate",
            Self::Profile => "profile",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tgroups", version, about = "Prime-set constructions and series diagnostics for ITPFI T-groups")]
pub struct Args {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Same as `--set sieve.limit=N`.
    #[arg(long)]
    pub sieve_limit: Option<u64>,
    /// Same as `--set run.workers=N`.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Same as `--set output.dir=DIR`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Precondition(_) => 2,
        Error::RangeExceeded { .. } => 3,
        Error::BudgetExceeded(_) => 4,
        Error::Verification(_) => 5,
        Error::Io(_) | Error::Cache { .. } => 6,
        Error::Unsupported(_) => 1,
    }
}

// ---------------------------------------------------------------------------
// Config

/// Flat dotted-key config that records every key it resolves.
#[derive(Debug, Default)]
pub struct Config {
    raw: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
    seen: RefCell<BTreeSet<String>>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.insert(k, v, i + 1)?;
        }
        Ok(cfg)
    }

    fn insert(&mut self, k: &str, v: &str, line: usize) -> Result<()> {
        let k = k.trim();
        let v = v.trim().trim_matches('"');
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_') {
            return Err(cfg_err(format!("line {line}: bad key {k:?}")));
        }
        if self.raw.insert(k.to_string(), v.to_string()).is_some() {
            return Err(cfg_err(format!("line {line}: duplicate key {k}")));
        }
        Ok(())
    }

    pub fn set(&mut self, k: &str, v: &str) {
        self.raw.insert(k.to_string(), v.to_string());
    }

    fn lookup(&self, key: &str, default: Option<String>) -> Result<String> {
        self.seen.borrow_mut().insert(key.to_string());
        let v = match (self.raw.get(key), default) {
            (Some(v), _) => v.clone(),
            (None, Some(d)) => d,
            (None, None) => return Err(cfg_err(format!("missing key {key}"))),
        };
        self.resolved.borrow_mut().insert(key.to_string(), v.clone());
        Ok(v)
    }

    pub fn str(&self, key: &str, default: &str) -> Result<String> {
        self.lookup(key, Some(default.to_string()))
    }

    pub fn parsed<T: std::str::FromStr + ToString>(&self, key: &str, default: Option<T>) -> Result<T> {
        let v = self.lookup(key, default.map(|d| d.to_string()))?;
        v.parse()
            .map_err(|_| cfg_err(format!("{key}: cannot parse {v:?}")))
    }

    pub fn real(&self, key: &str, default: &str) -> Result<f64> {
        let v = self.lookup(key, Some(default.to_string()))?;
        parse_real(&v).map(|t| t.to_f64()).map_err(|_| cfg_err(format!("{key}: not a number: {v:?}")))
    }

    pub fn exact(&self, key: &str, default: &str) -> Result<TwoTerm> {
        let v = self.lookup(key, Some(default.to_string()))?;
        parse_real(&v).map_err(|_| cfg_err(format!("{key}: not a number: {v:?}")))
    }

    pub fn list(&self, key: &str, default: &str) -> Result<Vec<String>> {
        let v = self.lookup(key, Some(default.to_string()))?;
        Ok(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    /// Rejects keys that were supplied but never read.
    pub fn finish(&self) -> Result<()> {
        let seen = self.seen.borrow();
        let unknown: Vec<&String> = self.raw.keys().filter(|k| !seen.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(cfg_err(format!("unknown keys: {unknown:?}")))
        }
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }
}

/// Decimal, `p/q`, or a multiple/fraction of `pi` such as `2pi`.
pub fn parse_real(s: &str) -> Result<TwoTerm> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let num = parse_real(a)?;
        let den = parse_real(b)?.to_f64();
        if den == 0.0 {
            return Err(cfg_err("division by zero"));
        }
        return Ok(num.div_f64(den));
    }
    if let Some(head) = s.strip_suffix("pi") {
        const PI: &str = "3.14159265358979323846264338327950288";
        let k = if head.is_empty() { 1.0 } else { head.parse::<f64>().map_err(|_| cfg_err(s))? };
        return Ok(TwoTerm::parse_decimal(PI)?.mul_f64(k));
    }
    TwoTerm::parse_decimal(s)
}

fn parse_rational(s: &str) -> Result<Rational> {
    let (a, b) = s.split_once('/').unwrap_or((s, "1"));
    let num = a.trim().parse::<i64>().map_err(|_| cfg_err(format!("bad rational {s:?}")))?;
    let den = b.trim().parse::<u64>().map_err(|_| cfg_err(format!("bad rational {s:?}")))?;
    Ok(Rational { num, den })
}

// ---------------------------------------------------------------------------
// Reports

pub struct Report {
    pub file_name: String,
    pub contents: String,
}

fn header_lines(sub: Subcommand, resolved: &BTreeMap<String, String>) -> String {
    let mut s = format!("# schema: tgroups/{}/{SCHEMA_VERSION}\n", sub.name());
    for (k, v) in resolved {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

fn json_report(sub: Subcommand, resolved: &BTreeMap<String, String>, result: Value) -> Result<String> {
    let doc = json!({
        "schema": format!("tgroups/{}/{SCHEMA_VERSION}", sub.name()),
        "config": resolved,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Verification(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Verification(e.to_string()))
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("report");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let res = std::fs::write(&tmp, contents).and_then(|_| std::fs::rename(&tmp, path));
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(res?)
}

// ---------------------------------------------------------------------------
// Shared pieces

fn sieve_from(cfg: &Config) -> Result<(u64, bool)> {
    Ok((cfg.parsed("sieve.limit", Some(10_000_000u64))?, cfg.parsed("sieve.cache", Some(false))?))
}

fn open_sieve(limit: u64, cached: bool) -> Result<Sieve> {
    if cached {
        Sieve::load_or_build(&PrimeRange::cached(limit))
    } else {
        Sieve::build(&PrimeRange::new(limit))
    }
}

fn schedule_from(cfg: &Config, default_kind: &str, beta: f64, t0: f64) -> Result<EpsilonSchedule> {
    let kind = cfg.str("schedule.kind", default_kind)?;
    Ok(match kind.as_str() {
        "reciprocal_log" => EpsilonSchedule::reciprocal_log(),
        "beta_damped" => EpsilonSchedule::beta_damped(beta, t0),
        "power" => EpsilonSchedule::power(cfg.real("schedule.gamma", "1/3")?),
        "constant" => {
            let v = cfg.real("schedule.value", "0.1")?;
            let lo = cfg.parsed("schedule.start", Some(2u64))?;
            let hi = cfg.parsed("schedule.end", Some(1000u64))?;
            EpsilonSchedule::constant(v, lo, hi)
        }
        other => return Err(cfg_err(format!("schedule.kind: unknown {other:?}"))),
    })
}

struct FamilyParams {
    spec: BlockSpec,
    n_lo: u64,
    n_hi: u64,
}

fn family_from(cfg: &Config) -> Result<FamilyParams> {
    let kind = cfg.str("family.kind", "lattice")?;
    let beta = cfg.real("family.beta", "1")?;
    let t0 = cfg.real("family.t0", "1")?;
    let mut spec = match kind.as_str() {
        "lattice" => {
            let mut s = BlockSpec::lattice(beta, t0);
            s.schedule = schedule_from(cfg, "beta_damped", beta, t0)?;
            s
        }
        "unit" => {
            let a = cfg.real("family.a", "0")?;
            BlockSpec::unit(beta, t0, a, schedule_from(cfg, "reciprocal_log", beta, t0)?)
        }
        other => return Err(cfg_err(format!("family.kind: unknown {other:?}"))),
    };
    spec.cardinality_cutoff = cfg.parsed("family.cardinality_cutoff", Some(spec.cardinality_cutoff))?;
    Ok(FamilyParams {
        spec,
        n_lo: cfg.parsed("family.n_lo", Some(3u64))?,
        n_hi: cfg.parsed("family.n_hi", Some(16u64))?,
    })
}

fn kernel_from(cfg: &Config, family_beta: f64) -> Result<Kernel<f64>> {
    let beta = cfg.real("kernel.beta", &family_beta.to_string())?;
    let omega = cfg.str("kernel.omega", "lattice")?;
    match omega.as_str() {
        "lattice" => Kernel::lattice(beta),
        "half_beta" => Kernel::half_beta(beta),
        w => Kernel::new(beta, parse_real(w).map_err(|_| cfg_err(format!("kernel.omega: {w:?}")))?.to_f64()),
    }
}

fn t_grid(cfg: &Config, default: &str) -> Result<Vec<(String, f64)>> {
    cfg.list("t.grid", default)?
        .into_iter()
        .map(|s| Ok((s.clone(), parse_real(&s)?.to_f64())))
        .collect()
}

fn csv_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

// ---------------------------------------------------------------------------
// Subcommands

type Plan = Box<dyn FnOnce() -> Result<Vec<(String, Output)>> + Send>;

enum Output {
    Json(Value),
    Csv(String),
}

fn plan(sub: Subcommand, cfg: &Config) -> Result<Plan> {
    match sub {
        Subcommand::Construct => {
            let (limit, cached) = sieve_from(cfg)?;
            let fp = family_from(cfg)?;
            Ok(Box::new(move || {
                let sieve = open_sieve(limit, cached)?;
                let fam = build_family(&fp.spec, fp.n_lo, fp.n_hi, &sieve)?;
                Ok(vec![("construct.json".into(), Output::Json(to_value(&fam.summary())?))])
            }))
        }
        Subcommand::Evaluate | Subcommand::Classify => {
            let (limit, cached) = sieve_from(cfg)?;
            let fp = family_from(cfg)?;
            let kernel = kernel_from(cfg, fp.spec.beta)?;
            let grid = t_grid(cfg, "1")?;
            let t0 = fp.spec.t0;
            let grid: Vec<(String, f64)> = grid.into_iter().map(|(s, t)| (s, t * t0)).collect();
            Ok(Box::new(move || {
                let sieve = open_sieve(limit, cached)?;
                let fam = build_family(&fp.spec, fp.n_lo, fp.n_hi, &sieve)?;
                let mut csv = String::new();
                if sub == Subcommand::Evaluate {
                    csv.push_str("t,cutoff,partial_sum,block_n,block_sum\n");
                } else {
                    csv.push_str("t,label,score,points,slope,final_sum,last_index\n");
                }
                for (name, t) in &grid {
                    let tr = trace_blocks(&kernel, &fam, &sieve, *t)?;
                    if sub == Subcommand::Evaluate {
                        let blocks = tr.block_sums.clone().unwrap_or_default();
                        for (i, (c, s)) in tr.cutoffs.iter().zip(&tr.partial_sums).enumerate() {
                            let (bn, bs) = blocks.get(i).map(|b| (b.n.to_string(), csv_f(b.sum))).unwrap_or_default();
                            let _ = writeln!(csv, "{name},{},{},{bn},{bs}", csv_f(*c), csv_f(*s));
                        }
                    } else {
                        let c = classify(&tr, Some(&fp.spec.schedule))?;
                        let _ = writeln!(
                            csv,
                            "{name},{},{},{},{},{},{}",
                            c.label,
                            csv_f(c.score),
                            c.diagnostics.points,
                            csv_f(c.diagnostics.slope),
                            csv_f(tr.last().unwrap_or(0.0)),
                            c.diagnostics.last_index
                        );
                    }
                }
                Ok(vec![(format!("{}.csv", sub.name()), Output::Csv(csv))])
            }))
        }
        Subcommand::Witnesses => {
            let (limit, cached) = sieve_from(cfg)?;
            let kind = match cfg.str("witness.kind", "full_spectrum")?.as_str() {
                "powers" => WitnessKind::Powers,
                "full_spectrum" => WitnessKind::FullSpectrum,
                other => return Err(cfg_err(format!("witness.kind: unknown {other:?}"))),
            };
            let beta = cfg.real("witness.beta", "1")?;
            let lambda = cfg.real("witness.lambda", "1/2")?;
            let n_lo = cfg.parsed("witness.n_lo", Some(3u64))?;
            let n_hi = cfg.parsed("witness.n_hi", Some(14u64))?;
            Ok(Box::new(move || {
                let sieve = open_sieve(limit, cached)?;
                let w = build_witness_pairs(kind, beta, lambda, n_lo, n_hi, &sieve)?;
                let out = json!({
                    "pair_count": w.pair_count(),
                    "enclosure_violations": w.enclosure_violations(),
                    "all_distinct": w.all_distinct(),
                    "pairs": to_value(&w)?,
                });
                Ok(vec![("witnesses.json".into(), Output::Json(out))])
            }))
        }
        Subcommand::Rescale => {
            let (limit, cached) = sieve_from(cfg)?;
            let rp = rescale_params(cfg, limit)?;
            Ok(Box::new(move || {
                let sieve = open_sieve(limit, cached)?;
                let rep = run_rescale(&rp, &sieve)?;
                Ok(vec![("rescale.json".into(), Output::Json(to_value(&rep)?))])
            }))
        }
        Subcommand::Lift => {
            let (limit, cached) = sieve_from(cfg)?;
            match cfg.str("lift.kind", "epsilon")?.as_str() {
                "epsilon" => {
                    let sched = schedule_from(cfg, "reciprocal_log", 1.0, 1.0)?;
                    let lo = cfg.parsed("lift.n_lo", Some(3u64))?;
                    let hi = cfg.parsed("lift.n_hi", Some(16u64))?;
                    Ok(Box::new(move || {
                        let sieve = open_sieve(limit, cached)?;
                        let set = IndexedSet::from_schedule(&sched, lo, hi)?;
                        let l = lift(&set, &sieve)?;
                        let mut csv = String::from("n,eps,count,reciprocal_sum,normalized\n");
                        for b in &l.blocks {
                            let _ = writeln!(
                                csv,
                                "{},{},{},{},{}",
                                b.n,
                                b.eps,
                                b.primes.len(),
                                csv_f(b.reciprocal_sum),
                                b.normalized.map(csv_f).unwrap_or_default()
                            );
                        }
                        let summary = json!({
                            "blocks": l.blocks.iter().map(|b| json!({
                                "n": b.n, "eps": b.eps, "count": b.primes.len(),
                                "reciprocal_sum": b.reciprocal_sum, "normalized": b.normalized,
                            })).collect::<Vec<_>>(),
                            "truncated": l.truncated,
                            "max_h_ratio": l.max_h_ratio,
                        });
                        Ok(vec![("lift.json".into(), Output::Json(summary)), ("lift.csv".into(), Output::Csv(csv))])
                    }))
                }
                "divisor" => {
                    let s = cfg.real("seq.s", "2")?;
                    let c = cfg.real("seq.c", "1")?;
                    let start = cfg.parsed("lift.n_lo", Some(300u64))?;
                    let end = cfg.parsed("lift.n_hi", Some(400u64))?;
                    let rule = cfg.str("lift.multiplicity", "one")?;
                    let constant = cfg.parsed("lift.m", Some(1u64))?;
                    if end < start {
                        return Err(cfg_err("lift.n_hi must be at least lift.n_lo"));
                    }
                    Ok(Box::new(move || {
                        let y = LogSequence::stretched(s, c)?;
                        let m: Vec<u64> = match rule.as_str() {
                            "one" => vec![1; (end - start + 1) as usize],
                            "constant" => vec![constant; (end - start + 1) as usize],
                            "bound" => (start..=end)
                                .map(|n| {
                                    let ly = y.log_value(n)?;
                                    let b = c * (ly - std::f64::consts::LN_2 - ly.ln() - s * ly.ln().ln()).exp();
                                    Ok(b.floor().max(1.0) as u64)
                                })
                                .collect::<Result<_>>()?,
                            other => return Err(cfg_err(format!("lift.multiplicity: unknown {other:?}"))),
                        };
                        let sieve = open_sieve(limit, cached)?;
                        let rep = divisors::lift_to_primes(&y, &m, start, &sieve)?;
                        let out = json!({
                            "shortfall_rate": rep.shortfall_rate(),
                            "report": to_value(&rep)?,
                        });
                        Ok(vec![("lift.json".into(), Output::Json(out))])
                    }))
                }
                other => Err(cfg_err(format!("lift.kind: unknown {other:?}"))),
            }
        }
        Subcommand::Criterion => {
            let (limit, cached) = sieve_from(cfg)?;
            let kind = match cfg.str("criterion.kind", "sqrt_difference")?.as_str() {
                "sqrt_difference" => CriterionKind::SqrtDifference,
                "overlap_defect" => CriterionKind::OverlapDefect,
                "l1" => CriterionKind::L1,
                other => return Err(cfg_err(format!("criterion.kind: unknown {other:?}"))),
            };
            let source = cfg.str("criterion.pairs", "witnesses")?;
            let stride = cfg.parsed("criterion.stride", Some(1usize))?.max(1);
            let n_cap: Option<usize> = match cfg.str("criterion.n", "all")?.as_str() {
                "all" => None,
                v => Some(v.parse().map_err(|_| cfg_err(format!("criterion.n: {v:?}")))?),
            };
            enum Src {
                W(WitnessKind, f64, f64, u64, u64),
                R(RescaleParams),
            }
            let (src, b_default, bp_default) = match source.as_str() {
                "witnesses" => {
                    let kind = match cfg.str("witness.kind", "full_spectrum")?.as_str() {
                        "powers" => WitnessKind::Powers,
                        "full_spectrum" => WitnessKind::FullSpectrum,
                        other => return Err(cfg_err(format!("witness.kind: unknown {other:?}"))),
                    };
                    let beta = cfg.real("witness.beta", "1")?;
                    let lambda = cfg.real("witness.lambda", "1/2")?;
                    let lo = cfg.parsed("witness.n_lo", Some(3u64))?;
                    let hi = cfg.parsed("witness.n_hi", Some(14u64))?;
                    (Src::W(kind, beta, lambda, lo, hi), beta, beta)
                }
                "rescale" => {
                    let rp = rescale_params(cfg, limit)?;
                    let (b0, b) = (rp.beta0, rp.beta);
                    (Src::R(rp), b0, b)
                }
                other => return Err(cfg_err(format!("criterion.pairs: unknown {other:?}"))),
            };
            let beta = cfg.real("criterion.beta", &b_default.to_string())?;
            let beta_prime = cfg.real("criterion.beta_prime", &bp_default.to_string())?;
            Ok(Box::new(move || {
                let sieve = open_sieve(limit, cached)?;
                let pairs: Vec<(u64, u64)> = match src {
                    Src::W(kind, b, l, lo, hi) => build_witness_pairs(kind, b, l, lo, hi, &sieve)?
                        .iter_pairs()
                        .map(|(_, p)| (p.p, p.q))
                        .collect(),
                    Src::R(rp) => run_rescale(&rp, &sieve)?.bijection.pairs(),
                };
                let n = n_cap.unwrap_or(pairs.len()).min(pairs.len());
                let tr = criterion_sum(&pairs, beta, beta_prime, kind, n, stride)?;
                Ok(vec![("criterion.csv".into(), Output::Csv(tr.to_csv()))])
            }))
        }
        Subcommand::Separate => {
            let (limit, cached) = sieve_from(cfg)?;
            let generators = cfg
                .list("separate.generators", "1")?
                .iter()
                .map(|s| parse_real(s))
                .collect::<Result<Vec<_>>>()?;
            let coefficients = cfg
                .list("separate.coefficients", "1/2")?
                .iter()
                .map(|s| parse_rational(s))
                .collect::<Result<Vec<_>>>()?;
            let irrational = cfg.exact("separate.irrational", "0")?;
            let d = SeparationConfig::default();
            let config = SeparationConfig {
                constants: PlatoonConstants::ReciprocalLog {
                    shift: cfg.real("separate.shift", "5")?,
                },
                ell_start: cfg.parsed("separate.ell_start", Some(d.ell_start))?,
                ell_max: cfg.parsed("separate.ell_max", Some(d.ell_max))?,
                kronecker_budget: cfg.parsed("separate.kronecker_budget", Some(d.kronecker_budget))?,
                platoon_budget: cfg.parsed("separate.platoon_budget", Some(d.platoon_budget))?,
            };
            let instance = SeparationInstance {
                generators,
                coefficients,
                irrational,
            };
            instance.validate()?;
            Ok(Box::new(move || {
                let sieve = open_sieve(limit, cached)?;
                let rep = separate(&instance, &config, &sieve)?;
                let mut csv = String::from("t,role,cutoff,partial_sum\n");
                for e in &rep.evidence {
                    if let Some(tr) = &e.trace {
                        for (c, s) in tr.cutoffs.iter().zip(&tr.partial_sums) {
                            let _ = writeln!(csv, "{},{},{},{}", csv_f(e.t), e.role, csv_f(*c), csv_f(*s));
                        }
                    }
                }
                let evidence: Vec<Value> = rep
                    .evidence
                    .iter()
                    .map(|e| json!({"t": e.t, "role": e.role, "final_sum": e.final_sum,
                                    "label": e.label, "score": e.score, "note": e.note}))
                    .collect();
                let out = json!({
                    "separation": to_value(&rep.separation)?,
                    "blocks": to_value(&rep.lifted.blocks)?,
                    "truncated_indices": rep.lifted.truncated,
                    "max_h_ratio": rep.lifted.max_h_ratio,
                    "evidence": evidence,
                });
                Ok(vec![("separate.json".into(), Output::Json(out)), ("separate.csv".into(), Output::Csv(csv))])
            }))
        }
        Subcommand::Profile => {
            let kind = cfg.str("profile.kind", "growth_ratio")?;
            match kind.as_str() {
                "growth_ratio" | "interval_count" | "density_growth" => {
                    let s = cfg.real("seq.s", "2")?;
                    let c = cfg.real("seq.c", "1")?;
                    let lo = cfg.parsed("profile.lo", Some(100u64))?;
                    let hi = cfg.parsed("profile.hi", Some(200u64))?;
                    let sieve_cfg = if kind == "interval_count" { Some(sieve_from(cfg)?) } else { None };
                    Ok(Box::new(move || {
                        let y = LogSequence::stretched(s, c)?;
                        let mut csv = String::new();
                        match kind.as_str() {
                            "growth_ratio" => {
                                csv.push_str("n,ratio,log_ratio\n");
                                for g in growth_ratio_profile(&y, lo, hi)? {
                                    let _ = writeln!(csv, "{},{},{}", g.n, csv_f(g.ratio), csv_f(g.log_ratio));
                                }
                            }
                            "interval_count" => {
                                let (limit, cached) = sieve_cfg.unwrap();
                                let sieve = open_sieve(limit, cached)?;
                                csv.push_str("n,alpha,predicted,ratio\n");
                                for r in interval_prime_count_profile(&y, lo, hi, &sieve)? {
                                    let _ = writeln!(
                                        csv,
                                        "{},{},{},{}",
                                        r.n,
                                        r.alpha,
                                        r.predicted.map(csv_f).unwrap_or_default(),
                                        r.ratio.map(csv_f).unwrap_or_default()
                                    );
                                }
                            }
                            _ => {
                                csv.push_str("n,relative_step,normalized_increment\n");
                                for r in density_growth_profile(&y, lo, hi)? {
                                    let _ = writeln!(
                                        csv,
                                        "{},{},{}",
                                        r.n,
                                        csv_f(r.relative_step),
                                        csv_f(r.normalized_increment)
                                    );
                                }
                            }
                        }
                        Ok(vec![("profile.csv".into(), Output::Csv(csv))])
                    }))
                }
                "admissibility" => {
                    let sched = schedule_from(cfg, "reciprocal_log", 1.0, 1.0)?;
                    Ok(Box::new(move || {
                        let rep = check_admissible(&sched, &IndexSet::AllFromStart)?;
                        Ok(vec![("profile.json".into(), Output::Json(to_value(&rep)?))])
                    }))
                }
                "normalized_sums" => {
                    let (limit, cached) = sieve_from(cfg)?;
                    let fp = family_from(cfg)?;
                    Ok(Box::new(move || {
                        let sieve = open_sieve(limit, cached)?;
                        let fam = build_family(&fp.spec, fp.n_lo, fp.n_hi, &sieve)?;
                        let mut csv = String::from("n,normalized\n");
                        for v in normalized_block_sums(&fam)? {
                            let _ = writeln!(csv, "{},{}", v.n, csv_f(v.value));
                        }
                        Ok(vec![("profile.csv".into(), Output::Csv(csv))])
                    }))
                }
                "monte_carlo" => {
                    let seed = cfg.parsed("run.seed", Some(0u64))?;
                    let a = cfg.real("mc.a", "1000")?;
                    let c = cfg.real("mc.c", "0.1")?;
                    let samples = cfg.parsed("mc.samples", Some(100_000u64))?;
                    Ok(Box::new(move || {
                        let est = single_frequency_mc(a, c, samples, seed)?;
                        Ok(vec![("profile.json".into(), Output::Json(to_value(&est)?))])
                    }))
                }
                other => Err(cfg_err(format!("profile.kind: unknown {other:?}"))),
            }
        }
    }
}

struct RescaleParams {
    beta0: f64,
    beta: f64,
    blocks: divisors::RescaleBlocks,
    mode: divisors::RescaleMode,
    n_lo: u64,
    n_hi: u64,
    source_limit: u64,
}

fn rescale_params(cfg: &Config, limit: u64) -> Result<RescaleParams> {
    let blocks = match cfg.str("rescale.blocks", "stretched")?.as_str() {
        "stretched" => divisors::RescaleBlocks::Stretched {
            s: cfg.real("rescale.s", "2")?,
        },
        "power" => divisors::RescaleBlocks::Power {
            a: cfg.real("rescale.a", "3")?,
        },
        other => return Err(cfg_err(format!("rescale.blocks: unknown {other:?}"))),
    };
    let mode = match cfg.str("rescale.mode", "l1")?.as_str() {
        "l1" => divisors::RescaleMode::L1,
        "l2_bhattacharyya" => divisors::RescaleMode::L2Bhattacharyya,
        other => return Err(cfg_err(format!("rescale.mode: unknown {other:?}"))),
    };
    Ok(RescaleParams {
        beta0: cfg.real("rescale.beta0", "1")?,
        beta: cfg.real("rescale.beta", "1")?,
        blocks,
        mode,
        n_lo: cfg.parsed("rescale.n_lo", Some(20u64))?,
        n_hi: cfg.parsed("rescale.n_hi", Some(60u64))?,
        source_limit: cfg.parsed("rescale.source_limit", Some(limit))?,
    })
}

fn run_rescale(rp: &RescaleParams, sieve: &Sieve) -> Result<divisors::RescaleReport> {
    let b = sieve.primes_between(2, rp.source_limit.min(sieve.limit()))?;
    divisors::beta_rescale(&b, rp.beta0, rp.beta, rp.blocks, rp.mode, rp.n_lo, rp.n_hi, sieve)
}

/// Resolves the config, runs the subcommand and writes its reports.
pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    let mut cfg = match &args.config {
        Some(p) => Config::parse(&std::fs::read_to_string(p)?)?,
        None => Config::default(),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim());
    }
    if let Some(l) = args.sieve_limit {
        cfg.set("sieve.limit", &l.to_string());
    }
    if let Some(w) = args.workers {
        cfg.set("run.workers", &w.to_string());
    }
    if let Some(d) = &args.out {
        cfg.set("output.dir", &d.to_string_lossy());
    }
    let dir = PathBuf::from(cfg.str("output.dir", ".")?);
    let prefix = cfg.str("output.prefix", "")?;
    let workers: usize = cfg.parsed("run.workers", Some(0usize))?;
    let job = plan(args.subcommand, &cfg)?;
    cfg.finish()?;
    let resolved = cfg.resolved();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| cfg_err(e.to_string()))?;
    let outputs = pool.install(job)?;

    let mut rendered = Vec::new();
    for (name, out) in outputs {
        let contents = match out {
            Output::Json(v) => json_report(args.subcommand, &resolved, v)?,
            Output::Csv(body) => header_lines(args.subcommand, &resolved) + &body,
        };
        rendered.push(Report {
            file_name: format!("{prefix}{name}"),
            contents,
        });
    }
    let mut paths = Vec::new();
    for r in rendered {
        let p = dir.join(&r.file_name);
        write_atomic(&p, &r.contents)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("tgroups {}: {e}", args.subcommand.name());
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = Config::parse("# c\nsieve.limit = 1000\n\nfamily.t0 = \"1/2\"\n").unwrap();
        assert_eq!(c.parsed::<u64>("sieve.limit", None).unwrap(), 1000);
        assert_eq!(c.real("family.t0", "1").unwrap(), 0.5);
        assert_eq!(c.real("family.beta", "1").unwrap(), 1.0);
        c.finish().unwrap();
        assert_eq!(c.resolved().len(), 3);

        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("no equals sign").is_err());
        let c = Config::parse("typo.key = 1").unwrap();
        assert!(c.finish().is_err());
    }

    #[test]
    fn reals() {
        assert_eq!(parse_real("1/4").unwrap().to_f64(), 0.25);
        assert!((parse_real("2pi").unwrap().to_f64() - std::f64::consts::TAU).abs() < 1e-15);
        assert!((parse_real("pi/3").unwrap().to_f64() - std::f64::consts::FRAC_PI_3).abs() < 1e-15);
        assert!(parse_real("x").is_err());
        assert_eq!(parse_rational("-3/4").unwrap(), Rational { num: -3, den: 4 });
        assert_eq!(parse_rational("2").unwrap(), Rational { num: 2, den: 1 });
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::range("x", 1, 0)), 3);
        assert_eq!(exit_code(&Error::BudgetExceeded("x".into())), 4);
        assert_eq!(exit_code(&Error::Verification("x".into())), 5);
    }
}
