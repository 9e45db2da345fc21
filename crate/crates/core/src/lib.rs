//! Prime-set constructions for ITPFI T-groups, with the numerical machinery to
//! exercise them at finite scale.
//!
//! The crate is organised bottom-up:
//!
//! * [`primes`] sieves and answers prime-counting and interval queries.
//! * [`schedules`] holds the ε-schedules and log-space growth sequences.
//! * [`primesets`] builds block families and witness pairs from them.
//! * [`series`] evaluates kernel series, classifies truncations and runs the
//!   Monte Carlo measure estimator.
//! * [`divisors`] implements the divisor calculus (equivalence gaps, liftings,
//!   homotheties, β-rescaling).
//! * [`isomorphy`] evaluates overlap defects and criterion sums.
//! * [`separation`] builds platoons, admissible sets, ε-liftings and separators.
//! * [`cli`] is the batch experiment driver behind the `tgroups` binary.
//!
//! Floating-point kernels that make sense in either precision are generic over
//! [`Scalar`]; the aliases below fix the common instantiations.

pub mod cli;
pub mod divisors;
pub mod error;
pub mod isomorphy;
pub mod primes;
pub mod primesets;
pub mod schedules;
pub mod separation;
pub mod series;
pub mod summation;
pub mod twoterm;

pub use error::{Error, Result};

use std::fmt::Debug;

/// Floating-point type accepted by the generic kernels.
pub trait Scalar:
    num_traits::Float + num_traits::FloatConst + num_traits::FromPrimitive + Debug + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type CompensatedSum64 = summation::CompensatedSum<f64>;
pub type CompensatedSum32 = summation::CompensatedSum<f32>;
pub type Kernel64 = series::Kernel<f64>;
pub type Kernel32 = series::Kernel<f32>;
pub type State64 = isomorphy::State<f64>;
pub type State32 = isomorphy::State<f32>;
