//! Primal-dual regression bounds for finite-horizon Markov decision processes.
//!
//! The crate builds two estimates of the optimal value `V*_0(x0)`:
//!
//! * a lower-biased one, from a backward pseudo-regression pass ([`primal`])
//!   whose greedy policy is evaluated by plain Monte Carlo, and
//! * an upper-biased one, from a martingale penalty fitted by regression
//!   onto zero-mean function systems ([`dual`]) and plugged into the
//!   pathwise (information-relaxed) maximization ([`bounds`]).
//!
//! The upper bound is valid for any penalty with zero conditional mean,
//! whatever the quality of the regression; only the size of the duality gap
//! depends on it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bounds;
pub mod dual;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod numeric;
pub mod primal;
pub mod rng;

pub use error::{Error, Result};
