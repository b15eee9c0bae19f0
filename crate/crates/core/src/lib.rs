//! Implicit Euler schemes for evolution inclusions `u' + Au ∋ f` driven by
//! quasi-accretive operators, together with evaluators that certify explicit
//! upper bounds on the distance between two Euler approximations.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: partitions, step functions and piecewise-affine trajectories.
//! - [`space`]: finite-dimensional `ℓ¹`/`ℓ²`/`ℓ∞` spaces and the bracket `[u, v]`.
//! - [`operators`]: resolvent-based accretive operators and set norms.
//! - [`euler`]: the implicit Euler recursion and dyadic refinement studies.
//! - [`density`]: the comparison density on `[-1, T]²` and its mass properties.
//! - [`bounds`]: every bound evaluator, each returning a [`bounds::BoundReport`].
//! - [`bv`]: bounded-variation utilities for step and sampled smooth functions.
//! - [`harness`]: seeded instance suites, configuration and report emission.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod bv;
pub mod density;
pub mod error;
pub mod euler;
pub mod grid;
pub mod harness;
pub mod operators;
pub mod space;

pub use error::{Error, Result};
pub use space::State;
