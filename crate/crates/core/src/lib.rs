//! Dense convex QP solver whose every iteration is one application of a
//! precomputed affine map followed by a box clamp.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod format;
pub mod layers;
pub mod mpc;
pub mod oracle;
pub mod problem;
pub mod solver;

#[cfg(test)]
pub(crate) mod testing;

pub use format::{parse_problem, serialize_problem};
pub use problem::{ConstraintKind, ProblemError, QProblem, RawProblem, Solution, SolveStatus};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problem-format.md")]
    mod problem_format {}
    #[doc = include_str!("../../../book/src/fused-iteration.md")]
    mod fused_iteration {}
    #[doc = include_str!("../../../book/src/penalty-adaptation.md")]
    mod penalty_adaptation {}
    #[doc = include_str!("../../../book/src/equilibration.md")]
    mod equilibration {}
    #[doc = include_str!("../../../book/src/condensed-mpc.md")]
    mod condensed_mpc {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
