//! Dense linear algebra used by the rounding steps and the LP relaxations.

mod nullspace;
mod simplex;
mod walk;

pub use nullspace::{max_step, null_vector, one_sided_step, LinearSystem};
pub use simplex::{lp_solve, Constraint, LinearProgram, LpSolution, Relation};
pub use walk::{extreme_point_walk, WalkOutcome, WalkStep};
