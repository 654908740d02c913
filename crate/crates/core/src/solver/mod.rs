//! The exhaustive oracle and the two heuristic baselines.

mod baseline;
mod catalog;
mod exhaustive;
mod grid;

pub use baseline::{max_power, random_power};
pub use catalog::{local_assignments, AssignmentCatalog, LocalAssignment};
pub use exhaustive::{exhaustive_solve, ExhaustiveSolver, Solution};
pub use grid::PowerGrid;

/// Default number of power levels per BS.
pub const DEFAULT_GRID_LEVELS: u32 = 10;
