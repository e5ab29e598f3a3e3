//! Free-time Mayer value function on a space-time grid: backward dynamic
//! programming, an independent brute-force oracle and feedback extraction.

mod feedback;
mod grid;
mod oracle;
mod solve;

pub use feedback::{extract_feedback, extract_feedback_with, FeedbackEntry, FeedbackLaw, KinkLimit};
pub use grid::{Lookup, ValueGrid, ValueTable};
pub use oracle::{brute_force_value, spread_controls, FRONTIER_CAP, ORACLE_BUDGET};
pub use solve::{query_value, solve_value, GridParams};
