//! Curriculum-driven policy/value search for Sokoban.
//!
//! [`board`] holds the push-level rules, [`search`] the tree search that
//! plays episodes, [`network`] the residual policy/value network trained
//! from those episodes, and [`curriculum`] the subcase sampler that grows the
//! number of boxes as training succeeds. [`oracle`] is a breadth-first
//! solver used as ground truth, and [`harness`] drives whole runs.

pub mod board;
pub mod curriculum;
pub mod evaluator;
pub mod harness;
pub mod network;
pub mod oracle;
pub mod search;
