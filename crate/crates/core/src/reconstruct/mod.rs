//! End-to-end learning of a Green's function on a hierarchical partition.
//!
//! Every admissible pair `{X, Y}` is learned once from `2(k + p)` oracle calls:
//! GP samples supported on `Y` give a basis `Q` for the range of the `X × Y`
//! block, and a second batch of queries on `Q` supplies the other factor.
//! Self-adjointness lets both orientations share the same factors. Blocks
//! that are not admissible at the finest level are approximated by zero.

mod block;
mod hier;
mod report;

pub use block::{learn_block, LowRankBlock};
pub use hier::{
    learn_green, max_levels_for_grid, truncated_reference, HierGreen, HierGreenDocument, KernelDocument,
    LearnOptions, LearnSettings,
};
pub use report::{global_error, global_error_with, BlockError, ErrorReport};
