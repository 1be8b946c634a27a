//! Spatial block splits, overlapped patch extraction and mosaicking.

mod split;
mod tiling;

pub use split::{
    assign_split, mask_by_split, partition_blocks, split_counts, validate_fractions, Block, BlockPartition, Role,
    SplitAssignment,
};
pub use tiling::{argmax_scores, axis_positions, extract_patches, mosaic_labels, mosaic_scores, Patch, PatchIndex};
