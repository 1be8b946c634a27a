//! Class schemes, label remapping, pairwise transition mapping, binary
//! change derivation and area statistics.

mod remap;
mod scheme;
mod stats;
mod transition;

pub use remap::{remap_labels, RemapDefault, RemapTable};
pub use scheme::{default_nodata, ClassInfo, ClassScheme};
pub use stats::{area_stats, area_stats_csv, shares_percent, AreaRow};
pub use transition::{
    binarize_change, build_transition_map, map_transition_pair, TransitionGrid, TransitionRuleSet, CHANGE_NODATA,
    NO_CHANGE, OTHER_TRANSITION,
};
