//! Verifiers, rank reports and exporters for inspecting trained and untrained models.

mod bounds;
mod checks;
mod cosine;
mod gradcheck;
mod heatmap;
mod rank;

pub use bounds::{rank_witness, verify_rank_bound, RankBoundReport, RankViolation};
pub use checks::{
    sharing_census, toeplitz_check, zero_param_equivalence, EquivalenceReport, ToeplitzReport,
};
pub use cosine::{position_cosine_stats, CosineStats, COSINE_BINS};
pub use gradcheck::{
    grad_check, verify_input_gradient_equality, GradCheckOptions, GradCheckReport, ParamCheck,
};
pub use heatmap::{export_heatmap, heatmap_svg, ColorMap, Heatmap};
pub use rank::{rank_scan, HeadRank, RankReport};
