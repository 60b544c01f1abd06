//! Scanpath similarity metrics: MultiMatch, ScanMatch, Sequence Score and
//! String Edit Distance.

mod align;
mod multimatch;
mod scanmatch;
mod sequence;

pub use align::{levenshtein, needleman_wunsch};
pub use multimatch::{
    align_saccades, multimatch, saccades, simplify, MmConfig, MmScores, Saccade,
};
pub use scanmatch::{scanmatch, scanmatch_grid, scanmatch_sequence, ScanMatchConfig, ScanMatchGrid};
pub use sequence::{
    build_clusters, cluster_sequence, grid_symbols, sequence_score, string_edit_distance,
    FixationClusters, DEFAULT_SED_GRID,
};

/// Number of `bin`-second slots a duration occupies, at least one.
pub(crate) fn duration_repeats(tau: f64, bin: f64) -> usize {
    // tolerate durations that are whole multiples of the bin up to rounding
    ((tau / bin - 1e-9).ceil() as usize).max(1)
}

pub(crate) fn expand<T: Copy>(symbols: &[T], repeats: impl Iterator<Item = usize>) -> Vec<T> {
    symbols
        .iter()
        .zip(repeats)
        .flat_map(|(s, r)| std::iter::repeat_n(*s, r))
        .collect()
}
