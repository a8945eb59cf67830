//! Dataset ingestion, binarisation, user filtering and leave-one-out splits.

mod load;
mod matrix;
mod split;

pub use load::{load_dataset, DataFormat, LoadedDataset, RawInteraction};
pub use matrix::{binarize_and_filter, DatasetStats, InteractionMatrix};
pub(crate) use split::draw_negatives;
pub use split::{leave_one_out_split, sample_negatives, SplitDataset};

use std::path::Path;

use crate::error::Result;
use crate::rng::substream;

/// Load, binarise, filter and split with the named substreams of `seed`.
pub fn prepare<P: AsRef<Path>>(
    path: P,
    format: DataFormat,
    delimiter: &str,
    min_interactions: usize,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<SplitDataset> {
    let loaded = load_dataset(path.as_ref(), format, delimiter)?;
    let matrix = binarize_and_filter(&loaded.records, min_interactions)?;
    let split = leave_one_out_split(&matrix, &mut substream(seed, "split", 0, 0))?;
    Ok(split.with_negatives(
        negatives_per_positive,
        &mut substream(seed, "negatives", 0, 0),
    ))
}
