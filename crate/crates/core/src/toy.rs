//! The 9x8 example dataset bundled with the crate, and its 2-clustering.

use crate::clustering::RowClustering;
use crate::io::{load_dataset, DatasetFormat};
use crate::matrix::BinaryDataset;

pub const TOY_CSV: &str = include_str!("../data/toy.csv");

/// Rows t1..t9, columns A..H.
pub fn dataset() -> BinaryDataset {
    load_dataset(TOY_CSV.as_bytes(), DatasetFormat::Dense).expect("bundled dataset parses")
}

/// Rows t1-t4 in one cluster, t5-t9 in the other.
pub fn clustering() -> RowClustering {
    RowClustering::new([0, 0, 0, 0, 1, 1, 1, 1, 1])
}
