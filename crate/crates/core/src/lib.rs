//! Significance testing for patterns in 0-1 data by swap randomization.
//!
//! A [`BinaryDataset`] is randomized by Markov chains that keep chosen
//! statistics fixed (row and column margins, a row clustering's column
//! sums, or softly the frequencies of an itemset family). Structural
//! measures of the original are compared with those of the randomized
//! datasets to give empirical p-values; [`session`] builds the iterative
//! loop in which accepted patterns become constraints for the next round.
//!
//! ```
//! use exchmine_core::{toy, mine_frequent, test_patterns, ChainConfig, NullModel, SwapAttempts, TestOptions, TestStatistic};
//!
//! let d = toy::dataset();
//! let stats: Vec<_> = mine_frequent(&d, 3, 8).unwrap().itemsets().iter().cloned().map(TestStatistic::support).collect();
//! let cfg = ChainConfig::new(SwapAttempts::Fixed(264), 7, 99);
//! let report = test_patterns(&d, &stats, &NullModel::Margins, &cfg, TestOptions::default()).unwrap();
//! assert_eq!(report.patterns.len(), 23);
//! ```

pub mod clustering;
pub mod error;
pub mod io;
pub mod matrix;
pub mod nullmodels;
pub mod patterns;
pub mod report;
pub mod rng;
pub mod session;
pub mod significance;
pub mod synthetic;
pub mod toy;

pub use clustering::{clustering_error, kmeans, RowClustering};
pub use error::{Error, Result};
pub use io::{
    load_clustering, load_dataset, load_itemsets, write_clustering, write_dataset, write_itemsets, DatasetFormat,
};
pub use matrix::{BinaryDataset, Swap};
pub use nullmodels::{choose_swap_count, enumerate_margin_class, sample, ChainConfig, NullModel, SwapAttempts};
pub use patterns::{frequency, itemset_difference, mine_frequent, Itemset, ItemsetFamily};
pub use session::{IterationRecord, ModelKind, SessionConfig, SessionState};
pub use significance::{
    bh_adjust, contingency, empirical_p, holdout_split, test_patterns, Contingency, PatternResult, SignificanceReport,
    Tail, TestOptions, TestStatistic,
};
