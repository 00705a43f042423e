//! Null models over 0-1 datasets and the swap chains that sample them.
//!
//! All three models keep row and column margins fixed:
//!
//! * [`NullModel::Margins`] samples uniformly from the margin class.
//! * [`NullModel::ClusterMargins`] only swaps between rows of the same
//!   cluster, which also fixes every cluster's column sums.
//! * [`NullModel::ItemsetMarginsSoft`] targets `exp(-w * h)` where `h` is
//!   the total absolute deviation of the family's itemset frequencies from
//!   their targets, using Metropolis acceptance on top of swap proposals.
//!
//! Sampling follows the backward-forward scheme: one chain runs `K` steps
//! from the data to a hub state, then `k` independent chains run `K` steps
//! from the hub. The kernels are reversible, so the backward run uses the
//! forward kernel.

mod convergence;
mod enumerate;
mod kernels;
mod sampler;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use convergence::{
    choose_swap_count, CONVERGENCE_EPSILON, CONVERGENCE_NOISE_SE, CONVERGENCE_RUNS, CONVERGENCE_TOLERANCE,
    MAX_CONVERGENCE_RUNS,
};
pub use enumerate::{enumerate_margin_class, MAX_ENUMERATION_CELLS};
pub use kernels::{cluster_swap_step, itemset_swap_step, swap_step, Chain, ClusterSlots, StepOutcome};
pub use sampler::{sample, sample_map, SampleSet};

use crate::clustering::RowClustering;
use crate::error::{Error, Result};
use crate::matrix::BinaryDataset;
use crate::patterns::ItemsetFamily;

/// The statistics a randomized dataset shares with the original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NullModel {
    Margins,
    ClusterMargins {
        clustering: RowClustering,
    },
    #[serde(rename = "itemset-soft")]
    ItemsetMarginsSoft {
        family: ItemsetFamily,
        w: f64,
    },
}

impl NullModel {
    pub fn name(&self) -> &'static str {
        match self {
            NullModel::Margins => "margins",
            NullModel::ClusterMargins { .. } => "cluster-margins",
            NullModel::ItemsetMarginsSoft { .. } => "itemset-soft",
        }
    }

    /// Checks the model against the dataset it will randomize.
    pub fn validate(&self, d: &BinaryDataset) -> Result<()> {
        match self {
            NullModel::Margins => Ok(()),
            NullModel::ClusterMargins { clustering } => clustering.check(d),
            NullModel::ItemsetMarginsSoft { family, w } => {
                if !(w.is_finite() && *w > 0.0) {
                    return Err(Error::usage(format!("w must be positive and finite, got {w}")));
                }
                if family.target_freqs().is_none() {
                    return Err(Error::usage("soft itemset model needs target frequencies"));
                }
                for x in family.itemsets() {
                    if x.items().last().is_some_and(|&c| c as usize >= d.n_cols()) {
                        return Err(Error::Index(format!("itemset {x} exceeds {} columns", d.n_cols())));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Number of swap attempts per chain, or `Auto` to pick it with
/// [`choose_swap_count`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapAttempts {
    Fixed(u64),
    Auto,
}

impl fmt::Display for SwapAttempts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SwapAttempts::Fixed(k) => write!(f, "{k}"),
            SwapAttempts::Auto => write!(f, "auto"),
        }
    }
}

impl FromStr for SwapAttempts {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(SwapAttempts::Auto);
        }
        s.parse().map(SwapAttempts::Fixed).map_err(|_| format!("expected an integer or 'auto', got {s:?}"))
    }
}

impl Serialize for SwapAttempts {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SwapAttempts::Fixed(k) => s.serialize_u64(*k),
            SwapAttempts::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for SwapAttempts {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Fixed(u64),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Fixed(k) => Ok(SwapAttempts::Fixed(k)),
            Repr::Tag(t) if t == "auto" => Ok(SwapAttempts::Auto),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!("invalid swap attempts {t:?}"))),
        }
    }
}

/// Chain length, seed and number of samples for one sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub swap_attempts: SwapAttempts,
    pub seed: u64,
    pub samples: usize,
}

impl ChainConfig {
    pub fn new(swap_attempts: SwapAttempts, seed: u64, samples: usize) -> Self {
        ChainConfig { swap_attempts, seed, samples }
    }

    /// Concrete swap count for this configuration.
    pub fn resolve(&self, d: &BinaryDataset, model: &NullModel) -> Result<u64> {
        match self.swap_attempts {
            SwapAttempts::Fixed(k) => Ok(k),
            SwapAttempts::Auto => choose_swap_count(d, model, self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_attempts_parse_and_serde() {
        assert_eq!("auto".parse::<SwapAttempts>().unwrap(), SwapAttempts::Auto);
        assert_eq!("120".parse::<SwapAttempts>().unwrap(), SwapAttempts::Fixed(120));
        assert!("-3".parse::<SwapAttempts>().is_err());
        for v in [SwapAttempts::Auto, SwapAttempts::Fixed(9)] {
            let s = serde_json::to_string(&v).unwrap();
            assert_eq!(serde_json::from_str::<SwapAttempts>(&s).unwrap(), v);
        }
        assert!(serde_json::from_str::<SwapAttempts>("\"often\"").is_err());
    }

    #[test]
    fn model_validation() {
        let d = crate::toy::dataset();
        let fam = ItemsetFamily::with_targets([(crate::patterns::Itemset::new([0, 1]), 3)]);
        assert!(NullModel::ItemsetMarginsSoft { family: fam.clone(), w: 4.0 }.validate(&d).is_ok());
        assert!(NullModel::ItemsetMarginsSoft { family: fam, w: 0.0 }.validate(&d).is_err());
        let untargeted = ItemsetFamily::new([crate::patterns::Itemset::new([0])]);
        assert!(NullModel::ItemsetMarginsSoft { family: untargeted, w: 4.0 }.validate(&d).is_err());
        let bad = RowClustering::new([0, 1]);
        assert!(NullModel::ClusterMargins { clustering: bad }.validate(&d).is_err());
    }

    #[test]
    fn model_json_shape() {
        let m = NullModel::Margins;
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"kind":"margins"}"#);
        let s = NullModel::ItemsetMarginsSoft { family: ItemsetFamily::with_targets([]), w: 4.0 };
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with(r#"{"kind":"itemset-soft""#), "{json}");
        assert_eq!(serde_json::from_str::<NullModel>(&json).unwrap(), s);
    }
}
