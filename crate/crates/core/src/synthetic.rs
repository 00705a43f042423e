//! Seeded datasets with planted itemsets and a planted row clustering.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::BinaryDataset;
use crate::patterns::Itemset;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Number of row groups; each gets its own column densities.
    pub groups: usize,
    pub min_density: f64,
    pub max_density: f64,
    /// Planted itemsets, each of this many columns.
    pub planted: usize,
    pub planted_size: usize,
    /// Fraction of rows that receive each planted itemset.
    pub planted_rate: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_rows: 200,
            n_cols: 50,
            groups: 2,
            min_density: 0.05,
            max_density: 0.35,
            planted: 4,
            planted_size: 3,
            planted_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: BinaryDataset,
    pub itemsets: Vec<Itemset>,
    /// Group of each row.
    pub groups: Vec<usize>,
}

/// Background cells are independent Bernoulli draws whose rate depends on
/// the row's group and the column; each planted itemset is then written
/// into a random subset of rows. Columns are labelled `c00`, `c01`, ...
/// and rows `r000`, `r001`, ...
pub fn planted(cfg: &PlantedConfig, seed: u64) -> Result<Planted> {
    if cfg.groups == 0 || cfg.groups > cfg.n_rows.max(1) {
        return Err(Error::usage("groups must be in 1..=n_rows"));
    }
    if cfg.planted_size > cfg.n_cols {
        return Err(Error::usage("planted itemsets larger than the column count"));
    }
    let ok = |p: f64| (0.0..=1.0).contains(&p);
    if !(ok(cfg.min_density) && ok(cfg.max_density) && ok(cfg.planted_rate) && cfg.min_density <= cfg.max_density) {
        return Err(Error::usage("densities and rates must lie in [0, 1]"));
    }
    let mut rng = stream_rng(seed, Stream::Synthetic, 0);
    let density: Vec<f64> =
        (0..cfg.groups * cfg.n_cols).map(|_| rng.gen_range(cfg.min_density..=cfg.max_density)).collect();
    let groups: Vec<usize> = (0..cfg.n_rows).map(|r| r * cfg.groups / cfg.n_rows.max(1)).collect();
    let mut cells = vec![false; cfg.n_rows * cfg.n_cols];
    for r in 0..cfg.n_rows {
        for c in 0..cfg.n_cols {
            cells[r * cfg.n_cols + c] = rng.gen_bool(density[groups[r] * cfg.n_cols + c]);
        }
    }
    let hits = (cfg.planted_rate * cfg.n_rows as f64).round() as usize;
    let mut itemsets = Vec::with_capacity(cfg.planted);
    for _ in 0..cfg.planted {
        let x = Itemset::new(sample(&mut rng, cfg.n_cols, cfg.planted_size));
        for r in sample(&mut rng, cfg.n_rows, hits.min(cfg.n_rows)).into_iter() {
            for &c in x.items() {
                cells[r * cfg.n_cols + c as usize] = true;
            }
        }
        itemsets.push(x);
    }
    let d = BinaryDataset::from_fn(cfg.n_rows, cfg.n_cols, |r, c| cells[r * cfg.n_cols + c]).with_labels(
        Some((0..cfg.n_rows).map(|r| format!("r{r:03}")).collect()),
        Some((0..cfg.n_cols).map(|c| format!("c{c:02}")).collect()),
    )?;
    Ok(Planted { dataset: d, itemsets, groups })
}
