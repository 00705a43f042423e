//! Empirical p-values, Benjamini-Hochberg adjustment, pattern testing,
//! contingency tables between reports and the holdout split.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::{clustering_error, kmeans};
use crate::error::{Error, Result};
use crate::matrix::BinaryDataset;
use crate::nullmodels::{sample_map, ChainConfig, NullModel};
use crate::patterns::{frequency, mine_frequent, Itemset};
use crate::rng::{mix_seed, stream_rng, Stream};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Relative tolerance under which two statistic values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Which direction of the statistic counts as extreme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    Greater,
    Less,
    TwoSided,
}

impl FromStr for Tail {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "greater" => Ok(Tail::Greater),
            "less" => Ok(Tail::Less),
            "two-sided" => Ok(Tail::TwoSided),
            _ => Err(format!("unknown tail {s:?}")),
        }
    }
}

type Evaluator = Arc<dyn Fn(&BinaryDataset) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum StatisticKind {
    ItemsetSupport(Itemset),
    /// Error of a fresh k-means clustering of each dataset.
    ClusteringError {
        k: usize,
        restarts: usize,
    },
    NumFrequentItemsets {
        min_support: usize,
        max_size: usize,
    },
    Custom {
        name: String,
        eval: Evaluator,
    },
}

impl fmt::Debug for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatisticKind::ItemsetSupport(x) => write!(f, "ItemsetSupport({x})"),
            StatisticKind::ClusteringError { k, restarts } => {
                write!(f, "ClusteringError(k={k}, restarts={restarts})")
            }
            StatisticKind::NumFrequentItemsets { min_support, max_size } => {
                write!(f, "NumFrequentItemsets({min_support}, {max_size})")
            }
            StatisticKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A structural measure of a dataset and the tail in which it is extreme.
#[derive(Debug, Clone)]
pub struct TestStatistic {
    pub kind: StatisticKind,
    pub tail: Tail,
}

impl TestStatistic {
    /// Itemset support; larger is more extreme.
    pub fn support(x: Itemset) -> Self {
        TestStatistic { kind: StatisticKind::ItemsetSupport(x), tail: Tail::Greater }
    }

    /// k-means clustering error; smaller is more extreme.
    pub fn clustering_error(k: usize, restarts: usize) -> Self {
        TestStatistic { kind: StatisticKind::ClusteringError { k, restarts }, tail: Tail::Less }
    }

    pub fn frequent_count(min_support: usize, max_size: usize) -> Self {
        TestStatistic { kind: StatisticKind::NumFrequentItemsets { min_support, max_size }, tail: Tail::Greater }
    }

    pub fn custom(
        name: impl Into<String>,
        tail: Tail,
        eval: impl Fn(&BinaryDataset) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestStatistic { kind: StatisticKind::Custom { name: name.into(), eval: Arc::new(eval) }, tail }
    }

    pub fn with_tail(self, tail: Tail) -> Self {
        TestStatistic { tail, ..self }
    }

    /// Statistic name used in reports.
    pub fn name(&self) -> String {
        match &self.kind {
            StatisticKind::ItemsetSupport(_) => "support".into(),
            StatisticKind::ClusteringError { k, .. } => format!("clustering-error(k={k})"),
            StatisticKind::NumFrequentItemsets { min_support, max_size } => {
                format!("frequent-count(min={min_support},max={max_size})")
            }
            StatisticKind::Custom { name, .. } => name.clone(),
        }
    }

    /// Label of the tested pattern.
    pub fn pattern_label(&self, d: &BinaryDataset) -> String {
        match &self.kind {
            StatisticKind::ItemsetSupport(x) => x.label(d),
            _ => self.name(),
        }
    }

    fn itemset(&self) -> Option<&Itemset> {
        match &self.kind {
            StatisticKind::ItemsetSupport(x) => Some(x),
            _ => None,
        }
    }

    fn validate(&self, d: &BinaryDataset) -> Result<()> {
        match &self.kind {
            StatisticKind::ItemsetSupport(x) => frequency(d, x).map(|_| ()),
            StatisticKind::ClusteringError { k, restarts } => {
                if *k == 0 || *k > d.n_rows() || *restarts == 0 {
                    return Err(Error::usage(format!("invalid clustering statistic k={k}, restarts={restarts}")));
                }
                Ok(())
            }
            StatisticKind::NumFrequentItemsets { min_support, max_size } => {
                if *min_support == 0 || *max_size == 0 {
                    return Err(Error::usage("frequent count needs min_support and max_size >= 1"));
                }
                Ok(())
            }
            StatisticKind::Custom { .. } => Ok(()),
        }
    }

    /// Value on `d`. `seed` drives any randomness inside the statistic
    /// (k-means initialisation).
    pub fn evaluate(&self, d: &BinaryDataset, seed: u64) -> Result<f64> {
        Ok(match &self.kind {
            StatisticKind::ItemsetSupport(x) => frequency(d, x)? as f64,
            StatisticKind::ClusteringError { k, restarts } => clustering_error(d, &kmeans(d, *k, *restarts, seed)?),
            StatisticKind::NumFrequentItemsets { min_support, max_size } => {
                mine_frequent(d, *min_support, *max_size)?.len() as f64
            }
            StatisticKind::Custom { eval, .. } => eval(d),
        })
    }
}

fn ge(a: f64, b: f64) -> bool {
    a >= b || (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Empirical p-value of `original` against `randomized`:
/// `(#{extreme} + 1) / (k + 1)`, with ties counting as extreme.
/// Two-sided p-values are twice the smaller one-sided value, capped at 1.
pub fn empirical_p(original: f64, randomized: &[f64], tail: Tail) -> Result<f64> {
    if randomized.is_empty() {
        return Err(Error::usage("empirical p-value needs at least one randomized value"));
    }
    let k = randomized.len() as f64;
    let p = |count: usize| (count as f64 + 1.0) / (k + 1.0);
    let greater = || p(randomized.iter().filter(|&&v| ge(v, original)).count());
    let less = || p(randomized.iter().filter(|&&v| ge(original, v)).count());
    Ok(match tail {
        Tail::Greater => greater(),
        Tail::Less => less(),
        Tail::TwoSided => (2.0 * greater().min(less())).min(1.0),
    })
}

/// Benjamini-Hochberg step-up adjustment. Returns adjusted p-values in
/// input order and whether each one is at most `alpha`.
pub fn bh_adjust(raw_ps: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if let Some(p) = raw_ps.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::value(None, format!("p-value {p} outside (0, 1]")));
    }
    let m = raw_ps.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| raw_ps[a].total_cmp(&raw_ps[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(raw_ps[i] * (m as f64 / (rank + 1) as f64));
        adjusted[i] = running;
    }
    let significant = adjusted.iter().map(|&q| q <= alpha).collect();
    Ok((adjusted, significant))
}

/// Outcome for one tested pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternResult {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub itemset: Option<Itemset>,
    pub statistic: String,
    pub tail: Tail,
    pub value: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub significant: bool,
}

/// Per-pattern p-values together with everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub model: NullModel,
    pub samples: usize,
    pub swap_attempts: u64,
    pub seed: u64,
    pub alpha: f64,
    pub adjusted: bool,
    pub patterns: Vec<PatternResult>,
}

impl SignificanceReport {
    pub fn significant_count(&self) -> usize {
        self.patterns.iter().filter(|p| p.significant).count()
    }

    pub fn find(&self, pattern: &str) -> Option<&PatternResult> {
        self.patterns.iter().find(|p| p.pattern == pattern)
    }
}

/// Parameters shared by every statistic in one report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOptions {
    pub alpha: f64,
    pub adjust: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions { alpha: DEFAULT_ALPHA, adjust: true }
    }
}

/// Tests every statistic against one shared set of randomized datasets.
pub fn test_patterns(
    d: &BinaryDataset,
    stats: &[TestStatistic],
    model: &NullModel,
    cfg: &ChainConfig,
    opts: TestOptions,
) -> Result<SignificanceReport> {
    test_patterns_with_progress(d, stats, model, cfg, opts, None)
}

/// [`test_patterns`] reporting the number of finished chains to `progress`.
pub fn test_patterns_with_progress(
    d: &BinaryDataset,
    stats: &[TestStatistic],
    model: &NullModel,
    cfg: &ChainConfig,
    opts: TestOptions,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<SignificanceReport> {
    if !(opts.alpha > 0.0 && opts.alpha <= 1.0) {
        return Err(Error::usage(format!("alpha must be in (0, 1], got {}", opts.alpha)));
    }
    for s in stats {
        s.validate(d)?;
    }
    let stat_seed = |sample: u64| mix_seed(cfg.seed, sample);
    let originals = stats
        .iter()
        .enumerate()
        .map(|(j, s)| s.evaluate(d, stat_seed(stream_index(0, j))))
        .collect::<Result<Vec<_>>>()?;

    let (per_sample, swap_attempts) = sample_map(d, model, cfg, progress, |i, sampled| {
        stats
            .iter()
            .enumerate()
            .map(|(j, s)| s.evaluate(sampled, stat_seed(stream_index(i as u64 + 1, j))))
            .collect::<Result<Vec<f64>>>()
    })?;
    let per_sample = per_sample.into_iter().collect::<Result<Vec<_>>>()?;

    let mut raw = Vec::with_capacity(stats.len());
    for (j, s) in stats.iter().enumerate() {
        let values: Vec<f64> = per_sample.iter().map(|v| v[j]).collect();
        raw.push(empirical_p(originals[j], &values, s.tail)?);
    }
    let (adjusted, significant) = if opts.adjust {
        bh_adjust(&raw, opts.alpha)?
    } else {
        (raw.clone(), raw.iter().map(|&p| p <= opts.alpha).collect())
    };

    let patterns = stats
        .iter()
        .enumerate()
        .map(|(j, s)| PatternResult {
            pattern: s.pattern_label(d),
            itemset: s.itemset().cloned(),
            statistic: s.name(),
            tail: s.tail,
            value: originals[j],
            raw_p: raw[j],
            adjusted_p: adjusted[j],
            significant: significant[j],
        })
        .collect();
    Ok(SignificanceReport {
        model: model.clone(),
        samples: cfg.samples,
        swap_attempts,
        seed: cfg.seed,
        alpha: opts.alpha,
        adjusted: opts.adjust,
        patterns,
    })
}

/// Sample 0 is the original dataset, sample `i + 1` the `i`-th randomization.
fn stream_index(sample: u64, stat: usize) -> u64 {
    (sample << 20) | stat as u64
}

/// Counts of patterns by significance in two reports: `counts[a][b]` where
/// index 0 is "not significant" and 1 is "significant".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub counts: [[u64; 2]; 2],
}

impl Contingency {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Contingency {
        let c = self.counts;
        Contingency { counts: [[c[0][0], c[1][0]], [c[0][1], c[1][1]]] }
    }
}

impl fmt::Display for Contingency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.counts;
        writeln!(f, "\tB:N\tB:S")?;
        writeln!(f, "A:N\t{}\t{}", c[0][0], c[0][1])?;
        writeln!(f, "A:S\t{}\t{}", c[1][0], c[1][1])
    }
}

fn paired<'a>(
    a: &'a SignificanceReport,
    b: &'a SignificanceReport,
) -> Result<Vec<(&'a PatternResult, &'a PatternResult)>> {
    let index: HashMap<&str, &PatternResult> = b.patterns.iter().map(|p| (p.pattern.as_str(), p)).collect();
    if index.len() != b.patterns.len() || a.patterns.len() != b.patterns.len() {
        return Err(Error::usage("reports cover different pattern collections"));
    }
    a.patterns
        .iter()
        .map(|p| {
            index
                .get(p.pattern.as_str())
                .map(|q| (p, *q))
                .ok_or_else(|| Error::usage(format!("pattern {:?} missing from second report", p.pattern)))
        })
        .collect()
}

/// Cross-tabulates significance of the same patterns in two reports.
pub fn contingency(a: &SignificanceReport, b: &SignificanceReport) -> Result<Contingency> {
    let mut counts = [[0u64; 2]; 2];
    for (p, q) in paired(a, b)? {
        counts[p.significant as usize][q.significant as usize] += 1;
    }
    Ok(Contingency { counts })
}

/// Pattern pairs from two reports over the same collection, in `a`'s order.
pub fn pair_reports<'a>(
    a: &'a SignificanceReport,
    b: &'a SignificanceReport,
) -> Result<Vec<(&'a PatternResult, &'a PatternResult)>> {
    paired(a, b)
}

/// Row indices of a random half split: the first has `ceil(m/2)` rows, the
/// second `floor(m/2)`, each in increasing order.
pub fn holdout_indices(n_rows: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_rows < 2 {
        return Err(Error::usage(format!("holdout split needs at least 2 rows, got {n_rows}")));
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(&mut stream_rng(seed, Stream::Split, 0));
    let (first, second) = perm.split_at(n_rows.div_ceil(2));
    let (mut first, mut second) = (first.to_vec(), second.to_vec());
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Splits the rows of `d` at random into a mining half and a testing half.
pub fn holdout_split(d: &BinaryDataset, seed: u64) -> Result<(BinaryDataset, BinaryDataset)> {
    let (mining, testing) = holdout_indices(d.n_rows(), seed)?;
    Ok((d.select_rows(&mining), d.select_rows(&testing)))
}
