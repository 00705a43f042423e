//! Itemsets, itemset families, frequent itemset mining and the frequency
//! difference energy used by the soft itemset null model.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BinaryDataset, Swap};

/// A set of columns, kept as a strictly increasing index list.
///
/// Itemsets order by size first and then lexicographically, which is the
/// canonical output order everywhere in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<u32>", into = "Vec<u32>")]
pub struct Itemset(Vec<u32>);

impl Itemset {
    pub fn new<I: IntoIterator<Item = usize>>(items: I) -> Self {
        let mut v: Vec<u32> = items.into_iter().map(|i| i as u32).collect();
        v.sort_unstable();
        v.dedup();
        Itemset(v)
    }

    pub fn empty() -> Self {
        Itemset(Vec::new())
    }

    /// Parses whitespace-separated column labels against `d`.
    pub fn from_labels(d: &BinaryDataset, labels: &str) -> Result<Self> {
        let mut items = Vec::new();
        for tok in labels.split_whitespace() {
            let c = d.col_index(tok).ok_or_else(|| Error::Index(format!("unknown column label {tok:?}")))?;
            items.push(c);
        }
        Ok(Itemset::new(items))
    }

    pub fn items(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, col: usize) -> bool {
        self.0.binary_search(&(col as u32)).is_ok()
    }

    pub fn is_subset(&self, other: &Itemset) -> bool {
        self.0.iter().all(|&i| other.0.binary_search(&i).is_ok())
    }

    /// Column labels joined by single spaces.
    pub fn label(&self, d: &BinaryDataset) -> String {
        self.0.iter().map(|&c| d.col_label(c as usize)).collect::<Vec<_>>().join(" ")
    }

    fn check(&self, d: &BinaryDataset) -> Result<()> {
        match self.0.last() {
            Some(&c) if c as usize >= d.n_cols() => {
                Err(Error::Index(format!("column {c} in itemset, dataset has {} columns", d.n_cols())))
            }
            _ => Ok(()),
        }
    }

    /// True when row `r` of `d` holds a 1 in every column of the itemset.
    #[inline]
    pub fn covered_by_row(&self, d: &BinaryDataset, r: usize) -> bool {
        self.0.iter().all(|&c| d.get(r, c as usize))
    }
}

impl From<Vec<u32>> for Itemset {
    fn from(v: Vec<u32>) -> Self {
        Itemset::new(v.into_iter().map(|i| i as usize))
    }
}

impl From<Itemset> for Vec<u32> {
    fn from(x: Itemset) -> Self {
        x.0
    }
}

impl Ord for Itemset {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Itemset {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Itemset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// An ordered, duplicate-free collection of itemsets, optionally paired
/// with target frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ItemsetFamily {
    itemsets: Vec<Itemset>,
    target_freqs: Option<Vec<u64>>,
}

impl ItemsetFamily {
    /// Family without targets. Later duplicates are dropped.
    pub fn new<I: IntoIterator<Item = Itemset>>(itemsets: I) -> Self {
        let mut seen = HashSet::new();
        let itemsets = itemsets.into_iter().filter(|x| seen.insert(x.clone())).collect();
        ItemsetFamily { itemsets, target_freqs: None }
    }

    /// Family with a target frequency per itemset. For duplicated itemsets
    /// the first target wins.
    pub fn with_targets<I: IntoIterator<Item = (Itemset, u64)>>(pairs: I) -> Self {
        let mut seen = HashSet::new();
        let (itemsets, targets) = pairs.into_iter().filter(|(x, _)| seen.insert(x.clone())).unzip();
        ItemsetFamily { itemsets, target_freqs: Some(targets) }
    }

    /// Family whose targets are the frequencies in `d`.
    pub fn with_targets_from<I: IntoIterator<Item = Itemset>>(itemsets: I, d: &BinaryDataset) -> Result<Self> {
        let fam = Self::new(itemsets);
        let targets = fam.itemsets.iter().map(|x| frequency(d, x).map(|f| f as u64)).collect::<Result<Vec<_>>>()?;
        Ok(ItemsetFamily { target_freqs: Some(targets), ..fam })
    }

    pub fn itemsets(&self) -> &[Itemset] {
        &self.itemsets
    }

    pub fn target_freqs(&self) -> Option<&[u64]> {
        self.target_freqs.as_deref()
    }

    pub fn len(&self) -> usize {
        self.itemsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.itemsets.is_empty()
    }

    pub fn position(&self, x: &Itemset) -> Option<usize> {
        self.itemsets.iter().position(|y| y == x)
    }

    pub fn contains(&self, x: &Itemset) -> bool {
        self.position(x).is_some()
    }

    pub fn target(&self, i: usize) -> Option<u64> {
        self.target_freqs.as_ref().map(|t| t[i])
    }

    /// `(itemset, target)` pairs; errors when the family has no targets.
    pub fn pairs(&self) -> Result<impl Iterator<Item = (&Itemset, u64)> + '_> {
        let targets =
            self.target_freqs.as_ref().ok_or_else(|| Error::usage("itemset family has no target frequencies"))?;
        Ok(self.itemsets.iter().zip(targets.iter().copied()))
    }

    /// Appends an itemset; a no-op when it is already present.
    /// Families with targets require `target`, families without ignore it.
    pub fn push(&mut self, x: Itemset, target: Option<u64>) -> Result<bool> {
        if self.contains(&x) {
            return Ok(false);
        }
        match (&mut self.target_freqs, target) {
            (Some(t), Some(f)) => t.push(f),
            (Some(_), None) => return Err(Error::usage("target frequency required")),
            (None, _) => {}
        }
        self.itemsets.push(x);
        Ok(true)
    }

    /// Removes an itemset, returning whether it was present.
    pub fn remove(&mut self, x: &Itemset) -> bool {
        match self.position(x) {
            Some(i) => {
                self.itemsets.remove(i);
                if let Some(t) = &mut self.target_freqs {
                    t.remove(i);
                }
                true
            }
            None => false,
        }
    }
}

/// Number of rows of `d` covering `x`. The empty itemset is covered by every row.
pub fn frequency(d: &BinaryDataset, x: &Itemset) -> Result<usize> {
    x.check(d)?;
    if x.is_empty() {
        return Ok(d.n_rows());
    }
    let mask = RowMask::new(d, x);
    Ok((0..d.n_rows()).filter(|&r| mask.covers(d, r)).count())
}

/// Sparse per-word mask of an itemset for fast row coverage tests.
struct RowMask(Vec<(usize, u64)>);

impl RowMask {
    fn new(d: &BinaryDataset, x: &Itemset) -> Self {
        let mut words = vec![0u64; d.words_per_row()];
        for &c in x.items() {
            words[c as usize / 64] |= 1 << (c % 64);
        }
        RowMask(words.into_iter().enumerate().filter(|&(_, w)| w != 0).collect())
    }

    #[inline]
    fn covers(&self, d: &BinaryDataset, r: usize) -> bool {
        let row = d.row_words(r);
        self.0.iter().all(|&(i, m)| row[i] & m == m)
    }
}

/// Levelwise (Apriori) mining of every itemset with `1 <= size <= max_size`
/// and frequency at least `min_support`. The result carries the
/// frequencies as targets and is sorted by size, then lexicographically.
pub fn mine_frequent(d: &BinaryDataset, min_support: usize, max_size: usize) -> Result<ItemsetFamily> {
    if min_support == 0 {
        return Err(Error::usage("min_support must be at least 1"));
    }
    if max_size == 0 {
        return Err(Error::usage("max_size must be at least 1"));
    }
    let row_words = d.n_rows().div_ceil(64);
    // Vertical layout: one row bitset per column.
    let mut tidsets = vec![vec![0u64; row_words]; d.n_cols()];
    for (r, c) in d.ones() {
        tidsets[c][r / 64] |= 1 << (r % 64);
    }

    let mut out: Vec<(Itemset, u64)> = Vec::new();
    let mut level: Vec<(Vec<u32>, Vec<u64>)> = (0..d.n_cols())
        .filter(|&c| d.col_margins()[c] as usize >= min_support)
        .map(|c| (vec![c as u32], tidsets[c].clone()))
        .collect();

    let mut size = 1;
    while !level.is_empty() {
        out.extend(level.iter().map(|(items, tids)| (Itemset(items.clone()), popcount(tids))));
        if size == max_size {
            break;
        }
        let frequent: HashSet<&[u32]> = level.iter().map(|(items, _)| items.as_slice()).collect();
        let mut next = Vec::new();
        for (i, (a, ta)) in level.iter().enumerate() {
            for (b, tb) in &level[i + 1..] {
                if a[..size - 1] != b[..size - 1] {
                    // Level is sorted, so no later b shares a's prefix.
                    break;
                }
                let mut cand = a.clone();
                cand.push(b[size - 1]);
                let all_subsets_frequent = (0..size - 1).all(|skip| {
                    let sub: Vec<u32> = cand.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
                    frequent.contains(sub.as_slice())
                });
                if !all_subsets_frequent {
                    continue;
                }
                let tids: Vec<u64> = ta.iter().zip(tb).map(|(x, y)| x & y).collect();
                if popcount(&tids) as usize >= min_support {
                    next.push((cand, tids));
                }
            }
        }
        level = next;
        size += 1;
    }
    Ok(ItemsetFamily::with_targets(out))
}

fn popcount(words: &[u64]) -> u64 {
    words.iter().map(|w| w.count_ones() as u64).sum()
}

/// Sum over the family of `|target - fr(d_hat; X)|`.
pub fn itemset_difference(family: &ItemsetFamily, d_hat: &BinaryDataset) -> Result<u64> {
    let mut h = 0;
    for (x, target) in family.pairs()? {
        h += target.abs_diff(frequency(d_hat, x)? as u64);
    }
    Ok(h)
}

/// Change in the frequency difference if `sw` were applied to `d`, together
/// with the updated frequencies. `current_freqs` must equal the family's
/// frequencies in `d`; only itemsets touching column `x` or `y` are re-tested.
pub fn incremental_difference_delta(
    d: &BinaryDataset,
    family: &ItemsetFamily,
    sw: &Swap,
    current_freqs: &[u64],
) -> Result<(i64, Vec<u64>)> {
    if !d.is_applicable(sw) {
        return Err(Error::Precondition(format!("swap {sw:?} is not applicable")));
    }
    if current_freqs.len() != family.len() {
        return Err(Error::Shape(format!("{} frequencies for {} itemsets", current_freqs.len(), family.len())));
    }
    let mut tracker = FrequencyTracker::with_freqs(family, d, current_freqs.to_vec())?;
    let delta = tracker.delta(d, sw);
    tracker.commit();
    Ok((delta, tracker.freqs))
}

/// Running itemset frequencies and energy for one chain.
///
/// `delta` stages the frequency changes a swap would cause; `commit`
/// makes them current. Each call to `delta` discards any staged changes.
#[derive(Debug, Clone)]
pub struct FrequencyTracker {
    itemsets: Vec<Itemset>,
    targets: Vec<u64>,
    freqs: Vec<u64>,
    by_col: Vec<Vec<u32>>,
    h: u64,
    staged: Vec<(u32, u64)>,
    staged_delta: i64,
}

impl FrequencyTracker {
    /// Tracker for `family` (which must have targets) on dataset `d`.
    pub fn new(family: &ItemsetFamily, d: &BinaryDataset) -> Result<Self> {
        let freqs = family.itemsets().iter().map(|x| frequency(d, x).map(|f| f as u64)).collect::<Result<Vec<_>>>()?;
        Self::with_freqs(family, d, freqs)
    }

    fn with_freqs(family: &ItemsetFamily, d: &BinaryDataset, freqs: Vec<u64>) -> Result<Self> {
        let targets: Vec<u64> = family.pairs()?.map(|(_, t)| t).collect();
        let mut by_col = vec![Vec::new(); d.n_cols()];
        for (i, x) in family.itemsets().iter().enumerate() {
            x.check(d)?;
            for &c in x.items() {
                by_col[c as usize].push(i as u32);
            }
        }
        debug_assert!(
            family.itemsets().iter().zip(&freqs).all(|(x, &f)| frequency(d, x).unwrap() as u64 == f),
            "stale frequencies"
        );
        let h = targets.iter().zip(&freqs).map(|(t, f)| t.abs_diff(*f)).sum();
        Ok(FrequencyTracker {
            itemsets: family.itemsets().to_vec(),
            targets,
            freqs,
            by_col,
            h,
            staged: Vec::new(),
            staged_delta: 0,
        })
    }

    /// Current frequency difference.
    pub fn energy(&self) -> u64 {
        self.h
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    /// Energy change caused by applying the applicable swap `sw` to `d`.
    pub fn delta(&mut self, d: &BinaryDataset, sw: &Swap) -> i64 {
        let Swap { s, t, x, y } = *sw;
        self.staged.clear();
        let mut delta = 0i64;
        let touched_x = self.by_col[x].iter();
        let touched_y = self.by_col[y].iter().filter(|&&i| !self.itemsets[i as usize].contains(x));
        for &i in touched_x.chain(touched_y) {
            let set = &self.itemsets[i as usize];
            let has_x = set.contains(x);
            let has_y = set.contains(y);
            let before = set.covered_by_row(d, s) as i64 + set.covered_by_row(d, t) as i64;
            // After the swap row s holds y but not x, row t holds x but not y.
            let s_after = !has_x && set.items().iter().all(|&c| c as usize == y || d.get(s, c as usize));
            let t_after = !has_y && set.items().iter().all(|&c| c as usize == x || d.get(t, c as usize));
            let after = s_after as i64 + t_after as i64;
            if before != after {
                let old = self.freqs[i as usize];
                let new = (old as i64 + after - before) as u64;
                let target = self.targets[i as usize];
                delta += target.abs_diff(new) as i64 - target.abs_diff(old) as i64;
                self.staged.push((i, new));
            }
        }
        self.staged_delta = delta;
        delta
    }

    /// Makes the changes staged by the last `delta` call current.
    pub fn commit(&mut self) {
        for &(i, f) in &self.staged {
            self.freqs[i as usize] = f;
        }
        self.h = (self.h as i64 + self.staged_delta) as u64;
        self.staged.clear();
        self.staged_delta = 0;
    }
}
