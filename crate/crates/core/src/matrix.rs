//! Bit-packed 0-1 matrices with cached margins and an index of 1-cells.
//!
//! Cells are stored row-major, `words_per_row` 64-bit words per row, with
//! the padding bits past the last column always zero. Every 1-cell also
//! lives in a flat `ones` array; `slot_of` maps a cell back to its slot in
//! that array so a swap costs four bit flips and four array writes.
//!
//! A swap moves a 1 along its row, never across rows, so the row owning a
//! given slot of `ones` is fixed for the lifetime of the dataset. Kernels
//! rely on this to precompute per-cluster slot lists.

use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

const NO_SLOT: u32 = u32::MAX;

/// Exchange of a 2x2 checkerboard: `(s,x)` and `(t,y)` hold 1, `(s,y)` and
/// `(t,x)` hold 0. Applying it moves the ones to `(s,y)` and `(t,x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Swap {
    pub s: usize,
    pub t: usize,
    pub x: usize,
    pub y: usize,
}

impl Swap {
    pub fn new(s: usize, t: usize, x: usize, y: usize) -> Self {
        Swap { s, t, x, y }
    }

    /// The swap that undoes this one.
    pub fn inverse(&self) -> Swap {
        Swap { s: self.s, t: self.t, x: self.y, y: self.x }
    }
}

#[derive(Clone)]
pub struct BinaryDataset {
    n_rows: usize,
    n_cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    ones: Vec<u32>,
    slot_of: Vec<u32>,
    row_margins: Vec<u32>,
    col_margins: Vec<u32>,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl BinaryDataset {
    /// All-zero `n_rows x n_cols` dataset.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        assert!((n_rows as u64) * (n_cols as u64) < NO_SLOT as u64, "dataset too large for a 32-bit cell index");
        let words_per_row = n_cols.div_ceil(64);
        BinaryDataset {
            n_rows,
            n_cols,
            words_per_row,
            bits: vec![0; n_rows * words_per_row],
            ones: Vec::new(),
            slot_of: vec![NO_SLOT; n_rows * n_cols],
            row_margins: vec![0; n_rows],
            col_margins: vec![0; n_cols],
            row_labels: None,
            col_labels: None,
        }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut d = Self::zeros(n_rows, n_cols);
        for r in 0..n_rows {
            for c in 0..n_cols {
                if f(r, c) {
                    d.set_one(r, c);
                }
            }
        }
        d
    }

    /// Builds a dataset from rows of 0/1 values. All rows must have the
    /// same length and hold only 0 or 1.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::Shape(format!("row {i} has {} cells, expected {n_cols}", r.len())));
            }
            if let Some(v) = r.iter().find(|&&v| v > 1) {
                return Err(Error::value(None, format!("cell value {v} in row {i} is not 0 or 1")));
            }
        }
        Ok(Self::from_fn(rows.len(), n_cols, |r, c| rows[r].as_ref()[c] == 1))
    }

    fn set_one(&mut self, r: usize, c: usize) {
        if self.get(r, c) {
            return;
        }
        self.bits[r * self.words_per_row + c / 64] |= 1u64 << (c % 64);
        let pos = r * self.n_cols + c;
        self.slot_of[pos] = self.ones.len() as u32;
        self.ones.push(pos as u32);
        self.row_margins[r] += 1;
        self.col_margins[c] += 1;
    }

    pub fn with_labels(mut self, row_labels: Option<Vec<String>>, col_labels: Option<Vec<String>>) -> Result<Self> {
        if let Some(l) = &row_labels {
            if l.len() != self.n_rows {
                return Err(Error::Shape(format!("{} row labels for {} rows", l.len(), self.n_rows)));
            }
        }
        if let Some(l) = &col_labels {
            if l.len() != self.n_cols {
                return Err(Error::Shape(format!("{} column labels for {} columns", l.len(), self.n_cols)));
            }
        }
        self.row_labels = row_labels;
        self.col_labels = col_labels;
        Ok(self)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.n_rows && c < self.n_cols);
        (self.bits[r * self.words_per_row + c / 64] >> (c % 64)) & 1 == 1
    }

    /// Packed words of row `r`; bit `c % 64` of word `c / 64` is cell `(r, c)`.
    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        let start = r * self.words_per_row;
        &self.bits[start..start + self.words_per_row]
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn row_margins(&self) -> &[u32] {
        &self.row_margins
    }

    pub fn col_margins(&self) -> &[u32] {
        &self.col_margins
    }

    /// Cached row and column sums.
    pub fn margins(&self) -> (Vec<u32>, Vec<u32>) {
        (self.row_margins.clone(), self.col_margins.clone())
    }

    /// Row and column sums recomputed from the cells.
    pub fn recompute_margins(&self) -> (Vec<u32>, Vec<u32>) {
        let rows = (0..self.n_rows).map(|r| self.row_words(r).iter().map(|w| w.count_ones()).sum()).collect();
        let mut cols = vec![0u32; self.n_cols];
        for r in 0..self.n_rows {
            for (c, col) in cols.iter_mut().enumerate() {
                *col += self.get(r, c) as u32;
            }
        }
        (rows, cols)
    }

    pub fn ones_count(&self) -> usize {
        self.ones.len()
    }

    /// `(row, col)` of the 1-cell stored in `slot`.
    #[inline]
    pub fn one_at(&self, slot: usize) -> (usize, usize) {
        let pos = self.ones[slot] as usize;
        (pos / self.n_cols, pos % self.n_cols)
    }

    /// Iterates over all 1-cells in slot order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ones.len()).map(|i| self.one_at(i))
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    /// Label of column `c`, or its index when the dataset is unlabelled.
    pub fn col_label(&self, c: usize) -> String {
        match &self.col_labels {
            Some(l) => l[c].clone(),
            None => c.to_string(),
        }
    }

    pub fn row_label(&self, r: usize) -> String {
        match &self.row_labels {
            Some(l) => l[r].clone(),
            None => r.to_string(),
        }
    }

    /// Column index for a label; unlabelled datasets accept decimal indices.
    pub fn col_index(&self, label: &str) -> Option<usize> {
        match &self.col_labels {
            Some(l) => l.iter().position(|x| x == label),
            None => label.parse().ok().filter(|&c| c < self.n_cols),
        }
    }

    pub fn row_index(&self, label: &str) -> Option<usize> {
        match &self.row_labels {
            Some(l) => l.iter().position(|x| x == label),
            None => label.parse().ok().filter(|&r| r < self.n_rows),
        }
    }

    /// True when `sw` is a valid checkerboard swap for the current cells.
    pub fn is_applicable(&self, sw: &Swap) -> bool {
        sw.s < self.n_rows
            && sw.t < self.n_rows
            && sw.x < self.n_cols
            && sw.y < self.n_cols
            && sw.s != sw.t
            && sw.x != sw.y
            && self.get(sw.s, sw.x)
            && self.get(sw.t, sw.y)
            && !self.get(sw.s, sw.y)
            && !self.get(sw.t, sw.x)
    }

    /// Applies `sw` in place. Fails without touching the dataset when the
    /// swap is not applicable.
    pub fn apply_swap(&mut self, sw: &Swap) -> Result<()> {
        if !self.is_applicable(sw) {
            return Err(Error::Precondition(format!("swap {sw:?} is not applicable")));
        }
        let i = self.slot_of[sw.s * self.n_cols + sw.x] as usize;
        let j = self.slot_of[sw.t * self.n_cols + sw.y] as usize;
        self.commit_swap(i, j, sw);
        Ok(())
    }

    /// The swap proposed by the 1-cells in slots `i` and `j`, if applicable.
    #[inline]
    pub fn proposal(&self, i: usize, j: usize) -> Option<Swap> {
        let (s, x) = self.one_at(i);
        let (t, y) = self.one_at(j);
        if s == t || x == y || self.get(s, y) || self.get(t, x) {
            return None;
        }
        Some(Swap { s, t, x, y })
    }

    /// Applies a swap obtained from [`proposal`](Self::proposal) on the same
    /// slots. Slot `i` ends up holding `(s, y)` and slot `j` holds `(t, x)`.
    #[inline]
    pub fn commit_swap(&mut self, i: usize, j: usize, sw: &Swap) {
        let Swap { s, t, x, y } = *sw;
        let w = self.words_per_row;
        let (bx, by) = (1u64 << (x % 64), 1u64 << (y % 64));
        self.bits[s * w + x / 64] ^= bx;
        self.bits[s * w + y / 64] ^= by;
        self.bits[t * w + y / 64] ^= by;
        self.bits[t * w + x / 64] ^= bx;

        let n = self.n_cols;
        let (sy, tx) = (s * n + y, t * n + x);
        self.slot_of[s * n + x] = NO_SLOT;
        self.slot_of[t * n + y] = NO_SLOT;
        self.slot_of[sy] = i as u32;
        self.slot_of[tx] = j as u32;
        self.ones[i] = sy as u32;
        self.ones[j] = tx as u32;
    }

    /// Number of cells where `self` and `other` differ.
    pub fn frobenius_sq_distance(&self, other: &BinaryDataset) -> Result<u64> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Shape(format!("{}x{} vs {}x{}", self.n_rows, self.n_cols, other.n_rows, other.n_cols)));
        }
        Ok(self.bits.iter().zip(&other.bits).map(|(a, b)| (a ^ b).count_ones() as u64).sum())
    }

    /// True when both datasets have the same shape and cells, ignoring labels.
    pub fn same_cells(&self, other: &BinaryDataset) -> bool {
        self.n_rows == other.n_rows && self.n_cols == other.n_cols && self.bits == other.bits
    }

    /// New dataset made of the given rows, in the given order, with labels carried over.
    pub fn select_rows(&self, rows: &[usize]) -> BinaryDataset {
        let d = Self::from_fn(rows.len(), self.n_cols, |r, c| self.get(rows[r], c));
        BinaryDataset {
            row_labels: self.row_labels.as_ref().map(|l| rows.iter().map(|&r| l[r].clone()).collect()),
            col_labels: self.col_labels.clone(),
            ..d
        }
    }

    /// Checks every structural invariant. Intended for tests.
    pub fn check_invariants(&self) -> Result<()> {
        let (rows, cols) = self.recompute_margins();
        if rows != self.row_margins || cols != self.col_margins {
            return Err(Error::Precondition("cached margins differ from cells".into()));
        }
        if self.ones.len() != rows.iter().map(|&v| v as usize).sum::<usize>() {
            return Err(Error::Precondition("ones index size differs from cell count".into()));
        }
        for (slot, &pos) in self.ones.iter().enumerate() {
            let (r, c) = (pos as usize / self.n_cols, pos as usize % self.n_cols);
            if !self.get(r, c) || self.slot_of[pos as usize] as usize != slot {
                return Err(Error::Precondition(format!("ones index slot {slot} is stale")));
            }
        }
        for r in 0..self.n_rows {
            let tail = self.n_cols % 64;
            if tail != 0 && self.row_words(r)[self.words_per_row - 1] >> tail != 0 {
                return Err(Error::Precondition(format!("padding bits set in row {r}")));
            }
        }
        Ok(())
    }
}

impl PartialEq for BinaryDataset {
    fn eq(&self, other: &Self) -> bool {
        self.same_cells(other) && self.row_labels == other.row_labels && self.col_labels == other.col_labels
    }
}

impl Eq for BinaryDataset {}

impl Hash for BinaryDataset {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.n_rows.hash(state);
        self.n_cols.hash(state);
        self.bits.hash(state);
    }
}

impl fmt::Debug for BinaryDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryDataset {}x{} ({} ones)", self.n_rows, self.n_cols, self.ones.len())?;
        for r in 0..self.n_rows.min(32) {
            let row: String = (0..self.n_cols.min(80)).map(|c| if self.get(r, c) { '1' } else { '0' }).collect();
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    #[test]
    fn toy_margins() {
        let d = toy::dataset();
        assert_eq!((d.n_rows(), d.n_cols(), d.ones_count()), (9, 8, 33));
        assert_eq!(d.row_margins(), &[5, 3, 4, 6, 1, 4, 4, 2, 4]);
        assert_eq!(d.col_margins(), &[4, 3, 7, 5, 4, 4, 2, 4]);
        d.check_invariants().unwrap();
    }

    #[test]
    fn trivial_margins() {
        let z = BinaryDataset::zeros(3, 3);
        assert_eq!(z.margins(), (vec![0; 3], vec![0; 3]));
        let id = BinaryDataset::from_fn(3, 3, |r, c| r == c);
        assert_eq!(id.margins(), (vec![1; 3], vec![1; 3]));
    }

    #[test]
    fn toy_swap() {
        let mut d = toy::dataset();
        let (b, f) = (d.col_index("B").unwrap(), d.col_index("F").unwrap());
        let sw = Swap::new(0, 1, b, f);
        let margins = d.margins();
        d.apply_swap(&sw).unwrap();
        assert!(!d.get(0, b) && d.get(0, f) && d.get(1, b) && !d.get(1, f));
        assert_eq!(d.margins(), margins);
        assert_eq!(d.recompute_margins(), margins);
        d.check_invariants().unwrap();
        assert_eq!(d.frobenius_sq_distance(&toy::dataset()).unwrap(), 4);
        d.apply_swap(&sw.inverse()).unwrap();
        assert_eq!(d, toy::dataset());
    }

    #[test]
    fn minimal_swap() {
        let mut d = BinaryDataset::from_rows(&[[1, 0], [0, 1]]).unwrap();
        d.apply_swap(&Swap::new(0, 1, 0, 1)).unwrap();
        assert_eq!(d, BinaryDataset::from_rows(&[[0, 1], [1, 0]]).unwrap());
    }

    #[test]
    fn inapplicable_swap_is_rejected() {
        let mut d = BinaryDataset::from_rows(&[[1, 1], [0, 1]]).unwrap();
        let before = d.clone();
        assert!(matches!(d.apply_swap(&Swap::new(0, 1, 0, 1)), Err(Error::Precondition(_))));
        assert_eq!(d, before);
        assert!(d.apply_swap(&Swap::new(0, 0, 0, 1)).is_err());
        assert!(d.apply_swap(&Swap::new(0, 5, 0, 1)).is_err());
    }

    #[test]
    fn distance_basics() {
        let a = toy::dataset();
        assert_eq!(a.frobenius_sq_distance(&a).unwrap(), 0);
        let b = BinaryDataset::from_fn(9, 8, |r, c| a.get(r, c) ^ (r == 4 && c == 7));
        assert_eq!(a.frobenius_sq_distance(&b).unwrap(), 1);
        assert!(matches!(a.frobenius_sq_distance(&BinaryDataset::zeros(9, 7)), Err(Error::Shape(_))));
    }

    #[test]
    fn from_rows_rejects_bad_input() {
        assert!(matches!(BinaryDataset::from_rows(&[vec![1, 0], vec![1]]), Err(Error::Shape(_))));
        assert!(matches!(BinaryDataset::from_rows(&[[2u8, 0]]), Err(Error::Value { .. })));
    }

    #[test]
    fn wide_rows_keep_padding_clear() {
        let d = BinaryDataset::from_fn(3, 130, |r, c| (r + c) % 3 == 0);
        assert_eq!(d.words_per_row(), 3);
        d.check_invariants().unwrap();
    }

    #[test]
    fn select_rows_keeps_labels() {
        let d = toy::dataset();
        let s = d.select_rows(&[8, 0]);
        assert_eq!(s.row_labels().unwrap(), &["t9".to_string(), "t1".to_string()]);
        assert_eq!(s.col_labels(), d.col_labels());
        assert!((0..8).all(|c| s.get(0, c) == d.get(8, c) && s.get(1, c) == d.get(0, c)));
    }
}
