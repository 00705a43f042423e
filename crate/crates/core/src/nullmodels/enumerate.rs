use crate::error::{Error, Result};
use crate::matrix::BinaryDataset;

/// Largest `rows * cols` accepted by [`enumerate_margin_class`].
pub const MAX_ENUMERATION_CELLS: usize = 20;

/// Every 0-1 matrix with the same row and column sums as `d`, each once.
///
/// Rows are filled one at a time by backtracking over column subsets of
/// the required size, pruning on the remaining column capacity. Labels of
/// `d` are copied onto every member.
pub fn enumerate_margin_class(d: &BinaryDataset) -> Result<Vec<BinaryDataset>> {
    let (m, n) = (d.n_rows(), d.n_cols());
    if m * n > MAX_ENUMERATION_CELLS {
        return Err(Error::usage(format!(
            "margin class enumeration is limited to {MAX_ENUMERATION_CELLS} cells, got {m}x{n}"
        )));
    }
    let rows: Vec<usize> = d.row_margins().iter().map(|&v| v as usize).collect();
    let mut cols_left: Vec<usize> = d.col_margins().iter().map(|&v| v as usize).collect();
    let mut current = vec![vec![false; n]; m];
    let mut out = Vec::new();
    fill_row(0, &rows, &mut cols_left, &mut current, &mut out);
    out.into_iter()
        .map(|cells| {
            BinaryDataset::from_fn(m, n, |r, c| cells[r][c])
                .with_labels(d.row_labels().map(<[_]>::to_vec), d.col_labels().map(<[_]>::to_vec))
        })
        .collect()
}

fn fill_row(
    r: usize,
    rows: &[usize],
    cols_left: &mut [usize],
    current: &mut [Vec<bool>],
    out: &mut Vec<Vec<Vec<bool>>>,
) {
    if r == rows.len() {
        if cols_left.iter().all(|&c| c == 0) {
            out.push(current.to_vec());
        }
        return;
    }
    // a column cannot need more ones than there are rows left
    let rows_left = rows.len() - r;
    if cols_left.iter().any(|&c| c > rows_left) {
        return;
    }
    choose(r, 0, rows[r], rows, cols_left, current, out);
}

fn choose(
    r: usize,
    from: usize,
    needed: usize,
    rows: &[usize],
    cols_left: &mut [usize],
    current: &mut [Vec<bool>],
    out: &mut Vec<Vec<Vec<bool>>>,
) {
    if needed == 0 {
        fill_row(r + 1, rows, cols_left, current, out);
        return;
    }
    for c in from..cols_left.len() {
        if cols_left.len() - c < needed {
            break;
        }
        if cols_left[c] == 0 {
            continue;
        }
        cols_left[c] -= 1;
        current[r][c] = true;
        choose(r, c + 1, needed - 1, rows, cols_left, current, out);
        current[r][c] = false;
        cols_left[c] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn with_margins(rows: &[u8], cols: &[u8]) -> BinaryDataset {
        // any member of the class will do as a seed: build one greedily
        let mut left = cols.to_vec();
        let m: Vec<Vec<u8>> = rows
            .iter()
            .map(|&need| {
                let mut order: Vec<usize> = (0..cols.len()).collect();
                order.sort_by_key(|&c| std::cmp::Reverse(left[c]));
                let mut row = vec![0u8; cols.len()];
                for &c in order.iter().take(need as usize) {
                    row[c] = 1;
                    left[c] -= 1;
                }
                row
            })
            .collect();
        let d = BinaryDataset::from_rows(&m).unwrap();
        assert_eq!(d.col_margins().iter().map(|&v| v as u8).collect::<Vec<_>>(), cols);
        d
    }

    #[test]
    fn permutation_matrices() {
        let class = enumerate_margin_class(&with_margins(&[1, 1], &[1, 1])).unwrap();
        assert_eq!(class.len(), 2);
    }

    #[test]
    fn forced_single_row() {
        let class = enumerate_margin_class(&with_margins(&[2], &[1, 1])).unwrap();
        assert_eq!(class, vec![BinaryDataset::from_rows(&[[1, 1]]).unwrap()]);
    }

    #[test]
    fn class_sizes_match_brute_force() {
        // Sizes frozen from an exhaustive scan over all 2^(m*n) matrices.
        for (rows, cols, size) in [
            (&[2, 2, 1, 1][..], &[2, 2, 1, 1][..], 34),
            (&[2, 2, 1], &[2, 1, 1, 1], 12),
            (&[2, 1, 1, 2], &[1, 2, 1, 1, 1], 78),
        ] {
            let d = with_margins(rows, cols);
            let class = enumerate_margin_class(&d).unwrap();
            assert_eq!(class.len(), size);
            let distinct: HashSet<_> = class.iter().collect();
            assert_eq!(distinct.len(), size);
            assert!(class.iter().all(|x| x.margins() == d.margins()));
            assert!(class.contains(&d));
        }
    }

    #[test]
    fn size_guard() {
        let d = BinaryDataset::zeros(3, 7);
        assert!(matches!(enumerate_margin_class(&d), Err(Error::Usage(_))));
    }
}
