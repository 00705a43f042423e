//! Row partitions, k-means over binary rows and the clustering error.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryDataset;
use crate::rng::{stream_rng, Stream};

const MAX_LLOYD_ITERATIONS: usize = 100;

/// A partition of the rows into `k` non-empty clusters.
///
/// Cluster ids are canonical: they are numbered by first appearance in
/// row order, so equal partitions always compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawClustering")]
pub struct RowClustering {
    assignment: Vec<u32>,
    k: usize,
}

#[derive(Deserialize)]
struct RawClustering {
    assignment: Vec<u32>,
}

impl TryFrom<RawClustering> for RowClustering {
    type Error = String;

    fn try_from(raw: RawClustering) -> std::result::Result<Self, String> {
        let c = RowClustering::new(raw.assignment.iter().map(|&a| a as usize));
        if c.assignment != raw.assignment {
            return Err("cluster ids are not in canonical order".into());
        }
        Ok(c)
    }
}

impl RowClustering {
    /// Builds a clustering from arbitrary per-row labels; labels are
    /// renumbered in order of first appearance.
    pub fn new<I: IntoIterator<Item = usize>>(labels: I) -> Self {
        let mut remap: Vec<Option<u32>> = Vec::new();
        let mut k = 0u32;
        let assignment = labels
            .into_iter()
            .map(|l| {
                if l >= remap.len() {
                    remap.resize(l + 1, None);
                }
                *remap[l].get_or_insert_with(|| {
                    k += 1;
                    k - 1
                })
            })
            .collect();
        RowClustering { assignment, k: k as usize }
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.assignment.len()
    }

    /// Row indices of each cluster, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (r, &c) in self.assignment.iter().enumerate() {
            m[c as usize].push(r);
        }
        m
    }

    pub(crate) fn check(&self, d: &BinaryDataset) -> Result<()> {
        if self.n_rows() != d.n_rows() {
            return Err(Error::Shape(format!("clustering covers {} rows, dataset has {}", self.n_rows(), d.n_rows())));
        }
        Ok(())
    }
}

/// Sum of squared Euclidean distances between rows and their cluster's
/// column-mean centroid.
///
/// For 0-1 rows a cluster of size `n` with `c` ones in some column
/// contributes `c * (n - c) / n` for that column, so each cluster's
/// contribution is an exact integer divided by its size. Clusters are
/// summed in id order.
pub fn clustering_error(d: &BinaryDataset, c: &RowClustering) -> f64 {
    assert_eq!(c.n_rows(), d.n_rows(), "clustering does not match dataset");
    let mut counts = vec![0u64; c.k() * d.n_cols()];
    let mut sizes = vec![0u64; c.k()];
    for r in 0..d.n_rows() {
        sizes[c.assignment[r] as usize] += 1;
    }
    for (r, col) in d.ones() {
        counts[c.assignment[r] as usize * d.n_cols() + col] += 1;
    }
    let mut err = 0.0;
    for (k, &n) in sizes.iter().enumerate() {
        let numerator: u64 = counts[k * d.n_cols()..(k + 1) * d.n_cols()].iter().map(|&ones| ones * (n - ones)).sum();
        err += numerator as f64 / n as f64;
    }
    err
}

/// Best of `restarts` Lloyd runs by clustering error.
///
/// Each run starts from `k` distinct rows chosen uniformly at random;
/// restart `i` draws from its own random stream derived from `seed`.
pub fn kmeans(d: &BinaryDataset, k: usize, restarts: usize, seed: u64) -> Result<RowClustering> {
    if k == 0 || k > d.n_rows() {
        return Err(Error::usage(format!("k = {k} must be in 1..={}", d.n_rows())));
    }
    if restarts == 0 {
        return Err(Error::usage("restarts must be at least 1"));
    }
    let mut best: Option<(f64, RowClustering)> = None;
    for run in 0..restarts {
        let (c, _) = lloyd(d, k, seed, run as u64);
        let err = clustering_error(d, &c);
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, c));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// One Lloyd run. Returns the clustering and the clustering error after
/// every assignment step.
pub(crate) fn lloyd(d: &BinaryDataset, k: usize, seed: u64, run: u64) -> (RowClustering, Vec<f64>) {
    let (m, n) = (d.n_rows(), d.n_cols());
    let mut rng = stream_rng(seed, Stream::KMeans, run);
    let row = |r: usize| (0..n).map(move |c| d.get(r, c) as u8 as f64);

    let mut centroids: Vec<f64> = Vec::with_capacity(k * n);
    for r in sample(&mut rng, m, k).into_iter() {
        centroids.extend(row(r));
    }

    let dist = |r: usize, cent: &[f64]| -> f64 { row(r).zip(cent).map(|(v, c)| (v - c) * (v - c)).sum() };

    let mut assignment = vec![u32::MAX; m];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (r, slot) in assignment.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0u32);
            for c in 0..k {
                let dd = dist(r, &centroids[c * n..(c + 1) * n]);
                // strict: ties keep the lowest cluster id
                if dd < best.0 {
                    best = (dd, c as u32);
                }
            }
            if *slot != best.1 {
                *slot = best.1;
                changed = true;
            }
        }
        trace.push(clustering_error(d, &RowClustering::new(assignment.iter().map(|&a| a as usize))));
        if !changed {
            break;
        }

        let mut sizes = vec![0usize; k];
        centroids.iter_mut().for_each(|v| *v = 0.0);
        for (r, &a) in assignment.iter().enumerate() {
            sizes[a as usize] += 1;
            for (v, x) in centroids[a as usize * n..(a as usize + 1) * n].iter_mut().zip(row(r)) {
                *v += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                let inv = 1.0 / sizes[c] as f64;
                centroids[c * n..(c + 1) * n].iter_mut().for_each(|v| *v *= inv);
            }
        }
        let mut taken = vec![false; m];
        for c in (0..k).filter(|&c| sizes[c] == 0) {
            let far = (0..m)
                .filter(|&r| !taken[r])
                .map(|r| {
                    let a = assignment[r] as usize;
                    (dist(r, &centroids[a * n..(a + 1) * n]), r)
                })
                .fold(None, |acc: Option<(f64, usize)>, cur| match acc {
                    Some(a) if a.0 >= cur.0 => Some(a),
                    _ => Some(cur),
                });
            if let Some((_, r)) = far {
                taken[r] = true;
                let reseed: Vec<f64> = row(r).collect();
                centroids[c * n..(c + 1) * n].copy_from_slice(&reseed);
            }
        }
    }
    (RowClustering::new(assignment.into_iter().map(|a| a as usize)), trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    #[test]
    fn canonical_ids() {
        let c = RowClustering::new([7, 7, 2, 9, 2]);
        assert_eq!(c.assignment(), &[0, 0, 1, 2, 1]);
        assert_eq!(c.k(), 3);
        assert_eq!(c.members(), vec![vec![0, 1], vec![2, 4], vec![3]]);
    }

    #[test]
    fn error_small_cases() {
        let d = BinaryDataset::from_rows(&[[1, 0], [0, 1]]).unwrap();
        assert_eq!(clustering_error(&d, &RowClustering::new([0, 0])), 1.0);
        assert_eq!(clustering_error(&d, &RowClustering::new([0, 1])), 0.0);
    }

    #[test]
    fn toy_clustering_error_golden() {
        // Direct evaluation of the centroid formula in an external script: 46/5.
        let d = toy::dataset();
        let e = clustering_error(&d, &toy::clustering());
        assert!((e - 9.2).abs() < 1e-12, "{e}");
    }

    #[test]
    fn error_matches_centroid_formula() {
        let d = toy::dataset();
        let c = RowClustering::new([0, 1, 0, 2, 1, 1, 2, 0, 1]);
        let mut direct = 0.0;
        for members in c.members() {
            for col in 0..d.n_cols() {
                let mean = members.iter().filter(|&&r| d.get(r, col)).count() as f64 / members.len() as f64;
                direct += members.iter().map(|&r| (d.get(r, col) as u8 as f64 - mean).powi(2)).sum::<f64>();
            }
        }
        assert!((clustering_error(&d, &c) - direct).abs() < 1e-9);
    }

    #[test]
    fn toy_two_clusters() {
        let d = toy::dataset();
        let c = kmeans(&d, 2, 10, 1).unwrap();
        assert_eq!(c, toy::clustering());
    }

    #[test]
    fn k_equals_rows_gives_zero_error() {
        let d = toy::dataset();
        let c = kmeans(&d, 9, 3, 5).unwrap();
        assert_eq!(c.k(), 9);
        assert_eq!(clustering_error(&d, &c), 0.0);
    }

    #[test]
    fn two_groups_of_identical_rows() {
        let d = BinaryDataset::from_rows(&[[1, 1, 0], [0, 0, 1], [1, 1, 0], [0, 0, 1], [1, 1, 0]]).unwrap();
        let c = kmeans(&d, 2, 4, 0).unwrap();
        assert_eq!(c, RowClustering::new([0, 1, 0, 1, 0]));
        assert_eq!(clustering_error(&d, &c), 0.0);
    }

    #[test]
    fn kmeans_is_seed_deterministic_and_validates_k() {
        let d = toy::dataset();
        assert_eq!(kmeans(&d, 3, 5, 42).unwrap(), kmeans(&d, 3, 5, 42).unwrap());
        assert!(matches!(kmeans(&d, 10, 1, 0), Err(Error::Usage(_))));
        assert!(matches!(kmeans(&d, 0, 1, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn lloyd_error_never_increases() {
        let d = BinaryDataset::from_fn(60, 12, |r, c| (r * 7 + c * 13) % 5 < 2 || (r < 30 && c < 4));
        for run in 0..20 {
            let (_, trace) = lloyd(&d, 4, 3, run);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{trace:?}");
            }
        }
    }

    #[test]
    fn deserialize_rejects_noncanonical() {
        assert!(serde_json::from_str::<RowClustering>(r#"{"assignment":[1,0],"k":2}"#).is_err());
        let c: RowClustering = serde_json::from_str(r#"{"assignment":[0,1,0],"k":2}"#).unwrap();
        assert_eq!(c.k(), 2);
    }
}
