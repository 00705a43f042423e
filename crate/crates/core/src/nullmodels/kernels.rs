use rand::Rng;

use super::NullModel;
use crate::clustering::RowClustering;
use crate::error::Result;
use crate::matrix::BinaryDataset;
use crate::patterns::FrequencyTracker;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// The proposal was not a valid swap; the state is unchanged.
    SelfLoop,
    /// A valid swap was turned down by the Metropolis test.
    Rejected,
}

/// One attempt of the margin-preserving swap chain.
///
/// Two 1-cells are drawn independently and uniformly (with replacement);
/// if they form a checkerboard the swap is applied, otherwise the chain
/// stays put.
#[inline]
pub fn swap_step<R: Rng + ?Sized>(d: &mut BinaryDataset, rng: &mut R) -> StepOutcome {
    let n = d.ones_count();
    if n == 0 {
        return StepOutcome::SelfLoop;
    }
    let i = rng.gen_range(0..n);
    let j = rng.gen_range(0..n);
    match d.proposal(i, j) {
        Some(sw) => {
            d.commit_swap(i, j, &sw);
            StepOutcome::Applied
        }
        None => StepOutcome::SelfLoop,
    }
}

/// Slots of the ones index grouped by the cluster of their row.
///
/// Swaps never move a 1 between rows, so the grouping stays valid for the
/// dataset it was built from and for all its clones.
#[derive(Debug, Clone)]
pub struct ClusterSlots {
    slots: Vec<Vec<u32>>,
}

impl ClusterSlots {
    pub fn new(d: &BinaryDataset, c: &RowClustering) -> Result<Self> {
        c.check(d)?;
        let mut slots = vec![Vec::new(); c.k()];
        for (slot, (r, _)) in d.ones().enumerate() {
            slots[c.assignment()[r] as usize].push(slot as u32);
        }
        Ok(ClusterSlots { slots })
    }
}

/// One attempt of the cluster-preserving chain: pick a cluster uniformly,
/// then two 1-cells uniformly from that cluster's rows.
#[inline]
pub fn cluster_swap_step<R: Rng + ?Sized>(d: &mut BinaryDataset, clusters: &ClusterSlots, rng: &mut R) -> StepOutcome {
    if clusters.slots.is_empty() {
        return StepOutcome::SelfLoop;
    }
    let slots = &clusters.slots[rng.gen_range(0..clusters.slots.len())];
    if slots.is_empty() {
        return StepOutcome::SelfLoop;
    }
    let i = slots[rng.gen_range(0..slots.len())] as usize;
    let j = slots[rng.gen_range(0..slots.len())] as usize;
    match d.proposal(i, j) {
        Some(sw) => {
            d.commit_swap(i, j, &sw);
            StepOutcome::Applied
        }
        None => StepOutcome::SelfLoop,
    }
}

/// Metropolis acceptance probability for an energy change `delta`.
#[inline]
pub(crate) fn acceptance(w: f64, delta: i64) -> f64 {
    if delta <= 0 {
        1.0
    } else {
        (-w * delta as f64).exp()
    }
}

/// One Metropolis attempt for the soft itemset model. `tracker` must hold
/// the frequencies of the current state and is updated on acceptance.
#[inline]
pub fn itemset_swap_step<R: Rng + ?Sized>(
    d: &mut BinaryDataset,
    tracker: &mut FrequencyTracker,
    w: f64,
    rng: &mut R,
) -> StepOutcome {
    let n = d.ones_count();
    if n == 0 {
        return StepOutcome::SelfLoop;
    }
    let i = rng.gen_range(0..n);
    let j = rng.gen_range(0..n);
    let Some(sw) = d.proposal(i, j) else {
        return StepOutcome::SelfLoop;
    };
    let delta = tracker.delta(d, &sw);
    if delta > 0 && rng.gen::<f64>() >= acceptance(w, delta) {
        return StepOutcome::Rejected;
    }
    d.commit_swap(i, j, &sw);
    tracker.commit();
    StepOutcome::Applied
}

enum Kernel {
    Margins,
    Cluster(ClusterSlots),
    Soft { tracker: FrequencyTracker, w: f64 },
}

/// A dataset together with the kernel state of one null model.
pub struct Chain {
    data: BinaryDataset,
    kernel: Kernel,
}

impl Chain {
    pub fn new(data: BinaryDataset, model: &NullModel) -> Result<Self> {
        model.validate(&data)?;
        let kernel = match model {
            NullModel::Margins => Kernel::Margins,
            NullModel::ClusterMargins { clustering } => Kernel::Cluster(ClusterSlots::new(&data, clustering)?),
            NullModel::ItemsetMarginsSoft { family, w } => {
                Kernel::Soft { tracker: FrequencyTracker::new(family, &data)?, w: *w }
            }
        };
        Ok(Chain { data, kernel })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        match &mut self.kernel {
            Kernel::Margins => swap_step(&mut self.data, rng),
            Kernel::Cluster(slots) => cluster_swap_step(&mut self.data, slots, rng),
            Kernel::Soft { tracker, w } => itemset_swap_step(&mut self.data, tracker, *w, rng),
        }
    }

    pub fn run<R: Rng + ?Sized>(&mut self, steps: u64, rng: &mut R) {
        match &mut self.kernel {
            Kernel::Margins => (0..steps).for_each(|_| {
                swap_step(&mut self.data, rng);
            }),
            Kernel::Cluster(slots) => (0..steps).for_each(|_| {
                cluster_swap_step(&mut self.data, slots, rng);
            }),
            Kernel::Soft { tracker, w } => (0..steps).for_each(|_| {
                itemset_swap_step(&mut self.data, tracker, *w, rng);
            }),
        }
    }

    /// Current frequency difference for the soft model, `None` otherwise.
    pub fn energy(&self) -> Option<u64> {
        match &self.kernel {
            Kernel::Soft { tracker, .. } => Some(tracker.energy()),
            _ => None,
        }
    }

    pub fn dataset(&self) -> &BinaryDataset {
        &self.data
    }

    pub fn into_dataset(self) -> BinaryDataset {
        self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::clustering_error;
    use crate::patterns::{itemset_difference, Itemset, ItemsetFamily};
    use crate::rng::{stream_rng, Stream};
    use crate::toy;

    fn soft_model(family: ItemsetFamily, w: f64) -> NullModel {
        NullModel::ItemsetMarginsSoft { family, w }
    }

    #[test]
    fn minimal_matrix_has_one_move() {
        let start = BinaryDataset::from_rows(&[[1, 0], [0, 1]]).unwrap();
        let flipped = BinaryDataset::from_rows(&[[0, 1], [1, 0]]).unwrap();
        // slots (0, 1) and (1, 0) are the only checkerboard proposals
        let mut d = start.clone();
        let sw = d.proposal(0, 1).unwrap();
        d.commit_swap(0, 1, &sw);
        assert_eq!(d, flipped);
        assert!(start.proposal(0, 0).is_none());
        assert!(start.proposal(1, 1).is_none());
    }

    #[test]
    fn all_ones_only_self_loops() {
        let mut d = BinaryDataset::from_fn(4, 5, |_, _| true);
        let mut rng = stream_rng(1, Stream::Forward, 0);
        for _ in 0..1000 {
            assert_eq!(swap_step(&mut d, &mut rng), StepOutcome::SelfLoop);
        }
    }

    #[test]
    fn empty_dataset_self_loops() {
        let mut d = BinaryDataset::zeros(0, 0);
        let mut rng = stream_rng(1, Stream::Forward, 0);
        assert_eq!(swap_step(&mut d, &mut rng), StepOutcome::SelfLoop);
        let slots = ClusterSlots::new(&d, &RowClustering::new([])).unwrap();
        assert_eq!(cluster_swap_step(&mut d, &slots, &mut rng), StepOutcome::SelfLoop);
    }

    #[test]
    fn singleton_clusters_never_move() {
        let mut d = toy::dataset();
        let slots = ClusterSlots::new(&d, &RowClustering::new(0..9)).unwrap();
        let mut rng = stream_rng(3, Stream::Forward, 0);
        for _ in 0..5000 {
            assert_eq!(cluster_swap_step(&mut d, &slots, &mut rng), StepOutcome::SelfLoop);
        }
        assert_eq!(d, toy::dataset());
    }

    #[test]
    fn cluster_steps_keep_clustering_error() {
        let mut d = toy::dataset();
        let c = toy::clustering();
        let e0 = clustering_error(&d, &c);
        let slots = ClusterSlots::new(&d, &c).unwrap();
        let mut rng = stream_rng(4, Stream::Forward, 0);
        let mut applied = 0;
        for _ in 0..10_000 {
            if cluster_swap_step(&mut d, &slots, &mut rng) == StepOutcome::Applied {
                applied += 1;
                assert!((clustering_error(&d, &c) - e0).abs() <= 1e-9 * e0);
            }
        }
        assert!(applied > 100);
        assert_eq!(d.margins(), toy::dataset().margins());
    }

    #[test]
    fn acceptance_probabilities() {
        assert_eq!(acceptance(4.0, 0), 1.0);
        assert_eq!(acceptance(4.0, -2), 1.0);
        assert!((acceptance(4.0, 1) - 0.018).abs() < 5e-4);
        assert_eq!(acceptance(4.0, 1), (-4.0f64).exp());
    }

    #[test]
    fn soft_chain_tracks_energy() {
        let d = toy::dataset();
        let fam = ItemsetFamily::with_targets_from(
            [Itemset::from_labels(&d, "A B").unwrap(), Itemset::from_labels(&d, "B H").unwrap()],
            &d,
        )
        .unwrap();
        let mut chain = Chain::new(d, &soft_model(fam.clone(), 1.0)).unwrap();
        let mut rng = stream_rng(5, Stream::Forward, 0);
        let mut outcomes = [0; 3];
        for _ in 0..20_000 {
            outcomes[chain.step(&mut rng) as usize] += 1;
            assert_eq!(chain.energy().unwrap(), itemset_difference(&fam, chain.dataset()).unwrap());
        }
        assert!(outcomes.iter().all(|&n| n > 0), "{outcomes:?}");
    }
}
