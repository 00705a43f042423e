use super::{Chain, NullModel};
use crate::error::Result;
use crate::matrix::BinaryDataset;
use crate::rng::{stream_rng, Stream};

/// Randomizations averaged at each doubling stage when distances are
/// concentrated, and the size of the pilot stage.
pub const CONVERGENCE_RUNS: usize = 5;
/// Upper bound on randomizations per stage for noisy (small) matrices.
pub const MAX_CONVERGENCE_RUNS: usize = 100;
/// Relative change in mean distance below which the chain counts as mixed.
pub const CONVERGENCE_TOLERANCE: f64 = 0.01;
/// Floor on the previous mean in the relative change, for 0-distance stages.
pub const CONVERGENCE_EPSILON: f64 = 1e-12;
/// The swap count never exceeds `ones << MAX_DOUBLINGS`.
const MAX_DOUBLINGS: u32 = 20;

/// Multiple of the standard error of the change in mean distance under
/// which a change counts as noise.
pub const CONVERGENCE_NOISE_SE: f64 = 2.0;

/// Picks a swap count by doubling until the mean distance of the
/// randomizations from `d` stops changing.
///
/// Starts at the number of ones in `d` (at least 1). Each stage draws fresh
/// randomizations with `K` steps from `d` and compares their mean
/// Frobenius distance to `d` against the previous stage's mean. The chain
/// counts as mixed when the relative change is below
/// [`CONVERGENCE_TOLERANCE`], or when the change is within
/// [`CONVERGENCE_NOISE_SE`] standard errors of zero.
///
/// Stages average [`CONVERGENCE_RUNS`] randomizations unless the first
/// stage shows the distances are too spread out for that: then the count
/// grows until the standard error of a stage mean is about the tolerance,
/// up to [`MAX_CONVERGENCE_RUNS`]. Large matrices keep five runs.
pub fn choose_swap_count(d: &BinaryDataset, model: &NullModel, seed: u64) -> Result<u64> {
    model.validate(d)?;
    let ones = d.ones_count().max(1) as u64;
    let cap = ones << MAX_DOUBLINGS;
    let mut steps = ones;
    let mut runs = CONVERGENCE_RUNS;
    let mut previous: Option<Stage> = None;
    for stage in 0u64.. {
        let mut distances = stage_distances(d, model, seed, stage, steps, 0..runs)?;
        if stage == 0 {
            runs = runs_for(&distances);
            distances.extend(stage_distances(d, model, seed, stage, steps, CONVERGENCE_RUNS..runs)?);
        }
        let current = Stage::new(&distances);
        if let Some(prev) = previous {
            if current.settled_after(&prev) {
                log::debug!("swap count converged at {steps} (mean distance {}, {runs} runs)", current.mean);
                return Ok(steps);
            }
        }
        if steps >= cap {
            log::warn!("swap count hit the cap of {cap} attempts without converging");
            return Ok(steps);
        }
        previous = Some(current);
        steps *= 2;
    }
    unreachable!()
}

fn stage_distances(
    d: &BinaryDataset,
    model: &NullModel,
    seed: u64,
    stage: u64,
    steps: u64,
    runs: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    runs.map(|run| {
        let mut chain = Chain::new(d.clone(), model)?;
        let index = stage * MAX_CONVERGENCE_RUNS as u64 + run as u64;
        chain.run(steps, &mut stream_rng(seed, Stream::Convergence, index));
        Ok(chain.dataset().frobenius_sq_distance(d)? as f64)
    })
    .collect()
}

/// Runs needed for the standard error of a stage mean to reach the
/// tolerance, judged from the pilot stage's coefficient of variation.
fn runs_for(pilot: &[f64]) -> usize {
    let s = Stage::new(pilot);
    if s.mean <= CONVERGENCE_EPSILON {
        return CONVERGENCE_RUNS;
    }
    let cv = (s.var * pilot.len() as f64).sqrt() / s.mean;
    let needed = (cv / CONVERGENCE_TOLERANCE).powi(2).ceil();
    (needed as usize).clamp(CONVERGENCE_RUNS, MAX_CONVERGENCE_RUNS)
}

#[derive(Debug, Clone, Copy)]
struct Stage {
    mean: f64,
    /// Variance of the mean.
    var: f64,
}

impl Stage {
    fn new(distances: &[f64]) -> Self {
        let n = distances.len() as f64;
        let mean = distances.iter().sum::<f64>() / n;
        let var = distances.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n;
        Stage { mean, var }
    }

    fn settled_after(&self, prev: &Stage) -> bool {
        let change = (self.mean - prev.mean).abs();
        change / prev.mean.max(CONVERGENCE_EPSILON) < CONVERGENCE_TOLERANCE
            || change <= CONVERGENCE_NOISE_SE * (self.var + prev.var).sqrt()
    }
}
