use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{Chain, ChainConfig, NullModel};
use crate::error::{Error, Result};
use crate::matrix::BinaryDataset;
use crate::rng::{stream_rng, Stream};

/// Randomized datasets drawn by [`sample`], in chain order.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub datasets: Vec<BinaryDataset>,
    /// The swap count each chain ran, after resolving `auto`.
    pub swap_attempts: u64,
}

/// Draws `cfg.samples` datasets exchangeable with `d` under `model`.
pub fn sample(d: &BinaryDataset, model: &NullModel, cfg: &ChainConfig) -> Result<SampleSet> {
    let (datasets, swap_attempts) = sample_map(d, model, cfg, None, |_, s| s.clone())?;
    Ok(SampleSet { datasets, swap_attempts })
}

/// Like [`sample`], but hands each end state to `f` (with its chain index)
/// instead of keeping it, so large datasets need not all live in memory.
///
/// Forward chains run in parallel; results come back in chain order and
/// `progress` is called with the number of finished chains.
pub fn sample_map<T, F>(
    d: &BinaryDataset,
    model: &NullModel,
    cfg: &ChainConfig,
    progress: Option<&(dyn Fn(usize) + Sync)>,
    f: F,
) -> Result<(Vec<T>, u64)>
where
    T: Send,
    F: Fn(usize, &BinaryDataset) -> T + Sync,
{
    if cfg.samples == 0 {
        return Err(Error::usage("at least one sample is required"));
    }
    model.validate(d)?;
    let steps = cfg.resolve(d, model)?;

    let mut backward = Chain::new(d.clone(), model)?;
    backward.run(steps, &mut stream_rng(cfg.seed, Stream::Backward, 0));
    let hub = backward.into_dataset();

    let done = AtomicUsize::new(0);
    let out = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut chain = Chain::new(hub.clone(), model)?;
            chain.run(steps, &mut stream_rng(cfg.seed, Stream::Forward, i as u64));
            let value = f(i, chain.dataset());
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(p) = progress {
                p(n);
            }
            Ok(value)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok((out, steps))
}
