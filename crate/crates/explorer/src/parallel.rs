//! Parallel drivers for the core kernels. Every stage produces the same bytes
//! for any worker count: work is split into independent units whose results
//! are combined in a fixed order.

use owa_core::cluster::{accumulate_squared_row, load_block, SquaredDistanceSums};
use owa_core::owa::compute_map_into;
use owa_core::strategy::generate_weights;
use owa_core::{
    CriterionStack, DecisionPoint, DissimilarityMatrix, MapSource, OrderWeights,
    PixelPermutationCache, StrategyError,
};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::MapStoreWriter;

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Order weights for every point; the first failure in design order wins.
pub fn weights_for_design(points: &[DecisionPoint], n: usize) -> Result<Vec<OrderWeights>> {
    let results: Vec<Result<OrderWeights, StrategyError>> =
        points.par_iter().map(|&p| generate_weights(p, n)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|source| Error::Strategy {
                index: Some(i),
                source,
            })
        })
        .collect()
}

/// Maps per batch so that one batch of valid-pixel vectors fits the budget.
pub fn maps_per_batch(pixels: usize, budget_bytes: usize) -> usize {
    (budget_bytes / (8 * pixels.max(1))).max(1)
}

/// Computes one map per weight vector and appends them to `store` in order.
pub fn batch_compute(
    stack: &CriterionStack,
    cache: &PixelPermutationCache,
    weights: &[OrderWeights],
    budget_bytes: usize,
    store: &mut MapStoreWriter,
) -> Result<()> {
    let pixels = stack.valid_cells().len();
    for batch in weights.chunks(maps_per_batch(pixels, budget_bytes)) {
        let maps: Vec<Result<Vec<f64>>> = batch
            .par_iter()
            .map(|w| {
                let mut out = vec![0.0; pixels];
                compute_map_into(stack, cache, w, &mut out)?;
                Ok(out)
            })
            .collect();
        for map in maps {
            store.append(&map?)?;
        }
    }
    Ok(())
}

/// Pairwise Euclidean distances. Blocks are read in order and each block's
/// rows are accumulated concurrently, so every entry sums its pixels in the
/// same sequence as the serial kernel.
pub fn pairwise_euclidean_par<S>(source: &S, block_pixels: usize) -> Result<DissimilarityMatrix>
where
    S: MapSource + Sync,
    S::Error: std::fmt::Display,
{
    let m = source.map_count();
    if m < 2 {
        return Err(Error::Data(format!("need at least 2 maps, got {m}")));
    }
    let pixels = source.pixel_count();
    let block = block_pixels.max(1);
    let mut sums = SquaredDistanceSums::new(m);
    let mut buf = Vec::new();
    let mut start = 0;
    while start < pixels {
        let len = block.min(pixels - start);
        load_block(source, start, len, &mut buf).map_err(|e| Error::Data(e.to_string()))?;
        let block_ref = &buf;
        sums.rows_mut()
            .into_par_iter()
            .enumerate()
            .for_each(|(a, row)| accumulate_squared_row(block_ref, len, a, row));
        start += len;
    }
    Ok(sums.finish())
}
