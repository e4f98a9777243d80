//! Evaluation backends standing in for GNN training: a tabular benchmark
//! and a synthetic task family with tunable inter-task similarity, plus
//! task-feature sources (file sidecar or a small graph autoencoder).

mod features;
mod synthetic;
mod table;
pub mod vgae;

use std::collections::HashMap;

pub use features::{format_features, load_features, parse_features, save_features, TaskFeatureDistribution, FEATURE_DIM};
pub use synthetic::{make_synthetic_family, op_costs, SyntheticOracle, SyntheticTaskSpec};
pub use table::{BenchmarkTable, Record, TabularOracle};

use crate::error::{Error, Result};
use crate::pareto::{dominates_unchecked, ObjectiveVector};
use crate::search_space::{Encoding, SearchSpace};

/// Maps an architecture to its objectives on one task.
pub trait Oracle {
    fn evaluate(&self, enc: &Encoding) -> Result<ObjectiveVector>;

    /// Largest parameter proxy over the whole space, used to place the
    /// hypervolume reference point.
    fn max_params(&self) -> f64;
}

impl<T: Oracle + ?Sized> Oracle for &T {
    fn evaluate(&self, enc: &Encoding) -> Result<ObjectiveVector> {
        (**self).evaluate(enc)
    }

    fn max_params(&self) -> f64 {
        (**self).max_params()
    }
}

/// Default refusal threshold for exhaustive enumeration (raw encodings).
pub const MAX_ENUMERATION: usize = 1_000_000;

/// One member of an exact Pareto set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub enc: Encoding,
    pub obj: ObjectiveVector,
}

/// Exact non-dominated set of the whole space under `oracle`, sorted by
/// encoding. Uses a direct pairwise dominance scan.
pub fn brute_force_pareto<O: Oracle + ?Sized>(
    oracle: &O,
    space: &SearchSpace,
    max_size: usize,
) -> Result<Vec<ParetoPoint>> {
    if space.raw_size() > max_size {
        return Err(Error::SpaceTooLarge(space.raw_size()));
    }
    let points = space
        .enumerate()
        .into_iter()
        .map(|enc| Ok(ParetoPoint { obj: oracle.evaluate(&enc)?, enc }))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_front(points))
}

/// Exact non-dominated subset by pairwise comparison, sorted by encoding.
pub fn pairwise_front(mut points: Vec<ParetoPoint>) -> Vec<ParetoPoint> {
    // scanning candidates in objective order finds dominators early
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (points[a].obj.values(), points[b].obj.values());
        x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal)
    });
    let keep: Vec<bool> = (0..points.len())
        .map(|i| {
            !order
                .iter()
                .any(|&j| dominates_unchecked(points[j].obj.values(), points[i].obj.values()))
        })
        .collect();
    let mut idx = 0;
    points.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    points.sort_by_key(|p| p.enc);
    points
}

/// Memoizing wrapper keyed on the canonical encoding.
pub struct CachedOracle<O> {
    inner: O,
    cache: std::cell::RefCell<HashMap<Encoding, ObjectiveVector>>,
}

impl<O: Oracle> CachedOracle<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, cache: Default::default() }
    }
}

impl<O: Oracle> Oracle for CachedOracle<O> {
    fn evaluate(&self, enc: &Encoding) -> Result<ObjectiveVector> {
        let key = enc.canonical();
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let obj = self.inner.evaluate(&key)?;
        self.cache.borrow_mut().insert(key, obj.clone());
        Ok(obj)
    }

    fn max_params(&self) -> f64 {
        self.inner.max_params()
    }
}
