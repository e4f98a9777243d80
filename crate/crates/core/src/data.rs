//! Training corpora for the knowledge model and the surrogate, built from
//! the leading Pareto fronts of every benchmarked task, plus inter-task
//! similarity analytics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::benchmark::{format_features, parse_features, BenchmarkTable, Record, TaskFeatureDistribution};
use crate::dmogp::{GpSample, TargetScaling};
use crate::error::{Error, Result};
use crate::neural::Matrix;
use crate::pareto::{fast_nondominated_sort, non_dominated, ObjectiveVector};
use crate::search_space::Encoding;

/// Default number of leading fronts kept per task.
pub const DEFAULT_NUM_FRONTS: usize = 10;

/// One kept architecture of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub task: String,
    pub enc: Encoding,
    pub obj: ObjectiveVector,
    /// Zero-based front index within the task.
    pub front: usize,
}

/// Knowledge-model and surrogate training sets. Every kept architecture
/// contributes one item to both, so the two corpora share their
/// `(architecture, task)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCorpora {
    pub items: Vec<CorpusItem>,
    pub features: BTreeMap<String, TaskFeatureDistribution>,
    pub num_fronts: usize,
}

impl TrainingCorpora {
    /// `(architecture, task)` pairs for the generative model.
    pub fn km(&self) -> Vec<(Encoding, &str)> {
        self.items.iter().map(|i| (i.enc, i.task.as_str())).collect()
    }

    /// `(architecture, objectives, task)` triples for the surrogate.
    pub fn gp(&self) -> Vec<(Encoding, &ObjectiveVector, &str)> {
        self.items.iter().map(|i| (i.enc, &i.obj, i.task.as_str())).collect()
    }

    /// Kept items per task.
    pub fn counts(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for i in &self.items {
            *out.entry(i.task.as_str()).or_default() += 1;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Knowledge-model corpus with each item's task distribution.
    pub fn km_with_features(&self) -> Result<Vec<(Encoding, &TaskFeatureDistribution)>> {
        self.items
            .iter()
            .map(|i| {
                let f = self.features.get(&i.task).ok_or_else(|| missing_features(&i.task))?;
                Ok((i.enc, f))
            })
            .collect()
    }

    /// Per-task target normalization of the surrogate corpus.
    pub fn target_scaling(&self) -> Result<TargetScaling> {
        TargetScaling::fit(self.items.iter().map(|i| (i.task.as_str(), i.obj.params())))
    }

    /// Surrogate inputs: one feature sample per item, drawn from a stream
    /// seeded by `seed`, and normalized targets.
    pub fn gp_samples(&self, scaling: &TargetScaling, seed: u64) -> Result<Vec<GpSample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.items
            .iter()
            .map(|i| {
                let f = self.features.get(&i.task).ok_or_else(|| missing_features(&i.task))?;
                Ok(GpSample {
                    enc: i.enc,
                    s: f.sample(&mut rng),
                    y: scaling.transform(&i.task, i.obj.err(), i.obj.params())?,
                })
            })
            .collect()
    }

    /// The corpus in benchmark-table form (features attached).
    pub fn to_table(&self) -> Result<BenchmarkTable> {
        let tasks: Vec<String> = self.counts().keys().map(|t| t.to_string()).collect();
        let mut table = BenchmarkTable::new(tasks)?;
        for i in &self.items {
            table.insert(&i.task, i.enc, Record::new(1.0 - i.obj.err(), i.obj.params())?)?;
        }
        table.attach_features(&self.features);
        Ok(table)
    }

    /// SHA-256 over the serialized corpus, features and front depth.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(format!("fronts {}\n", self.num_fronts));
        h.update(self.to_table()?.to_text());
        h.update(format_features(&self.features));
        Ok(hex::encode(h.finalize()))
    }

    /// Writes `corpus.tsv` and `corpus_features.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.to_table()?.save(&dir.join("corpus.tsv"))?;
        std::fs::write(dir.join("corpus_features.tsv"), format_features(&self.features))?;
        Ok(())
    }

    /// Reads a corpus written by [`TrainingCorpora::save`]. Every row is
    /// taken as kept; front indices are recomputed within each task.
    pub fn load(dir: &Path, num_fronts: usize) -> Result<Self> {
        let mut table = BenchmarkTable::load(&dir.join("corpus.tsv"))?;
        let text = std::fs::read_to_string(dir.join("corpus_features.tsv"))?;
        table.attach_features(&parse_features(&text)?);
        build_training_data(&table, num_fronts)
    }
}

fn missing_features(task: &str) -> Error {
    Error::Empty(format!("task `{task}` has no feature distribution"))
}

/// Keeps, per task, every architecture in the first `num_fronts`
/// non-dominated fronts of its benchmarked objectives. Items are ordered by
/// task, then front, then encoding.
pub fn build_training_data(table: &BenchmarkTable, num_fronts: usize) -> Result<TrainingCorpora> {
    if num_fronts == 0 {
        return Err(Error::InvalidConfig("at least one front must be kept".into()));
    }
    let mut items = Vec::new();
    let mut features = BTreeMap::new();
    for task in table.tasks() {
        let dist = table.features(task).ok_or_else(|| missing_features(task))?;
        features.insert(task.clone(), dist.clone());
        let rows: Vec<(Encoding, ObjectiveVector)> =
            table.records(task)?.iter().map(|(e, r)| (*e, r.objectives())).collect();
        let objs: Vec<&[f64]> = rows.iter().map(|(_, o)| o.values()).collect();
        let part = fast_nondominated_sort(&objs, Some(num_fronts));
        for (k, front) in part.fronts.iter().enumerate() {
            for &i in front {
                items.push(CorpusItem { task: task.clone(), enc: rows[i].0, obj: rows[i].1.clone(), front: k });
            }
        }
    }
    Ok(TrainingCorpora { items, features, num_fronts })
}

/// Metric compared across tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMetric {
    Acc,
    Params,
}

impl std::str::FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acc" => Ok(Self::Acc),
            "params" => Ok(Self::Params),
            other => Err(Error::Parse(format!("unknown similarity metric `{other}`"))),
        }
    }
}

fn shared_index(table: &BenchmarkTable) -> Result<Vec<Encoding>> {
    let first = table.tasks().first().ok_or_else(|| Error::Empty("no tasks".into()))?;
    let index: Vec<Encoding> = table.records(first)?.keys().copied().collect();
    for t in table.tasks() {
        let keys = table.records(t)?;
        if keys.len() != index.len() || !index.iter().all(|e| keys.contains_key(e)) {
            return Err(Error::InvalidConfig(format!("task `{t}` does not share the architecture index of `{first}`")));
        }
    }
    Ok(index)
}

/// Pearson correlation between tasks of a metric over the shared
/// architecture index.
pub fn task_similarity_pearson(table: &BenchmarkTable, metric: SimilarityMetric) -> Result<Matrix> {
    let index = shared_index(table)?;
    let tasks = table.tasks();
    let mut centered = Vec::with_capacity(tasks.len());
    for t in tasks {
        let rows = table.records(t)?;
        let v: Vec<f64> = index
            .iter()
            .map(|e| match metric {
                SimilarityMetric::Acc => rows[e].acc,
                SimilarityMetric::Params => rows[e].params,
            })
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Numerical(format!("task `{t}` has a constant metric vector")));
        }
        centered.push(c.into_iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    let k = tasks.len();
    Ok(Matrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            let r: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            r.clamp(-1.0, 1.0)
        }
    }))
}

/// Exact Pareto set of one task.
pub fn pareto_set(table: &BenchmarkTable, task: &str) -> Result<BTreeSet<Encoding>> {
    let rows: Vec<(&Encoding, ObjectiveVector)> =
        table.records(task)?.iter().map(|(e, r)| (e, r.objectives())).collect();
    let objs: Vec<&[f64]> = rows.iter().map(|(_, o)| o.values()).collect();
    Ok(non_dominated(&objs).into_iter().map(|i| *rows[i].0).collect())
}

/// Jaccard overlap `|P_i ∩ P_j| / |P_i ∪ P_j|` of two tasks' Pareto sets.
pub fn pareto_overlap_ratio(table: &BenchmarkTable, i: &str, j: &str) -> Result<f64> {
    let a = pareto_set(table, i)?;
    let b = pareto_set(table, j)?;
    let union = a.union(&b).count();
    if union == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}
