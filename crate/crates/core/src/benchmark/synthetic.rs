use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{TaskFeatureDistribution, FEATURE_DIM};
use super::Oracle;
use crate::error::{Error, Result};
use crate::pareto::ObjectiveVector;
use crate::search_space::{Encoding, SearchSpace, NUM_VERTICES};

/// Fixed seed of the projection from task vectors to landscape weights.
/// Shared by every family so that a task vector always means the same task.
const PROJECTION_SEED: u64 = 0x6e61_7374_7866_6572;

const AFFINITY_SCALE: f64 = 2.0;
const DEPTH_SCALE: f64 = 1.0;
const LEAF_SCALE: f64 = 0.7;
const TOPOLOGY_SCALE: f64 = 0.5;
const ERR_OFFSET: f64 = 1.0;
/// Std-dev of the feature distribution attached to synthetic tasks.
const FEATURE_SIGMA: f64 = 0.1;

/// Per-operation cost behind the parameter proxy. RC is the cheapest and
/// ARMA the most expensive; spaces with more than nine operations extend
/// the table linearly.
pub fn op_costs(space: &SearchSpace) -> Vec<f64> {
    const DEFAULT: [f64; 9] = [1.0, 1.9, 1.15, 1.45, 2.35, 3.0, 1.7, 0.05, 0.9];
    (0..space.num_ops())
        .map(|k| DEFAULT.get(k).copied().unwrap_or(1.0 + 0.1 * k as f64))
        .collect()
}

/// Closed-form task. The error is a logistic function of architecture
/// features weighted by task-specific coefficients; the parameter proxy is
/// a task-independent sum of operation costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub id: String,
    pub task_vector: Vec<f64>,
    /// Weight of each operation's share of the vertices.
    pub op_affinity: Vec<f64>,
    /// Weight of operation `k` at depth `d`, stored at `k * 4 + (d - 1)`.
    pub op_depth: Vec<f64>,
    /// Weight of operation `k` on a leaf vertex.
    pub leaf_affinity: Vec<f64>,
    /// Weights of normalized tree depth and leaf count.
    pub topology_bonus: [f64; 2],
    pub noise: f64,
}

impl SyntheticTaskSpec {
    /// Derives every landscape weight from the task vector through a fixed
    /// random projection.
    pub fn from_task_vector(id: &str, task_vector: Vec<f64>, num_ops: usize) -> Result<Self> {
        if task_vector.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, got: task_vector.len() });
        }
        let rows = num_ops + num_ops * NUM_VERTICES + num_ops + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED ^ num_ops as u64);
        let norm = (FEATURE_DIM as f64).sqrt();
        let weights: Vec<f64> = (0..rows)
            .map(|_| {
                let row: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.sample(StandardNormal)).collect();
                row.iter().zip(&task_vector).map(|(a, t)| a * t).sum::<f64>() / norm
            })
            .collect();
        let (aff, rest) = weights.split_at(num_ops);
        let (depth, rest) = rest.split_at(num_ops * NUM_VERTICES);
        let (leaf, topo) = rest.split_at(num_ops);
        Ok(Self {
            id: id.to_string(),
            task_vector,
            op_affinity: aff.iter().map(|w| w * AFFINITY_SCALE).collect(),
            op_depth: depth.iter().map(|w| w * DEPTH_SCALE).collect(),
            leaf_affinity: leaf.iter().map(|w| w * LEAF_SCALE).collect(),
            topology_bonus: [topo[0] * TOPOLOGY_SCALE, topo[1] * TOPOLOGY_SCALE],
            noise: 0.0,
        })
    }

    /// A task whose only preference is the given operation affinities.
    pub fn from_affinity(id: &str, op_affinity: Vec<f64>) -> Self {
        let n = op_affinity.len();
        Self {
            id: id.to_string(),
            task_vector: vec![0.0; FEATURE_DIM],
            op_affinity,
            op_depth: vec![0.0; n * NUM_VERTICES],
            leaf_affinity: vec![0.0; n],
            topology_bonus: [0.0, 0.0],
            noise: 0.0,
        }
    }

    pub fn num_ops(&self) -> usize {
        self.op_affinity.len()
    }

    /// Feature distribution attached to this task: centered on the task
    /// vector with a small fixed spread.
    pub fn feature_distribution(&self) -> TaskFeatureDistribution {
        TaskFeatureDistribution {
            mu: self.task_vector.clone(),
            sigma: vec![FEATURE_SIGMA; FEATURE_DIM],
        }
    }

    /// Logit of the accuracy before the offset; larger is better.
    pub fn score(&self, enc: &Encoding) -> f64 {
        // summing in canonical vertex order keeps isomorphic inputs bit-identical
        let enc = &enc.canonical();
        let depths = enc.depths();
        let leaves = enc.leaves();
        let quarter = 1.0 / NUM_VERTICES as f64;
        let mut s = 0.0;
        for (v, (&op, &depth)) in enc.ops.iter().zip(&depths).enumerate() {
            let op = op as usize;
            s += quarter * self.op_affinity[op];
            s += quarter * self.op_depth[op * NUM_VERTICES + depth - 1];
            if leaves.contains(&(v + 1)) {
                s += quarter * self.leaf_affinity[op];
            }
        }
        let max_depth = *depths.iter().max().unwrap_or(&1) as f64;
        s += self.topology_bonus[0] * max_depth * quarter;
        s += self.topology_bonus[1] * leaves.len() as f64 * quarter;
        s
    }

    pub fn error(&self, enc: &Encoding) -> f64 {
        let mut err = crate::neural::sigmoid(-(self.score(enc) + ERR_OFFSET));
        if self.noise > 0.0 {
            err = (err + self.noise * hashed_normal(&self.id, enc)).clamp(1e-6, 1.0 - 1e-6);
        }
        err
    }
}

/// Deterministic standard-normal draw keyed on (task, architecture).
fn hashed_normal(task: &str, enc: &Encoding) -> f64 {
    let mut h = Sha256::new();
    h.update(task.as_bytes());
    h.update(enc.canonical().slots());
    let digest = h.finalize();
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    ChaCha8Rng::seed_from_u64(seed).sample(StandardNormal)
}

/// Oracle over a synthetic task.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    pub task: SyntheticTaskSpec,
    pub space: SearchSpace,
    costs: Vec<f64>,
}

impl SyntheticOracle {
    pub fn new(task: SyntheticTaskSpec, space: SearchSpace) -> Result<Self> {
        if task.num_ops() != space.num_ops() {
            return Err(Error::DimensionMismatch { expected: space.num_ops(), got: task.num_ops() });
        }
        let costs = op_costs(&space);
        Ok(Self { task, space, costs })
    }

    pub fn params_proxy(&self, enc: &Encoding) -> f64 {
        enc.canonical().ops.iter().map(|&o| self.costs[o as usize]).sum()
    }
}

impl Oracle for SyntheticOracle {
    fn evaluate(&self, enc: &Encoding) -> Result<ObjectiveVector> {
        self.space.validate(enc)?;
        ObjectiveVector::pair(self.task.error(enc), self.params_proxy(enc))
    }

    fn max_params(&self) -> f64 {
        let top = self.costs.iter().cloned().fold(f64::MIN, f64::max);
        top * NUM_VERTICES as f64
    }
}

/// `k` synthetic tasks whose task vectors have pairwise correlation `rho`:
/// `t_k = sqrt(rho) c + sqrt(1 - rho) e_k` with shared `c` and independent
/// `e_k`, all standard normal. Ids are `task0..task{k-1}`.
pub fn make_synthetic_family(
    seed: u64,
    k: usize,
    rho: f64,
    space: &SearchSpace,
) -> Result<Vec<SyntheticTaskSpec>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("a family needs at least 2 tasks, got {k}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("similarity {rho} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..FEATURE_DIM).map(|_| rng.sample(StandardNormal)).collect()
    };
    let common = draw(&mut rng);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    (0..k)
        .map(|i| {
            let own = draw(&mut rng);
            let t = common.iter().zip(&own).map(|(c, e)| a * c + b * e).collect();
            SyntheticTaskSpec::from_task_vector(&format!("task{i}"), t, space.num_ops())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{brute_force_pareto, MAX_ENUMERATION};

    #[test]
    fn rc_is_cheaper_than_arma() {
        let space = SearchSpace::default();
        let family = make_synthetic_family(1, 2, 0.5, &space).unwrap();
        let oracle = SyntheticOracle::new(family[0].clone(), space).unwrap();
        let rc = Encoding::new([0, 1, 2, 3], [7; 4]);
        let arma = Encoding::new([0, 1, 2, 3], [5; 4]);
        assert!(oracle.params_proxy(&rc) < oracle.params_proxy(&arma));
        assert_eq!(oracle.max_params(), 12.0);
    }

    #[test]
    fn aligned_task_prefers_single_op() {
        let space = SearchSpace::with_num_ops(3).unwrap();
        for target in 0..3 {
            let mut aff = vec![0.0; 3];
            aff[target] = 5.0;
            let oracle =
                SyntheticOracle::new(SyntheticTaskSpec::from_affinity("t", aff), space.clone()).unwrap();
            let best = space
                .enumerate()
                .into_iter()
                .min_by(|a, b| oracle.task.error(a).partial_cmp(&oracle.task.error(b)).unwrap())
                .unwrap();
            assert!(best.ops.iter().all(|&o| o as usize == target), "{best}");
        }
    }

    #[test]
    fn objectives_are_in_range_and_deterministic() {
        let space = SearchSpace::with_num_ops(3).unwrap();
        let mut task = make_synthetic_family(7, 3, 0.3, &space).unwrap().remove(0);
        task.noise = 0.05;
        let oracle = SyntheticOracle::new(task, space.clone()).unwrap();
        for enc in space.enumerate() {
            let a = oracle.evaluate(&enc).unwrap();
            assert!(a.err() > 0.0 && a.err() < 1.0);
            assert!(a.params() > 0.0);
            assert_eq!(a, oracle.evaluate(&enc).unwrap());
        }
    }

    #[test]
    fn isomorphic_encodings_score_alike() {
        let space = SearchSpace::default();
        let task = make_synthetic_family(3, 2, 0.0, &space).unwrap().remove(1);
        let oracle = SyntheticOracle::new(task, space.clone()).unwrap();
        for seed in 0..200 {
            let e = space.random_architecture(seed);
            let a = oracle.evaluate(&e).unwrap();
            let b = oracle.evaluate(&e.canonical()).unwrap();
            assert!((a.err() - b.err()).abs() < 1e-12);
        }
    }

    #[test]
    fn family_is_deterministic_and_rho_one_collapses() {
        let space = SearchSpace::with_num_ops(2).unwrap();
        assert_eq!(
            make_synthetic_family(5, 3, 0.7, &space).unwrap(),
            make_synthetic_family(5, 3, 0.7, &space).unwrap()
        );
        let family = make_synthetic_family(5, 3, 1.0, &space).unwrap();
        let fronts: Vec<Vec<Encoding>> = family
            .into_iter()
            .map(|t| {
                let o = SyntheticOracle::new(t, space.clone()).unwrap();
                brute_force_pareto(&o, &space, MAX_ENUMERATION)
                    .unwrap()
                    .into_iter()
                    .map(|p| p.enc)
                    .collect()
            })
            .collect();
        assert_eq!(fronts[0], fronts[1]);
        assert_eq!(fronts[1], fronts[2]);
        assert!(make_synthetic_family(5, 1, 0.5, &space).is_err());
        assert!(make_synthetic_family(5, 3, 1.5, &space).is_err());
    }
}
