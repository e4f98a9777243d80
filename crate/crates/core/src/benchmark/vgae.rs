//! Variational graph autoencoder producing a task feature distribution
//! from a graph: a one-layer graph-convolution encoder for node-level
//! `(mu, sigma)`, an inner-product edge decoder, and mean / root-mean-square
//! pooling to a dataset-level diagonal Gaussian.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::features::{TaskFeatureDistribution, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::neural::{sigmoid, AdamConfig, CustomOp, Matrix, ParamId, ParamStore, Tape, Var};

/// Graphs up to this size use one-hot node features; larger graphs use
/// fixed random features of width [`VgaeConfig::feature_dim`].
pub const IDENTITY_FEATURE_LIMIT: usize = 256;

/// Undirected simple graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Self-loops and repeated edges are dropped; edges are stored with
    /// `u < v`.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidConfig(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        Ok(Self { n, edges, neighbors })
    }

    /// Parses whitespace-separated `u v` lines; the node count is the
    /// largest id plus one. `#` comments are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::Format { line: i + 1, message: m.to_string() };
            let ids: Vec<usize> = t
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err("expected two node ids"))?;
            if ids.len() != 2 {
                return Err(err("expected two node ids"));
            }
            edges.push((ids[0], ids[1]));
        }
        let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        Self::new(n, &edges)
    }

    /// Stochastic block model with the given block sizes.
    pub fn planted_partition<R: Rng + ?Sized>(
        blocks: &[usize],
        p_in: f64,
        p_out: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let block: Vec<usize> =
            blocks.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
        let n = block.len();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if block[u] == block[v] { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Self::new(n, &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].contains(&v)
    }

    /// `D^-1/2 (A + I) D^-1/2 X` without materializing the adjacency.
    fn propagate(&self, x: &Matrix) -> Matrix {
        let deg: Vec<f64> = self.neighbors.iter().map(|nb| (nb.len() + 1) as f64).collect();
        let mut out = Matrix::zeros(self.n, x.ncols());
        for u in 0..self.n {
            let mut add = |v: usize| {
                let w = 1.0 / (deg[u] * deg[v]).sqrt();
                for c in 0..x.ncols() {
                    out[(u, c)] += w * x[(v, c)];
                }
            };
            add(u);
            for &v in &self.neighbors[u] {
                add(v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VgaeConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Width of random node features on graphs above
    /// [`IDENTITY_FEATURE_LIMIT`] nodes.
    pub feature_dim: usize,
}

impl Default for VgaeConfig {
    fn default() -> Self {
        Self { dim: FEATURE_DIM, epochs: 200, lr: 0.01, feature_dim: 64 }
    }
}

/// Trained encoder together with the propagated node features.
#[derive(Debug, Clone)]
pub struct VgaeModel {
    store: ParamStore,
    w_mu: ParamId,
    w_log_sigma: ParamId,
    propagated: Matrix,
    pub loss_trace: Vec<f64>,
}

/// Mean binary cross-entropy of inner-product logits over labelled pairs.
struct PairLoss {
    pairs: Vec<(usize, usize, f64)>,
}

impl PairLoss {
    fn value(&self, z: &Matrix) -> f64 {
        let mut total = 0.0;
        for &(i, j, y) in &self.pairs {
            let x = z.row(i).dot(&z.row(j));
            // -[y log s(x) + (1 - y) log(1 - s(x))] = softplus(x) - y x
            total += softplus(x) - y * x;
        }
        total / self.pairs.len() as f64
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl CustomOp for PairLoss {
    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, grad: &Matrix) -> Vec<Matrix> {
        let z = inputs[0];
        let scale = grad[(0, 0)] / self.pairs.len() as f64;
        let mut dz = Matrix::zeros(z.nrows(), z.ncols());
        for &(i, j, y) in &self.pairs {
            let g = scale * (sigmoid(z.row(i).dot(&z.row(j))) - y);
            let (zi, zj) = (z.row(i).clone_owned(), z.row(j).clone_owned());
            let mut ri = dz.row_mut(i);
            ri += g * zj;
            let mut rj = dz.row_mut(j);
            rj += g * zi;
        }
        vec![dz]
    }
}

impl VgaeModel {
    fn init<R: Rng + ?Sized>(graph: &Graph, cfg: &VgaeConfig, rng: &mut R) -> Self {
        let n = graph.num_nodes();
        let x = if n <= IDENTITY_FEATURE_LIMIT {
            Matrix::identity(n, n)
        } else {
            Matrix::from_fn(n, cfg.feature_dim, |_, _| rng.sample::<f64, _>(StandardNormal))
        };
        let propagated = graph.propagate(&x);
        let f = propagated.ncols();
        let mut store = ParamStore::new();
        let scale = (6.0 / (f + cfg.dim) as f64).sqrt();
        let w_mu = store.add_uniform("vgae.w_mu", f, cfg.dim, scale, rng);
        let w_log_sigma = store.add_uniform("vgae.w_log_sigma", f, cfg.dim, 0.1 * scale, rng);
        Self { store, w_mu, w_log_sigma, propagated, loss_trace: Vec::new() }
    }

    /// Edge-reconstruction loss plus the KL term per node, with the
    /// reparameterization noise `eps`.
    fn loss(&self, tape: &mut Tape, pairs: Vec<(usize, usize, f64)>, eps: Matrix) -> Var {
        let n = self.propagated.nrows() as f64;
        let h = tape.input(self.propagated.clone());
        let w_mu = tape.param(self.w_mu);
        let w_ls = tape.param(self.w_log_sigma);
        let mu = tape.matmul(h, w_mu);
        let ls = tape.matmul(h, w_ls);
        let sigma = tape.exp(ls);
        let eps = tape.input(eps);
        let noise = tape.mul(sigma, eps);
        let z = tape.add(mu, noise);
        let op = PairLoss { pairs };
        let recon_value = Matrix::from_element(1, 1, op.value(tape.value(z)));
        let recon = tape.custom(&[z], recon_value, Box::new(op));
        // KL(N(mu, sigma^2) || N(0, I)) = 0.5 sum(mu^2 + sigma^2 - 1 - 2 log sigma)
        let mu2 = tape.mul(mu, mu);
        let var = tape.mul(sigma, sigma);
        let two_ls = tape.scale(ls, 2.0);
        let a = tape.add(mu2, var);
        let b = tape.sub(a, two_ls);
        let total = tape.sum(b);
        let count = tape.value(mu).len() as f64;
        let ones = tape.input(Matrix::from_element(1, 1, count));
        let kl_sum = tape.sub(total, ones);
        let kl = tape.scale(kl_sum, 0.5 / (n * n));
        tape.add(recon, kl)
    }

    /// Positive edges plus an equal number of uniformly drawn non-edges.
    fn sample_pairs<R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> Vec<(usize, usize, f64)> {
        let n = graph.num_nodes();
        let mut pairs: Vec<_> = graph.edges().iter().map(|&(u, v)| (u, v, 1.0)).collect();
        let max_neg = n * (n - 1) / 2 - graph.edges().len();
        let want = graph.edges().len().min(max_neg);
        let mut got = 0;
        while got < want {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v && !graph.has_edge(u, v) {
                pairs.push((u.min(v), u.max(v), 0.0));
                got += 1;
            }
        }
        pairs
    }

    /// Node means and standard deviations, each `n x dim`.
    pub fn node_latents(&self) -> (Matrix, Matrix) {
        let mu = &self.propagated * self.store.value(self.w_mu);
        let sigma = (&self.propagated * self.store.value(self.w_log_sigma)).map(f64::exp);
        (mu, sigma)
    }

    /// Mean-pooled means and RMS-pooled standard deviations.
    pub fn task_features(&self) -> Result<TaskFeatureDistribution> {
        let (mu, sigma) = self.node_latents();
        let n = mu.nrows() as f64;
        let mu_pool = (0..mu.ncols()).map(|c| mu.column(c).sum() / n).collect();
        let sigma_pool = (0..sigma.ncols())
            .map(|c| (sigma.column(c).map(|s| s * s).sum() / n).sqrt())
            .collect();
        TaskFeatureDistribution::new(mu_pool, sigma_pool)
    }

    /// Area under the ROC curve of inner-product scores of the node means,
    /// edges against all non-edges.
    pub fn reconstruction_auc(&self, graph: &Graph) -> f64 {
        let (mu, _) = self.node_latents();
        let n = graph.num_nodes();
        let mut scored = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                scored.push((mu.row(u).dot(&mu.row(v)), graph.has_edge(u, v)));
            }
        }
        auc(&mut scored)
    }
}

/// Mann-Whitney AUC with average ranks for ties.
fn auc(scored: &mut [(f64, bool)]) -> f64 {
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut rank_sum, mut pos) = (0.0, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        for s in &scored[i..j] {
            if s.1 {
                rank_sum += avg_rank;
                pos += 1;
            }
        }
        i = j;
    }
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return 0.5;
    }
    (rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64
}

/// Trains a VGAE on `graph` with full-batch Adam.
pub fn train_vgae(graph: &Graph, cfg: &VgaeConfig, seed: u64) -> Result<VgaeModel> {
    if graph.edges().is_empty() {
        return Err(Error::InvalidConfig("graph has no edges".into()));
    }
    if cfg.dim == 0 || cfg.feature_dim == 0 {
        return Err(Error::InvalidConfig("latent and feature widths must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = VgaeModel::init(graph, cfg, &mut rng);
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    for _ in 0..cfg.epochs {
        let pairs = VgaeModel::sample_pairs(graph, &mut rng);
        let eps = Matrix::from_fn(graph.num_nodes(), cfg.dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let (loss, grads) = {
            let mut tape = Tape::new(&model.store);
            let out = model.loss(&mut tape, pairs, eps);
            (tape.scalar(out), tape.backward(out))
        };
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("VGAE loss became {loss}")));
        }
        model.store.accumulate(&grads, 1.0);
        model.store.adam_update(&adam)?;
        model.loss_trace.push(loss);
    }
    Ok(model)
}

/// Task feature distribution of a graph (dimension [`VgaeConfig::dim`]).
pub fn vgae_task_features(graph: &Graph, cfg: &VgaeConfig, seed: u64) -> Result<TaskFeatureDistribution> {
    train_vgae(graph, cfg, seed)?.task_features()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::check_params;

    fn two_blocks(seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Graph::planted_partition(&[20, 20], 0.5, 0.02, &mut rng).unwrap()
    }

    #[test]
    fn planted_blocks_are_reconstructed() {
        let g = two_blocks(1);
        let model = train_vgae(&g, &VgaeConfig::default(), 3).unwrap();
        let auc = model.reconstruction_auc(&g);
        assert!(auc > 0.8, "AUC {auc}");
        let f = model.task_features().unwrap();
        assert_eq!(f.mu.len(), FEATURE_DIM);
        assert!(f.sigma.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn same_graph_same_seed_same_features() {
        let cfg = VgaeConfig { epochs: 20, ..VgaeConfig::default() };
        let a = vgae_task_features(&two_blocks(2), &cfg, 9).unwrap();
        let b = vgae_task_features(&two_blocks(2), &cfg, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn edgeless_graph_is_rejected() {
        let g = Graph::new(5, &[(1, 1)]).unwrap();
        assert!(train_vgae(&g, &VgaeConfig::default(), 0).is_err());
        assert!(Graph::new(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::parse_edge_list("# comment\n0 1\n1 2\n2 1\n").unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), [(0, 1), (1, 2)]);
        assert!(matches!(Graph::parse_edge_list("0 1\n0\n"), Err(Error::Format { line: 2, .. })));
    }

    #[test]
    fn auc_of_known_rankings() {
        assert_eq!(auc(&mut [(0.1, false), (0.9, true)]), 1.0);
        assert_eq!(auc(&mut [(0.9, false), (0.1, true)]), 0.0);
        assert_eq!(auc(&mut [(0.5, false), (0.5, true)]), 0.5);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let g = Graph::new(6, &[(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)]).unwrap();
        let cfg = VgaeConfig { dim: 3, ..VgaeConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = VgaeModel::init(&g, &cfg, &mut rng);
        let pairs = VgaeModel::sample_pairs(&g, &mut rng);
        let eps = Matrix::from_fn(6, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let report = check_params(&model.store, |t| model.loss(t, pairs.clone(), eps.clone()), 1e-5);
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }
}
