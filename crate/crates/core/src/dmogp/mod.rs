//! Deep multi-output Gaussian process surrogate.
//!
//! An architecture encoder `f` and a combiner `g` map `(architecture, task
//! feature)` to `z = g([f(enc); s])`. Outputs are coupled by an intrinsic
//! coregionalization kernel `K(z, z') = k_rbf(z, z') B` with
//! `B = L Lᵀ + diag(kappa)`. Training maximizes the exact log marginal
//! likelihood on minibatches; prediction conditions exactly on a bounded
//! subset of the training data through a cached Cholesky factor.

mod encoder;
mod kernel;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use encoder::ArchEncoder;
pub use kernel::{coregionalization, joint, rbf, KernelHypers, JITTER_LADDER};

use crate::benchmark::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::neural::{Activation, AdamConfig, Checkpoint, Dense, Matrix, ParamId, ParamStore, Tape, Var};
use crate::search_space::{Encoding, NUM_VERTICES};
pub use kernel::{hypers_from_logs, neg_log_likelihood, HyperVars};
use kernel::cholesky_with_jitter;

const CHECKPOINT_KIND: &str = "dmogp";
const FEATURE_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct DmogpConfig {
    pub encoder_hidden: usize,
    /// Architecture feature width `b`.
    pub arch_dim: usize,
    /// Combined feature width `c`.
    pub combined_dim: usize,
    /// Columns of the coregionalization factor `L`.
    pub rank: usize,
    pub outputs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Largest number of training inputs conditioned on for prediction.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for DmogpConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: 32,
            arch_dim: 32,
            combined_dim: 32,
            rank: 2,
            outputs: 2,
            epochs: 100,
            batch_size: 256,
            lr: 0.01,
            max_points: 1000,
            seed: 0,
        }
    }
}

/// One training input with its (already normalized) targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSample {
    pub enc: Encoding,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

/// Network and kernel parameters.
#[derive(Debug, Clone)]
pub struct Dmogp {
    store: ParamStore,
    num_ops: usize,
    cfg: DmogpConfig,
    encoder: ArchEncoder,
    combiner: Dense,
    log_ls: ParamId,
    log_amp: ParamId,
    l: ParamId,
    log_kappa: ParamId,
    log_noise: ParamId,
}

/// Posterior at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub enc: Encoding,
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl Prediction {
    pub fn variances(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }
}

fn feature_columns(rows: &[&[f64]]) -> Result<Matrix> {
    for r in rows {
        if r.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, got: r.len() });
        }
    }
    Ok(Matrix::from_fn(FEATURE_DIM, rows.len(), |r, c| rows[c][r]))
}

impl Dmogp {
    pub fn new(num_ops: usize, cfg: &DmogpConfig) -> Result<Self> {
        if num_ops < 2 || cfg.outputs == 0 || cfg.rank == 0 || cfg.encoder_hidden == 0 {
            return Err(Error::InvalidConfig("surrogate dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let encoder = ArchEncoder::new(&mut store, num_ops, cfg.encoder_hidden, cfg.arch_dim, &mut rng);
        let combiner = Dense::new(
            &mut store,
            "comb",
            cfg.arch_dim + FEATURE_DIM,
            cfg.combined_dim,
            Activation::Tanh,
            &mut rng,
        );
        let m = cfg.outputs;
        let log_ls = store.add("gp.log_lengthscale", Matrix::from_element(1, 1, 1.0f64.ln()));
        let log_amp = store.add("gp.log_amplitude", Matrix::from_element(1, 1, 0.0));
        let l = store.add_uniform("gp.coregion_factor", m, cfg.rank, 0.5, &mut rng);
        let log_kappa = store.add("gp.log_kappa", Matrix::from_element(m, 1, 0.1f64.ln()));
        let log_noise = store.add("gp.log_noise", Matrix::from_element(m, 1, 0.01f64.ln()));
        Ok(Self { store, num_ops, cfg: cfg.clone(), encoder, combiner, log_ls, log_amp, l, log_kappa, log_noise })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn config(&self) -> &DmogpConfig {
        &self.cfg
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn hypers(&self) -> KernelHypers {
        let v = |id| self.store.value(id);
        hypers_from_logs(v(self.log_ls), v(self.log_amp), v(self.l), v(self.log_kappa), v(self.log_noise))
    }

    fn check(&self, enc: &Encoding) -> Result<()> {
        for i in 0..NUM_VERTICES {
            if enc.pred[i] as usize > i || enc.ops[i] as usize >= self.num_ops {
                return Err(Error::Parse(format!("{enc} is not an encoding of this surrogate's space")));
            }
        }
        Ok(())
    }

    /// Records combined features of `(encs[i], s[i])` as columns; column
    /// `k` belongs to input `order[k]`.
    fn record_features(&self, tape: &mut Tape, encs: &[Encoding], s: &[&[f64]]) -> Result<(Var, Vec<usize>)> {
        let (f, order) = self.encoder.encode(tape, encs);
        let s_cols: Vec<&[f64]> = order.iter().map(|&i| s[i]).collect();
        let sv = tape.input(feature_columns(&s_cols)?);
        let both = tape.concat_rows(&[f, sv]);
        Ok((self.combiner.forward(tape, both), order))
    }

    /// Architecture features `f(enc)`, one column per input, input order.
    pub fn arch_features(&self, encs: &[Encoding]) -> Result<Matrix> {
        for e in encs {
            self.check(e)?;
        }
        let mut out = Matrix::zeros(self.cfg.arch_dim, encs.len());
        if encs.is_empty() {
            return Ok(out);
        }
        let mut tape = Tape::new(&self.store);
        let (f, order) = self.encoder.encode(&mut tape, encs);
        for (k, &i) in order.iter().enumerate() {
            out.set_column(i, &tape.value(f).column(k));
        }
        Ok(out)
    }

    /// Combined features `z`, one column per input, input order.
    pub fn features(&self, encs: &[Encoding], s: &[&[f64]]) -> Result<Matrix> {
        if encs.len() != s.len() {
            return Err(Error::DimensionMismatch { expected: encs.len(), got: s.len() });
        }
        for e in encs {
            self.check(e)?;
        }
        let mut out = Matrix::zeros(self.cfg.combined_dim, encs.len());
        for start in (0..encs.len()).step_by(FEATURE_CHUNK) {
            let end = (start + FEATURE_CHUNK).min(encs.len());
            let mut tape = Tape::new(&self.store);
            let (z, order) = self.record_features(&mut tape, &encs[start..end], &s[start..end])?;
            for (k, &i) in order.iter().enumerate() {
                out.set_column(start + i, &tape.value(z).column(k));
            }
        }
        Ok(out)
    }

    /// `m x m` kernel block between two inputs.
    pub fn deep_kernel(&self, a: (&Encoding, &[f64]), b: (&Encoding, &[f64])) -> Result<Matrix> {
        let za = self.features(std::slice::from_ref(a.0), &[a.1])?;
        let zb = self.features(std::slice::from_ref(b.0), &[b.1])?;
        let h = self.hypers();
        Ok(h.b() * rbf(&za, &zb, h.lengthscale, h.amplitude)[(0, 0)])
    }

    fn hyper_vars(&self, tape: &mut Tape) -> HyperVars {
        HyperVars {
            log_ls: tape.param(self.log_ls),
            log_amp: tape.param(self.log_amp),
            l: tape.param(self.l),
            log_kappa: tape.param(self.log_kappa),
            log_noise: tape.param(self.log_noise),
        }
    }

    /// Records `-log p(Y | X) / n` of a batch.
    pub fn record_loss(&self, tape: &mut Tape, batch: &[&GpSample]) -> Result<Var> {
        let encs: Vec<Encoding> = batch.iter().map(|d| d.enc).collect();
        let s: Vec<&[f64]> = batch.iter().map(|d| d.s.as_slice()).collect();
        let (z, order) = self.record_features(tape, &encs, &s)?;
        let y: Vec<f64> = order.iter().flat_map(|&i| batch[i].y.iter().copied()).collect();
        let hv = self.hyper_vars(tape);
        neg_log_likelihood(tape, z, hv, &y)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", CHECKPOINT_KIND);
        ck.set_meta("num_ops", self.num_ops);
        let c = &self.cfg;
        for (k, v) in [
            ("encoder_hidden", c.encoder_hidden),
            ("arch_dim", c.arch_dim),
            ("combined_dim", c.combined_dim),
            ("rank", c.rank),
            ("outputs", c.outputs),
            ("max_points", c.max_points),
        ] {
            ck.set_meta(k, v);
        }
        self.store.to_checkpoint(&mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a {CHECKPOINT_KIND} checkpoint")));
        }
        let cfg = DmogpConfig {
            encoder_hidden: ck.meta_parse("encoder_hidden")?,
            arch_dim: ck.meta_parse("arch_dim")?,
            combined_dim: ck.meta_parse("combined_dim")?,
            rank: ck.meta_parse("rank")?,
            outputs: ck.meta_parse("outputs")?,
            max_points: ck.meta_parse("max_points")?,
            ..DmogpConfig::default()
        };
        let mut model = Self::new(ck.meta_parse("num_ops")?, &cfg)?;
        model.store.load_from(ck)?;
        Ok(model)
    }
}

/// Fitted surrogate: parameters plus the factorized conditioning set.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    pub model: Dmogp,
    pub train: Vec<GpSample>,
    z: Matrix,
    hypers: KernelHypers,
    alpha: Matrix,
    /// Inverse of the lower Cholesky factor of the training kernel matrix.
    l_inv: Matrix,
    pub jitter: f64,
    /// Mean log marginal likelihood per input, per epoch.
    pub likelihood_trace: Vec<f64>,
}

fn validate_samples(data: &[GpSample], m: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("surrogate training data".into()));
    }
    for d in data {
        if d.y.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: d.y.len() });
        }
        if d.s.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, got: d.s.len() });
        }
        if d.y.iter().chain(&d.s).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite training value for {}", d.enc)));
        }
    }
    Ok(())
}

/// Trains a surrogate on `data` and conditions it on at most
/// `cfg.max_points` of the inputs.
pub fn fit(data: &[GpSample], num_ops: usize, cfg: &DmogpConfig) -> Result<SurrogateState> {
    validate_samples(data, cfg.outputs)?;
    if cfg.batch_size < 2 {
        return Err(Error::InvalidConfig("surrogate batch size must be at least 2".into()));
    }
    let mut model = Dmogp::new(num_ops, cfg)?;
    for d in data {
        model.check(&d.enc)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // a lone trailing point says nothing about the kernel shape
            if chunk.len() < 2 && data.len() >= 2 {
                continue;
            }
            let batch: Vec<&GpSample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = {
                let mut tape = Tape::new(&model.store);
                let loss = model.record_loss(&mut tape, &batch)?;
                (tape.scalar(loss), tape.backward(loss))
            };
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("surrogate loss {loss} at epoch {epoch}")));
            }
            model.store.accumulate(&grads, 1.0);
            model.store.adam_update(&adam)?;
            total += -loss * chunk.len() as f64;
            count += chunk.len();
        }
        trace.push(total / count.max(1) as f64);
    }
    let subset: Vec<GpSample> = if data.len() > cfg.max_points {
        let mut idx = sample_indices(&mut rng, data.len(), cfg.max_points).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| data[i].clone()).collect()
    } else {
        data.to_vec()
    };
    let mut state = condition(model, subset)?;
    state.likelihood_trace = trace;
    Ok(state)
}

/// Factorizes the kernel matrix of `train` under fixed parameters.
pub fn condition(model: Dmogp, train: Vec<GpSample>) -> Result<SurrogateState> {
    validate_samples(&train, model.cfg.outputs)?;
    let encs: Vec<Encoding> = train.iter().map(|d| d.enc).collect();
    let s: Vec<&[f64]> = train.iter().map(|d| d.s.as_slice()).collect();
    let z = model.features(&encs, &s)?;
    let hypers = model.hypers();
    let k = hypers.train_matrix(&z);
    let (chol, jitter) = cholesky_with_jitter(&k)?;
    let y: Vec<f64> = train.iter().flat_map(|d| d.y.iter().copied()).collect();
    let alpha = chol.solve(&Matrix::from_column_slice(y.len(), 1, &y));
    let n = k.nrows();
    let l_inv = chol
        .l()
        .solve_lower_triangular(&Matrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok(SurrogateState { model, train, z, hypers, alpha, l_inv, jitter, likelihood_trace: Vec::new() })
}

impl SurrogateState {
    pub fn outputs(&self) -> usize {
        self.hypers.noise.len()
    }

    pub fn hypers(&self) -> &KernelHypers {
        &self.hypers
    }

    /// Posterior means and covariances of the latent outputs.
    pub fn predict_batch(&self, encs: &[Encoding], s: &[&[f64]]) -> Result<Vec<Prediction>> {
        if encs.is_empty() {
            return Ok(Vec::new());
        }
        let zq = self.model.features(encs, s)?;
        let h = &self.hypers;
        let b = h.b();
        let m = b.nrows();
        let k_cross = joint(&rbf(&self.z, &zq, h.lengthscale, h.amplitude), &b);
        let means = k_cross.transpose() * &self.alpha;
        let v = &self.l_inv * &k_cross;
        let prior = &b * (h.amplitude * h.amplitude);
        Ok(encs
            .iter()
            .enumerate()
            .map(|(q, enc)| {
                let block = v.columns(q * m, m);
                let cov = &prior - block.transpose() * block;
                let cov = (&cov + cov.transpose()) * 0.5;
                Prediction { enc: *enc, mean: means.rows(q * m, m).iter().copied().collect(), cov }
            })
            .collect())
    }

    pub fn predict(&self, enc: &Encoding, s: &[f64]) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(enc), &[s])?.remove(0))
    }

    /// Predictions for candidates of one task.
    pub fn score_candidates(&self, cands: &[Encoding], s: &[f64]) -> Result<Vec<Prediction>> {
        self.predict_batch(cands, &vec![s; cands.len()])
    }

    /// Parameters, kernel hyperparameters and the conditioning set.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        let encs: Vec<String> = self.train.iter().map(|d| d.enc.to_string()).collect();
        ck.set_meta("train_encodings", encs.join(" "));
        let n = self.train.len();
        let m = self.outputs();
        ck.push_tensor("train.s", Matrix::from_fn(n, FEATURE_DIM, |i, j| self.train[i].s[j]));
        ck.push_tensor("train.y", Matrix::from_fn(n, m, |i, j| self.train[i].y[j]));
        let trace = &self.likelihood_trace;
        ck.push_tensor("trace.likelihood", Matrix::from_row_slice(1, trace.len(), trace));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = Dmogp::from_checkpoint(ck)?;
        let encs: Vec<Encoding> =
            ck.meta("train_encodings")?.split_whitespace().map(str::parse).collect::<Result<_>>()?;
        let missing = |n: &str| Error::Checkpoint(format!("missing tensor `{n}`"));
        let s = ck.tensor("train.s").ok_or_else(|| missing("train.s"))?;
        let y = ck.tensor("train.y").ok_or_else(|| missing("train.y"))?;
        if s.nrows() != encs.len() || y.nrows() != encs.len() {
            return Err(Error::Checkpoint("conditioning set sizes disagree".into()));
        }
        let train = encs
            .iter()
            .enumerate()
            .map(|(i, e)| GpSample {
                enc: *e,
                s: s.row(i).iter().copied().collect(),
                y: y.row(i).iter().copied().collect(),
            })
            .collect();
        let mut state = condition(model, train)?;
        if let Some(t) = ck.tensor("trace.likelihood") {
            state.likelihood_trace = t.iter().copied().collect();
        }
        Ok(state)
    }
}

/// Line-delimited `encoding<TAB>mean_1..m<TAB>var_1..m` dump.
pub fn format_predictions(preds: &[Prediction]) -> String {
    let mut out = String::new();
    for p in preds {
        let means: Vec<String> = p.mean.iter().map(|v| format!("{v:?}")).collect();
        let vars: Vec<String> = p.variances().iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}\t{}\t{}", p.enc, means.join("\t"), vars.join("\t"));
    }
    out
}

/// Per-task affine normalization of targets: error kept raw, parameter
/// proxy log-transformed and z-scored within each source task.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetScaling {
    /// `(mean, std)` of log parameters per task.
    pub per_task: BTreeMap<String, (f64, f64)>,
}

impl TargetScaling {
    pub fn fit<'a, I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (task, params) in items {
            if !(params > 0.0 && params.is_finite()) {
                return Err(Error::Numerical(format!("parameter proxy {params} must be positive")));
            }
            groups.entry(task.to_string()).or_default().push(params.ln());
        }
        let per_task = groups
            .into_iter()
            .map(|(t, v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                // a task whose kept architectures share one cost keeps unit scale
                let std = if var > 1e-12 { var.sqrt() } else { 1.0 };
                (t, (mean, std))
            })
            .collect();
        Ok(Self { per_task })
    }

    pub fn transform(&self, task: &str, err: f64, params: f64) -> Result<Vec<f64>> {
        let (mean, std) = self.per_task.get(task).ok_or_else(|| Error::UnknownTask(task.into()))?;
        Ok(vec![err, (params.ln() - mean) / std])
    }

    /// Pooled inverse used for reporting predictions on a new task.
    pub fn pooled(&self) -> (f64, f64) {
        let n = self.per_task.len().max(1) as f64;
        let mean = self.per_task.values().map(|v| v.0).sum::<f64>() / n;
        let std = self.per_task.values().map(|v| v.1).sum::<f64>() / n;
        (mean, std)
    }
}

#[cfg(test)]
mod tests;
