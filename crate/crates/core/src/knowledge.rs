//! Task-conditioned architecture generator.
//!
//! A task feature `s` sets the initial hidden state `h0 = tanh(W s + b)`.
//! The decoder then walks the four intermediate vertices in order: the
//! operation of vertex `i` is drawn from a softmax head on the state of the
//! previous vertex, a provisional state is formed with a GRU step, and the
//! single predecessor is drawn from a softmax over edge scores against every
//! earlier vertex. The vertex state is finally a GRU step from the gated
//! message of its predecessor. `log_prob` teacher-forces the same walk.
//!
//! All computations are batched: columns of the matrices are independent
//! samples.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::benchmark::{TaskFeatureDistribution, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::neural::{Activation, AdamConfig, Checkpoint, Dense, GatedSum, Gru, Matrix, ParamStore, Tape, Var};
use crate::search_space::{Encoding, NUM_VERTICES};

const CHECKPOINT_KIND: &str = "knowledge_model";
const GENERATION_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        Self { hidden: 64, epochs: 400, batch_size: 256, lr: 1e-3, seed: 0 }
    }
}

/// Trainable decoder parameters and their layer handles.
#[derive(Debug, Clone)]
pub struct KnowledgeModel {
    store: ParamStore,
    num_ops: usize,
    hidden: usize,
    init: Dense,
    gru: Gru,
    op_head: Dense,
    edge_hidden: Dense,
    edge_out: Dense,
    message: GatedSum,
    trained: bool,
}

/// How the decoder resolves each categorical choice.
enum Choices<'a> {
    Teacher(&'a [Encoding]),
    Sample { rng: &'a mut dyn RngCore, out: Vec<Encoding> },
}

impl Choices<'_> {
    /// Chosen index per column, given column-wise log-probabilities.
    fn choose(&mut self, logp: &Matrix, pick: impl Fn(&Encoding) -> usize, write: impl Fn(&mut Encoding, u8)) -> Vec<usize> {
        match self {
            Choices::Teacher(encs) => encs.iter().map(pick).collect(),
            Choices::Sample { rng, out } => (0..logp.ncols())
                .map(|c| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = logp.nrows() - 1;
                    for r in 0..logp.nrows() {
                        acc += logp[(r, c)].exp();
                        if u < acc {
                            chosen = r;
                            break;
                        }
                    }
                    write(&mut out[c], chosen as u8);
                    chosen
                })
                .collect(),
        }
    }
}

fn one_hot_columns(rows: usize, picks: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(rows, picks.len());
    for (c, &r) in picks.iter().enumerate() {
        m[(r, c)] = 1.0;
    }
    m
}

impl KnowledgeModel {
    pub fn new(num_ops: usize, hidden: usize, seed: u64) -> Result<Self> {
        if num_ops < 2 || hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "knowledge model needs >= 2 operations and a positive hidden size (got {num_ops}, {hidden})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let init = Dense::new(&mut store, "km.init", FEATURE_DIM, hidden, Activation::Tanh, &mut rng);
        let gru = Gru::new(&mut store, "km.gru", num_ops + 1, hidden, &mut rng);
        let op_head = Dense::new(&mut store, "km.op_head", hidden, num_ops, Activation::Identity, &mut rng);
        let edge_hidden =
            Dense::new(&mut store, "km.edge_hidden", 2 * hidden, hidden, Activation::Tanh, &mut rng);
        let edge_out = Dense::new(&mut store, "km.edge_out", hidden, 1, Activation::Identity, &mut rng);
        let message = GatedSum::new(&mut store, "km.message", hidden, &mut rng);
        Ok(Self { store, num_ops, hidden, init, gru, op_head, edge_hidden, edge_out, message, trained: false })
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Sets the operation and predecessor heads to zero, making every
    /// choice uniform.
    pub fn zero_heads(&mut self) {
        for d in [self.op_head, self.edge_out] {
            self.store.value_mut(d.w).fill(0.0);
            if let Some(b) = d.b {
                self.store.value_mut(b).fill(0.0);
            }
        }
    }

    /// Per-column log-probability (`1 x B`) of the walk; in sampling mode
    /// the sampled encodings are written into the choice buffer.
    fn walk(&self, tape: &mut Tape, s: Matrix, choices: &mut Choices) -> Var {
        let b = s.ncols();
        let s = tape.input(s);
        let h0 = self.init.forward(tape, s);
        let x_input = tape.input(one_hot_columns(self.num_ops + 1, &vec![self.num_ops; b]));
        let mut states = vec![self.gru.step(tape, h0, x_input)];
        let mut terms = Vec::with_capacity(2 * NUM_VERTICES);
        for i in 1..=NUM_VERTICES {
            let prev = states[i - 1];
            let op_logits = self.op_head.forward(tape, prev);
            let op_logp = tape.log_softmax(op_logits);
            let ops = choices.choose(tape.value(op_logp), |e| e.ops[i - 1] as usize, |e, v| e.ops[i - 1] = v);
            let mask = tape.input(one_hot_columns(self.num_ops, &ops));
            terms.push(tape.mul(op_logp, mask));

            let x = tape.input(one_hot_columns(self.num_ops + 1, &ops));
            let provisional = self.gru.step(tape, prev, x);
            let scores: Vec<Var> = states
                .iter()
                .map(|&h_j| {
                    let pair = tape.concat_rows(&[h_j, provisional]);
                    let hid = self.edge_hidden.forward(tape, pair);
                    self.edge_out.forward(tape, hid)
                })
                .collect();
            let scores = tape.concat_rows(&scores);
            let pred_logp = tape.log_softmax(scores);
            let preds =
                choices.choose(tape.value(pred_logp), |e| e.pred[i - 1] as usize, |e, v| e.pred[i - 1] = v);
            let mask = tape.input(one_hot_columns(i, &preds));
            terms.push(tape.mul(pred_logp, mask));

            let mut gathered: Option<Var> = None;
            for (j, &h_j) in states.iter().enumerate() {
                let sel: Vec<f64> = preds.iter().map(|&p| if p == j { 1.0 } else { 0.0 }).collect();
                if sel.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let m = tape.input(Matrix::from_fn(self.hidden, b, |_, c| sel[c]));
                let part = tape.mul(h_j, m);
                gathered = Some(match gathered {
                    Some(g) => tape.add(g, part),
                    None => part,
                });
            }
            let h_pred = gathered.expect("every column picks a predecessor");
            let msg = self.message.aggregate(tape, &[h_pred], b);
            states.push(self.gru.step(tape, msg, x));
        }
        let sums: Vec<Var> = terms.into_iter().map(|t| tape.col_sums(t)).collect();
        let mut total = sums[0];
        for &s in &sums[1..] {
            total = tape.add(total, s);
        }
        total
    }

    fn check_encoding(&self, enc: &Encoding) -> Result<()> {
        for i in 0..NUM_VERTICES {
            if enc.pred[i] as usize > i || enc.ops[i] as usize >= self.num_ops {
                return Err(Error::Parse(format!("{enc} is not an encoding of this model's space")));
            }
        }
        Ok(())
    }

    fn feature_matrix(features: &[&[f64]]) -> Result<Matrix> {
        for f in features {
            if f.len() != FEATURE_DIM {
                return Err(Error::DimensionMismatch { expected: FEATURE_DIM, got: f.len() });
            }
        }
        Ok(Matrix::from_fn(FEATURE_DIM, features.len(), |r, c| features[c][r]))
    }

    /// Records the summed log-probability of `encs` under the matching
    /// feature columns on `tape`, for training objectives and gradient
    /// checks.
    pub fn record_log_prob(&self, tape: &mut Tape, encs: &[Encoding], features: &[&[f64]]) -> Result<Var> {
        if encs.len() != features.len() || encs.is_empty() {
            return Err(Error::DimensionMismatch { expected: encs.len().max(1), got: features.len() });
        }
        for e in encs {
            self.check_encoding(e)?;
        }
        let s = Self::feature_matrix(features)?;
        let lp = self.walk(tape, s, &mut Choices::Teacher(encs));
        Ok(tape.sum(lp))
    }

    /// Log-probabilities of several encodings under one task feature each.
    pub fn log_prob_batch(&self, encs: &[Encoding], features: &[&[f64]]) -> Result<Vec<f64>> {
        if encs.len() != features.len() {
            return Err(Error::DimensionMismatch { expected: encs.len(), got: features.len() });
        }
        if encs.is_empty() {
            return Ok(Vec::new());
        }
        for e in encs {
            self.check_encoding(e)?;
        }
        let s = Self::feature_matrix(features)?;
        let mut tape = Tape::new(&self.store);
        let out = self.walk(&mut tape, s, &mut Choices::Teacher(encs));
        Ok(tape.value(out).iter().copied().collect())
    }

    pub fn log_prob(&self, enc: &Encoding, s: &[f64]) -> Result<f64> {
        Ok(self.log_prob_batch(std::slice::from_ref(enc), &[s])?[0])
    }

    /// Draws `count` encodings for task feature `s`. Raw encodings are
    /// returned; callers deduplicate by canonical form as needed.
    pub fn generate<R: Rng + ?Sized>(&self, s: &[f64], count: usize, rng: &mut R) -> Result<Vec<Encoding>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        self.sample_unchecked(s, count, rng)
    }

    fn sample_unchecked<R: Rng + ?Sized>(&self, s: &[f64], count: usize, rng: &mut R) -> Result<Vec<Encoding>> {
        let mut out = Vec::with_capacity(count);
        let mut rng = ChaCha8Rng::seed_from_u64(rng.random());
        while out.len() < count {
            let b = GENERATION_CHUNK.min(count - out.len());
            let features = vec![s; b];
            let sm = Self::feature_matrix(&features)?;
            let mut tape = Tape::new(&self.store);
            let mut choices =
                Choices::Sample { rng: &mut rng, out: vec![Encoding::new([0; NUM_VERTICES], [0; NUM_VERTICES]); b] };
            self.walk(&mut tape, sm, &mut choices);
            if let Choices::Sample { out: batch, .. } = choices {
                out.extend(batch);
            }
        }
        Ok(out)
    }

    /// Samples regardless of the trained flag (diagnostics and tests).
    pub fn sample_any<R: Rng + ?Sized>(&self, s: &[f64], count: usize, rng: &mut R) -> Result<Vec<Encoding>> {
        self.sample_unchecked(s, count, rng)
    }

    /// Minimizes the mean negative log-likelihood of `corpus` with Adam,
    /// drawing a fresh feature sample from each item's task distribution
    /// every epoch. Returns the per-epoch mean loss.
    pub fn train(
        &mut self,
        corpus: &[(Encoding, &TaskFeatureDistribution)],
        cfg: &KnowledgeConfig,
    ) -> Result<Vec<f64>> {
        if corpus.is_empty() {
            return Err(Error::Empty("knowledge-model corpus".into()));
        }
        if cfg.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        for (e, _) in corpus {
            self.check_encoding(e)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut trace = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let encs: Vec<Encoding> = chunk.iter().map(|&i| corpus[i].0).collect();
                let draws: Vec<Vec<f64>> = chunk.iter().map(|&i| corpus[i].1.sample(&mut rng)).collect();
                let refs: Vec<&[f64]> = draws.iter().map(Vec::as_slice).collect();
                let s = Self::feature_matrix(&refs)?;
                let (loss, grads) = {
                    let mut tape = Tape::new(&self.store);
                    let lp = self.walk(&mut tape, s, &mut Choices::Teacher(&encs));
                    let total = tape.sum(lp);
                    let loss = tape.scale(total, -1.0 / chunk.len() as f64);
                    (tape.scalar(loss), tape.backward(loss))
                };
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!("knowledge-model loss {loss} at epoch {epoch}")));
                }
                self.store.accumulate(&grads, 1.0);
                self.store.adam_update(&adam)?;
                epoch_loss += loss * chunk.len() as f64;
            }
            trace.push(epoch_loss / corpus.len() as f64);
        }
        self.trained = true;
        Ok(trace)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", CHECKPOINT_KIND);
        ck.set_meta("num_ops", self.num_ops);
        ck.set_meta("hidden", self.hidden);
        ck.set_meta("trained", self.trained);
        self.store.to_checkpoint(&mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a {CHECKPOINT_KIND} checkpoint")));
        }
        let mut model = Self::new(ck.meta_parse("num_ops")?, ck.meta_parse("hidden")?, 0)?;
        model.store.load_from(ck)?;
        model.trained = ck.meta_parse("trained")?;
        Ok(model)
    }
}
