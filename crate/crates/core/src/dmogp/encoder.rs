//! Bidirectional gated-recurrent encoder of architecture DAGs.
//!
//! The forward pass visits input, intermediates and output in topological
//! order; the reverse pass visits them backwards over reversed edges. Each
//! vertex state is a GRU step on the vertex's one-hot label from the gated
//! sum of its neighbours' states. The output-vertex state of the forward
//! pass and the input-vertex state of the reverse pass are concatenated and
//! mapped to the architecture feature.

use std::collections::BTreeMap;

use rand::Rng;

use crate::neural::{Activation, Dense, GatedSum, Gru, Matrix, ParamStore, Tape, Var};
use crate::search_space::{Encoding, NUM_VERTICES};

#[derive(Debug, Clone, Copy)]
pub struct ArchEncoder {
    forward: Gru,
    forward_sum: GatedSum,
    reverse: Gru,
    reverse_sum: GatedSum,
    out: Dense,
    num_ops: usize,
    pub hidden: usize,
    pub dim: usize,
}

impl ArchEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        num_ops: usize,
        hidden: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let labels = num_ops + 2;
        Self {
            forward: Gru::new(store, "enc.forward", labels, hidden, rng),
            forward_sum: GatedSum::new(store, "enc.forward_sum", hidden, rng),
            reverse: Gru::new(store, "enc.reverse", labels, hidden, rng),
            reverse_sum: GatedSum::new(store, "enc.reverse_sum", hidden, rng),
            out: Dense::new(store, "enc.out", 2 * hidden, dim, Activation::Tanh, rng),
            num_ops,
            hidden,
            dim,
        }
    }

    /// One-hot label columns: operations, then the input and output tokens.
    fn labels(&self, tape: &mut Tape, ids: impl Iterator<Item = usize>) -> Var {
        let ids: Vec<usize> = ids.collect();
        let mut m = Matrix::zeros(self.num_ops + 2, ids.len());
        for (c, &r) in ids.iter().enumerate() {
            m[(r, c)] = 1.0;
        }
        tape.input(m)
    }

    /// Features of architectures sharing one topology, one column each.
    fn encode_group(&self, tape: &mut Tape, pred: [u8; NUM_VERTICES], group: &[Encoding]) -> Var {
        let g = group.len();
        let shape = Encoding::new(pred, [0; NUM_VERTICES]);
        let children = shape.children();
        let leaves = shape.leaves();
        let input_tok = self.num_ops;
        let output_tok = self.num_ops + 1;
        let zeros = tape.input(Matrix::zeros(self.hidden, g));
        let x_in = self.labels(tape, std::iter::repeat_n(input_tok, g));
        let x_out = self.labels(tape, std::iter::repeat_n(output_tok, g));
        let x_v: Vec<Var> = (0..NUM_VERTICES)
            .map(|v| self.labels(tape, group.iter().map(|e| e.ops[v] as usize)))
            .collect();

        let mut fwd = vec![self.forward.step(tape, zeros, x_in)];
        for v in 1..=NUM_VERTICES {
            let msg = self.forward_sum.aggregate(tape, &[fwd[pred[v - 1] as usize]], g);
            fwd.push(self.forward.step(tape, msg, x_v[v - 1]));
        }
        let leaf_states: Vec<Var> = leaves.iter().map(|&v| fwd[v]).collect();
        let msg = self.forward_sum.aggregate(tape, &leaf_states, g);
        let fwd_out = self.forward.step(tape, msg, x_out);

        let rev_out = self.reverse.step(tape, zeros, x_out);
        let mut rev: Vec<Option<Var>> = vec![None; NUM_VERTICES + 1];
        for v in (1..=NUM_VERTICES).rev() {
            let mut succ: Vec<Var> = children[v].iter().map(|&c| rev[c].expect("children first")).collect();
            if children[v].is_empty() {
                succ.push(rev_out);
            }
            let msg = self.reverse_sum.aggregate(tape, &succ, g);
            rev[v] = Some(self.reverse.step(tape, msg, x_v[v - 1]));
        }
        let succ: Vec<Var> = children[0].iter().map(|&c| rev[c].expect("children first")).collect();
        let msg = self.reverse_sum.aggregate(tape, &succ, g);
        let rev_in = self.reverse.step(tape, msg, x_in);

        let both = tape.concat_rows(&[fwd_out, rev_in]);
        self.out.forward(tape, both)
    }

    /// Features of canonical forms of `encs` as columns, grouped by
    /// topology. Returns the feature matrix and, per column, the index of
    /// the encoding it belongs to.
    pub fn encode(&self, tape: &mut Tape, encs: &[Encoding]) -> (Var, Vec<usize>) {
        let mut groups: BTreeMap<[u8; NUM_VERTICES], Vec<usize>> = BTreeMap::new();
        let canon: Vec<Encoding> = encs.iter().map(Encoding::canonical).collect();
        for (i, e) in canon.iter().enumerate() {
            groups.entry(e.pred).or_default().push(i);
        }
        let mut parts = Vec::with_capacity(groups.len());
        let mut order = Vec::with_capacity(encs.len());
        for (pred, idx) in groups {
            let members: Vec<Encoding> = idx.iter().map(|&i| canon[i]).collect();
            parts.push(self.encode_group(tape, pred, &members));
            order.extend(idx);
        }
        let features = if parts.len() == 1 { parts[0] } else { tape.hstack(&parts) };
        (features, order)
    }
}
