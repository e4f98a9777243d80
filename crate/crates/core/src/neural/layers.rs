use rand::Rng;

use super::store::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

/// Affine map `W x + b` followed by an activation.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub act: Activation,
    pub inputs: usize,
    pub outputs: usize,
}

fn glorot(inputs: usize, outputs: usize) -> f64 {
    (6.0 / (inputs + outputs) as f64).sqrt()
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add_uniform(&format!("{name}.w"), outputs, inputs, glorot(inputs, outputs), rng);
        let b = Some(store.add_zeros(&format!("{name}.b"), outputs, 1));
        Self { w, b, act, inputs, outputs }
    }

    pub fn without_bias<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add_uniform(&format!("{name}.w"), outputs, inputs, glorot(inputs, outputs), rng);
        Self { w, b: None, act, inputs, outputs }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let mut y = tape.matmul(w, x);
        if let Some(b) = self.b {
            let b = tape.param(b);
            y = tape.add_col(y, b);
        }
        match self.act {
            Activation::Identity => y,
            Activation::Tanh => tape.tanh(y),
            Activation::Sigmoid => tape.sigmoid(y),
        }
    }
}

/// Gated recurrent unit:
///
/// ```text
/// r  = sigmoid(W_ir x + W_hr h + b_r)
/// z  = sigmoid(W_iz x + W_hz h + b_z)
/// n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub w_ir: ParamId,
    pub w_iz: ParamId,
    pub w_in: ParamId,
    pub w_hr: ParamId,
    pub w_hz: ParamId,
    pub w_hn: ParamId,
    pub b_r: ParamId,
    pub b_z: ParamId,
    pub b_in: ParamId,
    pub b_hn: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let s = 1.0 / (hidden as f64).sqrt();
        let mut w = |suffix: &str, cols: usize, rng: &mut R| {
            store.add_uniform(&format!("{name}.{suffix}"), hidden, cols, s, rng)
        };
        let w_ir = w("w_ir", inputs, rng);
        let w_iz = w("w_iz", inputs, rng);
        let w_in = w("w_in", inputs, rng);
        let w_hr = w("w_hr", hidden, rng);
        let w_hz = w("w_hz", hidden, rng);
        let w_hn = w("w_hn", hidden, rng);
        let b_r = store.add_zeros(&format!("{name}.b_r"), hidden, 1);
        let b_z = store.add_zeros(&format!("{name}.b_z"), hidden, 1);
        let b_in = store.add_zeros(&format!("{name}.b_in"), hidden, 1);
        let b_hn = store.add_zeros(&format!("{name}.b_hn"), hidden, 1);
        Self { w_ir, w_iz, w_in, w_hr, w_hz, w_hn, b_r, b_z, b_in, b_hn, inputs, hidden }
    }

    pub fn step(&self, tape: &mut Tape, h_prev: Var, x: Var) -> Var {
        let lin = |tape: &mut Tape, w: ParamId, v: Var| {
            let w = tape.param(w);
            tape.matmul(w, v)
        };
        let xr = lin(tape, self.w_ir, x);
        let hr = lin(tape, self.w_hr, h_prev);
        let br = tape.param(self.b_r);
        let r = tape.add(xr, hr);
        let r = tape.add_col(r, br);
        let r = tape.sigmoid(r);

        let xz = lin(tape, self.w_iz, x);
        let hz = lin(tape, self.w_hz, h_prev);
        let bz = tape.param(self.b_z);
        let z = tape.add(xz, hz);
        let z = tape.add_col(z, bz);
        let z = tape.sigmoid(z);

        let xn = lin(tape, self.w_in, x);
        let bin = tape.param(self.b_in);
        let xn = tape.add_col(xn, bin);
        let hn = lin(tape, self.w_hn, h_prev);
        let bhn = tape.param(self.b_hn);
        let hn = tape.add_col(hn, bhn);
        let rhn = tape.mul(r, hn);
        let n = tape.add(xn, rhn);
        let n = tape.tanh(n);

        let one_minus_z = tape.one_minus(z);
        let a = tape.mul(one_minus_z, n);
        let b = tape.mul(z, h_prev);
        tape.add(a, b)
    }
}

/// Gated aggregation of predecessor states: `sum_u sigmoid(G h_u + b) * (M h_u)`.
/// Columns are independent samples; an empty predecessor set aggregates to
/// zeros with `cols` columns.
#[derive(Debug, Clone, Copy)]
pub struct GatedSum {
    pub gate: Dense,
    pub map: Dense,
    pub hidden: usize,
}

impl GatedSum {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: usize, rng: &mut R) -> Self {
        let gate = Dense::new(store, &format!("{name}.gate"), hidden, hidden, Activation::Sigmoid, rng);
        let map = Dense::without_bias(store, &format!("{name}.map"), hidden, hidden, Activation::Identity, rng);
        Self { gate, map, hidden }
    }

    pub fn aggregate(&self, tape: &mut Tape, states: &[Var], cols: usize) -> Var {
        let mut total: Option<Var> = None;
        for &h in states {
            let g = self.gate.forward(tape, h);
            let m = self.map.forward(tape, h);
            let msg = tape.mul(g, m);
            total = Some(match total {
                Some(t) => tape.add(t, msg),
                None => msg,
            });
        }
        total.unwrap_or_else(|| tape.input(Matrix::zeros(self.hidden, cols)))
    }
}
