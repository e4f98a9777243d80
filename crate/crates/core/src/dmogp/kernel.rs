//! Separable multi-output kernel and the exact Gaussian marginal likelihood
//! as a tape operation with an analytic backward pass.

use crate::error::{Error, Result};
use crate::neural::{CustomOp, Matrix, Tape, Var};

/// Jitter ladder tried, in order, when a Cholesky factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

/// `amp^2 exp(-|a_i - b_j|^2 / (2 ls^2))` between the columns of `a` and `b`.
pub fn rbf(a: &Matrix, b: &Matrix, ls: f64, amp: f64) -> Matrix {
    let amp2 = amp * amp;
    let inv = 1.0 / (2.0 * ls * ls);
    Matrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        let d2 = (a.column(i) - b.column(j)).norm_squared();
        amp2 * (-d2 * inv).exp()
    })
}

/// Coregionalization matrix `L Lᵀ + diag(kappa)`.
pub fn coregionalization(l: &Matrix, kappa: &[f64]) -> Matrix {
    let mut b = l * l.transpose();
    for (a, k) in kappa.iter().enumerate() {
        b[(a, a)] += k;
    }
    b
}

/// `kz ⊗ B` with outputs interleaved per input: row `i * m + a`.
pub fn joint(kz: &Matrix, b: &Matrix) -> Matrix {
    let m = b.nrows();
    Matrix::from_fn(kz.nrows() * m, kz.ncols() * m, |r, c| kz[(r / m, c / m)] * b[(r % m, c % m)])
}

/// Cholesky of `k + jitter I`, walking the jitter ladder. Returns the lower
/// factor and the jitter used.
pub fn cholesky_with_jitter(k: &Matrix) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    for &jitter in &JITTER_LADDER {
        let mut kj = k.clone();
        for d in 0..kj.nrows() {
            kj[(d, d)] += jitter;
        }
        if let Some(ch) = kj.cholesky() {
            return Ok((ch, jitter));
        }
    }
    Err(Error::Numerical(format!(
        "kernel matrix of size {} is not positive definite even with jitter {}",
        k.nrows(),
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

/// Kernel hyperparameters in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHypers {
    pub lengthscale: f64,
    pub amplitude: f64,
    pub l: Matrix,
    pub kappa: Vec<f64>,
    pub noise: Vec<f64>,
}

impl KernelHypers {
    pub fn b(&self) -> Matrix {
        coregionalization(&self.l, &self.kappa)
    }

    /// `kz ⊗ B + diag(noise)` for the columns of `z`.
    pub fn train_matrix(&self, z: &Matrix) -> Matrix {
        let mut k = joint(&rbf(z, z, self.lengthscale, self.amplitude), &self.b());
        let m = self.noise.len();
        for d in 0..k.nrows() {
            k[(d, d)] += self.noise[d % m];
        }
        k
    }
}

/// Negative log marginal likelihood per input point.
struct NegLogLik {
    z: Matrix,
    kz: Matrix,
    b: Matrix,
    /// `d log p / dK = (alpha alphaᵀ - K⁻¹) / 2`.
    w: Matrix,
    hypers: KernelHypers,
}

impl CustomOp for NegLogLik {
    fn backward(&self, _inputs: &[&Matrix], _output: &Matrix, grad: &Matrix) -> Vec<Matrix> {
        let n = self.kz.nrows();
        let m = self.b.nrows();
        let factor = -grad[(0, 0)] / n as f64;
        let h = &self.hypers;
        let mut gk = Matrix::zeros(n, n);
        let mut gb = Matrix::zeros(m, m);
        let mut gnoise = vec![0.0; m];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        let wv = self.w[(i * m + a, j * m + b)];
                        acc += wv * self.b[(a, b)];
                        gb[(a, b)] += wv * self.kz[(i, j)];
                    }
                }
                gk[(i, j)] = acc;
            }
            for (a, g) in gnoise.iter_mut().enumerate() {
                *g += self.w[(i * m + a, i * m + a)];
            }
        }
        let ls2 = h.lengthscale * h.lengthscale;
        let mut gz = Matrix::zeros(self.z.nrows(), n);
        let (mut g_ls, mut g_amp) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let p = gk[(i, j)] * self.kz[(i, j)];
                g_amp += 2.0 * p;
                if i == j {
                    continue;
                }
                let diff = self.z.column(i) - self.z.column(j);
                g_ls += p * diff.norm_squared() / ls2;
                let sym = p + gk[(j, i)] * self.kz[(j, i)];
                let mut col = gz.column_mut(i);
                col -= diff * (sym / ls2);
            }
        }
        let gl = (&gb + gb.transpose()) * &h.l;
        let gkappa = Matrix::from_fn(m, 1, |a, _| gb[(a, a)] * h.kappa[a]);
        let gnoise = Matrix::from_fn(m, 1, |a, _| gnoise[a] * h.noise[a]);
        vec![
            gz * factor,
            Matrix::from_element(1, 1, g_ls * factor),
            Matrix::from_element(1, 1, g_amp * factor),
            gl * factor,
            gkappa * factor,
            gnoise * factor,
        ]
    }
}

/// Handles of the kernel hyperparameters recorded on a tape, all in log
/// space except the coregionalization factor.
#[derive(Debug, Clone, Copy)]
pub struct HyperVars {
    pub log_ls: Var,
    pub log_amp: Var,
    pub l: Var,
    pub log_kappa: Var,
    pub log_noise: Var,
}

pub fn hypers_from_logs(
    log_ls: &Matrix,
    log_amp: &Matrix,
    l: &Matrix,
    log_kappa: &Matrix,
    log_noise: &Matrix,
) -> KernelHypers {
    KernelHypers {
        lengthscale: log_ls[(0, 0)].exp(),
        amplitude: log_amp[(0, 0)].exp(),
        l: l.clone(),
        kappa: log_kappa.iter().map(|v| v.exp()).collect(),
        noise: log_noise.iter().map(|v| v.exp()).collect(),
    }
}

/// Records `-log p(y | z) / n` where `y` is stacked per input
/// (`y[i * m + a]`) and `z` holds one column per input.
pub fn neg_log_likelihood(tape: &mut Tape, z: Var, hv: HyperVars, y: &[f64]) -> Result<Var> {
    let hypers = hypers_from_logs(
        tape.value(hv.log_ls),
        tape.value(hv.log_amp),
        tape.value(hv.l),
        tape.value(hv.log_kappa),
        tape.value(hv.log_noise),
    );
    let zv = tape.value(z).clone();
    let n = zv.ncols();
    let m = hypers.noise.len();
    if y.len() != n * m {
        return Err(Error::DimensionMismatch { expected: n * m, got: y.len() });
    }
    let kz = rbf(&zv, &zv, hypers.lengthscale, hypers.amplitude);
    let b = hypers.b();
    let k = hypers.train_matrix(&zv);
    let (chol, _) = cholesky_with_jitter(&k)?;
    let yv = Matrix::from_column_slice(n * m, 1, y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(n * m).map(|d| d.ln()).sum::<f64>();
    let quad = yv.dot(&alpha);
    let ll = -0.5 * quad - 0.5 * log_det - 0.5 * (n * m) as f64 * (2.0 * std::f64::consts::PI).ln();
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("log marginal likelihood is {ll}")));
    }
    let w = (&alpha * alpha.transpose() - chol.inverse()) * 0.5;
    let op = NegLogLik { z: zv, kz, b, w, hypers };
    let value = Matrix::from_element(1, 1, -ll / n as f64);
    Ok(tape.custom(&[z, hv.log_ls, hv.log_amp, hv.l, hv.log_kappa, hv.log_noise], value, Box::new(op)))
}
