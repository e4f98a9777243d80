use super::*;
use crate::benchmark::{make_synthetic_family, Oracle, SyntheticOracle};
use crate::neural::gradcheck::check_params;
use crate::search_space::SearchSpace;
use rand::Rng;

fn small_cfg(seed: u64) -> DmogpConfig {
    DmogpConfig {
        encoder_hidden: 6,
        arch_dim: 5,
        combined_dim: 4,
        rank: 2,
        epochs: 3,
        batch_size: 8,
        ..DmogpConfig { seed, ..DmogpConfig::default() }
    }
}

fn random_samples(space: &SearchSpace, n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<GpSample> {
    (0..n)
        .map(|_| GpSample {
            enc: space.sample(rng),
            s: (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            y: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect()
}

/// Posterior by explicit dense inversion with the kernel written out
/// entrywise.
fn naive_posterior(z: &Matrix, zq: &Matrix, h: &KernelHypers, y: &[f64]) -> (Matrix, Matrix) {
    let m = h.noise.len();
    let mut b = Matrix::zeros(m, m);
    for a in 0..m {
        for c in 0..m {
            b[(a, c)] = (0..h.l.ncols()).map(|r| h.l[(a, r)] * h.l[(c, r)]).sum::<f64>();
        }
        b[(a, a)] += h.kappa[a];
    }
    let k = |x: &Matrix, i: usize, w: &Matrix, j: usize| {
        let mut d2 = 0.0;
        for r in 0..x.nrows() {
            d2 += (x[(r, i)] - w[(r, j)]).powi(2);
        }
        h.amplitude.powi(2) * (-d2 / (2.0 * h.lengthscale.powi(2))).exp()
    };
    let n = z.ncols();
    let q = zq.ncols();
    let mut kt = Matrix::zeros(n * m, n * m);
    let mut ks = Matrix::zeros(n * m, q * m);
    let mut kss = Matrix::zeros(q * m, q * m);
    for i in 0..n {
        for a in 0..m {
            for j in 0..n {
                for c in 0..m {
                    kt[(i * m + a, j * m + c)] = k(z, i, z, j) * b[(a, c)];
                }
            }
            kt[(i * m + a, i * m + a)] += h.noise[a];
            for j in 0..q {
                for c in 0..m {
                    ks[(i * m + a, j * m + c)] = k(z, i, zq, j) * b[(a, c)];
                }
            }
        }
    }
    for i in 0..q {
        for j in 0..q {
            for a in 0..m {
                for c in 0..m {
                    kss[(i * m + a, j * m + c)] = k(zq, i, zq, j) * b[(a, c)];
                }
            }
        }
    }
    let inv = kt.try_inverse().expect("invertible");
    let yv = Matrix::from_column_slice(n * m, 1, y);
    let mean = ks.transpose() * &inv * yv;
    let cov = kss - ks.transpose() * inv * ks;
    (mean, cov)
}

#[test]
fn prediction_matches_dense_inverse() {
    let space = SearchSpace::with_num_ops(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for inst in 0..10 {
        let n = rng.random_range(1..=20);
        let model = Dmogp::new(3, &small_cfg(inst)).unwrap();
        let train = random_samples(&space, n, 2, &mut rng);
        let queries = random_samples(&space, 4, 2, &mut rng);
        let state = condition(model, train.clone()).unwrap();
        let encs: Vec<Encoding> = queries.iter().map(|d| d.enc).collect();
        let s: Vec<&[f64]> = queries.iter().map(|d| d.s.as_slice()).collect();
        let preds = state.predict_batch(&encs, &s).unwrap();

        let tr_e: Vec<Encoding> = train.iter().map(|d| d.enc).collect();
        let tr_s: Vec<&[f64]> = train.iter().map(|d| d.s.as_slice()).collect();
        let z = state.model.features(&tr_e, &tr_s).unwrap();
        let zq = state.model.features(&encs, &s).unwrap();
        let y: Vec<f64> = train.iter().flat_map(|d| d.y.clone()).collect();
        let (mean, cov) = naive_posterior(&z, &zq, state.hypers(), &y);
        for (q, p) in preds.iter().enumerate() {
            for a in 0..2 {
                let want = mean[(q * 2 + a, 0)];
                assert!((p.mean[a] - want).abs() <= 1e-6 * want.abs().max(1e-3), "{} vs {want}", p.mean[a]);
                for c in 0..2 {
                    let want = cov[(q * 2 + a, q * 2 + c)];
                    assert!((p.cov[(a, c)] - want).abs() <= 1e-6 * want.abs().max(1e-3));
                }
            }
        }
    }
}

#[test]
fn posterior_covariance_is_symmetric_and_nonnegative() {
    let space = SearchSpace::with_num_ops(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let state = condition(Dmogp::new(4, &small_cfg(1)).unwrap(), random_samples(&space, 40, 2, &mut rng)).unwrap();
    let q = random_samples(&space, 60, 2, &mut rng);
    let mut encs: Vec<Encoding> = q.iter().map(|d| d.enc).collect();
    encs.extend(state.train.iter().map(|d| d.enc));
    let mut s: Vec<&[f64]> = q.iter().map(|d| d.s.as_slice()).collect();
    s.extend(state.train.iter().map(|d| d.s.as_slice()));
    for p in state.predict_batch(&encs, &s).unwrap() {
        assert_eq!(p.cov, p.cov.transpose());
        assert!(p.variances().iter().all(|&v| v >= -1e-10));
    }
}

#[test]
fn low_noise_posterior_interpolates_training_targets() {
    let space = SearchSpace::with_num_ops(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut model = Dmogp::new(3, &small_cfg(2)).unwrap();
    let id = model.log_noise;
    model.store_mut().value_mut(id).fill(1e-6f64.ln());
    let id = model.log_ls;
    model.store_mut().value_mut(id).fill(0.05f64.ln());
    let mut train = random_samples(&space, 15, 2, &mut rng);
    // distinct canonical classes so no two inputs share a feature column
    train.sort_by_key(|d| d.enc.canonical());
    train.dedup_by_key(|d| d.enc.canonical());
    let state = condition(model, train.clone()).unwrap();
    for d in &train {
        let p = state.predict(&d.enc, &d.s).unwrap();
        for a in 0..2 {
            assert!((p.mean[a] - d.y[a]).abs() < 1e-3, "{} vs {}", p.mean[a], d.y[a]);
            assert!(p.cov[(a, a)] < 1e-4);
        }
    }
}

#[test]
fn kernel_likelihood_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let (n, d, m) = (6, 3, 2);
    let z = store.add_uniform("z", d, n, 1.0, &mut rng);
    let log_ls = store.add("ls", Matrix::from_element(1, 1, 0.3));
    let log_amp = store.add("amp", Matrix::from_element(1, 1, -0.2));
    let l = store.add_uniform("l", m, 2, 0.8, &mut rng);
    let log_kappa = store.add("kappa", Matrix::from_column_slice(m, 1, &[-1.0, -0.5]));
    let log_noise = store.add("noise", Matrix::from_column_slice(m, 1, &[-2.0, -1.5]));
    let y: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let report = check_params(
        &store,
        |tape| {
            let zv = tape.param(z);
            let hv = HyperVars {
                log_ls: tape.param(log_ls),
                log_amp: tape.param(log_amp),
                l: tape.param(l),
                log_kappa: tape.param(log_kappa),
                log_noise: tape.param(log_noise),
            };
            neg_log_likelihood(tape, zv, hv, &y).unwrap()
        },
        1e-6,
    );
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn end_to_end_loss_gradients_match_finite_differences() {
    let space = SearchSpace::with_num_ops(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = Dmogp::new(3, &small_cfg(9)).unwrap();
    let data = random_samples(&space, 7, 2, &mut rng);
    let batch: Vec<&GpSample> = data.iter().collect();
    let report = check_params(model.store(), |tape| model.record_loss(tape, &batch).unwrap(), 1e-5);
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn rejects_malformed_training_data() {
    let space = SearchSpace::with_num_ops(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = small_cfg(0);
    assert!(fit(&[], 3, &cfg).is_err());
    let mut data = random_samples(&space, 4, 2, &mut rng);
    data[0].y.push(0.0);
    assert!(fit(&data, 3, &cfg).is_err());
    let mut data = random_samples(&space, 4, 2, &mut rng);
    data[1].s[0] = f64::NAN;
    assert!(fit(&data, 3, &cfg).is_err());
    let other = SearchSpace::with_num_ops(5).unwrap();
    let data = random_samples(&other, 30, 2, &mut rng);
    assert!(fit(&data, 3, &cfg).is_err());
}

fn synthetic_samples(space: &SearchSpace, seed: u64) -> (Vec<GpSample>, Vec<GpSample>) {
    let tasks = make_synthetic_family(seed, 3, 0.5, space).unwrap();
    let archs = space.enumerate();
    let mut all = Vec::new();
    let mut raw = Vec::new();
    for t in &tasks {
        let s = t.feature_distribution().mu;
        let oracle = SyntheticOracle::new(t.clone(), space.clone()).unwrap();
        for a in &archs {
            let o = oracle.evaluate(a).unwrap();
            raw.push((t.id.clone(), o.err(), o.params()));
            all.push((t.id.clone(), *a, s.clone()));
        }
    }
    let scaling = TargetScaling::fit(raw.iter().map(|(t, _, p)| (t.as_str(), *p))).unwrap();
    let mut samples: Vec<GpSample> = all
        .into_iter()
        .zip(&raw)
        .map(|((t, enc, s), (_, e, p))| GpSample { enc, s, y: scaling.transform(&t, *e, *p).unwrap() })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples.shuffle(&mut rng);
    let test = samples.split_off(samples.len() - 200);
    (samples, test)
}

fn smse(state: &SurrogateState, test: &[GpSample], out: usize) -> f64 {
    let encs: Vec<Encoding> = test.iter().map(|d| d.enc).collect();
    let s: Vec<&[f64]> = test.iter().map(|d| d.s.as_slice()).collect();
    let preds = state.predict_batch(&encs, &s).unwrap();
    let ys: Vec<f64> = test.iter().map(|d| d.y[out]).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    let mse = preds.iter().zip(&ys).map(|(p, y)| (p.mean[out] - y).powi(2)).sum::<f64>() / ys.len() as f64;
    mse / var
}

#[test]
fn fitted_surrogate_generalizes_on_synthetic_tasks() {
    let space = SearchSpace::with_num_ops(3).unwrap();
    let (train, test) = synthetic_samples(&space, 21);
    let cfg = DmogpConfig { epochs: 30, max_points: 600, seed: 1, ..DmogpConfig::default() };
    let state = fit(&train, 3, &cfg).unwrap();
    assert_eq!(state.likelihood_trace.len(), 30);
    assert!(state.likelihood_trace.last() > state.likelihood_trace.first());
    for out in 0..2 {
        let e = smse(&state, &test, out);
        assert!(e < 0.3, "output {out}: standardized error {e}");
    }
}

#[test]
fn fit_is_deterministic_and_checkpoint_round_trips() {
    let space = SearchSpace::with_num_ops(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data = random_samples(&space, 30, 2, &mut rng);
    let cfg = DmogpConfig { max_points: 20, ..small_cfg(4) };
    let a = fit(&data, 3, &cfg).unwrap();
    let b = fit(&data, 3, &cfg).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.likelihood_trace, b.likelihood_trace);
    assert_eq!(a.train.len(), 20);

    let text = a.to_checkpoint().to_text();
    let back = SurrogateState::from_checkpoint(&Checkpoint::from_text(&text).unwrap()).unwrap();
    assert_eq!(back.likelihood_trace, a.likelihood_trace);
    let q = random_samples(&space, 10, 2, &mut rng);
    let encs: Vec<Encoding> = q.iter().map(|d| d.enc).collect();
    let s: Vec<&[f64]> = q.iter().map(|d| d.s.as_slice()).collect();
    assert_eq!(a.predict_batch(&encs, &s).unwrap(), back.predict_batch(&encs, &s).unwrap());
    let dump = format_predictions(&a.predict_batch(&encs, &s).unwrap());
    assert_eq!(dump.lines().count(), 10);
    assert_eq!(dump.lines().next().unwrap().split('\t').count(), 5);
}

#[test]
fn isomorphic_inputs_share_features() {
    let space = SearchSpace::with_num_ops(3).unwrap();
    let model = Dmogp::new(3, &small_cfg(0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let e = space.sample(&mut rng);
        let f = model.arch_features(&[e, e.canonical()]).unwrap();
        assert_eq!(f.column(0), f.column(1));
    }
}

#[test]
fn target_scaling_standardizes_log_params_per_task() {
    let s = TargetScaling::fit([("a", 1.0), ("a", std::f64::consts::E.powi(2)), ("b", 5.0)]).unwrap();
    assert_eq!(s.transform("a", 0.3, 1.0).unwrap(), vec![0.3, -1.0]);
    assert_eq!(s.transform("b", 0.1, 5.0).unwrap(), vec![0.1, 0.0]);
    assert!(s.transform("c", 0.1, 5.0).is_err());
    assert!(TargetScaling::fit([("a", 0.0)]).is_err());
}
