use std::collections::BTreeMap;
use std::path::PathBuf;

use nastransfer::benchmark::{brute_force_pareto, load_features, BenchmarkTable, Oracle, MAX_ENUMERATION};
use nastransfer::data::build_training_data;
use nastransfer::moea::{MoeaConfig, RunArchive};
use nastransfer::pipeline::{self, Mode, SearchConfig, SynthBenchConfig, SynthSetup, TrainConfig, TrainedModels};
use nastransfer::{Encoding, SearchSpace};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: nastransfer::Error) -> PyErr {
    match e {
        nastransfer::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for nastransfer::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_enc(text: &str) -> PyResult<Encoding> {
    text.parse::<Encoding>().py()
}

fn parse_mode(text: &str) -> PyResult<Mode> {
    text.parse::<Mode>().py()
}

/// (encoding, error, params) triples of a front.
type FrontRows = Vec<(String, f64, f64)>;

/// Architecture space: four intermediate vertices, `num_ops` operations.
#[pyclass(name = "SearchSpace", frozen)]
struct PySearchSpace {
    inner: SearchSpace,
}

#[pymethods]
impl PySearchSpace {
    #[new]
    fn new(num_ops: usize) -> PyResult<Self> {
        Ok(Self { inner: SearchSpace::with_num_ops(num_ops).py()? })
    }

    #[getter]
    fn num_ops(&self) -> usize {
        self.inner.num_ops()
    }

    /// Random valid encoding drawn with `seed`.
    fn sample(&self, seed: u64) -> String {
        self.inner.random_architecture(seed).to_string()
    }

    fn is_valid(&self, enc: &str) -> PyResult<bool> {
        Ok(self.inner.is_valid(&parse_enc(enc)?))
    }

    /// Representative of the isomorphism class of `enc`.
    fn canonical(&self, enc: &str) -> PyResult<String> {
        Ok(self.inner.canonicalize(&parse_enc(enc)?).py()?.to_string())
    }

    /// One canonical encoding per isomorphism class.
    fn enumerate(&self) -> Vec<String> {
        self.inner.enumerate().iter().map(Encoding::to_string).collect()
    }
}

/// Indices of each non-dominated front, best first (minimization).
#[pyfunction]
#[pyo3(signature = (points, max_fronts=None))]
fn fast_nondominated_sort(points: Vec<Vec<f64>>, max_fronts: Option<usize>) -> Vec<Vec<usize>> {
    nastransfer::pareto::fast_nondominated_sort(&points, max_fronts).fronts
}

#[pyfunction]
fn crowding_distance(points: Vec<Vec<f64>>) -> Vec<f64> {
    nastransfer::pareto::crowding_distance(&points)
}

/// Area dominated by `points` and bounded by `reference`.
#[pyfunction]
fn hypervolume_2d(points: Vec<[f64; 2]>, reference: [f64; 2]) -> f64 {
    nastransfer::pareto::hypervolume_2d(&points, reference)
}

/// Synthetic task family: `source_tasks` knowledge-base tasks plus a target.
#[pyclass(name = "SyntheticBenchmark", frozen)]
struct PySyntheticBenchmark {
    setup: SynthSetup,
    family_seed: u64,
    rho: f64,
}

#[pymethods]
impl PySyntheticBenchmark {
    #[new]
    #[pyo3(signature = (family_seed=0, source_tasks=7, rho=0.8, num_ops=9))]
    fn new(family_seed: u64, source_tasks: usize, rho: f64, num_ops: usize) -> PyResult<Self> {
        let setup = SynthSetup::new(family_seed, source_tasks, rho, num_ops).py()?;
        Ok(Self { setup, family_seed, rho })
    }

    #[getter]
    fn target(&self) -> String {
        self.setup.target.id.clone()
    }

    #[getter]
    fn sources(&self) -> Vec<String> {
        self.setup.sources.iter().map(|t| t.id.clone()).collect()
    }

    /// Target feature mean.
    #[getter]
    fn target_features(&self) -> Vec<f64> {
        self.setup.target.feature_distribution().mu
    }

    /// (error, params) of `enc` on the target task.
    fn evaluate(&self, enc: &str) -> PyResult<(f64, f64)> {
        let o = self.setup.target_oracle().py()?.evaluate(&parse_enc(enc)?).py()?;
        Ok((o.err(), o.params()))
    }

    /// Exact target Pareto front by enumeration.
    fn pareto_front(&self) -> PyResult<FrontRows> {
        let oracle = self.setup.target_oracle().py()?;
        let front = brute_force_pareto(&oracle, &self.setup.space, MAX_ENUMERATION).py()?;
        Ok(front.into_iter().map(|p| (p.enc.to_string(), p.obj.err(), p.obj.params())).collect())
    }

    /// Writes `kb.tsv`, `target.tsv` and `features.tsv` into `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.setup.save(&dir).py()
    }

    /// One seeded search on the target task.
    #[pyo3(signature = (mode="kegnas", models=None, seed=0, pop_size=25, generations=100, budget=525, nc=500))]
    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        mode: &str,
        models: Option<&PyTrainedModels>,
        seed: u64,
        pop_size: usize,
        generations: usize,
        budget: usize,
        nc: usize,
    ) -> PyResult<PyArchive> {
        let cfg = SearchConfig {
            mode: parse_mode(mode)?,
            moea: MoeaConfig { pop_size, generations, eval_budget: budget, seed, ..MoeaConfig::default() },
            num_candidates: nc,
        };
        let oracle = self.setup.target_oracle().py()?;
        let features = self.setup.target.feature_distribution();
        let outcome = pipeline::search_phase(
            models.map(|m| &m.inner),
            &self.setup.target.id,
            &features,
            &oracle,
            &self.setup.space,
            &cfg,
        )
        .py()?;
        Ok(PyArchive { inner: outcome.archive })
    }

    fn __repr__(&self) -> String {
        format!(
            "SyntheticBenchmark(family_seed={}, source_tasks={}, rho={}, num_ops={})",
            self.family_seed,
            self.setup.sources.len(),
            self.rho,
            self.setup.space.num_ops()
        )
    }
}

/// Trained generator and, when present, surrogate.
#[pyclass(name = "TrainedModels", frozen)]
struct PyTrainedModels {
    inner: TrainedModels,
}

#[pymethods]
impl PyTrainedModels {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: TrainedModels::load(&dir).py()? })
    }

    /// Trains on a knowledge-base table and writes checkpoints to `out`.
    /// Matching checkpoints already in `out` are reused.
    #[staticmethod]
    #[pyo3(signature = (kb, out, features=None, ns=10, km_epochs=None, gp_epochs=None))]
    fn train(
        kb: PathBuf,
        out: PathBuf,
        features: Option<PathBuf>,
        ns: usize,
        km_epochs: Option<usize>,
        gp_epochs: Option<usize>,
    ) -> PyResult<Self> {
        let mut table = BenchmarkTable::load(&kb).py()?;
        if let Some(path) = features {
            table.attach_features(&load_features(&path).py()?);
        }
        let corpora = build_training_data(&table, ns).py()?;
        let mut cfg = TrainConfig::default();
        if let Some(e) = km_epochs {
            cfg.knowledge.epochs = e;
        }
        if let Some(e) = gp_epochs {
            cfg.dmogp.epochs = e;
        }
        let outcome = pipeline::train_phase(&corpora, table.num_ops(), &cfg, &out).py()?;
        Ok(Self { inner: outcome.models })
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint.clone()
    }

    #[getter]
    fn has_surrogate(&self) -> bool {
        self.inner.surrogate.is_some()
    }

    /// Distinct canonical candidates generated for task feature `features`.
    fn generate(&self, features: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<String>> {
        let space = SearchSpace::with_num_ops(self.inner.knowledge.num_ops()).py()?;
        let cands = pipeline::generate_candidates(&self.inner.knowledge, &features, n, &space, seed).py()?;
        Ok(cands.iter().map(Encoding::to_string).collect())
    }

    /// Predicted (means, variances) per encoding under task feature
    /// `features`; outputs are error and standardized log params.
    fn predict(&self, encs: Vec<String>, features: Vec<f64>) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
        let sur = self.inner.surrogate.as_ref().ok_or_else(|| PyValueError::new_err("no surrogate checkpoint"))?;
        let encs = encs.iter().map(|e| parse_enc(e)).collect::<PyResult<Vec<_>>>()?;
        let preds = sur.score_candidates(&encs, &features).py()?;
        Ok(preds.into_iter().map(|p| (p.mean.clone(), p.variances())).collect())
    }
}

/// Archive of one search run.
#[pyclass(name = "Archive", frozen)]
struct PyArchive {
    inner: RunArchive,
}

#[pymethods]
impl PyArchive {
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        Ok(Self { inner: RunArchive::from_jsonl(text).py()? })
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    #[getter]
    fn final_hv(&self) -> f64 {
        self.inner.final_hv
    }

    #[getter]
    fn hv_trace(&self) -> Vec<f64> {
        self.inner.hv_trace()
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.inner.ledger.len()
    }

    #[getter]
    fn front(&self) -> FrontRows {
        self.inner.final_front.iter().map(|m| (m.enc.to_string(), m.obj.err(), m.obj.params())).collect()
    }

    #[getter]
    fn transfer(&self) -> Vec<String> {
        self.inner.transfer.iter().map(Encoding::to_string).collect()
    }

    #[getter]
    fn meta(&self) -> BTreeMap<String, String> {
        self.inner.meta.clone()
    }
}

/// Summary of archives as JSON: per-mode statistics, rank-sum tests,
/// front histograms.
#[pyfunction]
fn report(archives: Vec<PyRef<'_, PyArchive>>) -> PyResult<String> {
    let runs: Vec<RunArchive> = archives.iter().map(|a| a.inner.clone()).collect();
    Ok(pipeline::report(&runs).py()?.to_json())
}

/// Paired-seed ablation of all modes; returns the JSON summary.
#[pyfunction]
#[pyo3(signature = (family_seed=0, source_tasks=7, rho=0.8, num_ops=9, runs=20, budget=525, out=None, km_epochs=None, gp_epochs=None))]
#[allow(clippy::too_many_arguments)]
fn run_synthetic_benchmark(
    py: Python<'_>,
    family_seed: u64,
    source_tasks: usize,
    rho: f64,
    num_ops: usize,
    runs: usize,
    budget: usize,
    out: Option<PathBuf>,
    km_epochs: Option<usize>,
    gp_epochs: Option<usize>,
) -> PyResult<String> {
    let mut cfg = SynthBenchConfig { family_seed, source_tasks, rho, num_ops, runs, ..SynthBenchConfig::default() };
    cfg.search.moea.eval_budget = budget;
    if let Some(e) = km_epochs {
        cfg.train.knowledge.epochs = e;
    }
    if let Some(e) = gp_epochs {
        cfg.train.dmogp.epochs = e;
    }
    let result = py.detach(|| pipeline::run_synthetic_benchmark(&cfg, out.as_deref())).py()?;
    Ok(result.report.to_json())
}

#[pymodule]
fn pynastransfer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySearchSpace>()?;
    m.add_class::<PySyntheticBenchmark>()?;
    m.add_class::<PyTrainedModels>()?;
    m.add_class::<PyArchive>()?;
    m.add_function(wrap_pyfunction!(fast_nondominated_sort, m)?)?;
    m.add_function(wrap_pyfunction!(crowding_distance, m)?)?;
    m.add_function(wrap_pyfunction!(hypervolume_2d, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic_benchmark, m)?)?;
    Ok(())
}
