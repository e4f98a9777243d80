//! End-to-end transfer search: a one-off training phase producing the
//! knowledge model and the surrogate, per-task searches warm-started from
//! surrogate-selected generated architectures, the two ablation baselines,
//! and reporting.

mod report;
mod synth;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use report::{report, wilcoxon_rank_sum, Histograms, ModeSummary, PairTest, Report};
pub use synth::{run_synthetic_benchmark, SynthBenchConfig, SynthBenchResult, SynthSetup};

use crate::benchmark::{Oracle, TaskFeatureDistribution};
use crate::data::TrainingCorpora;
use crate::dmogp::{self, DmogpConfig, SurrogateState, TargetScaling};
use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeConfig, KnowledgeModel};
use crate::moea::{initialize_population, nsga2_run, MoeaConfig, RunArchive};
use crate::neural::{Checkpoint, Matrix};
use crate::pareto::non_dominated;
use crate::search_space::{Encoding, SearchSpace};

pub const KNOWLEDGE_CKPT: &str = "knowledge.ckpt";
pub const DMOGP_CKPT: &str = "dmogp.ckpt";
/// Default number of generated candidates per search.
pub const DEFAULT_NUM_CANDIDATES: usize = 500;

const STREAM_MOEA: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_TRANSFER: u64 = 2;
const STREAM_GENERATION: u64 = 3;

/// Search variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Surrogate-selected transfer architectures.
    Kegnas,
    /// Same number of transfer architectures, picked at random among the
    /// generated candidates.
    Rkegnas,
    /// No transfer.
    Nsga2,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Kegnas, Mode::Rkegnas, Mode::Nsga2];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Kegnas => "kegnas",
            Mode::Rkegnas => "rkegnas",
            Mode::Nsga2 => "nsga2",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode `{s}` (expected kegnas, rkegnas or nsga2)")))
    }
}

/// Deterministic stream `stream` of the generator family of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainConfig {
    pub knowledge: KnowledgeConfig,
    pub dmogp: DmogpConfig,
}

/// Both learned components.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub knowledge: KnowledgeModel,
    /// Absent when only the generator was provided.
    pub surrogate: Option<SurrogateState>,
    pub scaling: Option<TargetScaling>,
    pub fingerprint: String,
    pub knowledge_trace: Vec<f64>,
}

/// Identity of a training run: corpus, architecture space and settings.
pub fn training_fingerprint(corpora: &TrainingCorpora, num_ops: usize, cfg: &TrainConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(corpora.fingerprint()?);
    h.update(format!("\nnum_ops {num_ops}\n{cfg:?}"));
    Ok(hex::encode(h.finalize()))
}

/// Trains the generator and the surrogate in memory.
pub fn train_models(corpora: &TrainingCorpora, num_ops: usize, cfg: &TrainConfig) -> Result<TrainedModels> {
    if corpora.is_empty() {
        return Err(Error::Empty("training corpora".into()));
    }
    let fingerprint = training_fingerprint(corpora, num_ops, cfg)?;
    let mut knowledge = KnowledgeModel::new(num_ops, cfg.knowledge.hidden, cfg.knowledge.seed)?;
    let knowledge_trace = knowledge.train(&corpora.km_with_features()?, &cfg.knowledge)?;
    let scaling = corpora.target_scaling()?;
    let samples = corpora.gp_samples(&scaling, cfg.dmogp.seed)?;
    let surrogate = dmogp::fit(&samples, num_ops, &cfg.dmogp)?;
    Ok(TrainedModels {
        knowledge,
        surrogate: Some(surrogate),
        scaling: Some(scaling),
        fingerprint,
        knowledge_trace,
    })
}

fn scaling_to_meta(s: &TargetScaling) -> String {
    s.per_task.iter().map(|(t, (m, d))| format!("{t}={m:?},{d:?}")).collect::<Vec<_>>().join(" ")
}

fn scaling_from_meta(text: &str) -> Result<TargetScaling> {
    let bad = || Error::Checkpoint(format!("malformed target scaling `{text}`"));
    let mut out = TargetScaling::default();
    for entry in text.split_whitespace() {
        let (task, stats) = entry.rsplit_once('=').ok_or_else(bad)?;
        let (m, d) = stats.split_once(',').ok_or_else(bad)?;
        out.per_task.insert(task.to_string(), (m.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?));
    }
    Ok(out)
}

impl TrainedModels {
    /// Writes both checkpoints, tagged with the training fingerprint.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut ck = self.knowledge.to_checkpoint();
        ck.set_meta("fingerprint", &self.fingerprint);
        let t = &self.knowledge_trace;
        ck.push_tensor("trace.loss", Matrix::from_row_slice(1, t.len(), t));
        ck.save(&dir.join(KNOWLEDGE_CKPT))?;
        if let (Some(sur), Some(scaling)) = (&self.surrogate, &self.scaling) {
            let mut ck = sur.to_checkpoint();
            ck.set_meta("fingerprint", &self.fingerprint);
            ck.set_meta("target_scaling", scaling_to_meta(scaling));
            ck.save(&dir.join(DMOGP_CKPT))?;
        }
        Ok(())
    }

    /// Reads the checkpoints in `dir`. The surrogate is optional; when both
    /// are present their fingerprints must agree.
    pub fn load(dir: &Path) -> Result<Self> {
        let kpath = dir.join(KNOWLEDGE_CKPT);
        if !kpath.exists() {
            return Err(Error::Checkpoint(format!("missing {}", kpath.display())));
        }
        let kck = Checkpoint::load(&kpath)?;
        let knowledge = KnowledgeModel::from_checkpoint(&kck)?;
        let fingerprint = kck.meta("fingerprint")?.to_string();
        let knowledge_trace = kck.tensor("trace.loss").map(|t| t.iter().copied().collect()).unwrap_or_default();
        let dpath = dir.join(DMOGP_CKPT);
        let (surrogate, scaling) = if dpath.exists() {
            let dck = Checkpoint::load(&dpath)?;
            if dck.meta("fingerprint")? != fingerprint {
                return Err(Error::Checkpoint("generator and surrogate come from different training runs".into()));
            }
            let scaling = scaling_from_meta(dck.meta("target_scaling")?)?;
            (Some(SurrogateState::from_checkpoint(&dck)?), Some(scaling))
        } else {
            (None, None)
        };
        Ok(Self { knowledge, surrogate, scaling, fingerprint, knowledge_trace })
    }
}

/// Result of [`train_phase`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: TrainedModels,
    /// True when existing checkpoints with a matching fingerprint were used.
    pub reused: bool,
}

/// Trains once: checkpoints in `dir` whose fingerprint matches the corpus
/// and settings are reused; otherwise both models are retrained and
/// written.
pub fn train_phase(corpora: &TrainingCorpora, num_ops: usize, cfg: &TrainConfig, dir: &Path) -> Result<TrainOutcome> {
    let fingerprint = training_fingerprint(corpora, num_ops, cfg)?;
    if dir.join(KNOWLEDGE_CKPT).exists() && dir.join(DMOGP_CKPT).exists() {
        if let Ok(models) = TrainedModels::load(dir) {
            if models.fingerprint == fingerprint && models.surrogate.is_some() {
                return Ok(TrainOutcome { models, reused: true });
            }
        }
    }
    let models = train_models(corpora, num_ops, cfg)?;
    models.save(dir)?;
    Ok(TrainOutcome { models, reused: false })
}

/// Predicted non-dominated subset of `cands` under predicted means.
pub fn select_transfer(cands: &[Encoding], means: &[Vec<f64>]) -> Result<Vec<Encoding>> {
    if cands.is_empty() {
        return Err(Error::Empty("transfer candidates".into()));
    }
    if cands.len() != means.len() {
        return Err(Error::DimensionMismatch { expected: cands.len(), got: means.len() });
    }
    Ok(non_dominated(means).into_iter().map(|i| cands[i]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub mode: Mode,
    pub moea: MoeaConfig,
    pub num_candidates: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { mode: Mode::Kegnas, moea: MoeaConfig::default(), num_candidates: DEFAULT_NUM_CANDIDATES }
    }
}

/// Wall-clock split of one search, kept out of the archive so archives
/// stay byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub pre_search_secs: f64,
    pub search_secs: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub archive: RunArchive,
    pub timing: Timing,
}

/// Transfer architectures for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSet {
    /// Distinct generated candidates, in generation order.
    pub candidates: Vec<Encoding>,
    pub transfer: Vec<Encoding>,
}

/// Generates `n_c` candidates for task feature `s` and keeps the distinct
/// valid ones, in order of first appearance.
pub fn generate_candidates(
    knowledge: &KnowledgeModel,
    s: &[f64],
    n_c: usize,
    space: &SearchSpace,
    seed: u64,
) -> Result<Vec<Encoding>> {
    let mut rng = stream_rng(seed, STREAM_GENERATION);
    let raw = knowledge.generate(s, n_c, &mut rng)?;
    let mut seen = std::collections::HashSet::new();
    Ok(raw
        .into_iter()
        .map(|e| e.canonical())
        .filter(|e| space.is_valid(e) && seen.insert(*e))
        .collect())
}

/// Candidates and transfer set of a transfer mode. The random-transfer
/// ablation keeps as many architectures as surrogate selection would, or
/// one population's worth when no surrogate is available.
pub fn transfer_set(
    models: &TrainedModels,
    s: &[f64],
    mode: Mode,
    cfg: &SearchConfig,
    space: &SearchSpace,
) -> Result<TransferSet> {
    let seed = cfg.moea.seed;
    if mode == Mode::Nsga2 {
        return Ok(TransferSet { candidates: Vec::new(), transfer: Vec::new() });
    }
    let candidates = generate_candidates(&models.knowledge, s, cfg.num_candidates, space, seed)?;
    if candidates.is_empty() {
        return Err(Error::Empty("no valid generated candidates".into()));
    }
    let selected = match &models.surrogate {
        Some(sur) => {
            let preds = sur.score_candidates(&candidates, s)?;
            let means: Vec<Vec<f64>> = preds.into_iter().map(|p| p.mean).collect();
            Some(select_transfer(&candidates, &means)?)
        }
        None if mode == Mode::Kegnas => {
            return Err(Error::Checkpoint("surrogate-based transfer needs a trained surrogate".into()))
        }
        None => None,
    };
    let transfer = match mode {
        Mode::Kegnas => selected.expect("surrogate present"),
        _ => {
            let n_l = selected.map_or(cfg.moea.pop_size, |v| v.len()).min(candidates.len());
            let mut rng = stream_rng(seed, STREAM_TRANSFER);
            let mut idx = sample_indices(&mut rng, candidates.len(), n_l).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| candidates[i]).collect()
        }
    };
    Ok(TransferSet { candidates, transfer })
}

/// One seeded search on a new task. Every mode draws its NSGA-II and
/// initialization randomness from the same seed-derived streams, so runs
/// of different modes with one seed differ only in their transfer set.
pub fn search_phase<O: Oracle + ?Sized>(
    models: Option<&TrainedModels>,
    task: &str,
    target: &TaskFeatureDistribution,
    oracle: &O,
    space: &SearchSpace,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    cfg.moea.validate()?;
    let start = Instant::now();
    let ts = match (cfg.mode, models) {
        (Mode::Nsga2, _) => TransferSet { candidates: Vec::new(), transfer: Vec::new() },
        (_, Some(m)) => transfer_set(m, &target.mu, cfg.mode, cfg, space)?,
        (mode, None) => return Err(Error::Checkpoint(format!("mode {mode} needs a trained knowledge model"))),
    };
    let mut init_rng = stream_rng(cfg.moea.seed, STREAM_INIT);
    let init = initialize_population(&ts.transfer, cfg.moea.pop_size, space, &mut init_rng);
    let pre_search_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let mut moea_rng = stream_rng(cfg.moea.seed, STREAM_MOEA);
    let mut archive = nsga2_run(init, oracle, space, &cfg.moea, &mut moea_rng)?;
    let search_secs = start.elapsed().as_secs_f64();
    archive.transfer = ts.transfer.clone();
    let meta = &mut archive.meta;
    meta.insert("mode".into(), cfg.mode.to_string());
    meta.insert("task".into(), task.to_string());
    meta.insert("seed".into(), cfg.moea.seed.to_string());
    meta.insert("num_candidates".into(), cfg.num_candidates.to_string());
    meta.insert("distinct_candidates".into(), ts.candidates.len().to_string());
    meta.insert("num_transfer".into(), ts.transfer.len().to_string());
    if let Some(m) = models.filter(|_| cfg.mode != Mode::Nsga2) {
        meta.insert("fingerprint".into(), m.fingerprint.clone());
    }
    Ok(SearchOutcome { archive, timing: Timing { pre_search_secs, search_secs } })
}

/// File name of the archive of one run.
pub fn archive_name(mode: Mode, seed: u64) -> String {
    format!("{mode}_seed{seed}.jsonl")
}

/// Writes the archive and its timing sidecar into `dir`.
pub fn save_outcome(outcome: &SearchOutcome, dir: &Path, mode: Mode, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let name = archive_name(mode, seed);
    std::fs::write(dir.join(&name), outcome.archive.to_jsonl())?;
    let timing = serde_json::to_string(&outcome.timing)?;
    std::fs::write(dir.join(name.replace(".jsonl", ".timing.json")), timing + "\n")?;
    Ok(())
}
