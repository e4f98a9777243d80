//! Paired-seed ablation on a synthetic task family: the first `k` tasks
//! form the knowledge base, the last one is searched.

use std::collections::BTreeMap;
use std::path::Path;

use super::{report, save_outcome, search_phase, train_models, train_phase, Mode, Report, SearchConfig, Timing, TrainConfig};
use crate::benchmark::{format_features, make_synthetic_family, BenchmarkTable, SyntheticOracle, SyntheticTaskSpec};
use crate::data::{build_training_data, DEFAULT_NUM_FRONTS};
use crate::error::{Error, Result};
use crate::moea::RunArchive;
use crate::search_space::SearchSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBenchConfig {
    pub family_seed: u64,
    /// Number of knowledge-base tasks.
    pub source_tasks: usize,
    pub rho: f64,
    pub num_ops: usize,
    pub runs: usize,
    pub first_seed: u64,
    pub modes: Vec<Mode>,
    pub num_fronts: usize,
    /// Search settings; the mode and seed are set per run.
    pub search: SearchConfig,
    pub train: TrainConfig,
}

impl Default for SynthBenchConfig {
    fn default() -> Self {
        Self {
            family_seed: 0,
            source_tasks: 7,
            rho: 0.8,
            num_ops: 9,
            runs: 20,
            first_seed: 0,
            modes: Mode::ALL.to_vec(),
            num_fronts: DEFAULT_NUM_FRONTS,
            search: SearchConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Synthetic knowledge base and held-out target task.
#[derive(Debug, Clone)]
pub struct SynthSetup {
    pub space: SearchSpace,
    pub sources: Vec<SyntheticTaskSpec>,
    pub target: SyntheticTaskSpec,
    /// Every architecture class of the space under every source task, with
    /// task features attached.
    pub table: BenchmarkTable,
}

impl SynthSetup {
    pub fn new(family_seed: u64, source_tasks: usize, rho: f64, num_ops: usize) -> Result<Self> {
        if source_tasks == 0 {
            return Err(Error::InvalidConfig("at least one source task is required".into()));
        }
        let space = SearchSpace::with_num_ops(num_ops)?;
        let mut family = make_synthetic_family(family_seed, source_tasks + 1, rho, &space)?;
        let target = family.pop().expect("family has k + 1 tasks");
        let oracles = family
            .iter()
            .map(|t| Ok((t.id.clone(), SyntheticOracle::new(t.clone(), space.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        let mut table = BenchmarkTable::from_oracles(&space, &oracles)?;
        for t in &family {
            table.set_features(&t.id, t.feature_distribution())?;
        }
        Ok(Self { space, sources: family, target, table })
    }

    pub fn target_oracle(&self) -> Result<SyntheticOracle> {
        SyntheticOracle::new(self.target.clone(), self.space.clone())
    }

    /// Target-task table over the whole space.
    pub fn target_table(&self) -> Result<BenchmarkTable> {
        let mut t = BenchmarkTable::from_oracles(&self.space, &[(self.target.id.clone(), self.target_oracle()?)])?;
        t.set_features(&self.target.id, self.target.feature_distribution())?;
        Ok(t)
    }

    /// Writes `kb.tsv`, `target.tsv` and `features.tsv` (all tasks).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.table.save(&dir.join("kb.tsv"))?;
        self.target_table()?.save(&dir.join("target.tsv"))?;
        let mut all: BTreeMap<String, _> = self.table.all_features().clone();
        all.insert(self.target.id.clone(), self.target.feature_distribution());
        std::fs::write(dir.join("features.tsv"), format_features(&all))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthBenchResult {
    pub archives: Vec<RunArchive>,
    pub timings: Vec<(Mode, u64, Timing)>,
    pub report: Report,
    /// True when checkpoints in the output directory were reused.
    pub reused_models: bool,
    pub models: Option<super::TrainedModels>,
    pub setup: SynthSetup,
}

/// Builds the family, trains once, and runs every mode for seeds
/// `first_seed..first_seed + runs`. With `out`, the knowledge base,
/// checkpoints, archives and report are written there.
pub fn run_synthetic_benchmark(cfg: &SynthBenchConfig, out: Option<&Path>) -> Result<SynthBenchResult> {
    if cfg.runs == 0 || cfg.modes.is_empty() {
        return Err(Error::InvalidConfig("need at least one run and one mode".into()));
    }
    let setup = SynthSetup::new(cfg.family_seed, cfg.source_tasks, cfg.rho, cfg.num_ops)?;
    let needs_models = cfg.modes.iter().any(|m| *m != Mode::Nsga2);
    let (models, reused_models) = if needs_models {
        let corpora = build_training_data(&setup.table, cfg.num_fronts)?;
        match out {
            Some(dir) => {
                setup.save(dir)?;
                let o = train_phase(&corpora, cfg.num_ops, &cfg.train, &dir.join("models"))?;
                (Some(o.models), o.reused)
            }
            None => (Some(train_models(&corpora, cfg.num_ops, &cfg.train)?), false),
        }
    } else {
        (None, false)
    };
    let oracle = setup.target_oracle()?;
    let target_features = setup.target.feature_distribution();
    let mut archives = Vec::new();
    let mut timings = Vec::new();
    for seed in cfg.first_seed..cfg.first_seed + cfg.runs as u64 {
        for &mode in &cfg.modes {
            let mut sc = cfg.search.clone();
            sc.mode = mode;
            sc.moea.seed = seed;
            let outcome = search_phase(models.as_ref(), &setup.target.id, &target_features, &oracle, &setup.space, &sc)?;
            if let Some(dir) = out {
                save_outcome(&outcome, &dir.join("runs"), mode, seed)?;
            }
            timings.push((mode, seed, outcome.timing));
            archives.push(outcome.archive);
        }
    }
    let report = report(&archives)?;
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.json"), report.to_json())?;
        std::fs::write(dir.join("summary.txt"), report.to_table())?;
    }
    Ok(SynthBenchResult { archives, timings, report, reused_models, models, setup })
}
