use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nastransfer::benchmark::{
    load_features, BenchmarkTable, Oracle, TabularOracle, TaskFeatureDistribution, FEATURE_DIM,
};
use nastransfer::data::{
    build_training_data, pareto_overlap_ratio, task_similarity_pearson, SimilarityMetric, TrainingCorpora,
};
use nastransfer::moea::{MoeaConfig, RunArchive};
use nastransfer::neural::Matrix;
use nastransfer::pipeline::{
    report, run_synthetic_benchmark, save_outcome, search_phase, train_phase, Mode, SearchConfig, SynthBenchConfig,
    SynthSetup, TrainConfig, TrainedModels,
};
use nastransfer::SearchSpace;

/// Share of a benchmark table spent on one search when no budget is given.
const DEFAULT_BUDGET_FRACTION: f64 = 0.02;

#[derive(Parser)]
#[command(name = "nastransfer", version, about = "Transfer-aware multi-objective architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the generator and surrogate corpora from a knowledge base.
    BuildData(BuildDataArgs),
    /// Train the generator and the surrogate once; reruns reuse checkpoints.
    Train(TrainArgs),
    /// Search a new task with or without transferred architectures.
    Search(SearchArgs),
    /// Summarize run archives: hypervolume, best accuracy, significance.
    Report(ReportArgs),
    /// Paired-seed ablation of every mode on a synthetic task family.
    BenchSynth(BenchSynthArgs),
}

#[derive(Args)]
struct KbArgs {
    /// Benchmark table of the knowledge-base tasks.
    #[arg(long)]
    kb: PathBuf,
    /// Task feature distributions (`task<TAB>mu...<TAB>sigma...`).
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Args)]
struct TrainingArgs {
    /// Pareto fronts peeled per task for the corpora.
    #[arg(long, default_value_t = nastransfer::data::DEFAULT_NUM_FRONTS)]
    ns: usize,
    /// Generator training epochs.
    #[arg(long)]
    km_epochs: Option<usize>,
    /// Surrogate training epochs.
    #[arg(long)]
    gp_epochs: Option<usize>,
}

impl TrainingArgs {
    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        if let Some(e) = self.km_epochs {
            cfg.knowledge.epochs = e;
        }
        if let Some(e) = self.gp_epochs {
            cfg.dmogp.epochs = e;
        }
        cfg
    }
}

#[derive(Args)]
struct SearchSettings {
    /// First seed; runs use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, default_value_t = 25)]
    pop_size: usize,
    #[arg(long, default_value_t = 100)]
    generations: usize,
    /// Distinct architectures evaluated per run.
    #[arg(long)]
    budget: Option<usize>,
    /// Candidates generated per run.
    #[arg(long, default_value_t = nastransfer::pipeline::DEFAULT_NUM_CANDIDATES)]
    nc: usize,
}

impl SearchSettings {
    fn config(&self, mode: Mode, default_budget: usize) -> SearchConfig {
        SearchConfig {
            mode,
            moea: MoeaConfig {
                pop_size: self.pop_size,
                generations: self.generations,
                eval_budget: self.budget.unwrap_or(default_budget),
                seed: self.seed,
                ..MoeaConfig::default()
            },
            num_candidates: self.nc,
        }
    }

    fn seeds(&self) -> std::ops::Range<u64> {
        self.seed..self.seed + self.runs as u64
    }
}

#[derive(Args)]
struct FamilyArgs {
    /// Seed of the synthetic task family.
    #[arg(long, default_value_t = 0)]
    family: u64,
    /// Number of knowledge-base tasks in the family.
    #[arg(long, default_value_t = 7)]
    tasks: usize,
    /// Similarity of the tasks to a shared prototype, in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    rho: f64,
    #[arg(long, default_value_t = 9)]
    num_ops: usize,
}

#[derive(Args)]
struct BuildDataArgs {
    #[command(flatten)]
    kb: KbArgs,
    #[arg(long, default_value_t = nastransfer::data::DEFAULT_NUM_FRONTS)]
    ns: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    kb: KbArgs,
    #[command(flatten)]
    training: TrainingArgs,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    Tabular,
    Synthetic,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value = "kegnas")]
    mode: Mode,
    #[command(flatten)]
    settings: SearchSettings,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tabular")]
    oracle: OracleKind,
    /// Benchmark table holding the target task (tabular oracle).
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Target task name (tabular oracle).
    #[arg(long)]
    target: Option<String>,
    /// Feature file holding the target task distribution.
    #[arg(long)]
    features: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    /// Directory for run archives.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Archive files or directories containing `*.jsonl` archives.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Directory for `summary.json` and `summary.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchSynthArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Modes to compare; all by default.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<Mode>,
    #[command(flatten)]
    settings: SearchSettings,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::BuildData(a) => build_data(a),
        Command::Train(a) => train(a),
        Command::Search(a) => search(a),
        Command::Report(a) => report_cmd(a),
        Command::BenchSynth(a) => bench_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_kb(args: &KbArgs) -> Result<BenchmarkTable> {
    let mut table =
        BenchmarkTable::load(&args.kb).with_context(|| format!("reading knowledge base {}", args.kb.display()))?;
    if let Some(path) = &args.features {
        let features = load_features(path).with_context(|| format!("reading features {}", path.display()))?;
        table.attach_features(&features);
    }
    Ok(table)
}

fn format_matrix(tasks: &[String], m: &Matrix) -> String {
    let mut out = format!("task\t{}\n", tasks.join("\t"));
    for (i, t) in tasks.iter().enumerate() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.6}", m[(i, j)])).collect();
        writeln!(out, "{t}\t{}", row.join("\t")).expect("string write");
    }
    out
}

fn build_data(args: BuildDataArgs) -> Result<()> {
    let table = load_kb(&args.kb)?;
    let corpora = build_training_data(&table, args.ns)?;
    corpora.save(&args.out)?;
    let tasks = table.tasks().to_vec();
    for (metric, name) in [(SimilarityMetric::Acc, "acc"), (SimilarityMetric::Params, "params")] {
        let m = task_similarity_pearson(&table, metric)?;
        std::fs::write(args.out.join(format!("similarity_{name}.tsv")), format_matrix(&tasks, &m))?;
    }
    let n = tasks.len();
    let mut overlap = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            overlap[(i, j)] = pareto_overlap_ratio(&table, &tasks[i], &tasks[j])?;
        }
    }
    std::fs::write(args.out.join("similarity_overlap.tsv"), format_matrix(&tasks, &overlap))?;
    print_counts(&corpora);
    Ok(())
}

fn print_counts(corpora: &TrainingCorpora) {
    for (task, n) in corpora.counts() {
        println!("{task}\t{n} architectures");
    }
    println!("total\t{} architectures from {} fronts per task", corpora.len(), corpora.num_fronts);
}

fn train(args: TrainArgs) -> Result<()> {
    let table = load_kb(&args.kb)?;
    let corpora = build_training_data(&table, args.training.ns)?;
    let outcome = train_phase(&corpora, table.num_ops(), &args.training.config(), &args.out)?;
    print_counts(&corpora);
    let m = &outcome.models;
    if outcome.reused {
        println!("reused checkpoints in {} (fingerprint {})", args.out.display(), m.fingerprint);
    } else {
        println!("trained checkpoints in {} (fingerprint {})", args.out.display(), m.fingerprint);
        if let Some(last) = m.knowledge_trace.last() {
            println!("generator final loss {last:.6}");
        }
        if let Some(last) = m.surrogate.as_ref().and_then(|s| s.likelihood_trace.last()) {
            println!("surrogate final log-likelihood per point {last:.6}");
        }
    }
    Ok(())
}

fn load_models(ckpt: Option<&Path>, mode: Mode, space: &SearchSpace) -> Result<Option<TrainedModels>> {
    if mode == Mode::Nsga2 {
        return Ok(None);
    }
    let Some(dir) = ckpt else {
        bail!("mode {mode} needs --ckpt");
    };
    let models = TrainedModels::load(dir).with_context(|| format!("loading checkpoints from {}", dir.display()))?;
    if models.knowledge.num_ops() != space.num_ops() {
        bail!(
            "checkpoints cover {} operations but the search space has {}",
            models.knowledge.num_ops(),
            space.num_ops()
        );
    }
    Ok(Some(models))
}

/// Placeholder distribution for runs that never look at task features.
fn unused_features() -> TaskFeatureDistribution {
    TaskFeatureDistribution::new(vec![0.0; FEATURE_DIM], vec![1.0; FEATURE_DIM]).expect("valid distribution")
}

fn search(args: SearchArgs) -> Result<()> {
    match args.oracle {
        OracleKind::Tabular => {
            let (Some(kb), Some(task)) = (&args.kb, &args.target) else {
                bail!("the tabular oracle needs --kb and --target");
            };
            let table = load_kb(&KbArgs { kb: kb.clone(), features: args.features.clone() })?;
            let oracle = TabularOracle::new(&table, task)?;
            let space = SearchSpace::with_num_ops(table.num_ops())?;
            let features = match (table.features(task), args.mode) {
                (Some(f), _) => f.clone(),
                (None, Mode::Nsga2) => unused_features(),
                (None, mode) => bail!("mode {mode} needs features for task {task}; pass --features"),
            };
            let budget = ((oracle.len() as f64 * DEFAULT_BUDGET_FRACTION).ceil() as usize).max(args.settings.pop_size);
            run_searches(&args, task, &features, &oracle, &space, budget)
        }
        OracleKind::Synthetic => {
            let f = &args.family;
            let setup = SynthSetup::new(f.family, f.tasks, f.rho, f.num_ops)?;
            let oracle = setup.target_oracle()?;
            let features = match &args.features {
                Some(path) => load_features(path)?
                    .remove(&setup.target.id)
                    .with_context(|| format!("no features for task {}", setup.target.id))?,
                None => setup.target.feature_distribution(),
            };
            let budget = MoeaConfig::default().eval_budget;
            run_searches(&args, &setup.target.id.clone(), &features, &oracle, &setup.space, budget)
        }
    }
}

fn run_searches<O: Oracle + ?Sized>(
    args: &SearchArgs,
    task: &str,
    features: &TaskFeatureDistribution,
    oracle: &O,
    space: &SearchSpace,
    default_budget: usize,
) -> Result<()> {
    let models = load_models(args.ckpt.as_deref(), args.mode, space)?;
    println!("mode\tseed\thv\tbest_err\tevaluations\tfront\ttransfer\tpre_search_s\tsearch_s");
    for seed in args.settings.seeds() {
        let mut cfg = args.settings.config(args.mode, default_budget);
        cfg.moea.seed = seed;
        let outcome = search_phase(models.as_ref(), task, features, oracle, space, &cfg)?;
        save_outcome(&outcome, &args.out, args.mode, seed)?;
        let a = &outcome.archive;
        println!(
            "{}\t{seed}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{:.3}\t{:.3}",
            args.mode,
            a.final_hv,
            a.best_error().unwrap_or(f64::NAN),
            a.ledger.len(),
            a.final_front.len(),
            a.transfer.len(),
            outcome.timing.pre_search_secs,
            outcome.timing.search_secs
        );
    }
    Ok(())
}

fn collect_archives(inputs: &[PathBuf]) -> Result<Vec<RunArchive>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        bail!("no archives found");
    }
    files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunArchive::from_jsonl(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let archives = collect_archives(&args.inputs)?;
    let summary = report(&archives)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), summary.to_json())?;
        std::fs::write(dir.join("summary.txt"), summary.to_table())?;
    }
    print!("{}", summary.to_table());
    Ok(())
}

fn bench_synth(args: BenchSynthArgs) -> Result<()> {
    let f = &args.family;
    let modes = if args.mode.is_empty() { Mode::ALL.to_vec() } else { args.mode.clone() };
    let cfg = SynthBenchConfig {
        family_seed: f.family,
        source_tasks: f.tasks,
        rho: f.rho,
        num_ops: f.num_ops,
        runs: args.settings.runs,
        first_seed: args.settings.seed,
        modes,
        num_fronts: args.training.ns,
        search: args.settings.config(Mode::Kegnas, MoeaConfig::default().eval_budget),
        train: args.training.config(),
    };
    let result = run_synthetic_benchmark(&cfg, args.out.as_deref())?;
    if result.reused_models {
        println!("reused checkpoints");
    }
    let mut per_mode: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (mode, _, t) in &result.timings {
        let e = per_mode.entry(mode.as_str()).or_default();
        e.0 += t.pre_search_secs;
        e.1 += t.search_secs;
    }
    print!("{}", result.report.to_table());
    for (mode, (pre, search)) in per_mode {
        println!("{mode}: pre-search {pre:.2}s, search {search:.2}s in total");
    }
    Ok(())
}
