//! NSGA-II over architecture encodings: integer-repaired SBX crossover and
//! polynomial mutation, binary tournament selection, warm-start population
//! initialization, and a budgeted generational loop that records a
//! [`RunArchive`].

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::benchmark::Oracle;
use crate::error::{Error, Result};
use crate::pareto::{crowding_distance, fast_nondominated_sort, hypervolume_2d, non_dominated, ObjectiveVector};
use crate::search_space::{Encoding, SearchSpace, NUM_SLOTS};

/// Upper end of the normalized parameter axis of the hypervolume reference.
pub const HV_PARAMS_REF: f64 = 1.05;

/// Population member.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub enc: Encoding,
    pub obj: Option<ObjectiveVector>,
    pub rank: usize,
    pub crowd: f64,
}

impl Individual {
    pub fn new(enc: Encoding) -> Self {
        Self { enc, obj: None, rank: usize::MAX, crowd: 0.0 }
    }

    fn objectives(&self) -> &ObjectiveVector {
        self.obj.as_ref().expect("individual evaluated before selection")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeaConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub sbx_eta: f64,
    pub pm_eta: f64,
    pub p_crossover: f64,
    pub p_mutation: f64,
    /// Maximum number of unique architectures sent to the oracle.
    pub eval_budget: usize,
    pub seed: u64,
}

impl Default for MoeaConfig {
    fn default() -> Self {
        Self {
            pop_size: 25,
            generations: 100,
            sbx_eta: 20.0,
            pm_eta: 20.0,
            p_crossover: 1.0,
            p_mutation: 1.0 / NUM_SLOTS as f64,
            eval_budget: 525,
            seed: 0,
        }
    }
}

impl MoeaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.pop_size < 2 {
            return bad(format!("population size {} must be at least 2", self.pop_size));
        }
        if self.eval_budget < self.pop_size {
            return bad(format!(
                "evaluation budget {} is below the population size {}",
                self.eval_budget, self.pop_size
            ));
        }
        for (name, p) in [("crossover", self.p_crossover), ("mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        if !(self.sbx_eta >= 0.0 && self.pm_eta >= 0.0) {
            return bad("distribution indices must be non-negative".into());
        }
        Ok(())
    }
}

fn repair(value: f64, hi: u8) -> u8 {
    value.round().clamp(0.0, hi as f64) as u8
}

/// Simulated binary crossover applied to every slot in its real
/// relaxation, children swapped per slot with probability 1/2, then
/// rounded and clamped to the slot range.
pub fn sbx_crossover<R: Rng + ?Sized>(
    p1: &Encoding,
    p2: &Encoding,
    space: &SearchSpace,
    eta: f64,
    rng: &mut R,
) -> (Encoding, Encoding) {
    let (a, b) = (p1.slots(), p2.slots());
    let hi = space.slot_upper_bounds();
    let mut c1 = [0u8; NUM_SLOTS];
    let mut c2 = [0u8; NUM_SLOTS];
    for k in 0..NUM_SLOTS {
        if a[k] == b[k] {
            c1[k] = a[k];
            c2[k] = b[k];
            continue;
        }
        let (x1, x2) = (a[k] as f64, b[k] as f64);
        let u: f64 = rng.random();
        let beta = if u <= 0.5 {
            (2.0 * u).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
        };
        let mut y1 = 0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2);
        let mut y2 = 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2);
        if rng.random_bool(0.5) {
            std::mem::swap(&mut y1, &mut y2);
        }
        c1[k] = repair(y1, hi[k]);
        c2[k] = repair(y2, hi[k]);
    }
    (Encoding::from_slots(c1), Encoding::from_slots(c2))
}

/// Bounded polynomial mutation of each slot with probability `p_m`, then
/// round and clamp. Slots with a single legal value are left alone.
pub fn pm_mutation<R: Rng + ?Sized>(
    enc: &Encoding,
    space: &SearchSpace,
    eta: f64,
    p_m: f64,
    rng: &mut R,
) -> Encoding {
    let mut slots = enc.slots();
    let hi = space.slot_upper_bounds();
    for k in 0..NUM_SLOTS {
        if hi[k] == 0 || !rng.random_bool(p_m) {
            continue;
        }
        let range = hi[k] as f64;
        let y = slots[k] as f64;
        let (d1, d2) = (y / range, (range - y) / range);
        let u: f64 = rng.random();
        let power = 1.0 / (eta + 1.0);
        let dq = if u < 0.5 {
            let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            v.powf(power) - 1.0
        } else {
            let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(power)
        };
        slots[k] = repair(y + dq * range, hi[k]);
    }
    Encoding::from_slots(slots)
}

/// Initial population: the transfer set (deduplicated by canonical form)
/// topped up with uniform random architectures of new isomorphism classes,
/// or `pop_size` members drawn without replacement when the transfer set is
/// at least as large.
pub fn initialize_population<R: Rng + ?Sized>(
    transfer: &[Encoding],
    pop_size: usize,
    space: &SearchSpace,
    rng: &mut R,
) -> Vec<Individual> {
    let mut seen = HashSet::new();
    let unique: Vec<Encoding> =
        transfer.iter().map(Encoding::canonical).filter(|e| seen.insert(*e)).collect();
    if unique.len() >= pop_size {
        let mut picks = sample_indices(rng, unique.len(), pop_size).into_vec();
        picks.sort_unstable();
        return picks.into_iter().map(|i| Individual::new(unique[i])).collect();
    }
    let mut pop: Vec<Individual> = unique.into_iter().map(Individual::new).collect();
    let mut attempts = 0;
    while pop.len() < pop_size {
        let enc = space.sample(rng);
        attempts += 1;
        // tiny spaces may hold fewer classes than the population
        if seen.insert(enc.canonical()) || attempts > 1000 * pop_size {
            pop.push(Individual::new(enc));
        }
    }
    pop
}

/// One population snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub index: usize,
    pub members: Vec<MemberRecord>,
    /// Hypervolume of everything evaluated up to this generation.
    pub hv: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub enc: Encoding,
    pub obj: ObjectiveVector,
    pub rank: usize,
}

/// One unique oracle evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub enc: Encoding,
    pub obj: ObjectiveVector,
    pub generation: usize,
}

/// Everything one seeded search run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    /// Free-form run description (mode, task, seed, ...).
    pub meta: BTreeMap<String, String>,
    pub config: MoeaConfig,
    /// Transfer architectures offered to initialization.
    pub transfer: Vec<Encoding>,
    pub generations: Vec<GenerationRecord>,
    pub ledger: Vec<LedgerEntry>,
    /// Non-dominated members of the final population.
    pub final_front: Vec<MemberRecord>,
    /// Parameter scale used to normalize the second objective.
    pub params_scale: f64,
    pub final_hv: f64,
    /// Architectures dropped because the oracle had no entry for them.
    pub misses: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ArchiveLine {
    Header {
        meta: BTreeMap<String, String>,
        config: MoeaConfig,
        transfer: Vec<Encoding>,
        params_scale: f64,
    },
    Generation(GenerationRecord),
    Evaluation(LedgerEntry),
    Summary {
        final_front: Vec<MemberRecord>,
        final_hv: f64,
        hv_trace: Vec<f64>,
        evaluations: usize,
        misses: usize,
    },
}

impl RunArchive {
    pub fn hv_trace(&self) -> Vec<f64> {
        self.generations.iter().map(|g| g.hv).collect()
    }

    /// Lowest error among the final front.
    pub fn best_error(&self) -> Option<f64> {
        self.final_front.iter().map(|m| m.obj.err()).min_by(f64::total_cmp)
    }

    /// Line-delimited JSON: a header, one line per generation and per
    /// evaluation, then a summary.
    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![ArchiveLine::Header {
            meta: self.meta.clone(),
            config: self.config.clone(),
            transfer: self.transfer.clone(),
            params_scale: self.params_scale,
        }];
        lines.extend(self.generations.iter().cloned().map(ArchiveLine::Generation));
        lines.extend(self.ledger.iter().cloned().map(ArchiveLine::Evaluation));
        lines.push(ArchiveLine::Summary {
            final_front: self.final_front.clone(),
            final_hv: self.final_hv,
            hv_trace: self.hv_trace(),
            evaluations: self.ledger.len(),
            misses: self.misses,
        });
        let mut out = String::new();
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("archive serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut archive: Option<RunArchive> = None;
        let mut done = false;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |m: String| Error::Format { line: i + 1, message: m };
            let parsed: ArchiveLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if done {
                return Err(err("record after summary".into()));
            }
            match (parsed, archive.as_mut()) {
                (ArchiveLine::Header { meta, config, transfer, params_scale }, None) => {
                    archive = Some(RunArchive {
                        meta,
                        config,
                        transfer,
                        generations: Vec::new(),
                        ledger: Vec::new(),
                        final_front: Vec::new(),
                        params_scale,
                        final_hv: 0.0,
                        misses: 0,
                    })
                }
                (ArchiveLine::Generation(g), Some(a)) => a.generations.push(g),
                (ArchiveLine::Evaluation(e), Some(a)) => a.ledger.push(e),
                (ArchiveLine::Summary { final_front, final_hv, misses, .. }, Some(a)) => {
                    a.final_front = final_front;
                    a.final_hv = final_hv;
                    a.misses = misses;
                    done = true;
                }
                (ArchiveLine::Header { .. }, Some(_)) => return Err(err("duplicate header".into())),
                (_, None) => return Err(err("record before header".into())),
            }
        }
        match archive {
            Some(a) if done => Ok(a),
            _ => Err(Error::Empty("archive lacks a header or summary".into())),
        }
    }
}

/// Hypervolume with the error axis as is and the parameter axis divided by
/// `params_scale`, against the reference `(1, HV_PARAMS_REF)`.
pub fn normalized_hypervolume<'a, I>(objs: I, params_scale: f64) -> f64
where
    I: IntoIterator<Item = &'a ObjectiveVector>,
{
    let pts: Vec<[f64; 2]> = objs.into_iter().map(|o| [o.err(), o.params() / params_scale]).collect();
    hypervolume_2d(&pts, [1.0, HV_PARAMS_REF])
}

/// Budgeted, cached access to the oracle.
struct Evaluator<'o, O: ?Sized> {
    oracle: &'o O,
    space: &'o SearchSpace,
    budget: usize,
    cache: HashMap<Encoding, Option<ObjectiveVector>>,
    ledger: Vec<LedgerEntry>,
    misses: usize,
}

enum Outcome {
    Done(Individual),
    Missing,
    OutOfBudget,
}

impl<O: Oracle + ?Sized> Evaluator<'_, O> {
    fn evaluate(&mut self, enc: &Encoding, generation: usize) -> Result<Outcome> {
        let key = enc.canonical();
        let obj = match self.cache.get(&key) {
            Some(hit) => hit.clone(),
            None if !self.space.is_valid(&key) => None,
            None => {
                if self.ledger.len() >= self.budget {
                    return Ok(Outcome::OutOfBudget);
                }
                let obj = match self.oracle.evaluate(&key) {
                    Ok(obj) => Some(obj),
                    Err(Error::UnknownArchitecture { .. }) => {
                        self.misses += 1;
                        None
                    }
                    Err(e) => return Err(e),
                };
                if let Some(obj) = &obj {
                    self.ledger.push(LedgerEntry { enc: key, obj: obj.clone(), generation });
                }
                self.cache.insert(key, obj.clone());
                obj
            }
        };
        Ok(match obj {
            Some(obj) => Outcome::Done(Individual { enc: key, obj: Some(obj), rank: 0, crowd: 0.0 }),
            None => Outcome::Missing,
        })
    }

    fn ledger_hv(&self, scale: f64) -> f64 {
        normalized_hypervolume(self.ledger.iter().map(|e| &e.obj), scale)
    }
}

/// Ranks and crowding of a population in place.
fn assign_rank_and_crowding(pop: &mut [Individual]) {
    let objs: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives().values().to_vec()).collect();
    let part = fast_nondominated_sort(&objs, None);
    for (r, front) in part.fronts.iter().enumerate() {
        let pts: Vec<&[f64]> = front.iter().map(|&i| objs[i].as_slice()).collect();
        let crowd = crowding_distance(&pts);
        for (k, &i) in front.iter().enumerate() {
            pop[i].rank = r;
            pop[i].crowd = crowd[k];
        }
    }
}

/// Keeps `n` members by front order, the last admitted front by
/// descending crowding; ties keep insertion order.
fn environmental_selection(mut pool: Vec<Individual>, n: usize) -> Vec<Individual> {
    assign_rank_and_crowding(&mut pool);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[a]
            .rank
            .cmp(&pool[b].rank)
            .then(pool[b].crowd.total_cmp(&pool[a].crowd))
            .then(a.cmp(&b))
    });
    order.truncate(n);
    order.sort_unstable();
    let mut keep = vec![false; pool.len()];
    for &i in &order {
        keep[i] = true;
    }
    let mut idx = 0;
    pool.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    assign_rank_and_crowding(&mut pool);
    pool
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [Individual], rng: &mut R) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if b.rank < a.rank || (b.rank == a.rank && b.crowd > a.crowd) {
        b
    } else {
        a
    }
}

fn snapshot(pop: &[Individual], index: usize, hv: f64, evaluations: usize) -> GenerationRecord {
    GenerationRecord {
        index,
        members: pop
            .iter()
            .map(|i| MemberRecord { enc: i.enc, obj: i.objectives().clone(), rank: i.rank })
            .collect(),
        hv,
        evaluations,
    }
}

/// Runs NSGA-II from `init` until `generations` generations have passed or
/// the evaluation budget is spent. Re-evaluations of an isomorphism class
/// are free. Offspring duplicating a class already in the population or
/// the offspring pool are redrawn. A generation whose offspring are all
/// previously evaluated classes receives one random unevaluated class.
pub fn nsga2_run<O: Oracle + ?Sized, R: Rng + ?Sized>(
    init: Vec<Individual>,
    oracle: &O,
    space: &SearchSpace,
    cfg: &MoeaConfig,
    rng: &mut R,
) -> Result<RunArchive> {
    cfg.validate()?;
    if init.is_empty() {
        return Err(Error::Empty("initial population".into()));
    }
    let params_scale = oracle.max_params();
    if !(params_scale.is_finite() && params_scale > 0.0) {
        return Err(Error::Numerical(format!("parameter scale {params_scale} must be positive")));
    }
    let mut ev = Evaluator {
        oracle,
        space,
        budget: cfg.eval_budget,
        cache: HashMap::new(),
        ledger: Vec::new(),
        misses: 0,
    };

    let mut pop = Vec::with_capacity(cfg.pop_size);
    let mut present = HashSet::new();
    let mut exhausted = false;
    for ind in &init {
        match ev.evaluate(&ind.enc, 0)? {
            Outcome::Done(i) => {
                if present.insert(i.enc) {
                    pop.push(i);
                }
            }
            Outcome::Missing => {}
            Outcome::OutOfBudget => {
                exhausted = true;
                break;
            }
        }
    }
    if pop.is_empty() {
        return Err(Error::Empty("no initial architecture could be evaluated".into()));
    }
    assign_rank_and_crowding(&mut pop);
    let mut generations = vec![snapshot(&pop, 0, ev.ledger_hv(params_scale), ev.ledger.len())];

    let max_attempts = 100 * cfg.pop_size;
    for gen in 1..=cfg.generations {
        if exhausted || ev.ledger.len() >= cfg.eval_budget {
            break;
        }
        let mut offspring: Vec<Individual> = Vec::with_capacity(cfg.pop_size);
        let evaluated_before = ev.cache.len();
        let mut attempts = 0;
        'fill: while offspring.len() < cfg.pop_size && attempts < max_attempts {
            attempts += 1;
            let p1 = tournament(&pop, rng).enc;
            let p2 = tournament(&pop, rng).enc;
            let (c1, c2) = if rng.random_bool(cfg.p_crossover) {
                sbx_crossover(&p1, &p2, space, cfg.sbx_eta, rng)
            } else {
                (p1, p2)
            };
            for child in [c1, c2] {
                if offspring.len() >= cfg.pop_size {
                    break;
                }
                let child = pm_mutation(&child, space, cfg.pm_eta, cfg.p_mutation, rng);
                if present.contains(&child.canonical()) {
                    continue;
                }
                match ev.evaluate(&child, gen)? {
                    Outcome::Done(i) => {
                        present.insert(i.enc);
                        offspring.push(i);
                    }
                    Outcome::Missing => {}
                    Outcome::OutOfBudget => {
                        exhausted = true;
                        break 'fill;
                    }
                }
            }
        }
        if !exhausted && ev.cache.len() == evaluated_before {
            // Stagnation: variation only revisited known classes, so one
            // slot goes to a uniformly drawn class not yet evaluated.
            for _ in 0..max_attempts {
                let cand = space.sample(rng).canonical();
                if ev.cache.contains_key(&cand) || present.contains(&cand) {
                    continue;
                }
                match ev.evaluate(&cand, gen)? {
                    Outcome::Done(i) => {
                        if offspring.len() >= cfg.pop_size {
                            if let Some(old) = offspring.pop() {
                                present.remove(&old.enc);
                            }
                        }
                        present.insert(i.enc);
                        offspring.push(i);
                        break;
                    }
                    Outcome::Missing => {}
                    Outcome::OutOfBudget => {
                        exhausted = true;
                        break;
                    }
                }
            }
        }
        if offspring.is_empty() {
            if exhausted {
                break;
            }
            // the population already covers every reachable class
            generations.push(snapshot(&pop, gen, ev.ledger_hv(params_scale), ev.ledger.len()));
            continue;
        }
        let mut pool = std::mem::take(&mut pop);
        pool.extend(offspring);
        pop = environmental_selection(pool, cfg.pop_size);
        present = pop.iter().map(|i| i.enc).collect();
        generations.push(snapshot(&pop, gen, ev.ledger_hv(params_scale), ev.ledger.len()));
    }

    let objs: Vec<&[f64]> = pop.iter().map(|i| i.objectives().values()).collect();
    let final_front: Vec<MemberRecord> = non_dominated(&objs)
        .into_iter()
        .map(|k| MemberRecord { enc: pop[k].enc, obj: pop[k].objectives().clone(), rank: 0 })
        .collect();
    let final_hv = normalized_hypervolume(final_front.iter().map(|m| &m.obj), params_scale);
    Ok(RunArchive {
        meta: BTreeMap::new(),
        config: cfg.clone(),
        transfer: Vec::new(),
        generations,
        ledger: ev.ledger,
        final_front,
        params_scale,
        final_hv,
        misses: ev.misses,
    })
}
