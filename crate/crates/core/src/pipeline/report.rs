//! Per-mode summaries, pairwise rank-sum tests and architecture frequency
//! histograms over a set of run archives.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::moea::RunArchive;
use crate::search_space::NUM_VERTICES;

/// Significance level of the pairwise comparisons.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: String,
    pub runs: usize,
    pub hv_mean: f64,
    pub hv_std: f64,
    pub hv_median: f64,
    /// Accuracy of the most accurate final-front member.
    pub best_acc_mean: f64,
    pub best_acc_std: f64,
    pub evaluations_mean: f64,
    /// Final hypervolume per run, ordered by seed.
    pub hv: Vec<f64>,
    pub seeds: Vec<String>,
}

/// Rank-sum comparison of final hypervolumes; `verdict` is `+` when `a` is
/// significantly better, `-` when significantly worse, `≈` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub p_value: f64,
    pub verdict: String,
}

/// Operation and topology frequencies over the final fronts of one mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Histograms {
    /// Count per operation id over every vertex of every front member.
    pub ops: Vec<usize>,
    /// Count per predecessor pattern.
    pub macros: BTreeMap<String, usize>,
    pub front_members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub modes: Vec<ModeSummary>,
    pub tests: Vec<PairTest>,
    pub histograms: BTreeMap<String, Histograms>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Two-sided Wilcoxon rank-sum p-value under the normal approximation
/// with tie and continuity corrections. Returns 1 when either sample is
/// empty or all values tie.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> f64 {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return 1.0;
    }
    let mut all: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_x += all[i..=j].iter().filter(|p| p.1).count() as f64 * avg;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = rank_sum_x - n1f * (n1f + 1.0) / 2.0;
    let mu = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

fn mode_of(a: &RunArchive) -> String {
    a.meta.get("mode").cloned().unwrap_or_else(|| "unknown".into())
}

fn seed_key(a: &RunArchive) -> (u64, String) {
    let s = a.meta.get("seed").cloned().unwrap_or_default();
    (s.parse().unwrap_or(u64::MAX), s)
}

/// Summarizes archives grouped by their `mode` tag.
pub fn report(archives: &[RunArchive]) -> Result<Report> {
    if archives.is_empty() {
        return Err(Error::Empty("no archives to report".into()));
    }
    let mut groups: BTreeMap<String, Vec<&RunArchive>> = BTreeMap::new();
    for a in archives {
        groups.entry(mode_of(a)).or_default().push(a);
    }
    let mut modes = Vec::new();
    let mut histograms = BTreeMap::new();
    for (mode, runs) in &mut groups {
        runs.sort_by_key(|a| seed_key(a));
        let hv: Vec<f64> = runs.iter().map(|a| a.final_hv).collect();
        let acc: Vec<f64> = runs.iter().map(|a| 1.0 - a.best_error().unwrap_or(1.0)).collect();
        let evals: Vec<f64> = runs.iter().map(|a| a.ledger.len() as f64).collect();
        let (hv_mean, hv_std) = mean_std(&hv);
        let (best_acc_mean, best_acc_std) = mean_std(&acc);
        modes.push(ModeSummary {
            mode: mode.clone(),
            runs: runs.len(),
            hv_mean,
            hv_std,
            hv_median: median(&hv),
            best_acc_mean,
            best_acc_std,
            evaluations_mean: mean_std(&evals).0,
            hv,
            seeds: runs.iter().map(|a| seed_key(a).1).collect(),
        });
        let mut h = Histograms::default();
        for a in runs.iter() {
            for m in &a.final_front {
                h.front_members += 1;
                for &op in &m.enc.ops {
                    let op = op as usize;
                    if h.ops.len() <= op {
                        h.ops.resize(op + 1, 0);
                    }
                    h.ops[op] += 1;
                }
                let shape: Vec<String> = m.enc.pred.iter().map(u8::to_string).collect();
                *h.macros.entry(shape.join(",")).or_default() += 1;
            }
        }
        debug_assert_eq!(h.ops.iter().sum::<usize>(), h.front_members * NUM_VERTICES);
        histograms.insert(mode.clone(), h);
    }
    let mut tests = Vec::new();
    for (i, a) in modes.iter().enumerate() {
        for b in &modes[i + 1..] {
            let p = wilcoxon_rank_sum(&a.hv, &b.hv);
            let verdict = if p >= ALPHA {
                "≈"
            } else if a.hv_median >= b.hv_median {
                "+"
            } else {
                "-"
            };
            tests.push(PairTest { a: a.mode.clone(), b: b.mode.clone(), p_value: p, verdict: verdict.into() });
        }
    }
    Ok(Report { modes, tests, histograms })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn mode(&self, name: &str) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == name)
    }

    pub fn test(&self, a: &str, b: &str) -> Option<&PairTest> {
        self.tests.iter().find(|t| (t.a == a && t.b == b) || (t.a == b && t.b == a))
    }

    /// Plain-text table of the summaries and comparisons.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}",
            "mode", "runs", "hv_mean", "hv_std", "hv_median", "acc_mean", "acc_std", "evals"
        );
        for m in &self.modes {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>8.1}",
                m.mode, m.runs, m.hv_mean, m.hv_std, m.hv_median, m.best_acc_mean, m.best_acc_std, m.evaluations_mean
            );
        }
        if !self.tests.is_empty() {
            let _ = writeln!(out, "\nrank-sum tests on final hypervolume (alpha {ALPHA}):");
            for t in &self.tests {
                let _ = writeln!(out, "  {} vs {}: p = {:.3e} [{}]", t.a, t.b, t.p_value, t.verdict);
            }
        }
        for (mode, h) in &self.histograms {
            let ops: Vec<String> = h.ops.iter().enumerate().map(|(i, c)| format!("{i}:{c}")).collect();
            let _ = writeln!(out, "\n{mode}: {} front members; ops {}", h.front_members, ops.join(" "));
            let mut macros: Vec<(&String, &usize)> = h.macros.iter().collect();
            macros.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
            let top: Vec<String> = macros.iter().take(5).map(|(s, c)| format!("[{s}]:{c}")).collect();
            let _ = writeln!(out, "  top macros {}", top.join(" "));
        }
        out
    }
}
