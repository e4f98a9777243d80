use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::features::TaskFeatureDistribution;
use super::Oracle;
use crate::error::{Error, Result};
use crate::pareto::ObjectiveVector;
use crate::search_space::{Encoding, SearchSpace, NUM_VERTICES};

/// One tabular measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub acc: f64,
    pub params: f64,
}

impl Record {
    pub fn new(acc: f64, params: f64) -> Result<Self> {
        if !(acc.is_finite() && (0.0..=1.0).contains(&acc)) {
            return Err(Error::Numerical(format!("accuracy {acc} outside [0, 1]")));
        }
        if !(params.is_finite() && params > 0.0) {
            return Err(Error::Numerical(format!("parameter count {params} must be positive")));
        }
        Ok(Self { acc, params })
    }

    /// `(1 - acc, params)`.
    pub fn objectives(&self) -> ObjectiveVector {
        ObjectiveVector::from_accuracy(self.acc, self.params).expect("validated record")
    }
}

/// Tabular benchmark: per-task measurements keyed by canonical encoding,
/// plus optional per-task feature distributions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkTable {
    tasks: Vec<String>,
    records: BTreeMap<String, BTreeMap<Encoding, Record>>,
    features: BTreeMap<String, TaskFeatureDistribution>,
}

impl BenchmarkTable {
    pub fn new(tasks: Vec<String>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Empty("benchmark table declares no tasks".into()));
        }
        let mut records = BTreeMap::new();
        for t in &tasks {
            if t.is_empty() || t.contains(['\t', ',']) || t.trim() != t {
                return Err(Error::Parse(format!("invalid task id `{t}`")));
            }
            if records.insert(t.clone(), BTreeMap::new()).is_some() {
                return Err(Error::Parse(format!("duplicate task `{t}`")));
            }
        }
        Ok(Self { tasks, records, features: BTreeMap::new() })
    }

    /// Table of every canonical architecture of `space` under each oracle.
    pub fn from_oracles<O: Oracle>(space: &SearchSpace, oracles: &[(String, O)]) -> Result<Self> {
        let mut table = Self::new(oracles.iter().map(|(t, _)| t.clone()).collect())?;
        let all = space.enumerate();
        for (task, oracle) in oracles {
            for enc in &all {
                let obj = oracle.evaluate(enc)?;
                table.insert(task, *enc, Record::new(1.0 - obj.err(), obj.params())?)?;
            }
        }
        Ok(table)
    }

    /// Adds a record under the canonical form of `enc`.
    pub fn insert(&mut self, task: &str, enc: Encoding, record: Record) -> Result<()> {
        let rows = self.records.get_mut(task).ok_or_else(|| Error::UnknownTask(task.into()))?;
        if let Some(i) = (0..NUM_VERTICES).find(|&i| enc.pred[i] as usize > i) {
            return Err(Error::Parse(format!("{enc}: predecessor slot {i} points forward")));
        }
        let key = enc.canonical();
        if rows.insert(key, record).is_some() {
            return Err(Error::Parse(format!("duplicate encoding {key} for task `{task}`")));
        }
        Ok(())
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn records(&self, task: &str) -> Result<&BTreeMap<Encoding, Record>> {
        self.records.get(task).ok_or_else(|| Error::UnknownTask(task.into()))
    }

    pub fn lookup(&self, task: &str, enc: &Encoding) -> Result<ObjectiveVector> {
        self.records(task)?
            .get(&enc.canonical())
            .map(Record::objectives)
            .ok_or_else(|| Error::UnknownArchitecture { enc: enc.to_string(), task: task.into() })
    }

    pub fn len(&self) -> usize {
        self.records.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct architectures across all tasks.
    pub fn num_architectures(&self) -> usize {
        let mut all: Vec<&Encoding> = self.records.values().flat_map(|r| r.keys()).collect();
        all.sort();
        all.dedup();
        all.len()
    }

    /// Predecessor shapes present in the table, for a data-driven whitelist.
    pub fn macro_shapes(&self) -> Vec<[u8; NUM_VERTICES]> {
        let mut shapes: Vec<_> =
            self.records.values().flat_map(|r| r.keys().map(|e| e.shape())).collect();
        shapes.sort();
        shapes.dedup();
        shapes
    }

    /// Largest operation id plus one.
    pub fn num_ops(&self) -> usize {
        self.records
            .values()
            .flat_map(|r| r.keys())
            .flat_map(|e| e.ops)
            .max()
            .map_or(0, |m| m as usize + 1)
    }

    pub fn set_features(&mut self, task: &str, dist: TaskFeatureDistribution) -> Result<()> {
        if !self.records.contains_key(task) {
            return Err(Error::UnknownTask(task.into()));
        }
        self.features.insert(task.to_string(), dist);
        Ok(())
    }

    /// Attaches every distribution whose task id is in the table; others
    /// are ignored.
    pub fn attach_features(&mut self, features: &BTreeMap<String, TaskFeatureDistribution>) {
        for (task, dist) in features {
            if self.records.contains_key(task) {
                self.features.insert(task.clone(), dist.clone());
            }
        }
    }

    pub fn features(&self, task: &str) -> Option<&TaskFeatureDistribution> {
        self.features.get(task)
    }

    pub fn all_features(&self) -> &BTreeMap<String, TaskFeatureDistribution> {
        &self.features
    }

    /// Restriction of the table to a subset of its tasks.
    pub fn subset(&self, tasks: &[String]) -> Result<Self> {
        let mut out = Self::new(tasks.to_vec())?;
        for t in tasks {
            out.records.insert(t.clone(), self.records(t)?.clone());
            if let Some(f) = self.features.get(t) {
                out.features.insert(t.clone(), f.clone());
            }
        }
        Ok(out)
    }

    /// Parses the text format: a `tasks: a,b,...` header, then
    /// `p0,p1,p2,p3|o0,o1,o2,o3<TAB>task<TAB>acc<TAB>params` rows. Blank
    /// lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Format { line: line_no, message };
            let Some(t) = table.as_mut() else {
                let list = trimmed
                    .strip_prefix("tasks:")
                    .ok_or_else(|| err("expected `tasks:` header".into()))?;
                let tasks: Vec<String> = list
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                table = Some(Self::new(tasks).map_err(|e| err(e.to_string()))?);
                continue;
            };
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
            }
            let enc: Encoding = fields[0].parse().map_err(|e: Error| err(e.to_string()))?;
            let num = |s: &str, what: &str| {
                s.trim().parse::<f64>().map_err(|e| err(format!("bad {what}: {e}")))
            };
            let record = Record::new(num(fields[2], "accuracy")?, num(fields[3], "params")?)
                .map_err(|e| err(e.to_string()))?;
            t.insert(fields[1], enc, record).map_err(|e| err(e.to_string()))?;
        }
        table.ok_or_else(|| Error::Empty("benchmark table has no header".into()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("tasks: {}\n", self.tasks.join(","));
        for task in &self.tasks {
            for (enc, r) in &self.records[task] {
                writeln!(out, "{enc}\t{task}\t{:?}\t{:?}", r.acc, r.params).expect("string write");
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Exact lookup oracle over one task of a table.
#[derive(Debug, Clone)]
pub struct TabularOracle {
    task: String,
    rows: HashMap<Encoding, ObjectiveVector>,
    max_params: f64,
}

impl TabularOracle {
    pub fn new(table: &BenchmarkTable, task: &str) -> Result<Self> {
        let records = table.records(task)?;
        if records.is_empty() {
            return Err(Error::Empty(format!("task `{task}` has no records")));
        }
        let rows: HashMap<_, _> = records.iter().map(|(e, r)| (*e, r.objectives())).collect();
        let max_params = records.values().map(|r| r.params).fold(0.0, f64::max);
        Ok(Self { task: task.to_string(), rows, max_params })
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl Oracle for TabularOracle {
    fn evaluate(&self, enc: &Encoding) -> Result<ObjectiveVector> {
        self.rows.get(&enc.canonical()).cloned().ok_or_else(|| Error::UnknownArchitecture {
            enc: enc.to_string(),
            task: self.task.clone(),
        })
    }

    fn max_params(&self) -> f64 {
        self.max_params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "tasks: cora,citeseer\n\
        0,1,2,3|0,0,0,0\tcora\t0.81\t1200\n\
        0,0,0,0|7,7,7,7\tcora\t0.70\t20\n\
        0,1,2,3|0,0,0,0\tciteseer\t0.69\t1200\n";

    #[test]
    fn parse_lookup_and_round_trip() {
        let table = BenchmarkTable::parse(SAMPLE).unwrap();
        assert_eq!(table.tasks(), ["cora", "citeseer"]);
        assert_eq!(table.len(), 3);
        let enc: Encoding = "0,1,2,3|0,0,0,0".parse().unwrap();
        let obj = table.lookup("cora", &enc).unwrap();
        assert!((obj.err() - 0.19).abs() < 1e-12);
        assert_eq!(obj.params(), 1200.0);
        let again = BenchmarkTable::parse(&table.to_text()).unwrap();
        assert_eq!(again, table);
        assert_eq!(again.to_text(), table.to_text());
    }

    #[test]
    fn rows_are_canonicalized_and_duplicates_rejected() {
        let text = "tasks: a\n0,0,1,1|0,1,2,2\ta\t0.5\t3\n0,0,2,2|1,0,2,2\ta\t0.6\t3\n";
        let e = BenchmarkTable::parse(text).unwrap_err();
        assert!(matches!(e, Error::Format { line: 3, .. }), "{e}");
        let ok = BenchmarkTable::parse("tasks: a\n0,0,1,1|0,1,2,2\ta\t0.5\t3\n").unwrap();
        let oracle = TabularOracle::new(&ok, "a").unwrap();
        let iso: Encoding = "0,0,2,2|1,0,2,2".parse().unwrap();
        assert_eq!(oracle.evaluate(&iso).unwrap().params(), 3.0);
    }

    #[test]
    fn malformed_input_reports_line() {
        assert!(matches!(BenchmarkTable::parse("tasks: \n"), Err(Error::Format { line: 1, .. })));
        assert!(BenchmarkTable::parse("").is_err());
        let bad = "tasks: a\n\n0,1,2,3|0,0,0,0\ta\tx\t3\n";
        assert!(matches!(BenchmarkTable::parse(bad), Err(Error::Format { line: 3, .. })));
        let bad = "tasks: a\n0,2,0,0|0,0,0,0\ta\t0.5\t3\n";
        assert!(matches!(BenchmarkTable::parse(bad), Err(Error::Format { line: 2, .. })));
        let bad = "tasks: a\n0,1,2,3|0,0,0,0\tb\t0.5\t3\n";
        assert!(matches!(BenchmarkTable::parse(bad), Err(Error::Format { line: 2, .. })));
        let bad = "tasks: a\n0,1,2,3|0,0,0,0\ta\t1.5\t3\n";
        assert!(BenchmarkTable::parse(bad).is_err());
    }

    #[test]
    fn unknown_architecture_is_an_error() {
        let table = BenchmarkTable::parse(SAMPLE).unwrap();
        let oracle = TabularOracle::new(&table, "citeseer").unwrap();
        let missing: Encoding = "0,0,0,0|1,1,1,1".parse().unwrap();
        assert!(matches!(oracle.evaluate(&missing), Err(Error::UnknownArchitecture { .. })));
        assert!(TabularOracle::new(&table, "pubmed").is_err());
        assert_eq!(oracle.max_params(), 1200.0);
    }
}
