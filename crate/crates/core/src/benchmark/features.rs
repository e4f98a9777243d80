use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension of task features.
pub const FEATURE_DIM: usize = 32;

/// Diagonal Gaussian over task features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFeatureDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl TaskFeatureDistribution {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, got: mu.len() });
        }
        if sigma.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, got: sigma.len() });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature mean".into()));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Numerical("feature std-devs must be positive".into()));
        }
        Ok(Self { mu, sigma })
    }

    /// Reparameterized draw `mu + sigma * eps`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + s * eps
            })
            .collect()
    }
}

/// Parses `task_id<TAB>mu[32 csv]<TAB>sigma[32 csv]` lines. Blank lines and
/// `#` comments are skipped.
pub fn parse_features(text: &str) -> Result<BTreeMap<String, TaskFeatureDistribution>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Format { line: line_no, message };
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let parse = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("bad number: {e}")))
        };
        let dist = TaskFeatureDistribution::new(parse(fields[1])?, parse(fields[2])?)
            .map_err(|e| err(e.to_string()))?;
        if out.insert(fields[0].to_string(), dist).is_some() {
            return Err(err(format!("duplicate task `{}`", fields[0])));
        }
    }
    Ok(out)
}

pub fn load_features(path: &Path) -> Result<BTreeMap<String, TaskFeatureDistribution>> {
    parse_features(&std::fs::read_to_string(path)?)
}

pub fn format_features(features: &BTreeMap<String, TaskFeatureDistribution>) -> String {
    let mut out = String::new();
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    for (id, d) in features {
        let _ = writeln!(out, "{id}\t{}\t{}", join(&d.mu), join(&d.sigma));
    }
    out
}

pub fn save_features(path: &Path, features: &BTreeMap<String, TaskFeatureDistribution>) -> Result<()> {
    std::fs::write(path, format_features(features))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let mut m = BTreeMap::new();
        m.insert(
            "cora".to_string(),
            TaskFeatureDistribution::new(vec![0.25; FEATURE_DIM], vec![0.5; FEATURE_DIM]).unwrap(),
        );
        let text = format_features(&m);
        assert_eq!(parse_features(&text).unwrap(), m);
        assert!(parse_features("a\t1,2\t3,4\n").is_err());
        let zero_sigma = text.replace("\t0.5,", "\t0,");
        assert!(matches!(parse_features(&zero_sigma), Err(Error::Format { line: 1, .. })));
        assert!(TaskFeatureDistribution::new(vec![0.0; 3], vec![1.0; 3]).is_err());
    }
}
