//! Pareto dominance, non-dominated sorting, crowding distance and the exact
//! two-objective hypervolume. All objectives are minimized.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective values of one architecture, minimization convention.
///
/// For the two-objective setting the first entry is the error `1 - acc` and
/// the second the parameter-count proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: values.len() });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite objective {bad}")));
        }
        Ok(Self(values))
    }

    pub fn pair(err: f64, params: f64) -> Result<Self> {
        Self::new(vec![err, params])
    }

    /// Error `1 - acc` paired with the parameter proxy.
    pub fn from_accuracy(acc: f64, params: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Numerical(format!("accuracy {acc} outside [0, 1]")));
        }
        Self::pair(1.0 - acc, params)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn err(&self) -> f64 {
        self.0[0]
    }

    pub fn params(&self) -> f64 {
        self.0[1]
    }
}

impl AsRef<[f64]> for ObjectiveVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `a` dominates `b`: no worse anywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Result of non-dominated sorting.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrontPartition {
    /// Materialized fronts, best first. Members are input indices, ascending.
    pub fronts: Vec<Vec<usize>>,
    /// Front index per input point; `None` when it falls beyond the
    /// requested number of fronts.
    pub rank: Vec<Option<usize>>,
}

impl FrontPartition {
    pub fn first(&self) -> &[usize] {
        self.fronts.first().map(Vec::as_slice).unwrap_or(&[])
    }

    /// All materialized members in front order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.fronts.iter().flatten().copied()
    }
}

/// Partitions `points` into successive non-dominated fronts.
///
/// Points are visited in lexicographic objective order, so a point can only
/// be dominated by points already placed; each point joins the first front
/// holding none of its dominators. With `max_fronts = Some(k)` only the
/// first `k` fronts are materialized and the remaining points get rank
/// `None`.
pub fn fast_nondominated_sort<P: AsRef<[f64]>>(
    points: &[P],
    max_fronts: Option<usize>,
) -> FrontPartition {
    let n = points.len();
    let mut rank = vec![None; n];
    if n == 0 || max_fronts == Some(0) {
        return FrontPartition { fronts: Vec::new(), rank };
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(points[a].as_ref(), points[b].as_ref()).then(a.cmp(&b)));

    let limit = max_fronts.unwrap_or(usize::MAX);
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    for &p in &order {
        let pv = points[p].as_ref();
        let mut placed = None;
        for (k, front) in fronts.iter().enumerate() {
            let dominated = front
                .iter()
                .rev()
                .any(|&q| dominates_unchecked(points[q].as_ref(), pv));
            if !dominated {
                placed = Some(k);
                break;
            }
        }
        match placed {
            Some(k) => {
                fronts[k].push(p);
                rank[p] = Some(k);
            }
            None if fronts.len() < limit => {
                rank[p] = Some(fronts.len());
                fronts.push(vec![p]);
            }
            None => {}
        }
    }
    for front in &mut fronts {
        front.sort_unstable();
    }
    FrontPartition { fronts, rank }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Indices of the non-dominated points, ascending.
pub fn non_dominated<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    fast_nondominated_sort(points, Some(1)).fronts.pop().unwrap_or_default()
}

/// NSGA-II crowding distance of each member of a front.
pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut dist = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for obj in 0..m {
        order.sort_by(|&a, &b| {
            front[a].as_ref()[obj]
                .partial_cmp(&front[b].as_ref()[obj])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let lo = front[order[0]].as_ref()[obj];
        let hi = front[order[n - 1]].as_ref()[obj];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                let gap = front[order[w + 1]].as_ref()[obj] - front[order[w - 1]].as_ref()[obj];
                dist[i] += gap / range;
            }
        }
    }
    dist
}

/// Exact area dominated by `points` and bounded by `reference`, for two
/// minimized objectives. Points not strictly better than the reference in
/// both coordinates contribute nothing.
pub fn hypervolume_2d<P: AsRef<[f64]>>(points: &[P], reference: [f64; 2]) -> f64 {
    let mut kept: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            let p = p.as_ref();
            [p[0], p[1]]
        })
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .collect();
    kept.sort_by(|a, b| lex_cmp(a, b));
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for [x, y] in kept {
        if y < ceiling {
            area += (reference[0] - x) * (ceiling - y);
            ceiling = y;
        }
    }
    area
}
