//! The DAG architecture space: encodings, validity, decoding, isomorphism
//! canonicalization, sampling and enumeration.
//!
//! Every architecture has an input vertex (index 0), four intermediate
//! vertices (1..=4) and an output vertex. Each intermediate vertex has exactly
//! one incoming edge, so the macro graph is a tree rooted at the input vertex.
//! Intermediate vertices without successors feed the output by concatenation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of intermediate vertices in every architecture.
pub const NUM_VERTICES: usize = 4;
/// Number of integer slots in an encoding (predecessors then operations).
pub const NUM_SLOTS: usize = 2 * NUM_VERTICES;

pub const DEFAULT_OP_NAMES: [&str; 9] = [
    "GCN",
    "GraphSAGE",
    "GAT",
    "GIN",
    "ChebNet",
    "ARMA",
    "k-GNN",
    "RC",
    "FC",
];

/// Description of the architecture space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    num_intermediate: usize,
    op_names: Vec<String>,
    macro_whitelist: Option<BTreeSet<[u8; NUM_VERTICES]>>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self::with_op_names(DEFAULT_OP_NAMES.iter().map(|s| s.to_string()).collect())
            .expect("default space is valid")
    }
}

impl SearchSpace {
    pub fn with_op_names(op_names: Vec<String>) -> Result<Self> {
        if op_names.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "search space needs at least 2 operations, got {}",
                op_names.len()
            )));
        }
        if op_names.len() > u8::MAX as usize {
            return Err(Error::InvalidConfig("too many operations".into()));
        }
        Ok(Self {
            num_intermediate: NUM_VERTICES,
            op_names,
            macro_whitelist: None,
        })
    }

    /// A space with `num_ops` operations. The first nine take the default
    /// labels; any further ones are named `op<k>`.
    pub fn with_num_ops(num_ops: usize) -> Result<Self> {
        let names = (0..num_ops)
            .map(|k| match DEFAULT_OP_NAMES.get(k) {
                Some(name) => name.to_string(),
                None => format!("op{k}"),
            })
            .collect();
        Self::with_op_names(names)
    }

    /// Restricts the admissible topologies. Entries are predecessor vectors;
    /// they are stored in canonical (shape) form.
    pub fn with_macro_whitelist<I>(mut self, shapes: I) -> Result<Self>
    where
        I: IntoIterator<Item = [u8; NUM_VERTICES]>,
    {
        let mut set = BTreeSet::new();
        for pred in shapes {
            let probe = Encoding::new(pred, [0; NUM_VERTICES]);
            if let Some(violation) = probe.first_violation(self.num_ops()) {
                return Err(Error::InvalidEncoding(violation));
            }
            set.insert(probe.shape());
        }
        self.macro_whitelist = Some(set);
        Ok(self)
    }

    pub fn num_intermediate(&self) -> usize {
        self.num_intermediate
    }

    pub fn num_ops(&self) -> usize {
        self.op_names.len()
    }

    pub fn op_names(&self) -> &[String] {
        &self.op_names
    }

    pub fn macro_whitelist(&self) -> Option<&BTreeSet<[u8; NUM_VERTICES]>> {
        self.macro_whitelist.as_ref()
    }

    /// Inclusive upper bound of each slot's legal range.
    pub fn slot_upper_bounds(&self) -> [u8; NUM_SLOTS] {
        let top_op = (self.num_ops() - 1) as u8;
        [0, 1, 2, 3, top_op, top_op, top_op, top_op]
    }

    /// Validates an arbitrary slot vector. Fails on the first slot that
    /// breaks a rule.
    pub fn validate_slots(&self, slots: &[i64]) -> Result<Encoding> {
        if slots.len() != NUM_SLOTS {
            return Err(Error::InvalidEncoding(Violation {
                slot: slots.len().min(NUM_SLOTS),
                rule: Rule::Length(slots.len()),
            }));
        }
        let upper = self.slot_upper_bounds();
        for (slot, &value) in slots.iter().enumerate() {
            if value < 0 || value > upper[slot] as i64 {
                let rule = if slot < NUM_VERTICES {
                    Rule::ForwardPredecessor { value }
                } else {
                    Rule::OpOutOfRange { value, num_ops: self.num_ops() }
                };
                return Err(Error::InvalidEncoding(Violation { slot, rule }));
            }
        }
        let mut pred = [0u8; NUM_VERTICES];
        let mut ops = [0u8; NUM_VERTICES];
        for i in 0..NUM_VERTICES {
            pred[i] = slots[i] as u8;
            ops[i] = slots[NUM_VERTICES + i] as u8;
        }
        let enc = Encoding::new(pred, ops);
        self.validate(&enc)?;
        Ok(enc)
    }

    pub fn validate(&self, enc: &Encoding) -> Result<()> {
        if let Some(violation) = enc.first_violation(self.num_ops()) {
            return Err(Error::InvalidEncoding(violation));
        }
        if let Some(whitelist) = &self.macro_whitelist {
            if !whitelist.contains(&enc.shape()) {
                return Err(Error::InvalidEncoding(Violation {
                    slot: 0,
                    rule: Rule::MacroNotWhitelisted { pred: enc.pred },
                }));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self, enc: &Encoding) -> bool {
        self.validate(enc).is_ok()
    }

    pub fn decode(&self, enc: &Encoding) -> Result<ArchitectureDag> {
        self.validate(enc)?;
        Ok(ArchitectureDag::from_valid(enc))
    }

    pub fn canonicalize(&self, enc: &Encoding) -> Result<Encoding> {
        self.validate(enc)?;
        Ok(enc.canonical())
    }

    /// Uniform over slot values; deterministic for a given seed.
    pub fn random_architecture(&self, seed: u64) -> Encoding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(&mut rng)
    }

    /// Draws one encoding from a running generator. With a whitelist the
    /// draw is rejected until the topology is admissible.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Encoding {
        loop {
            let mut pred = [0u8; NUM_VERTICES];
            let mut ops = [0u8; NUM_VERTICES];
            for i in 0..NUM_VERTICES {
                pred[i] = rng.random_range(0..=i as u8);
                ops[i] = rng.random_range(0..self.num_ops() as u8);
            }
            let enc = Encoding::new(pred, ops);
            if self.is_valid(&enc) {
                return enc;
            }
        }
    }

    /// Every isomorphism class exactly once, as canonical encodings in
    /// ascending order.
    pub fn enumerate(&self) -> Vec<Encoding> {
        let mut classes = BTreeSet::new();
        for enc in self.raw_encodings() {
            if self.is_valid(&enc) {
                classes.insert(enc.canonical());
            }
        }
        classes.into_iter().collect()
    }

    /// Number of raw (not de-duplicated) encodings: 4! topologies times
    /// num_ops^4 labelings.
    pub fn raw_size(&self) -> usize {
        24 * self.num_ops().pow(NUM_VERTICES as u32)
    }

    /// All raw encodings in lexicographic slot order.
    pub fn raw_encodings(&self) -> impl Iterator<Item = Encoding> + '_ {
        let n = self.num_ops();
        let label_count = n.pow(NUM_VERTICES as u32);
        (0..24usize).flat_map(move |topo| {
            let pred = [0u8, (topo / 12) as u8, ((topo / 4) % 3) as u8, (topo % 4) as u8];
            (0..label_count).map(move |mut code| {
                let mut ops = [0u8; NUM_VERTICES];
                for slot in (0..NUM_VERTICES).rev() {
                    ops[slot] = (code % n) as u8;
                    code /= n;
                }
                Encoding::new(pred, ops)
            })
        })
    }
}

/// Which validity rule a slot broke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    Length(usize),
    ForwardPredecessor { value: i64 },
    OpOutOfRange { value: i64, num_ops: usize },
    MacroNotWhitelisted { pred: [u8; NUM_VERTICES] },
}

/// The first failing slot of an encoding and the rule it broke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub slot: usize,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::Length(len) => write!(f, "expected {NUM_SLOTS} slots, got {len}"),
            Rule::ForwardPredecessor { value } => write!(
                f,
                "slot {}: predecessor {} must lie in 0..={}",
                self.slot, value, self.slot
            ),
            Rule::OpOutOfRange { value, num_ops } => write!(
                f,
                "slot {}: operation {} must lie in 0..{}",
                self.slot, value, num_ops
            ),
            Rule::MacroNotWhitelisted { pred } => {
                write!(f, "topology {pred:?} is not in the macro whitelist")
            }
        }
    }
}

/// Eight-slot architecture encoding. `pred[i]` is the predecessor of vertex
/// `i + 1` (0 is the input vertex); `ops[i]` is the operation of vertex `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Encoding {
    pub pred: [u8; NUM_VERTICES],
    pub ops: [u8; NUM_VERTICES],
}

impl Encoding {
    pub const fn new(pred: [u8; NUM_VERTICES], ops: [u8; NUM_VERTICES]) -> Self {
        Self { pred, ops }
    }

    pub fn slots(&self) -> [u8; NUM_SLOTS] {
        let mut out = [0u8; NUM_SLOTS];
        out[..NUM_VERTICES].copy_from_slice(&self.pred);
        out[NUM_VERTICES..].copy_from_slice(&self.ops);
        out
    }

    pub fn from_slots(slots: [u8; NUM_SLOTS]) -> Self {
        let mut pred = [0u8; NUM_VERTICES];
        let mut ops = [0u8; NUM_VERTICES];
        pred.copy_from_slice(&slots[..NUM_VERTICES]);
        ops.copy_from_slice(&slots[NUM_VERTICES..]);
        Self { pred, ops }
    }

    fn first_violation(&self, num_ops: usize) -> Option<Violation> {
        for (i, &p) in self.pred.iter().enumerate() {
            if p as usize > i {
                return Some(Violation {
                    slot: i,
                    rule: Rule::ForwardPredecessor { value: p as i64 },
                });
            }
        }
        for (i, &o) in self.ops.iter().enumerate() {
            if o as usize >= num_ops {
                return Some(Violation {
                    slot: NUM_VERTICES + i,
                    rule: Rule::OpOutOfRange { value: o as i64, num_ops },
                });
            }
        }
        None
    }

    /// Children of each vertex (0 = input, 1..=4 intermediates), ascending.
    pub fn children(&self) -> [Vec<usize>; NUM_VERTICES + 1] {
        let mut children: [Vec<usize>; NUM_VERTICES + 1] = Default::default();
        for (i, &p) in self.pred.iter().enumerate() {
            children[p as usize].push(i + 1);
        }
        children
    }

    /// Intermediate vertices with no successor, ascending.
    pub fn leaves(&self) -> Vec<usize> {
        let children = self.children();
        (1..=NUM_VERTICES).filter(|&v| children[v].is_empty()).collect()
    }

    /// Depth of each intermediate vertex (input has depth 0).
    pub fn depths(&self) -> [usize; NUM_VERTICES] {
        let mut depth = [0usize; NUM_VERTICES + 1];
        for v in 1..=NUM_VERTICES {
            depth[v] = depth[self.pred[v - 1] as usize] + 1;
        }
        let mut out = [0usize; NUM_VERTICES];
        out.copy_from_slice(&depth[1..]);
        out
    }

    /// Representative of the isomorphism class. Requires a structurally
    /// valid encoding (predecessors precede their vertex).
    ///
    /// Sibling subtrees are ordered by (operation, subtree signature) and the
    /// vertices are renumbered in preorder.
    pub fn canonical(&self) -> Encoding {
        let children = self.children();
        let mut sigs: [Vec<u8>; NUM_VERTICES + 1] = Default::default();
        // children always carry larger indices, so a reverse sweep is bottom-up
        for v in (0..=NUM_VERTICES).rev() {
            let mut kids: Vec<&Vec<u8>> = children[v].iter().map(|&c| &sigs[c]).collect();
            kids.sort();
            let mut sig = Vec::with_capacity(16);
            sig.push(if v == 0 { u8::MAX } else { self.ops[v - 1] });
            sig.push(kids.len() as u8);
            for k in kids {
                sig.extend_from_slice(k);
            }
            sigs[v] = sig;
        }

        let mut pred = [0u8; NUM_VERTICES];
        let mut ops = [0u8; NUM_VERTICES];
        let mut next = 1usize;
        // explicit preorder stack of (old vertex, new parent index)
        let mut stack: Vec<(usize, usize)> = Vec::with_capacity(NUM_VERTICES);
        let push_children = |stack: &mut Vec<(usize, usize)>, v: usize, new_v: usize| {
            let mut kids = children[v].clone();
            kids.sort_by(|&a, &b| sigs[a].cmp(&sigs[b]).then(a.cmp(&b)));
            for &c in kids.iter().rev() {
                stack.push((c, new_v));
            }
        };
        push_children(&mut stack, 0, 0);
        while let Some((old, parent)) = stack.pop() {
            let new_v = next;
            next += 1;
            pred[new_v - 1] = parent as u8;
            ops[new_v - 1] = self.ops[old - 1];
            push_children(&mut stack, old, new_v);
        }
        Encoding { pred, ops }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical() == *self
    }

    /// Canonical topology with the operation labels erased.
    pub fn shape(&self) -> [u8; NUM_VERTICES] {
        Encoding::new(self.pred, [0; NUM_VERTICES]).canonical().pred
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.pred;
        let o = self.ops;
        write!(
            f,
            "{},{},{},{}|{},{},{},{}",
            p[0], p[1], p[2], p[3], o[0], o[1], o[2], o[3]
        )
    }
}

impl FromStr for Encoding {
    type Err = Error;

    /// Parses `p0,p1,p2,p3|o0,o1,o2,o3`. Only the slot syntax is checked;
    /// range checks against a space happen in [`SearchSpace::validate`].
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed encoding `{s}`"));
        let (pred_s, ops_s) = s.trim().split_once('|').ok_or_else(bad)?;
        let parse4 = |part: &str| -> Result<[u8; NUM_VERTICES]> {
            let vals: Vec<u8> = part
                .split(',')
                .map(|x| x.trim().parse::<u8>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            vals.try_into().map_err(|_| bad())
        };
        let enc = Encoding::new(parse4(pred_s)?, parse4(ops_s)?);
        if let Some(v) = enc.first_violation(usize::MAX) {
            return Err(Error::InvalidEncoding(v));
        }
        Ok(enc)
    }
}

impl Serialize for Encoding {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Encoding {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Explicit graph view of a decoded architecture. Vertex 0 is the input,
/// 1..=4 the intermediates, 5 the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureDag {
    pub ops: [u8; NUM_VERTICES],
    /// `(from, to)` edges between input/intermediate vertices.
    pub edges: Vec<(usize, usize)>,
    /// Intermediates concatenated into the output vertex.
    pub output_inputs: Vec<usize>,
}

impl ArchitectureDag {
    pub const INPUT: usize = 0;
    pub const OUTPUT: usize = NUM_VERTICES + 1;

    fn from_valid(enc: &Encoding) -> Self {
        let edges = enc
            .pred
            .iter()
            .enumerate()
            .map(|(i, &p)| (p as usize, i + 1))
            .collect();
        Self {
            ops: enc.ops,
            edges,
            output_inputs: enc.leaves(),
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        if to == Self::OUTPUT {
            return self.output_inputs.contains(&from);
        }
        self.edges.contains(&(from, to))
    }

    /// Re-encodes the graph; inverse of decode.
    pub fn encode(&self) -> Encoding {
        let mut pred = [0u8; NUM_VERTICES];
        for &(from, to) in &self.edges {
            pred[to - 1] = from as u8;
        }
        Encoding::new(pred, self.ops)
    }
}
