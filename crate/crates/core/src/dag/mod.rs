//! Causal DAGs, d-separation, and backdoor adjustment sets.
//!
//! Nodes are observed, latent, or deterministic (a latent node that is an
//! exact function of its parents). A deterministic node counts as
//! conditioned on whenever all of its parents are, which is what licenses
//! adjusting for the proxies of an unobserved behavioural variable.

mod adjust;
mod separation;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

pub use adjust::{
    backdoor_paths, backdoor_sets, derive_controls, drop_vaccination_channel, is_valid_adjustment,
    AdjustmentResult,
    AdjustmentSet, ControlBlock,
};
pub use separation::d_separated;

/// Name of the vaccination node in the bundled graphs.
pub const VACCINATION: &str = "V";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observability {
    Observed,
    Latent,
    /// Unobserved, but an exact function of its parents.
    Deterministic,
}

impl Observability {
    pub fn is_observed(self) -> bool {
        self == Observability::Observed
    }
}

/// A validated directed acyclic graph over named nodes.
#[derive(Debug, Clone)]
pub struct CausalDag {
    names: Vec<String>,
    observability: Vec<Observability>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

/// True iff the directed graph has no cycle. Endpoints missing from
/// `nodes` are treated as extra nodes.
pub fn is_acyclic(nodes: &[String], edges: &[(String, String)]) -> bool {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for n in nodes.iter().map(String::as_str).chain(edges.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()])) {
        let next = index.len();
        index.entry(n).or_insert(next);
    }
    let mut indegree = vec![0usize; index.len()];
    let mut out = vec![Vec::new(); index.len()];
    for (a, b) in edges {
        let (a, b) = (index[a.as_str()], index[b.as_str()]);
        out[a].push(b);
        indegree[b] += 1;
    }
    let mut queue: VecDeque<usize> = (0..index.len()).filter(|i| indegree[*i] == 0).collect();
    let mut visited = 0;
    while let Some(n) = queue.pop_front() {
        visited += 1;
        for &c in &out[n] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    visited == index.len()
}

impl CausalDag {
    pub fn new(nodes: Vec<(String, Observability)>, edges: Vec<(String, String)>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, (name, _)) in nodes.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::spec(format!("duplicate DAG node `{name}`")));
            }
        }
        let n = nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut edge_ids = Vec::with_capacity(edges.len());
        let mut seen = BTreeSet::new();
        for (a, b) in &edges {
            let lookup = |x: &String| {
                index
                    .get(x)
                    .copied()
                    .ok_or_else(|| Error::spec(format!("edge {a} -> {b} uses unknown node `{x}`")))
            };
            let (ia, ib) = (lookup(a)?, lookup(b)?);
            if ia == ib {
                return Err(Error::spec(format!("self-loop on `{a}`")));
            }
            if !seen.insert((ia, ib)) {
                return Err(Error::spec(format!("duplicate edge {a} -> {b}")));
            }
            parents[ib].push(ia);
            children[ia].push(ib);
            edge_ids.push((ia, ib));
        }
        let names: Vec<String> = nodes.iter().map(|(n, _)| n.clone()).collect();
        if !is_acyclic(&names, &edges) {
            return Err(Error::spec("graph has a directed cycle"));
        }
        Ok(CausalDag {
            names,
            observability: nodes.into_iter().map(|(_, o)| o).collect(),
            parents,
            children,
            edges: edge_ids,
            index,
        })
    }

    /// Parse the line format `node <name> [latent|deterministic]` /
    /// `edge <from> <to>`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::spec(format!("DAG line {}: cannot parse `{line}`", no + 1));
            match words.as_slice() {
                ["node", name] => nodes.push((name.to_string(), Observability::Observed)),
                ["node", name, "latent"] => nodes.push((name.to_string(), Observability::Latent)),
                ["node", name, "deterministic"] => {
                    nodes.push((name.to_string(), Observability::Deterministic))
                }
                ["edge", a, b] => edges.push((a.to_string(), b.to_string())),
                _ => return Err(bad()),
            }
        }
        CausalDag::new(nodes, edges)
    }

    /// The graph with one node (and every edge touching it) removed.
    pub fn without_node(&self, name: &str) -> Result<CausalDag> {
        let drop = self.node(name)?;
        let nodes = (0..self.len())
            .filter(|i| *i != drop)
            .map(|i| (self.names[i].clone(), self.observability[i]))
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|(a, b)| *a != drop && *b != drop)
            .map(|(a, b)| (self.names[*a].clone(), self.names[*b].clone()))
            .collect();
        CausalDag::new(nodes, edges)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn node(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::spec(format!("unknown DAG node `{name}`")))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn observability(&self, id: usize) -> Observability {
        self.observability[id]
    }

    pub fn parents(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_names(&self) -> BTreeSet<String> {
        self.names.iter().cloned().collect()
    }

    pub fn edge_names(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|(a, b)| (self.names[*a].clone(), self.names[*b].clone()))
            .collect()
    }

    /// Number of edges touching `id`.
    pub fn degree(&self, id: usize) -> usize {
        self.parents[id].len() + self.children[id].len()
    }

    /// `id` and everything reachable from it along directed edges.
    pub fn descendants(&self, id: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if !std::mem::replace(&mut seen[n], true) {
                stack.extend(&self.children[n]);
            }
        }
        seen
    }

    /// Close `set` under the deterministic rule: add every deterministic
    /// node whose parents are all in the set, repeatedly. Nodes in
    /// `exclude` are never added.
    pub(crate) fn determined_closure(&self, set: &mut [bool], exclude: &[usize]) {
        loop {
            let mut changed = false;
            for n in 0..self.len() {
                if !set[n]
                    && self.observability[n] == Observability::Deterministic
                    && !exclude.contains(&n)
                    && self.parents[n].iter().all(|p| set[*p])
                {
                    set[n] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
}

impl fmt::Display for CausalDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, obs) in self.names.iter().zip(&self.observability) {
            match obs {
                Observability::Observed => writeln!(f, "node {name}")?,
                Observability::Latent => writeln!(f, "node {name} latent")?,
                Observability::Deterministic => writeln!(f, "node {name} deterministic")?,
            }
        }
        for (a, b) in &self.edges {
            writeln!(f, "edge {} {}", self.names[*a], self.names[*b])?;
        }
        Ok(())
    }
}

/// The graphs shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bundled {
    /// Full sample: vaccination, soft indexes, behaviour, lagged outcome.
    MobilityFull,
    /// 2020 sample: the full graph without vaccination.
    Mobility2020,
    /// Mobility → outcome only.
    DirectEffect,
    /// Vaccination confounds mobility and outcome.
    VaccinationConfounder,
}

impl Bundled {
    pub const ALL: [Bundled; 4] = [
        Bundled::MobilityFull,
        Bundled::Mobility2020,
        Bundled::DirectEffect,
        Bundled::VaccinationConfounder,
    ];

    pub fn source(self) -> &'static str {
        match self {
            Bundled::MobilityFull => include_str!("../../dags/mobility_full.dag"),
            Bundled::Mobility2020 => include_str!("../../dags/mobility_2020.dag"),
            Bundled::DirectEffect => include_str!("../../dags/direct_effect.dag"),
            Bundled::VaccinationConfounder => include_str!("../../dags/vaccination_confounder.dag"),
        }
    }

    pub fn load(self) -> CausalDag {
        CausalDag::parse(self.source()).expect("bundled DAG parses")
    }
}
