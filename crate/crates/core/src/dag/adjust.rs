use std::fmt;

use super::separation::{active_reach, conditioning_mask};
use super::{CausalDag, VACCINATION};
use crate::error::{Error, Result};

/// One valid backdoor adjustment set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustmentSet {
    /// Node names, sorted.
    pub nodes: Vec<String>,
    /// True when the set only blocks every backdoor path because a
    /// deterministic node counts as conditioned on through its parents.
    pub uses_deterministic_proxy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdjustmentResult {
    /// Minimal valid sets, smallest first, lexicographic within a size.
    pub sets: Vec<AdjustmentSet>,
}

impl AdjustmentResult {
    pub fn is_identified(&self) -> bool {
        !self.sets.is_empty()
    }

    pub fn smallest(&self) -> Option<&AdjustmentSet> {
        self.sets.first()
    }

    pub fn contains(&self, nodes: &[&str]) -> bool {
        let mut want: Vec<&str> = nodes.to_vec();
        want.sort_unstable();
        self.sets
            .iter()
            .any(|s| s.nodes.iter().map(String::as_str).eq(want.iter().copied()))
    }
}

fn endpoints(dag: &CausalDag, x: &str, y: &str) -> Result<(usize, usize)> {
    let (ix, iy) = (dag.node(x)?, dag.node(y)?);
    if ix == iy {
        return Err(Error::spec(format!("treatment and outcome are both `{x}`")));
    }
    Ok((ix, iy))
}

fn blocks(dag: &CausalDag, ix: usize, iy: usize, set: &[usize], closure: bool) -> bool {
    let mask = conditioning_mask(dag, set, &[ix, iy], closure);
    !active_reach(dag, ix, &mask, true)[iy]
}

/// Observed nodes that may enter an adjustment set, sorted by name.
fn eligible(dag: &CausalDag, ix: usize, iy: usize) -> Vec<usize> {
    let desc = dag.descendants(ix);
    let mut out: Vec<usize> = (0..dag.len())
        .filter(|v| *v != ix && *v != iy && !desc[*v] && dag.observability(*v).is_observed())
        .collect();
    out.sort_by(|a, b| dag.name(*a).cmp(dag.name(*b)));
    out
}

/// Whether `set` satisfies the backdoor criterion for `x → y`: it holds no
/// descendant of `x` and blocks every path that enters `x` through a parent.
pub fn is_valid_adjustment(dag: &CausalDag, x: &str, y: &str, set: &[&str]) -> Result<bool> {
    let (ix, iy) = endpoints(dag, x, y)?;
    let ids: Vec<usize> = set.iter().map(|n| dag.node(n)).collect::<Result<_>>()?;
    let desc = dag.descendants(ix);
    if ids.iter().any(|v| desc[*v] || *v == iy) {
        return Ok(false);
    }
    Ok(blocks(dag, ix, iy, &ids, true))
}

fn combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        visit(&idx);
        let Some(i) = (0..k).rev().find(|i| idx[*i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All minimal backdoor adjustment sets of at most `max_size` observed
/// nodes, smallest first.
pub fn backdoor_sets(dag: &CausalDag, x: &str, y: &str, max_size: usize) -> Result<AdjustmentResult> {
    let (ix, iy) = endpoints(dag, x, y)?;
    let pool = eligible(dag, ix, iy);
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut sets = Vec::new();
    for k in 0..=max_size.min(pool.len()) {
        combinations(pool.len(), k, |pick| {
            let set: Vec<usize> = pick.iter().map(|i| pool[*i]).collect();
            if found.iter().any(|f| f.iter().all(|v| set.contains(v))) {
                return;
            }
            if blocks(dag, ix, iy, &set, true) {
                sets.push(AdjustmentSet {
                    nodes: set.iter().map(|v| dag.name(*v).to_string()).collect(),
                    uses_deterministic_proxy: !blocks(dag, ix, iy, &set, false),
                });
                found.push(set);
            }
        });
    }
    Ok(AdjustmentResult { sets })
}

/// Backdoor paths from `x` to `y` left open by `conditioning`, each as the
/// node sequence starting at `x`.
pub fn backdoor_paths(dag: &CausalDag, x: &str, y: &str, conditioning: &[&str]) -> Result<Vec<Vec<String>>> {
    let (ix, iy) = endpoints(dag, x, y)?;
    let ids: Vec<usize> = conditioning.iter().map(|n| dag.node(n)).collect::<Result<_>>()?;
    let mask = conditioning_mask(dag, &ids, &[ix, iy], true);
    let opens: Vec<bool> = (0..dag.len())
        .map(|v| dag.descendants(v).iter().zip(&mask).any(|(d, m)| *d && *m))
        .collect();
    let mut out = Vec::new();
    let mut path = vec![ix];
    let mut on_path = vec![false; dag.len()];
    on_path[ix] = true;
    for &p in dag.parents(ix) {
        walk(dag, p, iy, &mask, &opens, &mut path, &mut on_path, &mut out);
    }
    Ok(out
        .into_iter()
        .map(|p| p.into_iter().map(|v| dag.name(v).to_string()).collect())
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn walk(
    dag: &CausalDag,
    v: usize,
    target: usize,
    mask: &[bool],
    opens: &[bool],
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    if on_path[v] {
        return;
    }
    let prev = *path.last().expect("path starts at x");
    path.push(v);
    on_path[v] = true;
    if v == target {
        out.push(path.clone());
    } else {
        let into_v_from_prev = dag.parents(v).contains(&prev);
        let neighbours = dag.parents(v).iter().chain(dag.children(v)).copied();
        for next in neighbours.collect::<Vec<_>>() {
            let collider = into_v_from_prev && dag.parents(v).contains(&next);
            let open = if collider { opens[v] } else { !mask[v] };
            if open {
                walk(dag, next, target, mask, opens, path, on_path, out);
            }
        }
    }
    path.pop();
    on_path[v] = false;
}

/// The graph without the vaccination node and its edges.
pub fn drop_vaccination_channel(dag: &CausalDag) -> Result<CausalDag> {
    if dag.node(VACCINATION).is_err() {
        return Err(Error::spec(format!("graph has no `{VACCINATION}` node to remove")));
    }
    dag.without_node(VACCINATION)
}

/// Groups of regressors a DAG node stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControlBlock {
    Vaccination,
    SoftBehavioral,
    SoftGeneral,
    DepLags,
}

impl ControlBlock {
    pub const ALL: [ControlBlock; 4] = [
        ControlBlock::Vaccination,
        ControlBlock::SoftBehavioral,
        ControlBlock::SoftGeneral,
        ControlBlock::DepLags,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControlBlock::Vaccination => "vaccination",
            ControlBlock::SoftBehavioral => "soft_behavioral",
            ControlBlock::SoftGeneral => "soft_general",
            ControlBlock::DepLags => "dep_lags",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown control block `{s}`")))
    }

    /// The block a DAG node maps to.
    pub fn for_node(name: &str) -> Option<Self> {
        match name {
            "V" => Some(ControlBlock::Vaccination),
            "G_b" | "N_b" => Some(ControlBlock::SoftBehavioral),
            "G_g" | "N_g" => Some(ControlBlock::SoftGeneral),
            "Y_lag" => Some(ControlBlock::DepLags),
            _ => None,
        }
    }
}

impl fmt::Display for ControlBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Control blocks for the smallest valid adjustment set of `x → y`.
pub fn derive_controls(dag: &CausalDag, x: &str, y: &str) -> Result<Vec<ControlBlock>> {
    let (ix, iy) = endpoints(dag, x, y)?;
    let max = eligible(dag, ix, iy).len();
    let result = backdoor_sets(dag, x, y, max)?;
    let Some(best) = result.smallest() else {
        let listed: Vec<String> = backdoor_paths(dag, x, y, &[])?
            .iter()
            .map(|p| p.join(" - "))
            .collect();
        return Err(Error::Identifiability(format!(
            "no observed set blocks the backdoor paths from {x} to {y}: {}",
            listed.join("; ")
        )));
    };
    let mut blocks = Vec::new();
    for name in &best.nodes {
        let block = ControlBlock::for_node(name)
            .ok_or_else(|| Error::spec(format!("node `{name}` has no regressor block")))?;
        if !blocks.contains(&block) {
            blocks.push(block);
        }
    }
    blocks.sort();
    Ok(blocks)
}
