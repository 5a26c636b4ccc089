use super::CausalDag;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Arrived from a child (moving against an edge).
    Up,
    /// Arrived from a parent (moving along an edge).
    Down,
}

/// Nodes reachable from `source` along active trails given `conditioned`.
///
/// With `backdoor` set, edges out of `source` are ignored, which restricts
/// the search to trails that start with an arrow into `source`.
pub(crate) fn active_reach(
    dag: &CausalDag,
    source: usize,
    conditioned: &[bool],
    backdoor: bool,
) -> Vec<bool> {
    let n = dag.len();
    let skip = |from: usize, to: usize| backdoor && from == source && to != source;
    let parents_of = |v: usize| {
        dag.parents(v)
            .iter()
            .copied()
            .filter(move |p| !(backdoor && *p == source))
    };
    let children_of = |v: usize| dag.children(v).iter().copied().filter(move |c| !skip(v, *c));

    // Conditioned nodes and their ancestors (open colliders).
    let mut opens = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|v| conditioned[*v]).collect();
    while let Some(v) = stack.pop() {
        if !std::mem::replace(&mut opens[v], true) {
            stack.extend(parents_of(v));
        }
    }

    let mut visited = vec![[false; 2]; n];
    let mut reach = vec![false; n];
    let mut queue = vec![(source, Dir::Up)];
    while let Some((v, dir)) = queue.pop() {
        let slot = &mut visited[v][dir as usize];
        if std::mem::replace(slot, true) {
            continue;
        }
        if !conditioned[v] {
            reach[v] = true;
        }
        match dir {
            Dir::Up if !conditioned[v] => {
                queue.extend(parents_of(v).map(|p| (p, Dir::Up)));
                queue.extend(children_of(v).map(|c| (c, Dir::Down)));
            }
            Dir::Up => {}
            Dir::Down => {
                if !conditioned[v] {
                    queue.extend(children_of(v).map(|c| (c, Dir::Down)));
                }
                if opens[v] {
                    queue.extend(parents_of(v).map(|p| (p, Dir::Up)));
                }
            }
        }
    }
    reach
}

/// Conditioning mask for `set`, closed under the deterministic rule
/// (endpoints are never added by the closure).
pub(crate) fn conditioning_mask(dag: &CausalDag, set: &[usize], endpoints: &[usize], closure: bool) -> Vec<bool> {
    let mut mask = vec![false; dag.len()];
    for s in set {
        mask[*s] = true;
    }
    if closure {
        dag.determined_closure(&mut mask, endpoints);
    }
    mask
}

/// d-separation of `a` and `b` given `conditioning`.
///
/// Colliders are open when they or a descendant are conditioned on; chains
/// and forks through a conditioned node are blocked. A deterministic node
/// whose parents are all conditioned on is treated as conditioned itself.
pub fn d_separated(dag: &CausalDag, a: &str, b: &str, conditioning: &[&str]) -> Result<bool> {
    let (ia, ib) = (dag.node(a)?, dag.node(b)?);
    if ia == ib {
        return Err(Error::spec(format!("d-separation of `{a}` from itself")));
    }
    let z: Vec<usize> = conditioning
        .iter()
        .map(|n| dag.node(n))
        .collect::<Result<_>>()?;
    if z.contains(&ia) || z.contains(&ib) {
        return Err(Error::spec("conditioning set must exclude both endpoints"));
    }
    let mask = conditioning_mask(dag, &z, &[ia, ib], true);
    Ok(!active_reach(dag, ia, &mask, false)[ib])
}
