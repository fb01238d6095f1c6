//! Brute-force ground truth: breadth-first search over normalized push
//! states, de-duplicated by state key.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::board::{Level, Push, State};

pub const DEFAULT_NODE_LIMIT: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("search limit of {limit} states exceeded")]
    LimitExceeded { limit: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleResult {
    pub solvable: bool,
    /// Optimal number of pushes, present iff solvable.
    pub distance: Option<usize>,
    pub plan: Option<Vec<Push>>,
    /// States taken off the queue and expanded.
    pub expanded: usize,
}

/// Push-optimal solution by breadth-first search.
pub fn bfs_optimal(
    level: &Level,
    start: &State,
    node_limit: usize,
) -> Result<OracleResult, OracleError> {
    if level.is_goal(start) {
        return Ok(OracleResult {
            solvable: true,
            distance: Some(0),
            plan: Some(Vec::new()),
            expanded: 0,
        });
    }
    // key -> (parent key, push that led here)
    let mut parent: HashMap<u64, Option<(u64, Push)>> = HashMap::new();
    parent.insert(start.key(), None);
    let mut queue = VecDeque::from([start.clone()]);
    let mut expanded = 0;
    while let Some(state) = queue.pop_front() {
        expanded += 1;
        if expanded > node_limit {
            return Err(OracleError::LimitExceeded { limit: node_limit });
        }
        let key = state.key();
        for push in level.legal_pushes(&state) {
            let next = level.apply_push(&state, push).expect("legal push");
            let nk = next.key();
            if parent.contains_key(&nk) {
                continue;
            }
            parent.insert(nk, Some((key, push)));
            if level.is_goal(&next) {
                let mut plan = Vec::new();
                let mut cur = nk;
                while let Some(Some((p, push))) = parent.get(&cur) {
                    plan.push(*push);
                    cur = *p;
                }
                plan.reverse();
                return Ok(OracleResult {
                    solvable: true,
                    distance: Some(plan.len()),
                    plan: Some(plan),
                    expanded,
                });
            }
            queue.push_back(next);
        }
    }
    Ok(OracleResult {
        solvable: false,
        distance: None,
        plan: None,
        expanded,
    })
}

pub fn solvable(level: &Level, state: &State, node_limit: usize) -> Result<bool, OracleError> {
    Ok(bfs_optimal(level, state, node_limit)?.solvable)
}

/// Optimal distance, `None` when unsolvable.
pub fn distance(
    level: &Level,
    state: &State,
    node_limit: usize,
) -> Result<Option<usize>, OracleError> {
    Ok(bfs_optimal(level, state, node_limit)?.distance)
}

/// Number of distinct normalized states reachable by pushes (start included).
pub fn enumerate_reachable(level: &Level, start: &State, cap: usize) -> Result<usize, OracleError> {
    Ok(reachable_states(level, start, cap)?.len())
}

/// All distinct normalized states reachable from `start`, in BFS order.
pub fn reachable_states(
    level: &Level,
    start: &State,
    cap: usize,
) -> Result<Vec<State>, OracleError> {
    let mut seen = HashMap::new();
    seen.insert(start.key(), ());
    let mut order = vec![start.clone()];
    let mut head = 0;
    while head < order.len() {
        let state = order[head].clone();
        head += 1;
        for push in level.legal_pushes(&state) {
            let next = level.apply_push(&state, push).expect("legal push");
            if seen.insert(next.key(), ()).is_none() {
                if order.len() >= cap {
                    return Err(OracleError::LimitExceeded { limit: cap });
                }
                order.push(next);
            }
        }
    }
    Ok(order)
}

/// Pushes from `state` that start an optimal plan. Empty if unsolvable or
/// already solved.
pub fn optimal_first_pushes(
    level: &Level,
    state: &State,
    node_limit: usize,
) -> Result<Vec<Push>, OracleError> {
    let Some(d) = distance(level, state, node_limit)? else {
        return Ok(Vec::new());
    };
    if d == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for push in level.legal_pushes(state) {
        let next = level.apply_push(state, push).expect("legal push");
        if distance(level, &next, node_limit)? == Some(d - 1) {
            out.push(push);
        }
    }
    Ok(out)
}
