//! Single-agent PUCT tree search over push states.
//!
//! Values are normalized *costs*: `0` at a solved state, `1` at a dead end or
//! when the remaining distance reaches the step cap. A backup from a leaf at
//! depth `l` updates every edge `(s_i, a_{i+1})` of the path with
//! `min(v + (l - i) / i_max, 1)`, so `Q(s, a)` estimates the normalized number
//! of pushes still needed after taking `a`. Selection maximizes
//! `(1 - Q) + U`, i.e. it prefers cheap actions.
//!
//! The tree is a pure tree: transpositions reached through different branches
//! become separate nodes.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{action_index, Level, Push, State};
use crate::evaluator::Evaluator;
use crate::network::TrainingExample;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("no simulation has visited a root action yet")]
    NoSimulations,
    #[error("push {0} is not an action of the root")]
    UnknownAction(Push),
    #[error("invalid search config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveChoice {
    Greedy,
    Proportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub rounds_per_move: u32,
    pub i_max: u32,
    pub cput: f64,
    pub move_choice: MoveChoice,
    pub temperature: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rounds_per_move: 1600,
            i_max: 500,
            cput: 1.25,
            move_choice: MoveChoice::Proportional,
            temperature: 1.0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.rounds_per_move == 0 {
            return Err(SearchError::InvalidConfig("rounds_per_move must be >= 1"));
        }
        if self.i_max == 0 {
            return Err(SearchError::InvalidConfig("i_max must be >= 1"));
        }
        if !(self.cput > 0.0 && self.cput.is_finite()) {
            return Err(SearchError::InvalidConfig("cput must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(SearchError::InvalidConfig("temperature must be positive"));
        }
        Ok(())
    }

    pub fn greedy(mut self) -> Self {
        self.move_choice = MoveChoice::Greedy;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Goal,
    Dead,
    /// The state already occurred earlier on the path from the episode start.
    Loop,
}

impl Terminal {
    /// Fixed leaf cost used in backups.
    pub fn value(self) -> f64 {
        match self {
            Terminal::Goal => 0.0,
            Terminal::Dead | Terminal::Loop => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub push: Push,
    pub prior: f64,
    pub visits: u32,
    /// Mean backed-up cost; meaningful once `visits > 0`.
    pub q: f64,
    child: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchNode {
    pub state: State,
    pub key: u64,
    pub terminal: Option<Terminal>,
    /// Evaluator value once the node has been expanded.
    pub value: Option<f64>,
    pub edges: Vec<Edge>,
}

impl SearchNode {
    pub fn is_expanded(&self) -> bool {
        self.value.is_some()
    }

    pub fn total_visits(&self) -> u64 {
        self.edges.iter().map(|e| e.visits as u64).sum()
    }
}

/// `cput * sqrt(1 + sum_b N(s,b)) / (1 + N(s,a)) * p_a`.
pub fn exploration_bonus(cput: f64, total_visits: u64, visits: u32, prior: f64) -> f64 {
    cput * ((1 + total_visits) as f64).sqrt() / (1.0 + visits as f64) * prior
}

/// Selection score of edge `a` at `node`: `(1 - Q) + U`. Unvisited edges use
/// the node's own evaluated value in place of `Q`.
pub fn puct_score(node: &SearchNode, a: usize, cput: f64) -> f64 {
    let edge = &node.edges[a];
    let q = if edge.visits > 0 {
        edge.q
    } else {
        node.value.unwrap_or(0.5)
    };
    (1.0 - q) + exploration_bonus(cput, node.total_visits(), edge.visits, edge.prior)
}

/// Running-mean update of one path edge.
///
/// `depth` is the leaf depth `l`, `index` the edge position `i` on the path.
pub fn backup_value(
    q: f64,
    visits: u32,
    leaf_value: f64,
    depth: usize,
    index: usize,
    i_max: u32,
) -> f64 {
    let target = (leaf_value + (depth - index) as f64 / i_max as f64).min(1.0);
    (q * visits as f64 + target) / (visits as f64 + 1.0)
}

/// Visit counts raised to `1 / temperature` and normalized.
pub fn visit_distribution(visits: &[u32], temperature: f64) -> Vec<f64> {
    let weights: Vec<f64> = visits
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                (n as f64).powf(1.0 / temperature)
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return weights;
    }
    weights.into_iter().map(|w| w / total).collect()
}

pub struct SearchTree<'l> {
    level: &'l Level,
    nodes: Vec<SearchNode>,
    root: usize,
    evaluations: u64,
    explored: Vec<u64>,
    /// Keys of the episode's states before the current root.
    history: HashSet<u64>,
}

impl<'l> SearchTree<'l> {
    pub fn new(level: &'l Level, state: State) -> Self {
        let mut tree = SearchTree {
            level,
            nodes: Vec::new(),
            root: 0,
            evaluations: 0,
            explored: Vec::new(),
            history: HashSet::new(),
        };
        tree.root = tree.add_node(state, &[]);
        tree
    }

    /// Adds a node for `state`; `ancestors` are the keys of the tree path
    /// above it.
    fn add_node(&mut self, state: State, ancestors: &[u64]) -> usize {
        let legal = self.level.legal_pushes(&state);
        let key = state.key();
        let terminal = if self.level.is_goal(&state) {
            Some(Terminal::Goal)
        } else if self.history.contains(&key) || ancestors.contains(&key) {
            Some(Terminal::Loop)
        } else if legal.is_empty() {
            Some(Terminal::Dead)
        } else {
            None
        };
        if terminal.is_some() {
            self.explored.push(key);
        }
        self.nodes.push(SearchNode {
            key,
            terminal,
            value: None,
            edges: legal
                .into_iter()
                .map(|push| Edge {
                    push,
                    prior: 0.0,
                    visits: 0,
                    q: 0.0,
                    child: None,
                })
                .collect(),
            state,
        });
        self.nodes.len() - 1
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[self.root]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of evaluator calls so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn expand<E: Evaluator + ?Sized>(&mut self, id: usize, evaluator: &E) -> f64 {
        let level = self.level;
        let node = &mut self.nodes[id];
        let legal: Vec<Push> = node.edges.iter().map(|e| e.push).collect();
        let eval = evaluator.evaluate(level, &node.state, &legal);
        for e in &mut node.edges {
            e.prior = eval.policy[action_index(e.push, level.height(), level.width())];
        }
        let v = eval.value.clamp(0.0, 1.0);
        node.value = Some(v);
        self.evaluations += 1;
        self.explored.push(node.key);
        v
    }

    /// Evaluates the root if it has not been evaluated yet.
    pub fn expand_root<E: Evaluator + ?Sized>(&mut self, evaluator: &E) {
        let r = self.root;
        if self.nodes[r].terminal.is_none() && !self.nodes[r].is_expanded() {
            self.expand(r, evaluator);
        }
    }

    fn select(&self, id: usize, cput: f64) -> usize {
        let node = &self.nodes[id];
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..node.edges.len() {
            let s = puct_score(node, a, cput);
            if s > best_score {
                best = a;
                best_score = s;
            }
        }
        best
    }

    /// One round: select down to a leaf, a goal or a dead end; evaluate the
    /// leaf if needed; back the cost up along the path.
    pub fn run_simulation<E: Evaluator + ?Sized>(&mut self, evaluator: &E, config: &SearchConfig) {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut keys: Vec<u64> = Vec::new();
        let mut cur = self.root;
        let leaf_value = loop {
            let node = &self.nodes[cur];
            if let Some(t) = node.terminal {
                break t.value();
            }
            if !node.is_expanded() {
                break self.expand(cur, evaluator);
            }
            let a = self.select(cur, config.cput);
            path.push((cur, a));
            keys.push(self.nodes[cur].key);
            cur = match self.nodes[cur].edges[a].child {
                Some(c) => c,
                None => {
                    let next = self
                        .level
                        .apply_push(&self.nodes[cur].state, self.nodes[cur].edges[a].push)
                        .expect("edges hold legal pushes");
                    let c = self.add_node(next, &keys);
                    self.nodes[cur].edges[a].child = Some(c);
                    c
                }
            };
        };
        let depth = path.len();
        for (i, &(n, a)) in path.iter().enumerate() {
            let edge = &mut self.nodes[n].edges[a];
            edge.q = backup_value(edge.q, edge.visits, leaf_value, depth, i, config.i_max);
            edge.visits += 1;
        }
    }

    /// `(push, N(root, push))` in canonical push order.
    pub fn root_visits(&self) -> Vec<(Push, u32)> {
        self.root()
            .edges
            .iter()
            .map(|e| (e.push, e.visits))
            .collect()
    }

    pub fn best_root_action<R: Rng>(
        &self,
        config: &SearchConfig,
        rng: &mut R,
    ) -> Result<Push, SearchError> {
        let visits: Vec<u32> = self.root().edges.iter().map(|e| e.visits).collect();
        let i = choose_by_visits(&visits, config.move_choice, config.temperature, rng)?;
        Ok(self.root().edges[i].push)
    }

    /// Moves the root to the child reached by `push`, keeping that subtree
    /// and dropping everything else.
    pub fn advance(&mut self, push: Push) -> Result<(), SearchError> {
        let a = self
            .root()
            .edges
            .iter()
            .position(|e| e.push == push)
            .ok_or(SearchError::UnknownAction(push))?;
        let child = match self.root().edges[a].child {
            Some(c) => c,
            None => {
                let next = self
                    .level
                    .apply_push(&self.root().state, push)
                    .expect("edges hold legal pushes");
                let root_key = self.root().key;
                let c = self.add_node(next, &[root_key]);
                let r = self.root;
                self.nodes[r].edges[a].child = Some(c);
                c
            }
        };
        let old_root = self.root().key;
        self.history.insert(old_root);
        // copy the kept subtree into a fresh arena, breadth first
        let mut order = vec![child];
        let mut remap = vec![usize::MAX; self.nodes.len()];
        remap[child] = 0;
        let mut head = 0;
        while head < order.len() {
            let id = order[head];
            head += 1;
            for e in &self.nodes[id].edges {
                if let Some(c) = e.child {
                    remap[c] = order.len();
                    order.push(c);
                }
            }
        }
        let mut old: Vec<Option<SearchNode>> = std::mem::take(&mut self.nodes)
            .into_iter()
            .map(Some)
            .collect();
        let nodes: Vec<SearchNode> = order
            .iter()
            .map(|&id| {
                let mut node = old[id].take().expect("each node is kept once");
                for e in &mut node.edges {
                    e.child = e.child.map(|c| remap[c]);
                }
                node
            })
            .collect();
        self.nodes = nodes;
        self.root = 0;
        Ok(())
    }

    fn take_explored(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.explored)
    }
}

/// Greedy: most visits, earliest edge on ties. Proportional: sample with
/// probability `N^(1/T) / sum N^(1/T)`.
pub fn choose_by_visits<R: Rng>(
    visits: &[u32],
    choice: MoveChoice,
    temperature: f64,
    rng: &mut R,
) -> Result<usize, SearchError> {
    if visits.iter().all(|&n| n == 0) {
        return Err(SearchError::NoSimulations);
    }
    match choice {
        MoveChoice::Greedy => {
            let mut best = 0;
            for (i, &n) in visits.iter().enumerate() {
                if n > visits[best] {
                    best = i;
                }
            }
            Ok(best)
        }
        MoveChoice::Proportional => {
            let probs = visit_distribution(visits, temperature);
            let mut x: f64 = rng.gen();
            let mut last = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                last = i;
                if x < p {
                    return Ok(i);
                }
                x -= p;
            }
            Ok(last)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Goal,
    DeadEnd,
    StepLimit,
    Loop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub state: State,
    pub visits: Vec<(Push, u32)>,
    pub push: Push,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub start: State,
    pub steps: Vec<EpisodeStep>,
    pub final_state: State,
    pub outcome: Outcome,
    pub i_max: u32,
    /// Evaluator calls made during the episode.
    pub evaluations: u64,
    /// Distinct keys of states evaluated or reached as terminals, sorted.
    pub explored: Vec<u64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn plan(&self) -> Vec<Push> {
        self.steps.iter().map(|s| s.push).collect()
    }
}

/// Plays one episode from `start`: `rounds_per_move` simulations per move,
/// then a move chosen from root visit counts, reusing the chosen subtree.
/// Stops at the goal, a dead end, the step cap, or a repeated state.
pub fn run_episode<E: Evaluator + ?Sized>(
    level: &Level,
    start: State,
    evaluator: &E,
    config: &SearchConfig,
    seed: u64,
) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = SearchTree::new(level, start.clone());
    let mut seen = HashSet::from([tree.root().key]);
    let mut steps = Vec::new();
    let mut outcome = match tree.root().terminal {
        Some(Terminal::Goal) => Some(Outcome::Goal),
        Some(Terminal::Dead) => Some(Outcome::DeadEnd),
        Some(Terminal::Loop) => Some(Outcome::Loop),
        None => None,
    };
    while outcome.is_none() {
        tree.expand_root(evaluator);
        for _ in 0..config.rounds_per_move {
            tree.run_simulation(evaluator, config);
        }
        let push = tree
            .best_root_action(config, &mut rng)
            .expect("rounds_per_move >= 1 visits the root");
        steps.push(EpisodeStep {
            state: tree.root().state.clone(),
            visits: tree.root_visits(),
            push,
        });
        tree.advance(push).expect("chosen push is a root edge");
        let root = tree.root();
        outcome = match root.terminal {
            Some(Terminal::Goal) => Some(Outcome::Goal),
            Some(Terminal::Dead) => Some(Outcome::DeadEnd),
            Some(Terminal::Loop) => Some(Outcome::Loop),
            None if !seen.insert(root.key) => Some(Outcome::Loop),
            None if steps.len() >= config.i_max as usize => Some(Outcome::StepLimit),
            None => None,
        };
    }
    let mut explored = tree.take_explored();
    explored.sort_unstable();
    explored.dedup();
    Episode {
        start,
        final_state: tree.root().state.clone(),
        steps,
        outcome: outcome.unwrap(),
        i_max: config.i_max,
        evaluations: tree.evaluations(),
        explored,
    }
}

/// One example per root the episode moved from: visit-proportional policy
/// target, and a cost label of `min(remaining / i_max, 1)` on solved
/// episodes or `1` otherwise.
pub fn extract_training_examples(level: &Level, episode: &Episode) -> Vec<TrainingExample> {
    let (h, w) = (level.height(), level.width());
    let len = episode.steps.len();
    episode
        .steps
        .iter()
        .enumerate()
        .map(|(t, step)| {
            let total: u64 = step.visits.iter().map(|&(_, n)| n as u64).sum();
            let mut pi = vec![0.0f32; level.action_space()];
            let mut legal_mask = vec![false; level.action_space()];
            for &(push, n) in &step.visits {
                let i = action_index(push, h, w);
                legal_mask[i] = true;
                pi[i] = (n as f64 / total as f64) as f32;
            }
            let u = match episode.outcome {
                Outcome::Goal => ((len - t) as f64 / episode.i_max as f64).min(1.0),
                _ => 1.0,
            };
            TrainingExample {
                planes: level.encode_planes(&step.state),
                pi,
                u: u as f32,
                legal_mask,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{Direction, Pos};
    use crate::evaluator::UniformEvaluator;

    const L1: &str = "#####\n#@$.#\n#####";
    const L3: &str = "#####\n# @ #\n# $ #\n#  .#\n#####";

    fn node_with(visits: &[u32], priors: &[f64], qs: &[f64], value: f64) -> SearchNode {
        let level = Level::parse(L1).unwrap();
        SearchNode {
            state: level.initial_state(),
            key: 0,
            terminal: None,
            value: Some(value),
            edges: visits
                .iter()
                .zip(priors)
                .zip(qs)
                .enumerate()
                .map(|(i, ((&n, &p), &q))| Edge {
                    push: Push::new(Pos::new(1, i as u16), Direction::Up),
                    prior: p,
                    visits: n,
                    q,
                    child: None,
                })
                .collect(),
        }
    }

    #[test]
    fn bonus_formula() {
        assert_eq!(exploration_bonus(1.25, 0, 0, 0.4), 1.25 * 0.4);
        assert_eq!(exploration_bonus(1.0, 8, 3, 0.5), 0.375);
    }

    #[test]
    fn fresh_node_scores() {
        let node = node_with(&[0, 0], &[0.7, 0.3], &[0.0, 0.0], 0.4);
        let s0 = puct_score(&node, 0, 1.25);
        assert!((s0 - (0.6 + 1.25 * 0.7)).abs() < 1e-15);
        assert!(s0 > puct_score(&node, 1, 1.25));
    }

    #[test]
    fn prior_breaks_equal_q() {
        let node = node_with(&[2, 2], &[0.6, 0.4], &[0.3, 0.3], 0.5);
        assert!(puct_score(&node, 0, 1.0) > puct_score(&node, 1, 1.0));
    }

    #[test]
    fn backup_examples() {
        assert_eq!(backup_value(0.5, 1, 0.0, 2, 0, 500), 0.252);
        assert_eq!(
            backup_value(0.3, 4, 1.0, 7, 2, 500),
            (0.3 * 4.0 + 1.0) / 5.0
        );
        assert_eq!(backup_value(0.0, 0, 0.999, 3, 0, 10), 1.0);
    }

    #[test]
    fn greedy_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            choose_by_visits(&[10, 5, 1], MoveChoice::Greedy, 1.0, &mut rng),
            Ok(0)
        );
        assert_eq!(
            choose_by_visits(&[8, 8], MoveChoice::Greedy, 1.0, &mut rng),
            Ok(0)
        );
        assert_eq!(
            choose_by_visits(&[1, 8, 8], MoveChoice::Greedy, 1.0, &mut rng),
            Ok(1)
        );
        assert_eq!(
            choose_by_visits(&[0, 0], MoveChoice::Greedy, 1.0, &mut rng),
            Err(SearchError::NoSimulations)
        );
    }

    #[test]
    fn proportional_choice() {
        assert_eq!(visit_distribution(&[3, 1], 1.0), vec![0.75, 0.25]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 20_000;
        let zeros = (0..trials)
            .filter(|_| choose_by_visits(&[3, 1], MoveChoice::Proportional, 1.0, &mut rng) == Ok(0))
            .count();
        let freq = zeros as f64 / trials as f64;
        assert!((freq - 0.75).abs() < 0.015, "{freq}");
        // unvisited actions are never sampled
        for _ in 0..1000 {
            assert_ne!(
                choose_by_visits(&[0, 5, 0], MoveChoice::Proportional, 1.0, &mut rng),
                Ok(0)
            );
        }
    }

    #[test]
    fn first_simulation_expands_root_only() {
        let level = Level::parse(L1).unwrap();
        let mut tree = SearchTree::new(&level, level.initial_state());
        tree.run_simulation(&UniformEvaluator, &SearchConfig::default());
        assert!(tree.root().is_expanded());
        assert_eq!(tree.root().total_visits(), 0);
        assert_eq!(tree.root().edges[0].prior, 1.0);
        assert_eq!(tree.len(), 1);
        tree.run_simulation(&UniformEvaluator, &SearchConfig::default());
        // second round reaches the goal child: backup of 0 + 1/500
        assert_eq!(tree.root().edges[0].visits, 1);
        assert_eq!(tree.root().edges[0].q, 1.0 / 500.0);
    }

    #[test]
    fn l1_episode_solves() {
        let level = Level::parse(L1).unwrap();
        let cfg = SearchConfig {
            rounds_per_move: 16,
            ..SearchConfig::default()
        };
        let ep = run_episode(&level, level.initial_state(), &UniformEvaluator, &cfg, 1);
        assert_eq!(ep.outcome, Outcome::Goal);
        assert_eq!(ep.len(), 1);
        assert_eq!(ep.plan(), vec![Push::new(Pos::new(1, 2), Direction::Right)]);
        let ex = extract_training_examples(&level, &ep);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].u, 0.002);
        assert_eq!(ex[0].pi[52], 1.0);
    }

    #[test]
    fn step_limit() {
        let level = Level::parse(L3).unwrap();
        let cfg = SearchConfig {
            rounds_per_move: 64,
            i_max: 1,
            move_choice: MoveChoice::Greedy,
            ..SearchConfig::default()
        };
        let ep = run_episode(&level, level.initial_state(), &UniformEvaluator, &cfg, 0);
        assert_eq!(ep.outcome, Outcome::StepLimit);
        assert_eq!(ep.len(), 1);
        assert!(extract_training_examples(&level, &ep)
            .iter()
            .all(|e| e.u == 1.0));
    }

    #[test]
    fn dead_end_episode() {
        // the only push sends the box into the corner
        let level = Level::parse("######\n#   .#\n#$####\n#@####\n######").unwrap();
        let start = level.initial_state();
        assert_eq!(
            level.legal_pushes(&start),
            vec![Push::new(Pos::new(2, 1), Direction::Up)]
        );
        let cfg = SearchConfig {
            rounds_per_move: 8,
            ..SearchConfig::default()
        };
        let ep = run_episode(&level, start, &UniformEvaluator, &cfg, 0);
        assert_eq!(ep.outcome, Outcome::DeadEnd);
        assert_eq!(ep.len(), 1);
    }

    #[test]
    fn subtree_reuse_keeps_counts() {
        let level = Level::parse(L3).unwrap();
        let cfg = SearchConfig {
            rounds_per_move: 50,
            ..SearchConfig::default()
        };
        let mut tree = SearchTree::new(&level, level.initial_state());
        tree.expand_root(&UniformEvaluator);
        for _ in 0..50 {
            tree.run_simulation(&UniformEvaluator, &cfg);
        }
        assert_eq!(tree.root().total_visits(), 50);
        let down = Push::new(Pos::new(2, 2), Direction::Down);
        let a = tree
            .root()
            .edges
            .iter()
            .position(|e| e.push == down)
            .unwrap();
        let child_visits = tree.root().edges[a].visits as u64;
        tree.advance(down).unwrap();
        assert_eq!(tree.root().state.boxes(), &[Pos::new(3, 2)]);
        // visits through the child minus the rounds that stopped at it
        assert!(tree.root().total_visits() < child_visits.max(1));
        assert!(tree.root().is_expanded() || child_visits == 0);
    }
}
