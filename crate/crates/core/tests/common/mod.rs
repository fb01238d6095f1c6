//! Test helpers: a move-level Sokoban simulator written without the crate's
//! board code, used as a reference.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::PathBuf;

pub type Cell = (i32, i32);

pub const DELTAS: [(char, Cell); 4] =
    [('u', (-1, 0)), ('d', (1, 0)), ('l', (0, -1)), ('r', (0, 1))];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

#[derive(Clone, Debug)]
pub struct Sim {
    pub walls: HashSet<Cell>,
    pub goals: BTreeSet<Cell>,
    pub boxes: BTreeSet<Cell>,
    pub player: Cell,
}

/// Move-level state: player cell and box set.
pub type MoveState = (Cell, BTreeSet<Cell>);

/// Push-level projection: box set and the smallest cell the player can walk to.
pub type PushState = (BTreeSet<Cell>, Cell);

/// `(from, box cell, direction delta, to)`.
pub type PushEdge = (PushState, Cell, Cell, PushState);

impl Sim {
    pub fn parse(text: &str) -> Sim {
        let mut sim = Sim {
            walls: HashSet::new(),
            goals: BTreeSet::new(),
            boxes: BTreeSet::new(),
            player: (-1, -1),
        };
        for (r, line) in text.lines().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                let cell = (r as i32, c as i32);
                match ch {
                    '#' => {
                        sim.walls.insert(cell);
                    }
                    '.' => {
                        sim.goals.insert(cell);
                    }
                    '$' => {
                        sim.boxes.insert(cell);
                    }
                    '*' => {
                        sim.boxes.insert(cell);
                        sim.goals.insert(cell);
                    }
                    '@' => sim.player = cell,
                    '+' => {
                        sim.player = cell;
                        sim.goals.insert(cell);
                    }
                    _ => {}
                }
            }
        }
        sim
    }

    fn open(&self, cell: Cell, boxes: &BTreeSet<Cell>) -> bool {
        !self.walls.contains(&cell) && !boxes.contains(&cell)
    }

    /// One player step. Returns the new state and whether a box moved, or
    /// `None` if the step is blocked.
    pub fn step(&self, (player, boxes): &MoveState, d: Cell) -> Option<(MoveState, bool)> {
        let next = (player.0 + d.0, player.1 + d.1);
        if self.walls.contains(&next) {
            return None;
        }
        if boxes.contains(&next) {
            let beyond = (next.0 + d.0, next.1 + d.1);
            if !self.open(beyond, boxes) {
                return None;
            }
            let mut b = boxes.clone();
            b.remove(&next);
            b.insert(beyond);
            return Some(((next, b), true));
        }
        Some(((next, boxes.clone()), false))
    }

    /// Cells the player can walk to without pushing.
    pub fn region(&self, player: Cell, boxes: &BTreeSet<Cell>) -> BTreeSet<Cell> {
        let mut seen = BTreeSet::from([player]);
        let mut queue = VecDeque::from([player]);
        while let Some(p) = queue.pop_front() {
            for (_, d) in DELTAS {
                let q = (p.0 + d.0, p.1 + d.1);
                if self.open(q, boxes) && seen.insert(q) {
                    queue.push_back(q);
                }
            }
        }
        seen
    }

    pub fn project(&self, (player, boxes): &MoveState) -> PushState {
        let min = *self.region(*player, boxes).iter().next().unwrap();
        (boxes.clone(), min)
    }

    pub fn start(&self) -> MoveState {
        (self.player, self.boxes.clone())
    }

    pub fn solved(&self, boxes: &BTreeSet<Cell>) -> bool {
        boxes.iter().all(|b| self.goals.contains(b))
    }

    /// Every move-level state reachable from the start, projected to push
    /// level, with the push edges between projections.
    pub fn explore(&self) -> (BTreeSet<PushState>, BTreeSet<PushEdge>) {
        let start = self.start();
        let mut seen = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        let mut states = BTreeSet::new();
        let mut edges = BTreeSet::new();
        while let Some(s) = queue.pop_front() {
            let from = self.project(&s);
            states.insert(from.clone());
            for (_, d) in DELTAS {
                let Some((t, pushed)) = self.step(&s, d) else {
                    continue;
                };
                if pushed {
                    edges.insert((from.clone(), t.0, d, self.project(&t)));
                }
                if seen.insert(t.clone()) {
                    queue.push_back(t);
                }
            }
        }
        (states, edges)
    }

    /// Replays a LURD string: lowercase letters must walk, uppercase letters
    /// must push. Returns the final state.
    pub fn replay(&self, lurd: &str) -> Result<MoveState, String> {
        let mut s = self.start();
        for (i, ch) in lurd.chars().enumerate() {
            let d = DELTAS
                .iter()
                .find(|(c, _)| *c == ch.to_ascii_lowercase())
                .ok_or_else(|| format!("bad letter {ch:?} at {i}"))?
                .1;
            let (t, pushed) = self.step(&s, d).ok_or_else(|| format!("blocked at {i}"))?;
            if pushed != ch.is_ascii_uppercase() {
                return Err(format!("push flag mismatch at {i}"));
            }
            s = t;
        }
        Ok(s)
    }
}
