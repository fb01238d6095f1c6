//! Sokoban domain model over push actions.
//!
//! A [`Level`] is the immutable instance (walls, goals, initial boxes, player
//! start). A [`State`] is a box placement plus the player's *normalized*
//! position: the row-major-minimal cell of the region the player can walk to.
//! Two configurations that differ only by where the player stands inside the
//! same region are therefore the same `State`, which is what a push-level
//! search wants.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of feature planes produced by [`Level::encode_planes`].
pub const NUM_PLANES: usize = 6;

pub const PLANE_WALLS: usize = 0;
pub const PLANE_EMPTY_GOALS: usize = 1;
pub const PLANE_BOXES: usize = 2;
pub const PLANE_BOXES_ON_GOALS: usize = 3;
pub const PLANE_REACHABLE: usize = 4;
pub const PLANE_REACHABLE_GOALS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("level has no player")]
    NoPlayer,
    #[error("level has more than one player")]
    MultiplePlayers,
    #[error("level has {boxes} boxes but {goals} goals")]
    CountMismatch { boxes: usize, goals: usize },
    #[error("level has no boxes")]
    NoBoxes,
    #[error("invalid character {ch:?} at line {line}")]
    InvalidChar { ch: char, line: usize },
    #[error("level text is empty")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoardError {
    #[error("illegal push {0}")]
    IllegalPush(Push),
    #[error("action index {index} out of range for {height}x{width} board")]
    OutOfRange {
        index: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid state: {0}")]
    InvalidState(&'static str),
}

/// A grid position. The derived ordering is row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: u16,
    pub col: u16,
}

impl Pos {
    pub const fn new(row: u16, col: u16) -> Self {
        Pos { row, col }
    }

    /// Neighbor in `dir`, or `None` when it would leave the non-negative quadrant.
    pub fn step(self, dir: Direction) -> Option<Pos> {
        let (dr, dc) = dir.delta();
        let row = self.row as i32 + dr;
        let col = self.col as i32 + dc;
        if row < 0 || col < 0 {
            return None;
        }
        Some(Pos::new(row as u16, col as u16))
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// LURD letter; uppercase marks a push.
    pub fn letter(self, push: bool) -> char {
        let c = match self {
            Direction::Up => 'u',
            Direction::Down => 'd',
            Direction::Left => 'l',
            Direction::Right => 'r',
        };
        if push {
            c.to_ascii_uppercase()
        } else {
            c
        }
    }
}

/// One action: push the box standing on `box_pos` one cell towards `dir`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Push {
    pub box_pos: Pos,
    pub dir: Direction,
}

impl Push {
    pub const fn new(box_pos: Pos, dir: Direction) -> Self {
        Push { box_pos, dir }
    }
}

impl fmt::Display for Push {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.box_pos, self.dir)
    }
}

/// Index of `push` in the flat policy vector of length `4 * height * width`.
pub fn action_index(push: Push, height: usize, width: usize) -> usize {
    let cells = height * width;
    push.dir.ordinal() * cells + push.box_pos.row as usize * width + push.box_pos.col as usize
}

pub fn action_from_index(index: usize, height: usize, width: usize) -> Result<Push, BoardError> {
    let cells = height * width;
    if cells == 0 || index >= 4 * cells {
        return Err(BoardError::OutOfRange {
            index,
            height,
            width,
        });
    }
    let dir = Direction::from_ordinal(index / cells).expect("ordinal < 4");
    let cell = index % cells;
    Ok(Push::new(
        Pos::new((cell / width) as u16, (cell % width) as u16),
        dir,
    ))
}

/// Dynamic configuration: sorted box positions and the normalized player cell.
///
/// Only a [`Level`] can build one, so every `State` in circulation is valid
/// and normalized for the level it came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    boxes: Vec<Pos>,
    player: Pos,
}

impl State {
    pub fn boxes(&self) -> &[Pos] {
        &self.boxes
    }

    pub fn player(&self) -> Pos {
        self.player
    }

    pub fn has_box(&self, pos: Pos) -> bool {
        self.boxes.binary_search(&pos).is_ok()
    }

    /// 64-bit Zobrist-style key over box cells and the normalized player cell.
    pub fn key(&self) -> u64 {
        self.boxes
            .iter()
            .fold(zobrist(self.player, 1), |acc, &b| acc ^ zobrist(b, 0))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

// kind 0 = box, 1 = player
fn zobrist(pos: Pos, kind: u64) -> u64 {
    splitmix64(((pos.row as u64) << 32) ^ ((pos.col as u64) << 8) ^ kind ^ 0x5eed_50c0_ba11)
}

/// Binary feature planes, shape `6 x height x width`, plane-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneStack {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl PlaneStack {
    pub fn plane(&self, k: usize) -> &[f32] {
        let cells = self.height * self.width;
        &self.data[k * cells..(k + 1) * cells]
    }

    pub fn get(&self, k: usize, row: usize, col: usize) -> f32 {
        self.plane(k)[row * self.width + col]
    }
}

/// Immutable Sokoban instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    height: usize,
    width: usize,
    walls: Vec<bool>,
    goals: Vec<Pos>,
    initial_boxes: Vec<Pos>,
    player_start: Pos,
}

impl Level {
    /// Parses one level in the usual XSB text encoding.
    ///
    /// Rows are right-padded with walls. Floor that is connected to the
    /// outside of the grid (the area around the outer wall) becomes wall. If
    /// the player, a box or a goal touches that outside area the grid is
    /// wrapped in an extra ring of walls instead.
    pub fn parse(text: &str) -> Result<Level, ParseError> {
        let lines: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .collect();
        if lines.is_empty() {
            return Err(ParseError::Empty);
        }
        let height = lines.len();
        let width = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0);

        let mut walls = vec![true; height * width];
        let mut goals = Vec::new();
        let mut boxes = Vec::new();
        let mut player = None;
        let mut marked = vec![false; height * width];

        for (r, line) in lines.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                let pos = Pos::new(r as u16, c as u16);
                let i = r * width + c;
                match ch {
                    '#' => continue,
                    ' ' | '-' | '_' => {}
                    '.' => goals.push(pos),
                    '$' => boxes.push(pos),
                    '*' => {
                        goals.push(pos);
                        boxes.push(pos);
                    }
                    '@' | '+' => {
                        if player.is_some() {
                            return Err(ParseError::MultiplePlayers);
                        }
                        player = Some(pos);
                        if ch == '+' {
                            goals.push(pos);
                        }
                    }
                    _ => return Err(ParseError::InvalidChar { ch, line: r + 1 }),
                }
                walls[i] = false;
                if ch != ' ' && ch != '-' && ch != '_' {
                    marked[i] = true;
                }
            }
        }

        let player = player.ok_or(ParseError::NoPlayer)?;
        if boxes.len() != goals.len() {
            return Err(ParseError::CountMismatch {
                boxes: boxes.len(),
                goals: goals.len(),
            });
        }
        if boxes.is_empty() {
            return Err(ParseError::NoBoxes);
        }

        // Flood the outside from the grid boundary through non-wall cells.
        let mut outside = vec![false; height * width];
        let mut queue = VecDeque::new();
        for r in 0..height {
            for c in 0..width {
                let on_border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                let i = r * width + c;
                if on_border && !walls[i] {
                    outside[i] = true;
                    queue.push_back((r, c));
                }
            }
        }
        while let Some((r, c)) = queue.pop_front() {
            for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
                let nr = r as i32 + dr;
                let nc = c as i32 + dc;
                if nr < 0 || nc < 0 || nr >= height as i32 || nc >= width as i32 {
                    continue;
                }
                let j = nr as usize * width + nc as usize;
                if !walls[j] && !outside[j] {
                    outside[j] = true;
                    queue.push_back((nr as usize, nc as usize));
                }
            }
        }

        let leaks = (0..height * width).any(|i| outside[i] && marked[i]);
        let mut level = if leaks {
            // Open level: keep everything and add a wall ring.
            let (h2, w2) = (height + 2, width + 2);
            let mut walls2 = vec![true; h2 * w2];
            for r in 0..height {
                for c in 0..width {
                    walls2[(r + 1) * w2 + c + 1] = walls[r * width + c];
                }
            }
            let shift = |p: Pos| Pos::new(p.row + 1, p.col + 1);
            Level {
                height: h2,
                width: w2,
                walls: walls2,
                goals: goals.into_iter().map(shift).collect(),
                initial_boxes: boxes.into_iter().map(shift).collect(),
                player_start: shift(player),
            }
        } else {
            for (w, o) in walls.iter_mut().zip(&outside) {
                if *o {
                    *w = true;
                }
            }
            Level {
                height,
                width,
                walls,
                goals,
                initial_boxes: boxes,
                player_start: player,
            }
        };
        level.goals.sort();
        level.initial_boxes.sort();
        Ok(level)
    }

    /// Parses a collection: levels separated by blank lines, `;` lines are
    /// titles/comments. Lines that carry no board characters (e.g.
    /// `Title: ...` metadata) are skipped too.
    pub fn parse_collection(text: &str) -> Result<Vec<Level>, ParseError> {
        let mut levels = Vec::new();
        let mut block = String::new();
        let is_board_line = |l: &str| {
            !l.trim().is_empty()
                && l.chars()
                    .all(|ch| matches!(ch, '#' | '@' | '+' | '$' | '*' | '.' | '-' | '_' | ' '))
                && l.contains('#')
        };
        for line in text.lines().map(|l| l.trim_end_matches('\r')) {
            if line.trim_start().starts_with(';') {
                continue;
            }
            if is_board_line(line) {
                block.push_str(line);
                block.push('\n');
            } else if !block.is_empty() {
                levels.push(Level::parse(&block)?);
                block.clear();
            }
        }
        if !block.is_empty() {
            levels.push(Level::parse(&block)?);
        }
        if levels.is_empty() {
            return Err(ParseError::Empty);
        }
        Ok(levels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_boxes(&self) -> usize {
        self.initial_boxes.len()
    }

    pub fn goals(&self) -> &[Pos] {
        &self.goals
    }

    pub fn initial_boxes(&self) -> &[Pos] {
        &self.initial_boxes
    }

    pub fn player_start(&self) -> Pos {
        self.player_start
    }

    /// Size of the flat policy vector.
    pub fn action_space(&self) -> usize {
        4 * self.height * self.width
    }

    fn idx(&self, pos: Pos) -> usize {
        pos.row as usize * self.width + pos.col as usize
    }

    pub fn in_grid(&self, pos: Pos) -> bool {
        (pos.row as usize) < self.height && (pos.col as usize) < self.width
    }

    /// Cells outside the grid count as walls.
    pub fn is_wall(&self, pos: Pos) -> bool {
        !self.in_grid(pos) || self.walls[self.idx(pos)]
    }

    pub fn is_goal_cell(&self, pos: Pos) -> bool {
        self.goals.binary_search(&pos).is_ok()
    }

    pub fn floor_cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height * self.width)
            .filter(|&i| !self.walls[i])
            .map(|i| Pos::new((i / self.width) as u16, (i % self.width) as u16))
    }

    /// The same walls and player start with a different box/goal selection.
    pub fn subcase(&self, mut boxes: Vec<Pos>, mut goals: Vec<Pos>) -> Result<Level, BoardError> {
        boxes.sort();
        boxes.dedup();
        goals.sort();
        goals.dedup();
        if boxes.len() != goals.len() || boxes.is_empty() {
            return Err(BoardError::InvalidState(
                "box and goal counts must match and be non-zero",
            ));
        }
        if boxes.iter().chain(&goals).any(|&p| self.is_wall(p)) {
            return Err(BoardError::InvalidState("box or goal on a wall"));
        }
        if boxes.contains(&self.player_start) {
            return Err(BoardError::InvalidState("box on player start"));
        }
        Ok(Level {
            height: self.height,
            width: self.width,
            walls: self.walls.clone(),
            goals,
            initial_boxes: boxes,
            player_start: self.player_start,
        })
    }

    pub fn initial_state(&self) -> State {
        self.make_state(self.initial_boxes.clone(), self.player_start)
    }

    /// Builds a validated, normalized state.
    pub fn state(&self, mut boxes: Vec<Pos>, player: Pos) -> Result<State, BoardError> {
        boxes.sort();
        let len = boxes.len();
        boxes.dedup();
        if boxes.len() != len {
            return Err(BoardError::InvalidState("duplicate box"));
        }
        if boxes.iter().any(|&b| self.is_wall(b)) {
            return Err(BoardError::InvalidState("box on wall"));
        }
        if self.is_wall(player) {
            return Err(BoardError::InvalidState("player on wall"));
        }
        if boxes.binary_search(&player).is_ok() {
            return Err(BoardError::InvalidState("player on box"));
        }
        Ok(self.make_state(boxes, player))
    }

    fn make_state(&self, boxes: Vec<Pos>, player: Pos) -> State {
        let mut state = State { boxes, player };
        state.player = self.region_min(&state);
        state
    }

    fn occupancy(&self, boxes: &[Pos]) -> Vec<bool> {
        let mut occ = vec![false; self.height * self.width];
        for &b in boxes {
            occ[self.idx(b)] = true;
        }
        occ
    }

    /// Reachability mask from `from` avoiding walls and the given boxes.
    fn flood(&self, occupied: &[bool], from: Pos) -> Vec<bool> {
        let mut seen = vec![false; self.height * self.width];
        let start = self.idx(from);
        seen[start] = true;
        let mut stack = vec![start];
        let w = self.width;
        while let Some(i) = stack.pop() {
            // Border cells are walls, so the neighbors of any floor cell are in-grid.
            for j in [i - w, i + w, i - 1, i + 1] {
                if !seen[j] && !self.walls[j] && !occupied[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    fn reach_mask(&self, state: &State) -> Vec<bool> {
        self.flood(&self.occupancy(&state.boxes), state.player)
    }

    fn region_min(&self, state: &State) -> Pos {
        let mask = self.reach_mask(state);
        let i = mask
            .iter()
            .position(|&m| m)
            .expect("player cell is reachable");
        Pos::new((i / self.width) as u16, (i % self.width) as u16)
    }

    /// Cells the player can walk to, in row-major order.
    pub fn reachable_cells(&self, state: &State) -> Vec<Pos> {
        self.reach_mask(state)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| Pos::new((i / self.width) as u16, (i % self.width) as u16))
            .collect()
    }

    /// Replaces the player with the canonical cell of its region.
    pub fn normalize_player(&self, state: &State) -> State {
        self.make_state(state.boxes.clone(), state.player)
    }

    /// Moves the player to `player` (any cell) and normalizes.
    pub fn with_player(&self, state: &State, player: Pos) -> Result<State, BoardError> {
        self.state(state.boxes.clone(), player)
    }

    /// Legal pushes, ordered by box (row-major) then Up, Down, Left, Right.
    pub fn legal_pushes(&self, state: &State) -> Vec<Push> {
        let occ = self.occupancy(&state.boxes);
        let reach = self.flood(&occ, state.player);
        let mut out = Vec::new();
        for &b in &state.boxes {
            for dir in Direction::ALL {
                if self.push_ok(&occ, &reach, b, dir) {
                    out.push(Push::new(b, dir));
                }
            }
        }
        out
    }

    fn push_ok(&self, occ: &[bool], reach: &[bool], b: Pos, dir: Direction) -> bool {
        let (Some(behind), Some(dest)) = (b.step(dir.opposite()), b.step(dir)) else {
            return false;
        };
        if !self.in_grid(behind) || !self.in_grid(dest) {
            return false;
        }
        reach[self.idx(behind)] && !self.walls[self.idx(dest)] && !occ[self.idx(dest)]
    }

    pub fn apply_push(&self, state: &State, push: Push) -> Result<State, BoardError> {
        if !state.has_box(push.box_pos) {
            return Err(BoardError::IllegalPush(push));
        }
        let occ = self.occupancy(&state.boxes);
        let reach = self.flood(&occ, state.player);
        if !self.push_ok(&occ, &reach, push.box_pos, push.dir) {
            return Err(BoardError::IllegalPush(push));
        }
        let dest = push.box_pos.step(push.dir).expect("checked in push_ok");
        let mut boxes: Vec<Pos> = state
            .boxes
            .iter()
            .map(|&b| if b == push.box_pos { dest } else { b })
            .collect();
        boxes.sort();
        Ok(self.make_state(boxes, push.box_pos))
    }

    /// Every box is on a goal.
    pub fn is_goal(&self, state: &State) -> bool {
        state.boxes.iter().all(|&b| self.is_goal_cell(b))
    }

    /// Not solved and no push available.
    pub fn is_dead(&self, state: &State) -> bool {
        !self.is_goal(state) && self.legal_pushes(state).is_empty()
    }

    pub fn encode_planes(&self, state: &State) -> PlaneStack {
        let cells = self.height * self.width;
        let mut data = vec![0f32; NUM_PLANES * cells];
        let reach = self.reach_mask(state);
        let mut goal_mask = vec![false; cells];
        for &g in &self.goals {
            goal_mask[self.idx(g)] = true;
        }
        let box_mask = self.occupancy(&state.boxes);
        for i in 0..cells {
            let set = |data: &mut Vec<f32>, k: usize| data[k * cells + i] = 1.0;
            if self.walls[i] {
                set(&mut data, PLANE_WALLS);
            }
            match (box_mask[i], goal_mask[i]) {
                (false, true) => set(&mut data, PLANE_EMPTY_GOALS),
                (true, false) => set(&mut data, PLANE_BOXES),
                (true, true) => set(&mut data, PLANE_BOXES_ON_GOALS),
                (false, false) => {}
            }
            if reach[i] {
                set(&mut data, PLANE_REACHABLE);
                if goal_mask[i] {
                    set(&mut data, PLANE_REACHABLE_GOALS);
                }
            }
        }
        PlaneStack {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Legal-action mask over the flat policy vector.
    pub fn legal_mask(&self, pushes: &[Push]) -> Vec<bool> {
        let mut mask = vec![false; self.action_space()];
        for &p in pushes {
            mask[action_index(p, self.height, self.width)] = true;
        }
        mask
    }

    /// Shortest walk for the player from `from` to `to` avoiding the boxes of
    /// `state`, as a direction sequence.
    pub fn walk_path(&self, boxes: &[Pos], from: Pos, to: Pos) -> Option<Vec<Direction>> {
        let occ = self.occupancy(boxes);
        let cells = self.height * self.width;
        let mut prev: Vec<Option<(usize, Direction)>> = vec![None; cells];
        let mut seen = vec![false; cells];
        let start = self.idx(from);
        let target = self.idx(to);
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            if i == target {
                let mut path = Vec::new();
                let mut cur = i;
                while let Some((p, d)) = prev[cur] {
                    path.push(d);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            let pos = Pos::new((i / self.width) as u16, (i % self.width) as u16);
            for dir in Direction::ALL {
                let Some(n) = pos.step(dir) else { continue };
                if !self.in_grid(n) {
                    continue;
                }
                let j = self.idx(n);
                if !seen[j] && !self.walls[j] && !occ[j] {
                    seen[j] = true;
                    prev[j] = Some((i, dir));
                    queue.push_back(j);
                }
            }
        }
        None
    }

    /// Expands a push plan into a LURD move string starting from the real
    /// player start (not the normalized cell).
    pub fn expand_plan(&self, plan: &[Push]) -> Result<String, BoardError> {
        let mut boxes = self.initial_boxes.clone();
        let mut player = self.player_start;
        let mut out = String::new();
        for &push in plan {
            let behind = push
                .box_pos
                .step(push.dir.opposite())
                .ok_or(BoardError::IllegalPush(push))?;
            if !boxes.contains(&push.box_pos) {
                return Err(BoardError::IllegalPush(push));
            }
            let walk = self
                .walk_path(&boxes, player, behind)
                .ok_or(BoardError::IllegalPush(push))?;
            let dest = push
                .box_pos
                .step(push.dir)
                .ok_or(BoardError::IllegalPush(push))?;
            if self.is_wall(dest) || boxes.contains(&dest) {
                return Err(BoardError::IllegalPush(push));
            }
            out.extend(walk.iter().map(|d| d.letter(false)));
            out.push(push.dir.letter(true));
            for b in boxes.iter_mut() {
                if *b == push.box_pos {
                    *b = dest;
                }
            }
            player = push.box_pos;
        }
        Ok(out)
    }

    /// Renders `state` in XSB text (player drawn on its normalized cell).
    pub fn render(&self, state: &State) -> String {
        let mut s = String::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let p = Pos::new(r as u16, c as u16);
                let goal = self.is_goal_cell(p);
                let ch = if self.is_wall(p) {
                    '#'
                } else if state.has_box(p) {
                    if goal {
                        '*'
                    } else {
                        '$'
                    }
                } else if state.player == p {
                    if goal {
                        '+'
                    } else {
                        '@'
                    }
                } else if goal {
                    '.'
                } else {
                    ' '
                };
                s.push(ch);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const L1: &str = "#####\n#@$.#\n#####";
    const L3: &str = "#####\n# @ #\n# $ #\n#  .#\n#####";

    fn p(r: u16, c: u16) -> Pos {
        Pos::new(r, c)
    }

    #[test]
    fn parse_l1() {
        let l = Level::parse(L1).unwrap();
        assert_eq!((l.height(), l.width(), l.num_boxes()), (3, 5, 1));
        assert_eq!(l.player_start(), p(1, 1));
        assert_eq!(l.initial_boxes(), &[p(1, 2)]);
        assert_eq!(l.goals(), &[p(1, 3)]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            Level::parse("#####\n#@$$.#\n#####"),
            Err(ParseError::CountMismatch { boxes: 2, goals: 1 })
        );
        assert_eq!(Level::parse("####\n# .#\n####"), Err(ParseError::NoPlayer));
        assert_eq!(
            Level::parse("#####\n#@@$.#\n#####"),
            Err(ParseError::MultiplePlayers)
        );
        assert!(matches!(
            Level::parse("#####\n#@$x.#\n#####"),
            Err(ParseError::InvalidChar { ch: 'x', line: 2 })
        ));
        assert_eq!(Level::parse("####\n#@ #\n####"), Err(ParseError::NoBoxes));
    }

    #[test]
    fn parse_goal_variants_and_ragged_rows() {
        let l = Level::parse("#####\n#+$ #\n# * #\n#$. #\n####").unwrap();
        assert_eq!(l.width(), 5);
        assert_eq!(l.goals(), &[p(1, 1), p(2, 2), p(3, 2)]);
        assert_eq!(l.initial_boxes(), &[p(1, 2), p(2, 2), p(3, 1)]);
        // right padding
        assert!(l.is_wall(p(4, 4)));
    }

    #[test]
    fn outside_floor_becomes_wall() {
        let l = Level::parse("  #####\n###   #\n#@$ . #\n#######").unwrap();
        assert!(l.is_wall(p(0, 0)));
        assert!(l.is_wall(p(0, 1)));
        assert!(!l.is_wall(p(1, 3)));
    }

    #[test]
    fn open_level_gets_wall_ring() {
        let l = Level::parse("@$.").unwrap();
        assert_eq!((l.height(), l.width()), (3, 5));
        assert_eq!(l.player_start(), p(1, 1));
        let s = l.initial_state();
        assert_eq!(
            l.legal_pushes(&s),
            vec![Push::new(p(1, 2), Direction::Right)]
        );
    }

    #[test]
    fn collection_parsing() {
        let text = "; first\n#####\n#@$.#\n#####\n\n\n;second\nTitle: foo\n#####\n# @ #\n# $ #\n#  .#\n#####\n";
        let levels = Level::parse_collection(text).unwrap();
        assert_eq!(levels.len(), 2);
        assert_eq!(levels[1], Level::parse(L3).unwrap());
    }

    #[test]
    fn reachability() {
        let l = Level::parse(L1).unwrap();
        let s = l.initial_state();
        assert_eq!(l.reachable_cells(&s), vec![p(1, 1)]);
        let g = l
            .apply_push(&s, Push::new(p(1, 2), Direction::Right))
            .unwrap();
        assert_eq!(l.reachable_cells(&g), vec![p(1, 1), p(1, 2)]);

        let corridor = Level::parse("#####\n#@  #\n#####\n#$.##\n#####").unwrap();
        let cs = corridor.initial_state();
        // the box region is not connected; only the corridor counts
        assert_eq!(
            corridor.reachable_cells(&cs),
            vec![p(1, 1), p(1, 2), p(1, 3)]
        );
    }

    #[test]
    fn normalization() {
        let l3 = Level::parse(L3).unwrap();
        let s = l3.initial_state();
        assert_eq!(s.player(), p(1, 1));
        let down = l3
            .apply_push(&s, Push::new(p(2, 2), Direction::Down))
            .unwrap();
        assert_eq!(down.boxes(), &[p(3, 2)]);
        // player lands on (2,2); its region contains (1,1)
        assert_eq!(down.player(), p(1, 1));
        let again = l3.normalize_player(&down);
        assert_eq!(again, down);
        let moved = l3.with_player(&down, p(2, 3)).unwrap();
        assert_eq!(moved, down);
        assert_eq!(moved.key(), down.key());
    }

    #[test]
    fn legal_pushes_and_apply() {
        let l = Level::parse(L1).unwrap();
        let s = l.initial_state();
        let right = Push::new(p(1, 2), Direction::Right);
        assert_eq!(l.legal_pushes(&s), vec![right]);
        let g = l.apply_push(&s, right).unwrap();
        assert_eq!(g.boxes(), &[p(1, 3)]);
        assert!(l.is_goal(&g));
        assert!(!l.is_goal(&s));
        assert!(l.legal_pushes(&g).is_empty());
        assert!(!l.is_dead(&g));
        assert!(!l.is_dead(&s));
        assert_eq!(
            l.apply_push(&s, Push::new(p(1, 2), Direction::Left)),
            Err(BoardError::IllegalPush(Push::new(p(1, 2), Direction::Left)))
        );
        assert!(l
            .apply_push(&s, Push::new(p(1, 1), Direction::Right))
            .is_err());
    }

    #[test]
    fn dead_corner() {
        let l3 = Level::parse(L3).unwrap();
        let corner = l3.state(vec![p(3, 1)], p(1, 1)).unwrap();
        assert!(l3.is_dead(&corner));
        assert!(l3.legal_pushes(&corner).is_empty());
    }

    #[test]
    fn keys() {
        let l = Level::parse(L1).unwrap();
        let s = l.initial_state();
        let g = l
            .apply_push(&s, Push::new(p(1, 2), Direction::Right))
            .unwrap();
        assert_eq!(s.key(), s.clone().key());
        assert_ne!(s.key(), g.key());
    }

    #[test]
    fn planes_l1() {
        let l = Level::parse(L1).unwrap();
        let s = l.initial_state();
        let planes = l.encode_planes(&s);
        let sum = |k: usize| planes.plane(k).iter().sum::<f32>();
        assert_eq!(sum(PLANE_WALLS), 12.0);
        assert_eq!(sum(PLANE_BOXES), 1.0);
        assert_eq!(planes.get(PLANE_BOXES, 1, 2), 1.0);
        assert_eq!(sum(PLANE_EMPTY_GOALS), 1.0);
        assert_eq!(planes.get(PLANE_EMPTY_GOALS, 1, 3), 1.0);
        assert_eq!(sum(PLANE_REACHABLE), 1.0);
        assert_eq!(planes.get(PLANE_REACHABLE, 1, 1), 1.0);
        assert_eq!(sum(PLANE_REACHABLE_GOALS), 0.0);
        assert_eq!(sum(PLANE_BOXES_ON_GOALS), 0.0);

        let g = l
            .apply_push(&s, Push::new(p(1, 2), Direction::Right))
            .unwrap();
        let gp = l.encode_planes(&g);
        assert_eq!(gp.get(PLANE_BOXES_ON_GOALS, 1, 3), 1.0);
        assert_eq!(gp.plane(PLANE_BOXES_ON_GOALS).iter().sum::<f32>(), 1.0);
        assert_eq!(gp.plane(PLANE_BOXES).iter().sum::<f32>(), 0.0);
    }

    #[test]
    fn planes_reachable_goal() {
        // player standing on a goal
        let l = Level::parse("######\n#+$ .#\n# $* #\n######").unwrap();
        let s = l.initial_state();
        let planes = l.encode_planes(&s);
        assert_eq!(planes.get(PLANE_REACHABLE_GOALS, 1, 1), 1.0);
        assert_eq!(planes.get(PLANE_BOXES_ON_GOALS, 2, 3), 1.0);
    }

    #[test]
    fn action_indexing() {
        let push = Push::new(p(1, 2), Direction::Right);
        assert_eq!(action_index(push, 3, 5), 52);
        assert_eq!(action_index(Push::new(p(0, 0), Direction::Up), 7, 9), 0);
        assert_eq!(action_from_index(52, 3, 5).unwrap(), push);
        assert!(matches!(
            action_from_index(60, 3, 5),
            Err(BoardError::OutOfRange { index: 60, .. })
        ));
    }

    #[test]
    fn expand_plan_moves() {
        let l3 = Level::parse(L3).unwrap();
        let plan = [
            Push::new(p(2, 2), Direction::Down),
            Push::new(p(3, 2), Direction::Right),
        ];
        // start at (1,2): push down; walk left, down; push right
        assert_eq!(l3.expand_plan(&plan).unwrap(), "DldR");
        assert!(l3.expand_plan(&plan[1..]).is_err());
    }

    #[test]
    fn render_round_trip() {
        let l3 = Level::parse(L3).unwrap();
        let s = l3.initial_state();
        let text = l3.render(&s);
        let back = Level::parse(&text).unwrap();
        assert_eq!(back.initial_state(), s);
    }
}
