use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Cell { col, row }
    }
}

/// Agent facing direction. Turning right goes east → south → west → north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heading {
    East,
    South,
    West,
    North,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::South, Heading::West, Heading::North];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i % 4]
    }

    pub fn turn_left(self) -> Heading {
        Heading::from_index(self.index() + 3)
    }

    pub fn turn_right(self) -> Heading {
        Heading::from_index(self.index() + 1)
    }

    fn glyph(self) -> char {
        match self {
            Heading::East => '>',
            Heading::South => 'v',
            Heading::West => '<',
            Heading::North => '^',
        }
    }
}

/// The fixed, ordered action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    TurnLeft,
    TurnRight,
    Forward,
    Pickup,
    Toggle,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::Toggle,
    ];
    pub const COUNT: usize = Action::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tile {
    Floor,
    Wall,
    Lava,
    Goal,
    /// Locked door; opened by toggling while holding the key.
    Door,
    Key,
}

impl Tile {
    pub fn to_char(self) -> char {
        match self {
            Tile::Floor => '.',
            Tile::Wall => '#',
            Tile::Lava => 'L',
            Tile::Goal => 'G',
            Tile::Door => 'D',
            Tile::Key => 'K',
        }
    }

    pub fn from_char(c: char) -> Option<Tile> {
        Some(match c {
            '.' | ' ' => Tile::Floor,
            '#' | 'W' => Tile::Wall,
            'L' => Tile::Lava,
            'G' => Tile::Goal,
            'D' => Tile::Door,
            'K' => Tile::Key,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStart {
    pub cell: Cell,
    pub heading: Heading,
}

/// A concrete grid: layout, start pose and episode/reward constants.
///
/// Serialized as JSON with the layout given as one string per row
/// (`#` wall, `.` floor, `L` lava, `G` goal, `D` door, `K` key).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecFile", into = "GridSpecFile")]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    tiles: Vec<Tile>,
    pub agent_start: AgentStart,
    pub max_steps: u32,
    pub reward_scale: f64,
    pub step_decrement: f64,
}

#[derive(Serialize, Deserialize)]
struct GridSpecFile {
    width: usize,
    height: usize,
    rows: Vec<String>,
    agent_start: AgentStart,
    #[serde(default = "default_max_steps")]
    max_steps: u32,
    #[serde(default = "default_reward_scale")]
    reward_scale: f64,
    #[serde(default = "default_step_decrement")]
    step_decrement: f64,
}

fn default_max_steps() -> u32 {
    super::DEFAULT_MAX_STEPS
}
fn default_reward_scale() -> f64 {
    super::DEFAULT_REWARD_SCALE
}
fn default_step_decrement() -> f64 {
    super::DEFAULT_STEP_DECREMENT
}

impl TryFrom<GridSpecFile> for GridSpec {
    type Error = Error;

    fn try_from(f: GridSpecFile) -> Result<Self> {
        if f.rows.len() != f.height {
            return Err(Error::InvalidSpec(format!(
                "{} rows for height {}",
                f.rows.len(),
                f.height
            )));
        }
        let mut tiles = Vec::with_capacity(f.width * f.height);
        for (r, line) in f.rows.iter().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != f.width {
                return Err(Error::InvalidSpec(format!(
                    "row {r} has {} cells, expected {}",
                    chars.len(),
                    f.width
                )));
            }
            for c in chars {
                tiles.push(
                    Tile::from_char(c)
                        .ok_or_else(|| Error::InvalidSpec(format!("unknown tile {c:?}")))?,
                );
            }
        }
        GridSpec::new(
            f.width,
            f.height,
            tiles,
            f.agent_start,
            f.max_steps,
            f.reward_scale,
            f.step_decrement,
        )
    }
}

impl From<GridSpec> for GridSpecFile {
    fn from(s: GridSpec) -> Self {
        GridSpecFile {
            width: s.width,
            height: s.height,
            rows: s.layout_rows(),
            agent_start: s.agent_start,
            max_steps: s.max_steps,
            reward_scale: s.reward_scale,
            step_decrement: s.step_decrement,
        }
    }
}

impl GridSpec {
    /// Builds and validates a spec.
    pub fn new(
        width: usize,
        height: usize,
        tiles: Vec<Tile>,
        agent_start: AgentStart,
        max_steps: u32,
        reward_scale: f64,
        step_decrement: f64,
    ) -> Result<Self> {
        let spec = GridSpec {
            width,
            height,
            tiles,
            agent_start,
            max_steps,
            reward_scale,
            step_decrement,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid spec serializes")
    }

    pub fn tile(&self, cell: Cell) -> Tile {
        self.tiles[cell.row * self.width + cell.col]
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn cell_of(&self, linear: usize) -> Cell {
        Cell::new(linear % self.width, linear / self.width)
    }

    pub fn linear(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn goal_cells(&self) -> Vec<Cell> {
        self.cells_with(Tile::Goal)
    }

    pub fn cells_with(&self, tile: Tile) -> Vec<Cell> {
        self.tiles
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == tile)
            .map(|(i, _)| self.cell_of(i))
            .collect()
    }

    /// The neighbour in `heading`, if inside the grid.
    pub fn neighbour(&self, cell: Cell, heading: Heading) -> Option<Cell> {
        let (c, r) = (cell.col as isize, cell.row as isize);
        let (c, r) = match heading {
            Heading::East => (c + 1, r),
            Heading::South => (c, r + 1),
            Heading::West => (c - 1, r),
            Heading::North => (c, r - 1),
        };
        (c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height)
            .then(|| Cell::new(c as usize, r as usize))
    }

    pub fn layout_rows(&self) -> Vec<String> {
        self.tiles
            .chunks(self.width)
            .map(|row| row.iter().map(|t| t.to_char()).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidSpec(m));
        if self.width == 0 || self.height == 0 || self.tiles.len() != self.width * self.height {
            return invalid(format!(
                "{}x{} grid with {} tiles",
                self.width,
                self.height,
                self.tiles.len()
            ));
        }
        if self.max_steps < 1 {
            return invalid("max_steps must be at least 1".into());
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return invalid(format!("reward_scale must be positive, got {}", self.reward_scale));
        }
        if !self.step_decrement.is_finite() {
            return invalid("step_decrement must be finite".into());
        }
        let start = self.agent_start.cell;
        if start.col >= self.width || start.row >= self.height {
            return invalid(format!("agent start {start:?} out of bounds"));
        }
        if self.tile(start) != Tile::Floor {
            return invalid(format!("agent start {start:?} is not a floor cell"));
        }
        if self.cells_with(Tile::Key).len() > 1 {
            return invalid("at most one key is supported".into());
        }
        if self.cells_with(Tile::Door).len() > 16 {
            return invalid("at most 16 doors are supported".into());
        }
        let goals = self.goal_cells();
        if goals.is_empty() {
            return invalid("no goal cell".into());
        }
        if !self.goal_reachable() {
            return invalid("no goal cell is reachable from the start".into());
        }
        Ok(())
    }

    /// Breadth-first search treating doors and keys as passable and lava as
    /// blocking.
    fn goal_reachable(&self) -> bool {
        let mut seen = vec![false; self.tiles.len()];
        let mut queue = std::collections::VecDeque::new();
        let start = self.linear(self.agent_start.cell);
        seen[start] = true;
        queue.push_back(self.agent_start.cell);
        while let Some(cell) = queue.pop_front() {
            if self.tile(cell) == Tile::Goal {
                return true;
            }
            for h in Heading::ALL {
                if let Some(n) = self.neighbour(cell, h) {
                    let i = self.linear(n);
                    if !seen[i] && !matches!(self.tile(n), Tile::Wall | Tile::Lava) {
                        seen[i] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        false
    }

    /// ASCII picture of the grid with the agent drawn as an arrow.
    pub fn render(&self, agent: Option<(Cell, Heading)>) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = Cell::new(c, r);
                match agent {
                    Some((a, h)) if a == cell => out.push(h.glyph()),
                    _ => out.push(self.tile(cell).to_char()),
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(Some((self.agent_start.cell, self.agent_start.heading))))
    }
}
