use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::spec::{AgentStart, Cell, GridSpec, Heading, Tile};
use super::{DEFAULT_MAX_STEPS, DEFAULT_REWARD_SCALE, DEFAULT_STEP_DECREMENT};
use crate::error::{Error, Result};
use crate::util::{derived_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalPlacement {
    /// Bottom-right interior corner.
    #[default]
    Corner,
    Center,
}

/// A family of grid layouts. Seeded tasks draw their placements from the
/// seed passed to [`Task::realize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Task {
    /// Open room, agent top-left facing east.
    Empty {
        size: usize,
        #[serde(default)]
        goal: GoalPlacement,
    },
    /// Four rooms joined by one-cell gaps; agent and goal placed at random.
    FourRooms { size: usize },
    /// One lava line (row or column) with a single opening.
    LavaCrossing {
        size: usize,
        /// With `false` the line is made of walls instead (SimpleCrossing).
        #[serde(default = "yes")]
        lava: bool,
    },
    /// Vertical lava strip with a gap; goal in the opposite corner.
    LavaGap { size: usize },
    /// Key on the left, locked door in a dividing wall, goal bottom-right.
    DoorKey { size: usize },
    /// A fixed layout.
    Custom { spec: GridSpec },
    /// A fixed layout loaded from a JSON file.
    File { path: PathBuf },
}

fn yes() -> bool {
    true
}

impl Task {
    /// Whether different seeds can produce different layouts.
    pub fn is_seeded(&self) -> bool {
        matches!(
            self,
            Task::FourRooms { .. }
                | Task::LavaCrossing { .. }
                | Task::LavaGap { .. }
                | Task::DoorKey { .. }
        )
    }

    pub fn realize(&self, seed: u64) -> Result<GridSpec> {
        let mut rng = derived_rng(seed, "layout");
        match self {
            Task::Empty { size, goal } => empty(*size, *goal),
            Task::FourRooms { size } => four_rooms(*size, &mut rng),
            Task::LavaCrossing { size, lava } => crossing(*size, *lava, &mut rng),
            Task::LavaGap { size } => lava_gap(*size, &mut rng),
            Task::DoorKey { size } => door_key(*size, &mut rng),
            Task::Custom { spec } => {
                spec.validate()?;
                Ok(spec.clone())
            }
            Task::File { path } => GridSpec::load(path),
        }
    }

    /// Short identifier, the inverse of [`Task::from_str`] for suite tasks.
    pub fn id(&self) -> String {
        match self {
            Task::Empty { size, goal: GoalPlacement::Corner } => format!("empty-{size}x{size}"),
            Task::Empty { size, goal: GoalPlacement::Center } => {
                format!("empty-{size}x{size}-center")
            }
            Task::FourRooms { size } => format!("fourrooms-{size}"),
            Task::LavaCrossing { size, lava: true } => format!("lavacrossing-s{size}n1"),
            Task::LavaCrossing { size, lava: false } => format!("simplecrossing-s{size}n1"),
            Task::LavaGap { size } => format!("lavagap-s{size}"),
            Task::DoorKey { size } => format!("doorkey-{size}x{size}"),
            Task::Custom { .. } => "custom".into(),
            Task::File { path } => format!("file:{}", path.display()),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    /// Parses suite ids such as `empty-8x8`, `empty-16x16-center`,
    /// `fourrooms`, `lavacrossing-s9n1`, `simplecrossing-s9n1`,
    /// `lavagap-s5` and `doorkey-8x8`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown environment id {s:?}"));
        let lower = s.to_ascii_lowercase();
        let square = |t: &str| -> Option<usize> {
            let (a, b) = t.split_once('x')?;
            let a: usize = a.parse().ok()?;
            (b.parse::<usize>().ok()? == a).then_some(a)
        };
        let crossing_size = |t: &str| -> Option<usize> {
            t.strip_prefix('s')?.strip_suffix("n1")?.parse().ok()
        };
        if let Some(rest) = lower.strip_prefix("empty-") {
            let (dims, goal) = match rest.strip_suffix("-center") {
                Some(d) => (d, GoalPlacement::Center),
                None => (rest, GoalPlacement::Corner),
            };
            return Ok(Task::Empty { size: square(dims).ok_or_else(bad)?, goal });
        }
        if lower == "fourrooms" {
            return Ok(Task::FourRooms { size: 19 });
        }
        if let Some(rest) = lower.strip_prefix("fourrooms-") {
            return Ok(Task::FourRooms { size: rest.parse().map_err(|_| bad())? });
        }
        if let Some(rest) = lower.strip_prefix("lavacrossing-") {
            return Ok(Task::LavaCrossing { size: crossing_size(rest).ok_or_else(bad)?, lava: true });
        }
        if let Some(rest) = lower.strip_prefix("simplecrossing-") {
            return Ok(Task::LavaCrossing {
                size: crossing_size(rest).ok_or_else(bad)?,
                lava: false,
            });
        }
        if let Some(rest) = lower.strip_prefix("lavagap-s") {
            return Ok(Task::LavaGap { size: rest.parse().map_err(|_| bad())? });
        }
        if let Some(rest) = lower.strip_prefix("doorkey-") {
            return Ok(Task::DoorKey { size: square(rest).ok_or_else(bad)? });
        }
        Err(bad())
    }
}

fn check_size(size: usize, min: usize) -> Result<()> {
    if size < min {
        return Err(Error::InvalidSpec(format!("grid size {size} is below the minimum {min}")));
    }
    Ok(())
}

/// Square grid with a wall border and floor inside.
fn walled(size: usize) -> Vec<Tile> {
    let mut tiles = vec![Tile::Floor; size * size];
    for i in 0..size {
        tiles[i] = Tile::Wall;
        tiles[(size - 1) * size + i] = Tile::Wall;
        tiles[i * size] = Tile::Wall;
        tiles[i * size + size - 1] = Tile::Wall;
    }
    tiles
}

fn finish(size: usize, tiles: Vec<Tile>, start: Cell, heading: Heading) -> Result<GridSpec> {
    GridSpec::new(
        size,
        size,
        tiles,
        AgentStart { cell: start, heading },
        DEFAULT_MAX_STEPS,
        DEFAULT_REWARD_SCALE,
        DEFAULT_STEP_DECREMENT,
    )
}

fn empty(size: usize, goal: GoalPlacement) -> Result<GridSpec> {
    check_size(size, 4)?;
    let mut tiles = walled(size);
    let g = match goal {
        GoalPlacement::Corner => Cell::new(size - 2, size - 2),
        GoalPlacement::Center => Cell::new(size / 2, size / 2),
    };
    if g == Cell::new(1, 1) {
        return Err(Error::InvalidSpec("goal coincides with the start".into()));
    }
    tiles[g.row * size + g.col] = Tile::Goal;
    finish(size, tiles, Cell::new(1, 1), Heading::East)
}

fn random_floor(tiles: &[Tile], size: usize, rng: &mut Rng, lo: Cell, hi: Cell) -> Cell {
    let candidates: Vec<Cell> = (lo.row..=hi.row)
        .flat_map(|r| (lo.col..=hi.col).map(move |c| Cell::new(c, r)))
        .filter(|c| tiles[c.row * size + c.col] == Tile::Floor)
        .collect();
    *candidates.choose(rng).expect("region has a floor cell")
}

fn random_heading(rng: &mut Rng) -> Heading {
    Heading::from_index(rng.gen_range(0..4))
}

fn four_rooms(size: usize, rng: &mut Rng) -> Result<GridSpec> {
    check_size(size, 7)?;
    let mut tiles = walled(size);
    let mid = size / 2;
    for i in 0..size {
        tiles[mid * size + i] = Tile::Wall;
        tiles[i * size + mid] = Tile::Wall;
    }
    // One gap in each of the four wall segments.
    let gap = |rng: &mut Rng, lo: usize, hi: usize| rng.gen_range(lo..hi);
    let (left, right) = ((1, mid), (mid + 1, size - 1));
    let r = gap(rng, left.0, left.1);
    tiles[r * size + mid] = Tile::Floor;
    let r = gap(rng, right.0, right.1);
    tiles[r * size + mid] = Tile::Floor;
    let c = gap(rng, left.0, left.1);
    tiles[mid * size + c] = Tile::Floor;
    let c = gap(rng, right.0, right.1);
    tiles[mid * size + c] = Tile::Floor;

    let (lo, hi) = (Cell::new(1, 1), Cell::new(size - 2, size - 2));
    let goal = random_floor(&tiles, size, rng, lo, hi);
    tiles[goal.row * size + goal.col] = Tile::Goal;
    let start = random_floor(&tiles, size, rng, lo, hi);
    let heading = random_heading(rng);
    finish(size, tiles, start, heading)
}

fn crossing(size: usize, lava: bool, rng: &mut Rng) -> Result<GridSpec> {
    check_size(size, 5)?;
    let mut tiles = walled(size);
    let obstacle = if lava { Tile::Lava } else { Tile::Wall };
    // Lines sit on even coordinates strictly between start and goal.
    let positions: Vec<usize> = (2..size - 2).step_by(2).collect();
    let at = *positions.choose(rng).expect("size >= 5 leaves a line position");
    let vertical = rng.gen_bool(0.5);
    let opening = rng.gen_range(1..size - 1);
    for i in 1..size - 1 {
        if i == opening {
            continue;
        }
        let idx = if vertical { i * size + at } else { at * size + i };
        tiles[idx] = obstacle;
    }
    tiles[(size - 2) * size + size - 2] = Tile::Goal;
    finish(size, tiles, Cell::new(1, 1), Heading::East)
}

fn lava_gap(size: usize, rng: &mut Rng) -> Result<GridSpec> {
    check_size(size, 5)?;
    let mut tiles = walled(size);
    let col = rng.gen_range(2..size - 2);
    let gap = rng.gen_range(1..size - 1);
    for r in 1..size - 1 {
        if r != gap {
            tiles[r * size + col] = Tile::Lava;
        }
    }
    tiles[(size - 2) * size + size - 2] = Tile::Goal;
    finish(size, tiles, Cell::new(1, 1), Heading::East)
}

fn door_key(size: usize, rng: &mut Rng) -> Result<GridSpec> {
    check_size(size, 5)?;
    let mut tiles = walled(size);
    let wall_col = rng.gen_range(2..size - 2);
    for r in 0..size {
        tiles[r * size + wall_col] = Tile::Wall;
    }
    let door_row = rng.gen_range(1..size - 1);
    tiles[door_row * size + wall_col] = Tile::Door;
    tiles[(size - 2) * size + size - 2] = Tile::Goal;
    let (lo, hi) = (Cell::new(1, 1), Cell::new(wall_col - 1, size - 2));
    let key = random_floor(&tiles, size, rng, lo, hi);
    tiles[key.row * size + key.col] = Tile::Key;
    let start = random_floor(&tiles, size, rng, lo, hi);
    finish(size, tiles, start, random_heading(rng))
}
