//! Scenario definition, validation, and the TOML file format.
//!
//! A scenario file holds grid dimensions, row-strings of terrain glyphs
//! (`.` empty, `B` brick, `S` steel, `W` water, `#` base), ally spawn
//! cells with orientations, enemy spawn cells with entry ticks, and the
//! reward mode. Built-in scenarios ship embedded.

use serde::Deserialize;
use thiserror::Error;

pub const MAX_ALLIES: usize = 4;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("malformed scenario: {0}")]
    Invalid(String),
    #[error("unknown built-in scenario '{0}'")]
    UnknownBuiltin(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terrain {
    Empty,
    Brick,
    Steel,
    Water,
    Base,
}

impl Terrain {
    pub fn glyph(self) -> char {
        match self {
            Terrain::Empty => '.',
            Terrain::Brick => 'B',
            Terrain::Steel => 'S',
            Terrain::Water => 'W',
            Terrain::Base => '#',
        }
    }

    fn from_glyph(c: char) -> Result<Self, ScenarioError> {
        match c {
            '.' => Ok(Terrain::Empty),
            'B' => Ok(Terrain::Brick),
            'S' => Ok(Terrain::Steel),
            'W' => Ok(Terrain::Water),
            '#' => Ok(Terrain::Base),
            other => Err(ScenarioError::Parse(format!("unknown terrain glyph '{other}'"))),
        }
    }

    /// Tanks may enter only empty cells.
    pub fn passable(self) -> bool {
        matches!(self, Terrain::Empty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Up,
    Down,
    Left,
    Right,
}

impl Orientation {
    pub fn delta(self) -> (i32, i32) {
        match self {
            Orientation::Up => (0, -1),
            Orientation::Down => (0, 1),
            Orientation::Left => (-1, 0),
            Orientation::Right => (1, 0),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Orientation::Up => 0,
            Orientation::Down => 1,
            Orientation::Left => 2,
            Orientation::Right => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Orientation::Up => "up",
            Orientation::Down => "down",
            Orientation::Left => "left",
            Orientation::Right => "right",
        }
    }

    fn parse(s: &str) -> Result<Self, ScenarioError> {
        match s {
            "up" => Ok(Orientation::Up),
            "down" => Ok(Orientation::Down),
            "left" => Ok(Orientation::Left),
            "right" => Ok(Orientation::Right),
            other => Err(ScenarioError::Parse(format!("unknown orientation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Shaped,
    Sparse,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Row-major `[y * width + x]`.
    pub terrain: Vec<Terrain>,
    pub ally_spawns: Vec<((usize, usize), Orientation)>,
    /// (cell, entry tick); tick 0 enemies are on the board at reset.
    pub enemy_spawns: Vec<((usize, usize), u32)>,
    pub base_cell: (usize, usize),
    pub sight_range: u32,
    pub reward_mode: RewardMode,
    pub max_steps: u32,
    /// Jitters ally spawn columns and enemy entry ticks/columns from the
    /// reset seed so evaluation episodes differ.
    pub spawn_jitter: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    width: usize,
    height: usize,
    #[serde(default = "default_sight")]
    sight_range: u32,
    #[serde(default = "default_max_steps")]
    max_steps: u32,
    #[serde(default = "default_reward_mode")]
    reward_mode: RewardMode,
    #[serde(default = "default_jitter")]
    spawn_jitter: bool,
    terrain: Vec<String>,
    ally_spawns: Vec<AllySpawnFile>,
    enemy_spawns: Vec<EnemySpawnFile>,
}

fn default_sight() -> u32 {
    4
}
fn default_max_steps() -> u32 {
    200
}
fn default_reward_mode() -> RewardMode {
    RewardMode::Shaped
}
fn default_jitter() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AllySpawnFile {
    cell: [usize; 2],
    orientation: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnemySpawnFile {
    cell: [usize; 2],
    #[serde(default)]
    tick: u32,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn n_allies(&self) -> usize {
        self.ally_spawns.len()
    }

    pub fn n_enemies(&self) -> usize {
        self.enemy_spawns.len()
    }

    pub fn n_units(&self) -> usize {
        self.n_allies() + self.n_enemies()
    }

    /// Global state layout: 8 features per tank plus the base flag.
    pub fn state_dim(&self) -> usize {
        8 * self.n_units() + 1
    }

    /// Observation layout: 7 own features plus 7 per other unit.
    pub fn obs_dim(&self) -> usize {
        7 * self.n_units()
    }

    pub fn terrain_at(&self, x: usize, y: usize) -> Terrain {
        self.terrain[y * self.width + x]
    }

    fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.width < 3 || file.height < 3 {
            return Err(ScenarioError::Invalid("grid must be at least 3x3".into()));
        }
        if file.terrain.len() != file.height {
            return Err(ScenarioError::Invalid(format!(
                "terrain has {} rows, expected {}",
                file.terrain.len(),
                file.height
            )));
        }
        let mut terrain = Vec::with_capacity(file.width * file.height);
        for (y, row) in file.terrain.iter().enumerate() {
            if row.chars().count() != file.width {
                return Err(ScenarioError::Invalid(format!(
                    "terrain row {y} has {} glyphs, expected {}",
                    row.chars().count(),
                    file.width
                )));
            }
            for c in row.chars() {
                terrain.push(Terrain::from_glyph(c)?);
            }
        }
        let bases: Vec<(usize, usize)> = (0..file.height)
            .flat_map(|y| (0..file.width).map(move |x| (x, y)))
            .filter(|&(x, y)| terrain[y * file.width + x] == Terrain::Base)
            .collect();
        if bases.len() != 1 {
            return Err(ScenarioError::Invalid(format!(
                "exactly one base cell required, found {}",
                bases.len()
            )));
        }
        let base_cell = bases[0];
        if base_cell.1 != file.height - 1 {
            return Err(ScenarioError::Invalid("base must sit in the bottom row".into()));
        }

        let mut ally_spawns = Vec::new();
        for s in &file.ally_spawns {
            ally_spawns.push(((s.cell[0], s.cell[1]), Orientation::parse(&s.orientation)?));
        }
        if ally_spawns.is_empty() || ally_spawns.len() > MAX_ALLIES {
            return Err(ScenarioError::Invalid(format!(
                "ally count must be 1..={MAX_ALLIES}, got {}",
                ally_spawns.len()
            )));
        }
        let enemy_spawns: Vec<((usize, usize), u32)> =
            file.enemy_spawns.iter().map(|s| ((s.cell[0], s.cell[1]), s.tick)).collect();
        if enemy_spawns.is_empty() {
            return Err(ScenarioError::Invalid("at least one enemy spawn required".into()));
        }

        let scenario = Scenario {
            name: file.name,
            width: file.width,
            height: file.height,
            terrain,
            ally_spawns,
            enemy_spawns,
            base_cell,
            sight_range: file.sight_range,
            reward_mode: file.reward_mode,
            max_steps: file.max_steps,
            spawn_jitter: file.spawn_jitter,
        };
        scenario.validate_spawns()?;
        Ok(scenario)
    }

    fn validate_spawns(&self) -> Result<(), ScenarioError> {
        let mut seen = std::collections::HashSet::new();
        for &((x, y), _) in &self.ally_spawns {
            if x >= self.width || y >= self.height {
                return Err(ScenarioError::Invalid(format!("ally spawn ({x}, {y}) out of bounds")));
            }
            if !self.terrain_at(x, y).passable() {
                return Err(ScenarioError::Invalid(format!(
                    "ally spawn ({x}, {y}) not on empty terrain"
                )));
            }
            if !seen.insert((x, y)) {
                return Err(ScenarioError::Invalid(format!("overlapping ally spawns at ({x}, {y})")));
            }
        }
        for &((x, y), _) in &self.enemy_spawns {
            if x >= self.width || y >= self.height {
                return Err(ScenarioError::Invalid(format!(
                    "enemy spawn ({x}, {y}) out of bounds"
                )));
            }
            if !self.terrain_at(x, y).passable() {
                return Err(ScenarioError::Invalid(format!(
                    "enemy spawn ({x}, {y}) not on empty terrain"
                )));
            }
        }
        Ok(())
    }

    /// Emits the scenario back out in the file format (used for run-dir
    /// snapshots so a run is reproducible from its own directory).
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("name = {:?}\n", self.name));
        out.push_str(&format!("width = {}\n", self.width));
        out.push_str(&format!("height = {}\n", self.height));
        out.push_str(&format!("sight_range = {}\n", self.sight_range));
        out.push_str(&format!("max_steps = {}\n", self.max_steps));
        let mode = match self.reward_mode {
            RewardMode::Shaped => "shaped",
            RewardMode::Sparse => "sparse",
        };
        out.push_str(&format!("reward_mode = \"{mode}\"\n"));
        out.push_str(&format!("spawn_jitter = {}\n", self.spawn_jitter));
        out.push_str("terrain = [\n");
        for y in 0..self.height {
            let row: String = (0..self.width).map(|x| self.terrain_at(x, y).glyph()).collect();
            out.push_str(&format!("    \"{row}\",\n"));
        }
        out.push_str("]\n");
        for &((x, y), o) in &self.ally_spawns {
            out.push_str(&format!(
                "\n[[ally_spawns]]\ncell = [{x}, {y}]\norientation = \"{}\"\n",
                o.name()
            ));
        }
        for &((x, y), tick) in &self.enemy_spawns {
            out.push_str(&format!("\n[[enemy_spawns]]\ncell = [{x}, {y}]\ntick = {tick}\n"));
        }
        out
    }

    /// Built-in scenarios: `2_vs_8` (13×13 case study) and `2_vs_3_9x9`
    /// (reduced desk-scale map), plus `1_vs_1_5x5` for smoke runs.
    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        match name {
            "2_vs_8" => Self::from_toml(BUILTIN_2_VS_8),
            "2_vs_3_9x9" => Self::from_toml(BUILTIN_2_VS_3_9X9),
            "1_vs_1_5x5" => Self::from_toml(BUILTIN_1_VS_1_5X5),
            other => Err(ScenarioError::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["2_vs_8", "2_vs_3_9x9", "1_vs_1_5x5"]
    }
}

pub const BUILTIN_2_VS_8: &str = r#"
name = "2_vs_8"
width = 13
height = 13
sight_range = 4
max_steps = 200
reward_mode = "shaped"
spawn_jitter = true
terrain = [
    ".............",
    ".............",
    "..B..B.B..B..",
    "..B..B.B..B..",
    ".............",
    "....S...S....",
    ".W.........W.",
    ".............",
    "..B..BBB..B..",
    "..B...B...B..",
    ".............",
    ".....BBB.....",
    ".....B#B.....",
]

[[ally_spawns]]
cell = [3, 12]
orientation = "up"

[[ally_spawns]]
cell = [9, 12]
orientation = "up"

[[enemy_spawns]]
cell = [0, 0]
tick = 1

[[enemy_spawns]]
cell = [12, 0]
tick = 1

[[enemy_spawns]]
cell = [6, 0]
tick = 8

[[enemy_spawns]]
cell = [0, 0]
tick = 15

[[enemy_spawns]]
cell = [12, 0]
tick = 15

[[enemy_spawns]]
cell = [6, 0]
tick = 22

[[enemy_spawns]]
cell = [0, 0]
tick = 29

[[enemy_spawns]]
cell = [12, 0]
tick = 29
"#;

pub const BUILTIN_2_VS_3_9X9: &str = r#"
name = "2_vs_3_9x9"
width = 9
height = 9
sight_range = 2
max_steps = 60
reward_mode = "shaped"
spawn_jitter = true
terrain = [
    ".........",
    ".........",
    ".........",
    "..B...B..",
    ".........",
    ".........",
    "...B.B...",
    ".........",
    "....#....",
]

[[ally_spawns]]
cell = [2, 8]
orientation = "up"

[[ally_spawns]]
cell = [6, 8]
orientation = "up"

[[enemy_spawns]]
cell = [0, 0]
tick = 1

[[enemy_spawns]]
cell = [4, 0]
tick = 6

[[enemy_spawns]]
cell = [8, 0]
tick = 12
"#;

pub const BUILTIN_1_VS_1_5X5: &str = r#"
name = "1_vs_1_5x5"
width = 5
height = 5
sight_range = 4
max_steps = 30
reward_mode = "shaped"
spawn_jitter = true
terrain = [
    ".....",
    ".....",
    ".....",
    ".....",
    "..#..",
]

[[ally_spawns]]
cell = [2, 3]
orientation = "up"

[[enemy_spawns]]
cell = [2, 0]
tick = 1
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_validate() {
        for name in Scenario::builtin_names() {
            let s = Scenario::builtin(name).unwrap();
            assert_eq!(s.base_cell.1, s.height - 1, "{name}");
            assert!(s.n_allies() <= MAX_ALLIES);
        }
        let s = Scenario::builtin("2_vs_8").unwrap();
        assert_eq!(s.n_allies(), 2);
        assert_eq!(s.n_enemies(), 8);
        assert_eq!(s.state_dim(), 8 * 10 + 1);
        assert_eq!(s.obs_dim(), 7 * 10);
    }

    #[test]
    fn unknown_glyph_rejected() {
        let bad = BUILTIN_1_VS_1_5X5.replace("..#..", "..X..");
        assert!(matches!(Scenario::from_toml(&bad), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn base_must_be_in_bottom_row() {
        let bad = BUILTIN_1_VS_1_5X5
            .replace("\"..#..\",", "\".....\",")
            .replace("\".....\",\n    \".....\",\n    \".....\",\n    \".....\",", "\"..#..\",\n    \".....\",\n    \".....\",\n    \".....\",");
        assert!(Scenario::from_toml(&bad).is_err());
    }

    #[test]
    fn spawn_on_terrain_rejected() {
        let bad = BUILTIN_1_VS_1_5X5.replace("cell = [2, 3]", "cell = [2, 4]");
        assert!(matches!(Scenario::from_toml(&bad), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = BUILTIN_1_VS_1_5X5.replace("max_steps = 30", "max_stepz = 30");
        assert!(matches!(Scenario::from_toml(&bad), Err(ScenarioError::Parse(_))));
    }
}
