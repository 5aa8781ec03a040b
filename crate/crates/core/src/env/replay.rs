//! Episode replays: JSON-lines serialization and the ASCII renderer.
//!
//! Line 1 is a header (scenario name, dims, initial terrain rows); every
//! following line is one tick.

use super::scenario::Terrain;
use super::world::{MabcEnv, Team};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("empty replay file")]
    Empty,
    #[error("line {0}: {1}")]
    BadLine(usize, String),
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ReplayHeader {
    pub scenario: String,
    pub width: usize,
    pub height: usize,
    pub terrain: Vec<String>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ReplayUnit {
    pub team: String,
    pub x: i32,
    pub y: i32,
    pub orient: String,
    pub alive: bool,
    pub cooldown: u32,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ReplayMissile {
    pub x: i32,
    pub y: i32,
    pub dir: String,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ReplayTick {
    pub tick: u32,
    pub units: Vec<ReplayUnit>,
    pub missiles: Vec<ReplayMissile>,
    pub actions: Vec<String>,
    pub reward: f32,
    pub outcome: String,
    /// Terrain cells destroyed this tick, as (x, y).
    #[serde(default)]
    pub razed: Vec<(usize, usize)>,
}

pub struct ReplayRecorder {
    header: ReplayHeader,
    ticks: Vec<ReplayTick>,
    prev_terrain: Vec<Terrain>,
}

impl ReplayRecorder {
    pub fn new(env: &MabcEnv) -> Self {
        let s = env.scenario();
        let terrain_rows: Vec<String> = (0..s.height)
            .map(|y| (0..s.width).map(|x| env.terrain_at(x, y).glyph()).collect())
            .collect();
        ReplayRecorder {
            header: ReplayHeader {
                scenario: s.name.clone(),
                width: s.width,
                height: s.height,
                terrain: terrain_rows,
                seed: env.seed(),
            },
            ticks: Vec::new(),
            prev_terrain: (0..s.width * s.height)
                .map(|i| env.terrain_at(i % s.width, i / s.width))
                .collect(),
        }
    }

    pub fn record(&mut self, env: &MabcEnv, actions: &[super::world::Action], reward: f32) {
        let s = env.scenario();
        let mut razed = Vec::new();
        for y in 0..s.height {
            for x in 0..s.width {
                let now = env.terrain_at(x, y);
                if self.prev_terrain[y * s.width + x] != now {
                    razed.push((x, y));
                    self.prev_terrain[y * s.width + x] = now;
                }
            }
        }
        self.ticks.push(ReplayTick {
            tick: env.tick(),
            units: env
                .tanks()
                .iter()
                .map(|t| ReplayUnit {
                    team: match t.team {
                        Team::Ally => "ally".into(),
                        Team::Enemy => "enemy".into(),
                    },
                    x: t.x,
                    y: t.y,
                    orient: t.orientation.name().into(),
                    alive: t.alive,
                    cooldown: t.cooldown,
                })
                .collect(),
            missiles: env
                .missiles()
                .iter()
                .map(|m| ReplayMissile { x: m.x, y: m.y, dir: m.direction.name().into() })
                .collect(),
            actions: actions.iter().map(|a| a.name().to_string()).collect(),
            reward,
            outcome: env.outcome().name().to_string(),
        razed,
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        for tick in &self.ticks {
            out.push('\n');
            out.push_str(&serde_json::to_string(tick).expect("tick serializes"));
        }
        out.push('\n');
        out
    }
}

/// Parses a JSON-lines replay. Errors carry the 1-based line number.
pub fn parse_replay(text: &str) -> Result<(ReplayHeader, Vec<ReplayTick>), ReplayError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(ReplayError::Empty)?;
    let header: ReplayHeader =
        serde_json::from_str(first).map_err(|e| ReplayError::BadLine(1, e.to_string()))?;
    let mut ticks = Vec::new();
    for (idx, line) in lines {
        let tick: ReplayTick = serde_json::from_str(line)
            .map_err(|e| ReplayError::BadLine(idx + 1, e.to_string()))?;
        ticks.push(tick);
    }
    Ok((header, ticks))
}

/// Renders one tick as an ASCII frame: terrain glyphs with ally digits,
/// `E` enemies, `*` missiles; base shows `#` while standing.
pub fn render_frame(header: &ReplayHeader, tick: &ReplayTick, razed_so_far: &[(usize, usize)]) -> String {
    let mut grid: Vec<Vec<char>> =
        header.terrain.iter().map(|row| row.chars().collect()).collect();
    for &(x, y) in razed_so_far {
        grid[y][x] = '.';
    }
    for m in &tick.missiles {
        if m.y >= 0 && m.x >= 0 && (m.y as usize) < header.height && (m.x as usize) < header.width {
            grid[m.y as usize][m.x as usize] = '*';
        }
    }
    let mut ally_no = 0;
    for u in &tick.units {
        if !u.alive {
            if u.team == "ally" {
                ally_no += 1;
            }
            continue;
        }
        let c = if u.team == "ally" {
            let c = char::from_digit(ally_no, 10).unwrap_or('A');
            ally_no += 1;
            c
        } else {
            'E'
        };
        grid[u.y as usize][u.x as usize] = c;
    }
    let mut out = String::new();
    out.push_str(&format!("tick {:>4}  reward {:+.1}  outcome {}\n", tick.tick, tick.reward, tick.outcome));
    for row in grid {
        out.extend(row);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::scenario::Scenario;
    use crate::env::world::Action;

    #[test]
    fn record_parse_roundtrip() {
        let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
        let mut env = MabcEnv::new(scenario, 7);
        let mut rec = ReplayRecorder::new(&env);
        let out = env.step(&[Action::Fire]).unwrap();
        rec.record(&env, &[Action::Fire], out.reward);
        let text = rec.to_jsonl();
        let (header, ticks) = parse_replay(&text).unwrap();
        assert_eq!(header.width, 5);
        assert_eq!(ticks.len(), 1);
        assert_eq!(ticks[0].actions, vec!["fire"]);
    }

    #[test]
    fn empty_replay_is_an_error() {
        assert!(matches!(parse_replay(""), Err(ReplayError::Empty)));
    }

    #[test]
    fn bad_line_reports_number() {
        let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
        let env = MabcEnv::new(scenario, 7);
        let rec = ReplayRecorder::new(&env);
        let mut text = rec.to_jsonl();
        text.push_str("{ not json\n");
        match parse_replay(&text) {
            Err(ReplayError::BadLine(n, _)) => assert_eq!(n, 2),
            other => panic!("expected BadLine, got {other:?}"),
        }
    }

    #[test]
    fn frame_dimensions_match_grid() {
        let scenario = Scenario::builtin("2_vs_8").unwrap();
        let mut env = MabcEnv::new(scenario, 3);
        let mut rec = ReplayRecorder::new(&env);
        let out = env.step(&[Action::NoOp, Action::NoOp]).unwrap();
        rec.record(&env, &[Action::NoOp, Action::NoOp], out.reward);
        let (header, ticks) = parse_replay(&rec.to_jsonl()).unwrap();
        let frame = render_frame(&header, &ticks[0], &ticks[0].razed);
        let lines: Vec<&str> = frame.lines().collect();
        assert_eq!(lines.len(), header.height + 1);
        for row in &lines[1..] {
            assert_eq!(row.chars().count(), header.width);
        }
    }
}
