//! Multi-Agent Battle City simulation.
//!
//! Deterministic given (scenario, seed, action sequence). Each tick runs:
//! ally actions, scripted enemy actions, missile movement and hit
//! resolution, enemy spawns, cooldown decrements, termination check.

use super::scenario::{Orientation, RewardMode, Scenario, Terrain};
use crate::numerics::Rng;
use thiserror::Error;

pub const COOLDOWN_MAX: u32 = 5;
pub const MISSILE_SPEED: u32 = 2;
pub const TANK_HP: u32 = 1;
pub const ENEMY_AGGRO_RADIUS: i32 = 4;
pub const N_ACTIONS: usize = 6;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment already terminated")]
    Terminated,
    #[error("expected {expected} ally actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    MoveLeft,
    MoveRight,
    MoveUp,
    MoveDown,
    Fire,
    NoOp,
}

impl Action {
    pub fn from_index(i: usize) -> Action {
        match i {
            0 => Action::MoveLeft,
            1 => Action::MoveRight,
            2 => Action::MoveUp,
            3 => Action::MoveDown,
            4 => Action::Fire,
            5 => Action::NoOp,
            other => panic!("action index {other} out of range"),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Action::MoveLeft => 0,
            Action::MoveRight => 1,
            Action::MoveUp => 2,
            Action::MoveDown => 3,
            Action::Fire => 4,
            Action::NoOp => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveLeft => "left",
            Action::MoveRight => "right",
            Action::MoveUp => "up",
            Action::MoveDown => "down",
            Action::Fire => "fire",
            Action::NoOp => "noop",
        }
    }

    fn move_orientation(self) -> Option<Orientation> {
        match self {
            Action::MoveLeft => Some(Orientation::Left),
            Action::MoveRight => Some(Orientation::Right),
            Action::MoveUp => Some(Orientation::Up),
            Action::MoveDown => Some(Orientation::Down),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Team {
    Ally,
    Enemy,
}

#[derive(Clone, Debug)]
pub struct Tank {
    pub x: i32,
    pub y: i32,
    pub orientation: Orientation,
    pub hp: u32,
    pub cooldown: u32,
    pub alive: bool,
    /// False until the spawn tick arrives (enemies only).
    pub entered: bool,
    pub team: Team,
    entry_tick: u32,
}

#[derive(Clone, Debug)]
pub struct Missile {
    pub x: i32,
    pub y: i32,
    pub direction: Orientation,
    pub owner: Team,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ongoing,
    Win,
    LossBase,
    LossWipe,
    Timeout,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Ongoing => "ongoing",
            Outcome::Win => "win",
            Outcome::LossBase => "loss_base",
            Outcome::LossWipe => "loss_wipe",
            Outcome::Timeout => "timeout",
        }
    }
}

/// What happened during one tick, for reward shaping.
#[derive(Clone, Copy, Debug, Default)]
pub struct TickEvents {
    pub damage_to_enemies: u32,
    pub enemy_kills: u32,
    pub won: bool,
    pub lost_base: bool,
}

/// +1 per hp of damage to enemies, +5 per kill, +50 on win, −50 on base loss.
pub fn shaped_reward(events: &TickEvents) -> f32 {
    events.damage_to_enemies as f32 + 5.0 * events.enemy_kills as f32
        + if events.won { 50.0 } else { 0.0 }
        - if events.lost_base { 50.0 } else { 0.0 }
}

pub struct StepOutput {
    pub reward: f32,
    pub observations: Vec<Vec<f32>>,
    pub state: Vec<f32>,
    pub terminated: bool,
    pub outcome: Outcome,
    pub events: TickEvents,
}

pub struct MabcEnv {
    scenario: Scenario,
    terrain: Vec<Terrain>,
    tanks: Vec<Tank>,
    missiles: Vec<Missile>,
    base_alive: bool,
    tick: u32,
    outcome: Outcome,
    ally_deaths: u32,
    enemy_deaths: u32,
    seed: u64,
}

impl MabcEnv {
    /// World at tick 0; deterministic given the seed (spawn jitter included).
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        let mut rng = Rng::new(seed).fork(0x7e5e7);
        let mut tanks = Vec::new();
        let mut occupied: Vec<(i32, i32)> = Vec::new();
        for &((x, y), orientation) in &scenario.ally_spawns {
            let (mut px, py) = (x as i32, y as i32);
            if scenario.spawn_jitter {
                let dx = rng.below(3) as i32 - 1;
                let cand = px + dx;
                if in_bounds(&scenario, cand, py)
                    && scenario.terrain_at(cand as usize, py as usize).passable()
                    && !occupied.contains(&(cand, py))
                {
                    px = cand;
                }
            }
            occupied.push((px, py));
            tanks.push(Tank {
                x: px,
                y: py,
                orientation,
                hp: TANK_HP,
                cooldown: 0,
                alive: true,
                entered: true,
                team: Team::Ally,
                entry_tick: 0,
            });
        }
        for &((x, y), tick) in &scenario.enemy_spawns {
            let (mut px, py) = (x as i32, y as i32);
            let mut entry = tick;
            if scenario.spawn_jitter {
                let dx = rng.below(3) as i32 - 1;
                let cand = px + dx;
                if in_bounds(&scenario, cand, py)
                    && scenario.terrain_at(cand as usize, py as usize).passable()
                {
                    px = cand;
                }
                entry = entry.saturating_add(rng.below(4) as u32);
            }
            tanks.push(Tank {
                x: px,
                y: py,
                orientation: Orientation::Down,
                hp: TANK_HP,
                cooldown: 0,
                alive: false,
                entered: false,
                team: Team::Enemy,
                entry_tick: entry,
            });
        }
        let mut env = MabcEnv {
            terrain: scenario.terrain.clone(),
            tanks,
            missiles: Vec::new(),
            base_alive: true,
            tick: 0,
            outcome: Outcome::Ongoing,
            ally_deaths: 0,
            enemy_deaths: 0,
            seed,
            scenario,
        };
        // tick-0 entries
        env.process_spawns();
        env
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn terminated(&self) -> bool {
        self.outcome != Outcome::Ongoing
    }

    pub fn tanks(&self) -> &[Tank] {
        &self.tanks
    }

    pub fn missiles(&self) -> &[Missile] {
        &self.missiles
    }

    pub fn base_alive(&self) -> bool {
        self.base_alive
    }

    pub fn terrain_at(&self, x: usize, y: usize) -> Terrain {
        self.terrain[y * self.scenario.width + x]
    }

    pub fn n_allies(&self) -> usize {
        self.scenario.n_allies()
    }

    pub fn alive_allies(&self) -> usize {
        self.tanks.iter().filter(|t| t.team == Team::Ally && t.alive).count()
    }

    pub fn alive_enemies(&self) -> usize {
        self.tanks.iter().filter(|t| t.team == Team::Enemy && t.alive).count()
    }

    pub fn pending_enemies(&self) -> usize {
        self.tanks.iter().filter(|t| t.team == Team::Enemy && !t.entered).count()
    }

    pub fn ally_deaths(&self) -> u32 {
        self.ally_deaths
    }

    pub fn enemy_deaths(&self) -> u32 {
        self.enemy_deaths
    }

    /// Per-ally action mask: dead agents may only no-op.
    pub fn alive_mask(&self) -> Vec<bool> {
        self.tanks[..self.n_allies()].iter().map(|t| t.alive).collect()
    }

    /// One simulation tick. Dead agents' actions are treated as no-op.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutput, EnvError> {
        if self.terminated() {
            return Err(EnvError::Terminated);
        }
        if actions.len() != self.n_allies() {
            return Err(EnvError::WrongActionCount {
                expected: self.n_allies(),
                got: actions.len(),
            });
        }
        self.tick += 1;
        let mut events = TickEvents::default();

        // (1) ally actions in agent order
        for (i, &action) in actions.iter().enumerate() {
            if self.tanks[i].alive {
                self.apply_action(i, action, None);
            }
        }
        // (2) scripted enemies
        let decisions = self.enemy_decisions();
        for (slot, (action, face)) in decisions.into_iter().enumerate() {
            let idx = self.n_allies() + slot;
            if self.tanks[idx].alive {
                self.apply_action(idx, action, face);
            }
        }
        // (3) missiles advance and resolve
        for _ in 0..MISSILE_SPEED {
            self.advance_missiles(&mut events);
        }
        // (4) spawns
        self.process_spawns();
        // (5) cooldowns
        for tank in &mut self.tanks {
            if tank.alive && tank.cooldown > 0 {
                tank.cooldown -= 1;
            }
        }
        // (6) termination
        self.outcome = self.check_termination();
        events.won = self.outcome == Outcome::Win;
        events.lost_base = self.outcome == Outcome::LossBase;

        let reward = match self.scenario.reward_mode {
            RewardMode::Shaped => shaped_reward(&events),
            RewardMode::Sparse => {
                if self.outcome == Outcome::Win {
                    1.0
                } else {
                    0.0
                }
            }
        };
        Ok(StepOutput {
            reward,
            observations: self.observations(),
            state: self.global_state(),
            terminated: self.terminated(),
            outcome: self.outcome,
            events,
        })
    }

    /// Scripted enemy joint action (index order; dead or pending → no-op).
    ///
    /// Target is the base unless a living ally sits within the aggro
    /// radius (Chebyshev), then the nearest such ally (ties → lowest agent
    /// index). Fires when the target is axis-aligned with steel-free line
    /// of sight and the cooldown allows; otherwise moves one step along
    /// the axis of larger distance (ties → horizontal).
    pub fn enemy_policy(&self, _rng: &mut Rng) -> Vec<Action> {
        self.enemy_decisions().into_iter().map(|(a, _)| a).collect()
    }

    fn enemy_decisions(&self) -> Vec<(Action, Option<Orientation>)> {
        let n_allies = self.n_allies();
        let mut out = Vec::with_capacity(self.scenario.n_enemies());
        for slot in 0..self.scenario.n_enemies() {
            let e = &self.tanks[n_allies + slot];
            if !e.alive {
                out.push((Action::NoOp, None));
                continue;
            }
            // aggro: nearest living ally within radius, ties to lowest index
            let mut target: Option<(i32, i32)> = None;
            let mut best = i32::MAX;
            for ally in self.tanks[..n_allies].iter().filter(|t| t.alive) {
                let d = chebyshev(e.x, e.y, ally.x, ally.y);
                if d <= ENEMY_AGGRO_RADIUS && d < best {
                    best = d;
                    target = Some((ally.x, ally.y));
                }
            }
            let (tx, ty) =
                target.unwrap_or((self.scenario.base_cell.0 as i32, self.scenario.base_cell.1 as i32));
            let (dx, dy) = (tx - e.x, ty - e.y);

            let axis_aligned = (dx == 0) ^ (dy == 0);
            if axis_aligned && e.cooldown == 0 && self.steel_free_line(e.x, e.y, tx, ty) {
                let face = if dx != 0 {
                    if dx > 0 {
                        Orientation::Right
                    } else {
                        Orientation::Left
                    }
                } else if dy > 0 {
                    Orientation::Down
                } else {
                    Orientation::Up
                };
                out.push((Action::Fire, Some(face)));
                continue;
            }

            // movement: larger-distance axis first, ties horizontal
            let horiz = if dx > 0 { Action::MoveRight } else { Action::MoveLeft };
            let vert = if dy > 0 { Action::MoveDown } else { Action::MoveUp };
            let (primary, secondary) = if dx != 0 && dx.abs() >= dy.abs() {
                (horiz, (dy != 0).then_some(vert))
            } else {
                (vert, (dx != 0).then_some(horiz))
            };
            let step_free = |a: Action| -> bool {
                let o = a.move_orientation().unwrap();
                let (ddx, ddy) = o.delta();
                self.cell_free(e.x + ddx, e.y + ddy)
            };
            if step_free(primary) {
                out.push((primary, None));
            } else if let Some(sec) = secondary.filter(|&s| step_free(s)) {
                out.push((sec, None));
            } else {
                // blocked both ways: rotate toward the preferred axis
                out.push((primary, None));
            }
        }
        out
    }

    fn apply_action(&mut self, idx: usize, action: Action, face: Option<Orientation>) {
        if let Some(o) = face {
            self.tanks[idx].orientation = o;
        }
        match action {
            Action::NoOp => {}
            Action::Fire => {
                if self.tanks[idx].cooldown == 0 {
                    let t = &self.tanks[idx];
                    self.missiles.push(Missile {
                        x: t.x,
                        y: t.y,
                        direction: t.orientation,
                        owner: t.team,
                    });
                    self.tanks[idx].cooldown = COOLDOWN_MAX;
                }
            }
            _ => {
                // a move first rotates, then advances one cell if passable
                let o = action.move_orientation().unwrap();
                self.tanks[idx].orientation = o;
                let (dx, dy) = o.delta();
                let (nx, ny) = (self.tanks[idx].x + dx, self.tanks[idx].y + dy);
                if self.cell_free(nx, ny) {
                    self.tanks[idx].x = nx;
                    self.tanks[idx].y = ny;
                }
            }
        }
    }

    fn cell_free(&self, x: i32, y: i32) -> bool {
        if !in_bounds(&self.scenario, x, y) {
            return false;
        }
        if !self.terrain_at(x as usize, y as usize).passable() {
            return false;
        }
        !self.tanks.iter().any(|t| t.alive && t.x == x && t.y == y)
    }

    fn steel_free_line(&self, x0: i32, y0: i32, x1: i32, y1: i32) -> bool {
        let (dx, dy) = ((x1 - x0).signum(), (y1 - y0).signum());
        let (mut x, mut y) = (x0 + dx, y0 + dy);
        while (x, y) != (x1, y1) {
            if self.terrain_at(x as usize, y as usize) == Terrain::Steel {
                return false;
            }
            x += dx;
            y += dy;
        }
        true
    }

    fn advance_missiles(&mut self, events: &mut TickEvents) {
        let mut removed = vec![false; self.missiles.len()];
        for m_idx in 0..self.missiles.len() {
            if removed[m_idx] {
                continue;
            }
            let (dx, dy) = self.missiles[m_idx].direction.delta();
            let nx = self.missiles[m_idx].x + dx;
            let ny = self.missiles[m_idx].y + dy;
            if !in_bounds(&self.scenario, nx, ny) {
                removed[m_idx] = true;
                continue;
            }
            self.missiles[m_idx].x = nx;
            self.missiles[m_idx].y = ny;
            match self.terrain_at(nx as usize, ny as usize) {
                Terrain::Steel => {
                    removed[m_idx] = true;
                    continue;
                }
                Terrain::Brick => {
                    self.terrain[ny as usize * self.scenario.width + nx as usize] = Terrain::Empty;
                    removed[m_idx] = true;
                    continue;
                }
                Terrain::Base => {
                    self.base_alive = false;
                    removed[m_idx] = true;
                    continue;
                }
                Terrain::Empty | Terrain::Water => {}
            }
            // missiles hit opposing-team tanks only; friendly tanks and
            // other missiles are passed through
            let owner = self.missiles[m_idx].owner;
            let hit = self
                .tanks
                .iter()
                .position(|t| t.alive && t.team != owner && t.x == nx && t.y == ny);
            if let Some(t_idx) = hit {
                let tank = &mut self.tanks[t_idx];
                tank.hp = tank.hp.saturating_sub(1);
                if tank.team == Team::Enemy {
                    events.damage_to_enemies += 1;
                }
                if tank.hp == 0 {
                    tank.alive = false;
                    match tank.team {
                        Team::Ally => self.ally_deaths += 1,
                        Team::Enemy => {
                            self.enemy_deaths += 1;
                            events.enemy_kills += 1;
                        }
                    }
                }
                removed[m_idx] = true;
            }
        }
        let mut keep = removed.iter().map(|r| !r);
        self.missiles.retain(|_| keep.next().unwrap());
    }

    fn process_spawns(&mut self) {
        let tick = self.tick;
        for idx in 0..self.tanks.len() {
            let t = &self.tanks[idx];
            if t.entered || t.entry_tick > tick {
                continue;
            }
            let (x, y) = (t.x, t.y);
            let blocked = self.tanks.iter().any(|o| o.alive && o.x == x && o.y == y);
            if !blocked {
                let t = &mut self.tanks[idx];
                t.entered = true;
                t.alive = true;
            }
            // blocked spawns retry next tick
        }
    }

    fn check_termination(&self) -> Outcome {
        if !self.base_alive {
            return Outcome::LossBase;
        }
        let enemies_cleared = self
            .tanks
            .iter()
            .filter(|t| t.team == Team::Enemy)
            .all(|t| t.entered && !t.alive);
        if enemies_cleared {
            return Outcome::Win;
        }
        if self.alive_allies() == 0 {
            return Outcome::LossWipe;
        }
        if self.tick >= self.scenario.max_steps {
            return Outcome::Timeout;
        }
        Outcome::Ongoing
    }

    /// Full-knowledge state: 8 features per tank (position, orientation
    /// one-hot, cooldown, alive), then the base flag; everything in [0, 1].
    pub fn global_state(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.scenario.state_dim());
        let (wmax, hmax) =
            ((self.scenario.width - 1) as f32, (self.scenario.height - 1) as f32);
        for tank in &self.tanks {
            if tank.alive {
                v.push(tank.x as f32 / wmax);
                v.push(tank.y as f32 / hmax);
                let mut onehot = [0.0f32; 4];
                onehot[tank.orientation.index()] = 1.0;
                v.extend_from_slice(&onehot);
                v.push(tank.cooldown as f32 / COOLDOWN_MAX as f32);
                v.push(1.0);
            } else {
                v.extend_from_slice(&[0.0; 8]);
            }
        }
        v.push(if self.base_alive { 1.0 } else { 0.0 });
        v
    }

    /// Per-agent view: own absolute features, then one 7-feature slot per
    /// other unit, zeroed unless that unit is alive and within sight range.
    /// A dead agent observes all zeros.
    pub fn observations(&self) -> Vec<Vec<f32>> {
        (0..self.n_allies()).map(|a| self.observation_of(a)).collect()
    }

    fn observation_of(&self, agent: usize) -> Vec<f32> {
        let dim = self.scenario.obs_dim();
        let me = &self.tanks[agent];
        if !me.alive {
            return vec![0.0; dim];
        }
        let (wmax, hmax) =
            ((self.scenario.width - 1) as f32, (self.scenario.height - 1) as f32);
        let mut v = Vec::with_capacity(dim);
        v.push(me.x as f32 / wmax);
        v.push(me.y as f32 / hmax);
        let mut onehot = [0.0f32; 4];
        onehot[me.orientation.index()] = 1.0;
        v.extend_from_slice(&onehot);
        v.push(me.cooldown as f32 / COOLDOWN_MAX as f32);
        for (idx, other) in self.tanks.iter().enumerate() {
            if idx == agent {
                continue;
            }
            let visible = other.alive
                && chebyshev(me.x, me.y, other.x, other.y) <= self.scenario.sight_range as i32;
            if visible {
                v.push((other.x - me.x + wmax as i32) as f32 / (2.0 * wmax));
                v.push((other.y - me.y + hmax as i32) as f32 / (2.0 * hmax));
                let mut onehot = [0.0f32; 4];
                onehot[other.orientation.index()] = 1.0;
                v.extend_from_slice(&onehot);
                v.push(other.cooldown as f32 / COOLDOWN_MAX as f32);
            } else {
                v.extend_from_slice(&[0.0; 7]);
            }
        }
        v
    }

    /// FNV-1a digest of the full world state, for determinism checks.
    pub fn state_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for b in self.tick.to_le_bytes() {
            eat(b);
        }
        eat(self.base_alive as u8);
        for t in &self.terrain {
            eat(t.glyph() as u8);
        }
        for t in &self.tanks {
            eat(t.alive as u8);
            eat(t.entered as u8);
            for b in t.x.to_le_bytes() {
                eat(b);
            }
            for b in t.y.to_le_bytes() {
                eat(b);
            }
            eat(t.orientation.index() as u8);
            eat(t.hp as u8);
            eat(t.cooldown as u8);
        }
        for m in &self.missiles {
            for b in m.x.to_le_bytes() {
                eat(b);
            }
            for b in m.y.to_le_bytes() {
                eat(b);
            }
            eat(m.direction.index() as u8);
            eat((m.owner == Team::Ally) as u8);
        }
        h
    }
}

fn in_bounds(scenario: &Scenario, x: i32, y: i32) -> bool {
    x >= 0 && y >= 0 && (x as usize) < scenario.width && (y as usize) < scenario.height
}

fn chebyshev(x0: i32, y0: i32, x1: i32, y1: i32) -> i32 {
    (x0 - x1).abs().max((y0 - y1).abs())
}
