//! Multi-Agent Battle City: grid combat with destructible terrain, a base
//! to defend, scripted enemies, and partial per-agent observations.

pub mod replay;
pub mod scenario;
pub mod world;

pub use replay::{parse_replay, render_frame, ReplayError, ReplayHeader, ReplayRecorder, ReplayTick};
pub use scenario::{Orientation, RewardMode, Scenario, ScenarioError, Terrain};
pub use world::{
    shaped_reward, Action, EnvError, MabcEnv, Missile, Outcome, StepOutput, Tank, Team,
    TickEvents, COOLDOWN_MAX, ENEMY_AGGRO_RADIUS, MISSILE_SPEED, N_ACTIONS, TANK_HP,
};
