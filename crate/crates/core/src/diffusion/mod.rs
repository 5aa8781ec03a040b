//! Conditional diffusion state generator.
//!
//! The forward process destroys a global state with scheduled Gaussian
//! noise; a conditional 1D U-Net learns to predict that noise from the
//! noised state, the diffusion iteration, and the agent's identity and
//! trajectory window. At evaluation each agent runs the reverse chain from
//! pure noise to rebuild the global state it cannot observe.

pub mod cond;
pub mod generator;
pub mod schedule;
pub mod unet;

pub use cond::{iteration_code, ConditionContext, HISTORY_WINDOW};
pub use generator::{
    sg_loss_with, to_model_space, to_state_space, FitSummary, GeneratorConfig, StateGenerator,
    StatePair,
};
pub use schedule::{denoise_step_from, forward_diffuse, DiffusionSchedule, ScheduleError};
pub use unet::{StateGeneratorNet, UNetConfig};
