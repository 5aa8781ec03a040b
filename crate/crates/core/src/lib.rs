//! Distributed global-state reconstruction for cooperative multi-agent RL.
//!
//! Agents in a Dec-POMDP train centrally with the true global state but must
//! act from local observations alone. This crate lets each agent rebuild the
//! global state at execution time with a conditional diffusion model (the
//! state generator), distill it into a compact embedding with patch
//! attention (the state extractor), and feed that embedding into recurrent
//! value or policy networks. A from-scratch Multi-Agent Battle City
//! environment, value-decomposition and policy-gradient training loops, and
//! run tooling round out the stack.

pub mod agents;
pub mod diffusion;
pub mod env;
pub mod extractor;
pub mod harness;
pub mod numerics;
