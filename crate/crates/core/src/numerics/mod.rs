//! Dense-tensor and reverse-mode autodiff core.
//!
//! Everything trainable in this crate — the diffusion state generator, the
//! attention state extractor, and the agent/mixer/actor/critic networks —
//! is built from the primitives here: value-semantic [`Tensor`]s, a
//! per-forward-pass [`Graph`] tape, named parameters with gradient slots,
//! Adam, a deterministic counter-based [`Rng`], and the flat binary
//! checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod param;
pub mod rng;
pub mod tensor;

pub use graph::{Graph, Var};
pub use optim::AdamState;
pub use param::{ParamId, ParamStore};
pub use rng::Rng;
pub use tensor::Tensor;
