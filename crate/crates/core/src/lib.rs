//! Dataflow matrix machines: generalized recurrent networks over typed
//! linear streams, whose weights and topology live in one sparse matrix
//! that the running machine can rewrite.
//!
//! - [`names`] and [`signature`]: port addressing, stream kinds, neuron types.
//! - [`streams`]: per-kind values and linear combination.
//! - [`matrix`]: the sparse network matrix and the masked update kernel.
//! - [`neurons`]: transforms and the built-in neuron types.
//! - [`engine`]: the two-stroke machine.
//! - [`lang`]: the description language and its interpreter.
//! - [`trace`]: per-tick records for replay and comparison.

pub mod engine;
pub mod lang;
pub mod matrix;
pub mod names;
pub mod neurons;
pub mod rng;
pub mod signature;
pub mod streams;
pub mod trace;

pub use engine::{Edit, EngineError, Machine};
pub use matrix::{NetMatrix, RowSource, UpdateSpec};
pub use names::{CellId, Direction, Name, PortName};
pub use signature::{KindShape, Signature, StreamKindDecl};
pub use streams::{MaskTail, MaskVector, StreamValue};
