//! Deterministic multi-agent social simulation over the IrollanValley world.

pub mod action_space;
pub mod backend;
pub mod driver;
pub mod field;
pub mod memory;
pub mod world;
pub mod ltrha;
pub mod runtime;
