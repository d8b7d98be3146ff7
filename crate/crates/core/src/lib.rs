//! In-context knowledge editing toolkit.

pub mod backends;
pub mod dataset_io;
pub mod demo_builder;
pub mod edit_memory;
pub mod eval;
pub mod exec;
pub mod model;
pub mod refine;
