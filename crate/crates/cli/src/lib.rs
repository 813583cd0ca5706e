//! Batch runner, frame renderer and HTTP session service around `alr_core`.

pub mod experiment;
pub mod render;
pub mod server;
pub mod summary;
