//! File formats, configuration and pipeline driver around [`axitomo_core`]:
//! everything that needs an operating system lives here, the numerics live
//! in the core crate.

pub mod config;
pub mod export;
pub mod formats;
pub mod parallel;
pub mod pipeline;

pub use axitomo_core as core;
