//! Platform-independent core of the labtwin digital-twin toolkit: point
//! thinning, the level-of-detail octree, scene model and interaction engine.
//!
//! `no_std` with `alloc`; file formats, IO and the server live in `labtwin`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod camera;
pub mod geom;
pub mod grid;
mod math;
pub mod octree;
pub mod point;
pub mod scene;
pub mod sim;
pub mod subsample;

pub use math::{normalize_deg, wrap_signed_deg};
