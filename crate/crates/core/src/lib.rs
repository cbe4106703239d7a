//! Patch-based segmentation of 3D human meshes.
//!
//! The pipeline extracts a geodesic disk around every vertex, flattens it to
//! a canonical 2D chart, rasterizes per-vertex descriptors onto a regular
//! grid and classifies the grid with a small convolutional network.

pub mod classifier;
pub mod commands;
pub mod config;
pub mod descriptors;
pub mod evaluation;
pub mod features;
pub mod geodesics;
pub mod linalg;
pub mod mesh;
pub mod param;
pub mod rasterize;
pub mod synthetic;

pub use mesh::{SubMesh, TriMesh, Vec2, Vec3};
