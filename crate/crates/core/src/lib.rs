//! Interactive part-level semantic annotation of textured urban meshes.
//!
//! The crate is organised bottom-up: [`mesh`] holds the data model and file
//! formats, [`geometry`], [`energy`] and [`color`] are pure kernels, and
//! [`segmentation`], [`face`], [`texture`], [`sampling`] and [`metrics`]
//! build the annotation workflows on top of them. [`session`] ties the
//! workflows into an undoable editing state, and [`fixture`] generates the
//! synthetic scenes used by the test-suites and the CLI.

pub mod color;
pub mod energy;
pub mod face;
pub mod fixture;
pub mod geometry;
pub mod mesh;
pub mod metrics;
pub mod sampling;
pub mod segmentation;
pub mod session;
pub mod texture;

pub use mesh::{
    ClassId, FaceLabelMap, LabelTaxonomy, MeshError, PixelLabelMask, TexturedMesh, UNCLASSIFIED,
};
pub use segmentation::{PlanarSegment, SegmentParams};

/// 3D vector / point type used throughout the crate (metres).
pub type Vec3 = nalgebra::Vector3<f64>;
