//! Texture-based annotation on per-segment canvases: superpixels, click
//! expansion, GrabCut refinement and 2D template matching.

mod canvas;
mod expand;
mod grabcut;
mod regions;
mod slic;

use crate::color::GmmError;
use crate::energy::EnergyError;

pub use canvas::{build_canvas, CanvasBlock, TextureCanvas};
pub use expand::{expansion_problem, local_expand, ExpandParams};
pub use grabcut::{fine_segment, GrabCutParams};
pub use regions::{
    match_regions, ncc_match, region_feature_vector, MatchRegionParams, NccMatch, Region, RegionFeatureVector,
    RegionMatch,
};
pub use slic::{compute_superpixels, Superpixel, SuperpixelParams, Superpixels};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TextureError {
    #[error("segment has no textured faces")]
    Untextured,
    #[error("canvas has no covered texels")]
    EmptyCanvas,
    #[error("region size must be at least 4 texels")]
    RegionSize,
    #[error("texel ({0}, {1}) is not covered")]
    Uncovered(u32, u32),
    #[error("empty region")]
    EmptyRegion,
    #[error("template is larger than the canvas")]
    TemplateTooLarge,
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
}
