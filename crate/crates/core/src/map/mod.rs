//! Geometry and raster rules that turn a scene plus path into model input.

mod episode;
pub mod geometry;
pub mod raster;

pub use episode::{build_episode, build_episode_with_map, render_panorama, EpisodeOptions, PANORAMA_SIZE};
pub use geometry::{assign_regions, classify_actions, filter_objects_for_floor};
pub use raster::{mask_map, pad_and_resize, pad_and_resize_to, path_pixels, rasterize, Pixel, SemanticMap};

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("resolution must be a positive number of meters per pixel, got {0}")]
    InvalidResolution(f64),
    #[error("scene bounds are degenerate")]
    DegenerateBounds,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path pixel list is empty")]
    EmptyPath,
    #[error("mask radius must be positive, got {0}")]
    InvalidMaskRadius(f64),
    #[error("path pixel ({0}, {1}) lies outside the map")]
    PixelOutOfRange(usize, usize),
    #[error("map is {width}x{height} px, larger than the {limit}x{limit} canvas; use a coarser --resolution")]
    TooLarge { width: usize, height: usize, limit: usize },
    #[error("category `{0}` has no palette color")]
    UnknownCategory(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}
