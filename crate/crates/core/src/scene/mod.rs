//! Multi-microphone acoustic scene simulation: image-source rooms, moving
//! sources, random microphone placement and SNR-controlled mixing.

pub mod dataset;
mod generate;
mod render;
mod room;
pub mod synth;

pub use generate::{
    derive_seed, generate_indexed, generate_many, generate_scene, generate_scene_with, Scene,
    SceneConfig, SceneOverrides, SourceMaterial,
};
pub use render::{
    block_weights, fft_convolve, render_moving_multi, render_moving_source, render_static,
    RenderConfig, SourceKind, SourceTrajectory,
};
pub use room::{distance, image_sources, simulate_rir, ImageSource, Point, Rir, Room, SINC_TAPS, SPEED_OF_SOUND};
pub use dataset::{load_source_dir, read_dataset, read_manifest, read_scene, write_dataset, DatasetManifest, SceneEntry};
pub use synth::synth_source;
