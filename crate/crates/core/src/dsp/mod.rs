//! Signal-processing primitives shared by the simulator, the network and
//! the evaluator.

mod mix;
mod stft;
pub mod wav;
mod window;

pub use mix::{mean_power, rescale_to_snr, snr_db};
pub use stft::{istft, stft, Spectrogram, Stft, StftConfig, WindowKind};
pub use window::hann_window;

/// Sample rate of every scene, in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
