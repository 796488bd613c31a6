use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{ensure, Result};

/// Architecture and loss hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder convolution layers (E).
    pub encoder_layers: usize,
    /// Decoder convolution layers (D), the last one producing both masks.
    pub decoder_layers: usize,
    /// Channels of every hidden convolution.
    pub filters: usize,
    pub kernel: usize,
    /// Width of the per-microphone feature vector.
    pub d: usize,
    pub heads: usize,
    /// Feed-forward width as a multiple of `d`.
    pub ffn_mult: usize,
    /// Halting threshold: streaming stops once the accumulated score
    /// reaches `1 - eps`.
    pub eps: f64,
    /// Magnitude compression exponent of the speech loss.
    pub alpha: f64,
    /// Request penalty.
    pub lambda: f64,
    /// STFT frames per decision chunk.
    pub chunk_frames: usize,
    pub stft: StftConfig,
    pub dropout: f64,
    /// Initial bias of the score head's output unit.
    pub score_bias_init: f64,
    /// Exponent applied to encoder input magnitudes; 1 feeds raw `|X|`.
    pub input_power: f64,
    /// When set, the request loop is replaced by a fixed aggregation of
    /// the first `k` microphones with uniform weights.
    pub fixed_k: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_layers: 2,
            decoder_layers: 4,
            filters: 257,
            kernel: 5,
            d: 256,
            heads: 4,
            ffn_mult: 4,
            eps: 1e-4,
            alpha: 0.3,
            lambda: 0.0,
            chunk_frames: 8,
            stft: StftConfig::default(),
            dropout: 0.1,
            score_bias_init: -2.0,
            input_power: 1.0,
            fixed_k: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.eps > 0.0 && self.eps < 1.0, "eps must lie in (0, 1), got {}", self.eps);
        ensure!(self.alpha > 0.0 && self.alpha <= 1.0, "alpha must lie in (0, 1], got {}", self.alpha);
        ensure!(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be >= 0, got {}", self.lambda);
        ensure!(self.chunk_frames >= 1, "chunk_frames must be at least 1");
        ensure!(self.encoder_layers >= 1, "encoder needs at least one layer");
        ensure!(self.decoder_layers >= 1, "decoder needs at least one layer");
        ensure!(self.kernel % 2 == 1, "kernel size must be odd, got {}", self.kernel);
        ensure!(self.filters >= 1 && self.d >= 1 && self.ffn_mult >= 1, "layer widths must be positive");
        ensure!(
            self.heads >= 1 && self.d % self.heads == 0,
            "d = {} is not divisible by {} heads",
            self.d,
            self.heads
        );
        ensure!((0.0..1.0).contains(&self.dropout), "dropout must lie in [0, 1)");
        ensure!(self.input_power > 0.0, "input_power must be positive");
        if let Some(k) = self.fixed_k {
            ensure!(k >= 1, "fixed_k must be at least 1");
        }
        self.stft.validate()
    }

    pub fn bins(&self) -> usize {
        self.stft.bins()
    }

    /// Frames of context needed on each side of a chunk by the encoder.
    pub fn context_frames(&self) -> usize {
        self.encoder_layers * (self.kernel - 1) / 2
    }

    /// Samples between consecutive chunk starts.
    pub fn chunk_hop(&self) -> usize {
        self.chunk_frames * self.stft.hop
    }

    /// Samples of audio a chunk's frames span, before encoder context.
    pub fn chunk_span(&self) -> usize {
        (self.chunk_frames - 1) * self.stft.hop + self.stft.win_len
    }

    pub fn chunks_for(&self, len: usize) -> usize {
        self.stft.frames_for(len).div_ceil(self.chunk_frames)
    }

    pub fn d_ff(&self) -> usize {
        self.ffn_mult * self.d
    }
}
