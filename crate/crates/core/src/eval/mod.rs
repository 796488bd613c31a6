//! Intelligibility scoring, communication-cost accounting and the two
//! experiment harnesses (cost/quality trade-off and SNR sweep).

mod cost;
mod experiment;
mod resample;
mod stoi;

pub use cost::comm_cost_seconds;
pub use experiment::{
    bin_of, bin_scores, match_k, reference_stoi, run_snr_sweep, run_tradeoff_experiment, score_scene, score_scenes, snr_bins,
    summarize, try_score_scenes, SceneScore, SnrRow, TradeoffRow,
};
pub use resample::resample_16k_to_10k;
pub use stoi::{stoi, stoi_with, StoiConfig};
