//! The enhancement network with learned microphone requests, its losses,
//! checkpoints and training loop.

mod checkpoint;
mod config;
mod features;
pub mod halting;
mod loss;
mod network;
mod train;

pub use checkpoint::{load_network, save_network};
pub use config::ModelConfig;
pub use features::{validate_mic_order, SceneInput};
pub use halting::{halt_on_scores, HaltState, Halting, Step};
pub use loss::{loss_request, loss_speech, total_loss};
pub use network::{random_mic_order, ForwardResult, Losses, Mode, Network};
pub use train::{
    eval_mic_order, evaluate_scenes, split_train_val, train, write_train_log, EvalRecord, TrainConfig,
    TrainLogRow, TrainOutcome,
};
