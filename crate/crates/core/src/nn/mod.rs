//! A small trainable encoder: dense layers with ReLU, reverse-mode
//! gradients recorded on a tape, optimizers and checkpoints.

pub mod checkpoint;
pub mod net;
pub mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use net::{Activation, DenseNet, Forward, Gradients, Layer, LayerGrad, Tape};
pub use optim::{lars_local_lr, lars_update, lr_schedule, sgd_update, OptimizerKind, OptimizerState};
