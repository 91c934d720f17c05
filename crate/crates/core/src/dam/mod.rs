//! The Dense Associative Memory.

mod bank;
mod gradient;
mod interaction;
mod item;
mod network;
mod params;
mod pattern;
mod train;

pub use bank::MemoryBank;
pub use gradient::{batch_loss_and_grad, LossGrad};
pub use interaction::{interaction_and_deriv, Interaction};
pub use item::Item;
pub(crate) use network::{stack_states, FieldKernel};
pub use network::{
    argmax, classify, classify_batch, classify_with_beta, neuron_field, relax, relax_with_beta,
    sign, Relaxation,
};
pub use params::{LossNeurons, NetParams, Similarity, UpdateRule};
pub use pattern::{Layout, Pattern, CLASS_COUNT};
pub use train::{train_task, train_task_observed, EpochLog, StepContext, TrainLog};
