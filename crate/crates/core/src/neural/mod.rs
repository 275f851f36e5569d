//! Small dense-network toolkit: MLPs, reconstruction and contrastive losses,
//! Adam, autoencoder training and finite-difference gradient checks.

pub mod checkpoint;
mod gradcheck;
mod loss;
mod mlp;
mod optim;
mod train;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use loss::{
    contrastive_pair_grad, contrastive_pair_loss, modality_weights, mse_batch, mse_loss,
    weighted_pair_loss,
};
pub use mlp::{forward_view, Activation, ForwardCache, Layer, Mlp, MlpGrads};
pub use optim::{Adam, AdamConfig};
pub use train::{train_autoencoder, Autoencoder, EpochRecord, TrainConfig, TrainHistory};

pub(crate) use train::{check_finite, split_indices, EarlyStopping, StopSignal};
