//! Federated learning engine: data, model, local training, aggregation and
//! channel impairment.

pub mod channel;
pub mod data;
pub mod model;
pub mod train;

pub use channel::{corrupt_model, corrupt_values, Corruption};
pub use data::{load_mnist, mnist_paths, read_idx_images, read_idx_labels, Dataset, MnistSplit, SyntheticSpec};
pub use model::{MlpArch, ModelParams};
pub use train::{
    aggregate, aggregate_with, evaluate, local_loss, partition_data, sample_shard, sgd_epoch,
    train_epochs, train_local, ClientState, TrainConfig, Weighting,
};
