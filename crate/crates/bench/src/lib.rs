//! Shared fixtures for the benchmarks.

use fello_core::fl::{Dataset, MlpArch, ModelParams, SyntheticSpec};
use fello_core::lesc::Environment;
use fello_core::rng::{substream, Stream};
use fello_core::WalkerConfig;

/// Reference constellation with default link budgets.
pub fn reference_environment() -> Environment {
    Environment {
        walker: WalkerConfig::default(),
        isl: Default::default(),
        gsl: Default::default(),
        seed: 1,
    }
}

/// MNIST-sized blobs: one client shard worth of samples.
pub fn client_shard(samples: usize) -> Dataset {
    SyntheticSpec {
        n_features: 784,
        samples_per_class: samples.div_ceil(10),
        ..SyntheticSpec::default()
    }
    .train()
    .head(samples)
}

pub fn mnist_model() -> ModelParams {
    ModelParams::init(MlpArch::new(784, 64, 10), &mut substream(1, Stream::Init, &[]))
}
