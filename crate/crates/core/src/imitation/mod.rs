//! Behavioral cloning of a tracking controller.
//!
//! Samples pair the preview error state with the command an expert issued,
//! either the MPC in simulation or a human through the HIL bridge. A small
//! feed-forward network is fit to them and then drives the vehicle on its
//! own.

mod collect;
mod dataset;
mod model_file;
mod network;
mod train;

pub use collect::{collect_dataset, collect_mpc_dataset, perturbed_start, CollectConfig, Perturbation};
pub use dataset::{
    ingest_hil_recording, Dataset, IngestReport, Normalization, Sample, Source, DATASET_HEADER,
};
pub use model_file::{load_model, model_from_str, model_to_string, save_model, MODEL_VERSION};
pub use network::{forward, Activation, Gradients, NetworkParams, INPUTS, OUTPUTS, OUTPUT_ACTIVATION};
pub use train::{to_matrices, train, EpochLoss, Model, TrainConfig, MIN_TRAINING_SAMPLES};
