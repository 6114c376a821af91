//! Macro-conditioned market generator: autoencoder, latent forecaster, noise-driven latent
//! generator and discriminator, trained in three phases.

mod checkpoint;
mod losses;
mod model;
mod sample;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, GenManifest, MANIFEST_FILE, PARAMS_FILE};
pub use losses::{
    adversarial_losses, divergence_loss, forecast_loss, histogram_centres, masked_column_stats, mode_seeking_loss, moment_losses,
    reconstruction_loss, MODE_DELTA, STD_DELTA,
};
pub use model::{standardized_macro_row, standardized_row, stack, Conditioning, GenDims, GenModel, Phase, WindowBatch};
pub use sample::synthesize_range;
pub use train::{
    generator_objective, train_generator, GenLossWeights, GenTrainConfig, GenTrainLog, PhaseSet, COLLAPSE_LOSS, COLLAPSE_WINDOW,
};
