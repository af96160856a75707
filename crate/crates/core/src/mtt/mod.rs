//! Masked trajectory transformer: predicts codec indices from a prompt and a
//! partially specified set of key-joint trajectories.

mod config;
mod masking;
mod model;
mod sample;
mod train;

pub use config::MttConfig;
pub use masking::{continuous_trajectory_mask, joint_level_mask, mask_rng, masked_count};
pub use model::{trajectory_tokens, CodeLogits, Mtt, WAYPOINT_FEATURES};
pub use sample::{gumbel_noise, gumbel_st_latent, sample_codes, select_codes, SampledCodes};
pub use train::{prepare_examples, train_mtt, train_mtt_on, MaskStrategy, MttExample, MttStepLoss};
