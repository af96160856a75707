//! Part-based vector-quantized motion codec.
//!
//! Each joint group has its own temporal convolution encoder and codebook;
//! a single decoder reconstructs the whole body from the concatenated group
//! codes. The unsplit variant swaps the six encoders for one whole-body
//! encoder at the same latent width.

mod codebook;
mod config;
mod model;
mod train;

pub use codebook::Codebook;
pub use config::{CodecVariant, VqvaeConfig};
pub use model::{quantize_nearest, Codec, LatentSequence};
pub use train::{train_vqvae, train_vqvae_on, VqStepLoss};
