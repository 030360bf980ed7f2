//! Context-aware rescoring of detector output.
//!
//! A small transformer encoder reads all regions of a scene at once — pooled
//! backbone features concatenated with normalized box geometry — and classifies
//! each region with the rest of the scene in view. Rescoring replaces each
//! detection's label and confidence and drops regions the encoder assigns to
//! background, which is what lets it undo context-driven mistakes a
//! crop-at-a-time detector is locked into.

mod backward;
mod config;
mod forward;
mod rescore;
mod train;
mod weights;

pub use config::{EncoderConfig, RegionToken, TOKEN_DIM};
pub use forward::{
    attention_maps, classify, encoder_forward, positional_encoding, self_attention, LN_EPS,
};
pub use rescore::rescore;
pub use train::{build_tokens, train_tedm, TedmTrainOptions};
pub use weights::{EncoderLayerWeights, TedmWeights};
