//! Unsupervised sparse representations learned by a winner-take-all layer
//! of spiking neurons with a spike-timing plasticity rule.
//!
//! Image patches are rate coded into spike trains, a softmax competition
//! decides which output neurons fire at each millisecond, and every output
//! spike moves the firing neuron's weights towards the inputs that just
//! spiked. Responses decode back to pixels through the weights, which lets
//! the representation be scored by reconstruction quality.

pub mod baseline;
pub mod data;
pub mod encoding;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod plasticity;
pub mod reconstruction;

pub use encoding::{encode_patch, EncoderConfig, Provenance, SpikeTrain, StimulusPatch};
pub use error::{Error, Result};
pub use network::{PresentationResponse, RepresentationNetwork, WeightRule};
pub use plasticity::LearningParams;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/plasticity.md")]
    mod plasticity {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/baseline.md")]
    mod baseline {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
