//! Channel models.
//!
//! The abstract link seen by a codebook is `B` parallel binary symmetric
//! channels ([`bsc`]). The physical link is Gray-mapped square QAM over a
//! block-fading channel ([`modem`], [`fading`]), tied to the abstract one
//! through the erfc-based BER approximation and its inverse ([`ber`]).
//! [`gumbel`] provides the differentiable relaxation of BSC sampling.

pub mod ber;
pub mod bsc;
pub mod fading;
pub mod gumbel;
pub mod modem;

pub use ber::{ber_approx, ber_ceiling, ber_inverse, ModOrder};
pub use bsc::{bsc_sample, bsc_transition_prob, flip_pattern_probs};
pub use fading::{draw_channel, draw_channel_with, ChannelModel, ChannelState};
pub use gumbel::{gumbel_soft_reconstruct, GumbelConfig};
pub use modem::{qam_detect, qam_modulate, Modem};
