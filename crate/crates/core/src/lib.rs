//! Phase-slope-index connectomes for multichannel EEG.
//!
//! The crate covers the whole path from labelled recordings to network
//! statistics: epoching and detrending ([`signal`], [`io`]), band-wise phase
//! slope index ([`spectral`]), feature tables and cortical partitions
//! ([`features`]), genetic-algorithm feature selection ([`evolve`]) scored by
//! a random-committee classifier ([`committee`]), graph metrics with
//! small-world coefficients ([`graph`]), nonparametric tests ([`stats`]),
//! synthetic ground-truth data ([`synth`]) and the file-based pipeline that
//! ties the stages together ([`pipeline`]).

pub mod committee;
pub mod error;
pub mod evolve;
pub mod features;
pub mod graph;
pub mod io;
pub mod layout;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod stats;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use layout::{ChannelLayout, Region};
pub use signal::{Epoch, MultichannelRecord, PhaseLabel, PhaseSchedule};
