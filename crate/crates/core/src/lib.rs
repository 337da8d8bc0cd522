//! Online discovery of business process simulation models.
//!
//! A simulation model is the triple of a block-structured control-flow model
//! ([`tree::ProcessTree`]), descriptive parameters ([`descriptive::DescriptiveSet`])
//! and predictive models ([`learn::PredictiveSet`]). The crate keeps such a model
//! up to date from a stream of events, simulates it ([`sim`]) and scores the
//! simulated logs against real ones ([`metrics`]).
//!
//! ```text
//! events > collect_window > assemble_fragments > incremental_update (N)
//!                                              > update_descriptive  (D)
//!                                              > update_predictive   (P)
//! model > simulate > evaluate_pair
//! ```

pub mod descriptive;
pub mod learn;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod stream;
pub mod tree;

mod error;

pub use error::{Error, Result};
