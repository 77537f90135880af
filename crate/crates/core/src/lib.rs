//! Technical language supervision for vibration-based fault diagnosis.
//!
//! The crate learns a joint 64-dimensional embedding space between
//! maintenance-annotation text and vibration spectra, then answers two kinds
//! of analyst questions against it:
//!
//! - **zero-shot classification**: which of several free-form queries best
//!   describes a spectrum, and
//! - **spectrum retrieval**: which recordings best match a free-form query.
//!
//! The pipeline, module by module:
//!
//! | module        | role                                                          |
//! |---------------|---------------------------------------------------------------|
//! | [`corpus`]    | asset/subasset/recording schema, annotation propagation, I/O  |
//! | [`synthgen`]  | kinematic synthetic corpus with weak-supervision corruption   |
//! | [`text_embed`]| 768-d annotation embeddings (table + trigram-hash fallback)   |
//! | [`nn`]        | projection head, exact backprop, Adam, gradient checker       |
//! | [`contrastive`]| soft-target symmetric contrastive objective and gradients    |
//! | [`trainer`]   | epochs, batching, validation, checkpointing, evaluation       |
//! | [`inference`] | zero-shot scores and top-k retrieval under normalization modes|
//! | [`gateway`]   | `tlsfd` command line and the HTTP JSON service                |
//!
//! Every stochastic step is driven by seeded ChaCha streams so that a
//! (corpus, config, seed) triple reproduces a bitwise-identical checkpoint.

pub mod contrastive;
pub mod corpus;
pub mod error;
pub mod gateway;
pub mod inference;
pub mod nn;
pub mod seed;
pub mod synthgen;
pub mod text_embed;
pub mod trainer;

pub use error::{Error, Result};
