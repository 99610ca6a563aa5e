//! Candidate-constrained CRF inference and loss-aware candidate selection.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: factor graphs, Gibbs scoring, synthetic grids
//! - [`infer`]: belief propagation, Bethe `log Z`, enumeration oracles, MAP
//! - [`hamming`]: Hamming-ball constraints via cardinality trees, masses and
//!   constrained marginals
//! - [`candidates`]: diverse M-best candidate generation
//! - [`loss`]: Hamming and IOU losses and their marginal-based approximations
//! - [`predict`]: Delta, Mass, CRF+FELA and C3RF+FELA predictors
//! - [`tune`]: cross-validated parameter search
//! - [`cli`]: command-line front end and experiment drivers

pub mod candidates;
pub mod cli;
pub mod error;
pub mod graph;
pub mod hamming;
pub mod infer;
pub mod io;
pub mod loss;
pub mod math;
pub mod predict;
pub mod tune;

pub use error::{Error, Result};
pub use graph::{Configuration, FactorGraph, GibbsModel};
