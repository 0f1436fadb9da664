//! Position-indexed received-power tensor completion for MIMO beam training.
//!
//! The library covers the full loop: a synthetic geometric multipath scene
//! stands in for field measurements ([`channel`]), beam-training powers are
//! ingested into a discounted-average database keyed by position label and
//! combiner index ([`db`]), the resulting incomplete fourth-order tensor is
//! completed by an ADMM solver that mixes a forward-difference smoothness
//! penalty on the position dimensions with nuclear-norm shrinkage on the
//! beam dimensions under a weighted noise budget ([`solver`]), and the
//! completed tensor drives greedy beam-subset recommendation with baselines
//! and evaluation metrics ([`reco`]).

pub mod channel;
pub mod cmat;
pub mod db;
pub mod error;
pub mod prox;
pub mod reco;
pub mod solver;
pub mod tensor;

pub use error::{CoreError, Result};
pub use tensor::Tensor;
