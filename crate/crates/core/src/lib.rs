//! Detecting and forecasting transitions from casual drug-use forums to
//! recovery forums.
//!
//! The pipeline reads Reddit-style JSON-lines dumps ([`corpus`]), builds user
//! timelines and labelled cohorts, turns each user's posts into lexical and
//! embedding features ([`lexicon`], [`features`]), and fits either a random
//! forest classifier ([`classifier`]) or a Cox proportional-hazards model
//! ([`survival`]).

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod features;
pub mod lexicon;
pub mod pipeline;
pub mod survival;
pub mod synth;

pub use error::{Error, Result};
