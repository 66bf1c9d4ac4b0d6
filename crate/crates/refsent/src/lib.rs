//! Reference-point-augmented sentiment analysis harness.
//!
//! The crate curates review corpora with user/business context, renders
//! natural-language and JSON-structured prompt variants, drives pluggable
//! single-token completion backends, and evaluates the resulting star
//! predictions (variant comparison, expectation-gap analysis, and a
//! reference-alignment error matrix with adaptive routing).

pub mod analysis;
pub mod corpus;
pub mod harness;
pub mod inference;
pub mod metrics;
pub mod promptgen;
