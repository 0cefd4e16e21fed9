//! Quality evaluation for generated NLP test cases.
//!
//! Given `<original text, generated test case>` pairs, this crate scores
//! semantic consistency ([`semeval`]) and language naturalness ([`syneval`]),
//! grades those scores against human judgments ([`metrics`]), and filters or
//! ranks whole corpora ([`corpus`]). Models are reached only through the
//! provider traits in [`backends`].

pub mod align;
pub mod backends;
pub mod config;
pub mod corpus;
pub mod exec;
pub mod metrics;
pub mod semeval;
pub mod syneval;
pub mod text;

pub use config::RunConfig;
pub use exec::Execution;
pub use text::{tokenize, TextPair, Token, TokenSequence};
