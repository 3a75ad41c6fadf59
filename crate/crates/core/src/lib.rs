//! Requirements elicitation from moderated discussion threads.
//!
//! The pipeline runs ingest → extract → cluster → prioritize → analytics;
//! [`project`] ties the stages to a persistent, audited project file and
//! [`store`] persists it atomically.

pub mod analytics;
pub mod cluster;
pub mod config;
pub mod error;
pub mod extract;
pub mod ingest;
pub mod prioritize;
pub mod project;
pub mod store;
pub mod text;
