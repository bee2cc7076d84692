//! Curriculum knowledge graphs built from lecture materials.

pub mod error;
pub mod extract;
pub mod ingest;
pub mod metrics;
pub mod ontology;
pub mod project;
pub mod provider;
pub mod registry;
pub mod review;
pub mod similarity;
