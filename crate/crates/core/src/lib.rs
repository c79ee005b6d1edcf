//! Polarity-aware knowledge graph embeddings.
//!
//! The pipeline turns an ontology plus positive and negative annotations
//! into per-entity vectors:
//!
//! 1. [`ingest`] parses the inputs into a [`kg::KnowledgeGraph`];
//! 2. [`walk`] samples positive-rooted and negative-rooted walks, following
//!    subclass edges upwards for positive walks and downwards for negative
//!    ones;
//! 3. [`embed`] trains a skip-gram (optionally order-aware) model per walk
//!    polarity;
//! 4. [`fuse`] concatenates the two vectors of each entity.
//!
//! [`eval`] scores the result on pair prediction, [`synth`] generates test
//! graphs with a planted signal and [`pipeline`] ties the stages together.

pub mod embed;
pub mod eval;
pub mod fixtures;
pub mod fuse;
pub mod ingest;
pub mod kg;
pub mod par;
pub mod pipeline;
pub mod synth;
pub mod walk;

pub use kg::{KnowledgeGraph, NodeId, Polarity, Term};
pub use walk::{Walk, WalkConfig, WalkCorpus, WalkStrategy};
