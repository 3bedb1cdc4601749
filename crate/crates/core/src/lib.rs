//! Deciding the order in which new concepts are inserted into an existing
//! taxonomy, and running ordered taxonomy expansion with evaluation.
//!
//! The ordering pipeline:
//!
//! 1. mine hypernym edges among the new concepts from their surface names
//!    ([`pattern`]) and cut any cycles ([`graph`]);
//! 2. train a pair scorer on parent/child pairs sampled from the existing
//!    taxonomy with a contrastive loss ([`scorer`]);
//! 3. score every sufficiently similar pair of new concepts in both
//!    directions, merge the scored edges into the pattern DAG greedily
//!    while keeping it acyclic, and topologically sort ([`sorter`]).
//!
//! [`expansion`] inserts concepts in that order with a pluggable model and
//! [`eval`] scores the outcome. [`pipeline`] wires everything to files.

pub mod embedding;
pub mod eval;
pub mod expansion;
pub mod graph;
pub mod io;
pub mod pattern;
pub mod pipeline;
pub mod scorer;
pub mod seed;
pub mod sorter;

pub use embedding::{EmbeddingStore, PairFeature};
pub use eval::{GroundTruth, MetricsReport, Prf};
pub use expansion::{ExpansionModel, ExpansionTrace, RankedParents};
pub use graph::{Concept, ConceptId, DirectedGraph, GraphError, Taxonomy};
pub use scorer::{ScorerParams, TrainConfig, TrainingInstance};
pub use sorter::ConceptOrder;
