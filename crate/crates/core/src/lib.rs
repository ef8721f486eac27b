//! Closed-loop simulation of socially networked users, adaptive content
//! creators and a configurable recommender system.
//!
//! Users follow a multi-topic Friedkin-Johnsen update driven by their social
//! neighbourhood, their own prejudice and the creator whose content they
//! consumed. Creators drift towards their audience. The recommender picks a
//! reference point per user (the user itself, or the mean of its d-hop
//! influencers), offers the `k` nearest creators and the user samples one of
//! them with a softmax over distances.
//!
//! Besides the engine the crate ships the satisfaction and silhouette
//! clusterization metrics, synthetic and edge-list population builders, and
//! independent numerical oracles for the fixed-point and contraction results
//! the dynamics are expected to satisfy.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod opinion;
pub mod recommender;
pub mod seed;
pub mod simulation;
pub mod synthgen;
pub mod theory;

pub use error::{Error, Result};
pub use opinion::Opinions;
