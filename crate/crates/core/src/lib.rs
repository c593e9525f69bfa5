//! Synthetic trajectory and semantic map generation for multimodal vehicle
//! trajectory prediction.
//!
//! The pipeline estimates a Markov chain over quantized polar motion
//! offsets from recorded trajectories, grows road networks around chain
//! walks, and cuts multimodal samples (one past, several futures, one
//! heading-up context map) out of the resulting scenes. Classical
//! baselines, ADE/FDE evaluation and the greedy multi-future assignment
//! loss live alongside, together with binary dataset formats and a TCP
//! sample server.

pub mod baselines;
pub mod chain;
mod codec;
pub mod dataset_io;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod mapgen;
pub mod matching;
pub mod render;
pub mod rng;
pub mod samples;
pub mod server;
pub mod toy_logs;

pub use chain::{estimate, fit_clusters, sample_trajectory, ChainConfig, ChainState, ChainWalker, ClusterModel, MarkovChain};
pub use error::{Error, Result};
pub use geometry::{from_offsets, normalize_heading_up, to_offsets, PolarOffset, Pose, Trajectory, Vec2};
pub use mapgen::{MapGenConfig, Scene, SemanticMap};
pub use samples::{generate_sample, MultimodalSample, SampleConfig};
