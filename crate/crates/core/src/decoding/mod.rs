//! Exact and stochastic decoders.

pub mod beam;
pub mod kbest;
pub mod mst;
pub mod sampling;

pub use beam::beam_decode;
pub use kbest::kbest_mst;
pub use mst::{max_spanning_tree, mst_decode};
pub use sampling::{sample_candidates, Candidate, CandidateGenerator, CandidateSet, Method, SamplingConfig};
