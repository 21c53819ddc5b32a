//! Learning multi-hop reasoning paths in knowledge graphs.
//!
//! The crate implements a complete pipeline: load a triple store ([`kg`]),
//! train translation embeddings over it ([`embed`]), walk the graph as a
//! Markov decision process ([`env`]) under a small softmax policy network
//! ([`policy`]), warm-start that policy from breadth-first teacher paths
//! ([`supervised`]), refine it with reward-weighted policy gradients while
//! harvesting the relation sequences of successful walks ([`retrain`]),
//! turn the harvested sequences into binary path features plus a linear
//! re-ranker ([`reason`]), and score the result ([`eval`]). The [`synth`]
//! module generates small graphs with planted rules so the whole chain can
//! be exercised end to end in tests.
//!
//! Every randomized routine takes an explicit seed and draws from
//! counter-based ChaCha streams, so a fixed seed reproduces runs exactly,
//! including across processes.

mod binio;
pub mod embed;
pub mod env;
pub mod error;
pub mod eval;
pub mod kg;
pub mod policy;
pub mod reason;
pub mod retrain;
pub mod rng;
pub mod supervised;
pub mod synth;

pub use error::{Error, Result};
