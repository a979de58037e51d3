//! Drift-diffusion routing over translation candidates.
//!
//! The crate is organised around one episode per source sentence:
//!
//! - [`engine`]: evidence accumulation, collapsing boundaries and the
//!   terminal selection rule, plus the `select_all` and `max_routing`
//!   baselines and trace replay.
//! - [`providers`]: generator/scorer traits with offline, synthetic and
//!   HTTP implementations.
//! - [`prompts`]: the strategy and translation prompt templates.
//! - [`ddm`]: a continuous drift-diffusion simulator used as a reference
//!   for the discrete engine.
//! - [`harness`]: paired Monte Carlo comparison of the routing methods and
//!   decay sweeps.
//! - [`config`]: the versioned JSON configuration document.

pub mod config;
pub mod ddm;
pub mod engine;
pub mod harness;
pub mod prompts;
pub mod providers;
pub mod seed;

pub use engine::{
    argmax, decay_boundaries, diffusion, init_drift, max_routing, replay, shuffle_prompts, BoundaryPair, Candidate,
    Decision, EngineError, EvidenceState, Replay, RoutingConfig, Router, StepKind, TerminalCase, TraceStep,
};
pub use prompts::{PromptError, PromptLibrary, PromptTemplate, Theory};
pub use providers::{Generator, ProviderError, ProviderSet, Scorer, SourceItem};
