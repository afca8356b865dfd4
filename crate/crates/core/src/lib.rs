//! Event-driven simulation and certification for distributed gradient
//! descent with sample-and-hold communication.
//!
//! A team of agents jointly minimizes a smooth objective. Each agent owns one
//! block of the decision vector and descends it in continuous time along a
//! gradient frozen at the last communication event; a shared countdown timer
//! triggers the events, at which every agent broadcasts its block and the
//! timer resets into a configured interval. Flows are linear in time, so the
//! simulator advances them in closed form with no integration error.
//!
//! The analysis layer measures the distance of recorded trajectories to the
//! set of minimizer states, evaluates the certified energy function, and
//! checks both against exponential decay envelopes derived from the
//! smoothness and gradient-dominance constants, including under perturbed
//! timer dynamics (clock skew, reset-bound offsets).

pub mod analysis;
pub mod config;
pub mod experiments;
pub mod hybrid;
pub mod objectives;
pub mod report;
pub mod simulate;
pub mod trajectory;

pub use hybrid::{
    flow_advance, jump, validate_hybrid_domain, BlockPartition, EtaState, HybridTime, ResetRule,
    SystemState, TimerPolicy,
};
pub use objectives::{Objective, ProblemInstance};
pub use simulate::{derive_seed, run_batch, simulate, simulate_perturbed, SimConfig, SimJob};
pub use trajectory::HybridTrajectory;
