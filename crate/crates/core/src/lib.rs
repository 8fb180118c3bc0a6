//! Estimation of an adversary's beliefs in discrete counter-adversarial
//! systems.
//!
//! The adversary observes our Markov chain through a noisy sensor, runs an
//! HMM filter and acts on its belief. Knowing our own states and the actions
//! it takes, this crate computes
//!
//! - the inverse filter `p(π_k | a_{1:k}, x_{0:k})` ([`filter::forward_pass`]),
//! - the fixed-interval smoother `p(π_k | a_{1:N}, x_{0:N})`
//!   ([`smoother::backward_pass`] + [`smoother::smooth`]),
//!
//! both over the finite sets of reachable beliefs ([`graph`]). A brute-force
//! [`oracle`] enumerates observation sequences for cross-checking, and
//! [`experiments`] hosts the Monte Carlo harness and data exports.
//!
//! ```
//! use caa_core::prelude::*;
//!
//! let model = reference_model();
//! let traj = simulate_episode(&model, 6, &mut RngStream::new(42, 0)).unwrap();
//! let graph = expand_belief_graph(&model, 6, DEFAULT_DEDUP_TOL).unwrap();
//! let (alphas, gammas) = smooth_trajectory(&model, &graph, &traj.states, &traj.actions).unwrap();
//! assert_eq!(alphas.len(), 7);
//! assert!((gammas[3].total() - 1.0).abs() < 1e-10);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN takes the error branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod sim;
pub mod smoother;

pub use error::{CaaError, Result};

pub mod prelude {
    pub use crate::error::{CaaError, Result};
    pub use crate::experiments::{
        export_simplex_pmf, infer, monte_carlo_errors, oracle_check, ErrorCurve, PosteriorMode,
        PosteriorReport, SimplexPmfExport,
    };
    pub use crate::filter::{forward_pass, posterior_mean, PosteriorPmf};
    pub use crate::graph::{expand_belief_graph, BeliefGraph, DEFAULT_DEDUP_TOL};
    pub use crate::model::{
        load_model, reference_model, parse_model, validate_model, Belief, CaaModel, StochasticMatrix,
    };
    pub use crate::oracle::{enumerate_posterior, OracleMode, DEFAULT_ENUMERATION_CAP};
    pub use crate::policy::{compose_policy, policy_pmf, Policy};
    pub use crate::sim::{hmm_filter_update, simulate_episode, RngStream, Trajectory};
    pub use crate::smoother::{backward_pass, smooth, smooth_trajectory, smoothed_means, BackwardValues};
}
