//! Brute-force ground truth for the filter and the smoother.
//!
//! Given `x_{0:N}`, the joint law of observations and actions factorizes as
//! `Π_j B[x_j, y_j] · G[π_j, a_j]` with `π_j` the adversary's filter chained
//! from `π_0`. Summing that weight over every observation sequence and
//! binning it by `π_k` yields the exact posterior of `π_k`, independently of
//! the forward/backward recursions.

use crate::error::{CaaError, Result};
use crate::filter::PosteriorPmf;
use crate::graph::BeliefGraph;
use crate::model::CaaModel;
use crate::sim::hmm_filter_update;

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Condition on `a_{1:k}, x_{0:k}`.
    Filter,
    /// Condition on the whole record `a_{1:N}, x_{0:N}`.
    Smoother,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Exact posterior of `π_k` over the nodes of `graph`'s layer `k`.
///
/// `states` holds `x_0..x_N` and `actions` holds `a_1..a_N`. In filter mode
/// only the first `k` steps are enumerated.
pub fn enumerate_posterior(
    model: &CaaModel,
    graph: &BeliefGraph,
    states: &[usize],
    actions: &[usize],
    k: usize,
    mode: OracleMode,
    cap: u64,
) -> Result<PosteriorPmf> {
    crate::filter::check_inputs(model, graph, states, actions)?;
    let n = actions.len();
    if k > n {
        return Err(CaaError::InvalidInput(format!("query time {k} exceeds horizon {n}")));
    }
    let depth = match mode {
        OracleMode::Filter => k,
        OracleMode::Smoother => n,
    };
    let y = model.num_observations();
    let sequences = (y as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    if sequences > cap as u128 {
        return Err(CaaError::EnumerationTooLarge { sequences, cap });
    }

    let mut acc = vec![CompensatedSum::default(); graph.layer(k).len()];
    let mut digits = vec![0usize; depth];
    for code in 0..sequences as u64 {
        let mut rest = code;
        for d in digits.iter_mut() {
            *d = (rest % y as u64) as usize;
            rest /= y as u64;
        }
        if let Some((weight, node)) = sequence_weight(model, graph, states, actions, &digits, k)? {
            acc[node].add(weight);
        }
    }

    let mut total = CompensatedSum::default();
    acc.iter().for_each(|a| total.add(a.value()));
    let total = total.value();
    if !(total > 0.0) {
        return Err(CaaError::InconsistentEvidence { step: k });
    }
    Ok(PosteriorPmf {
        layer: k,
        mass: acc.iter().map(|a| a.value() / total).collect(),
    })
}

/// Weight of one observation sequence and the layer-`k` node its chained
/// belief lands on. `None` if the weight is zero.
fn sequence_weight(
    model: &CaaModel,
    graph: &BeliefGraph,
    states: &[usize],
    actions: &[usize],
    observations: &[usize],
    k: usize,
) -> Result<Option<(f64, usize)>> {
    let mut belief = model.initial_belief.clone();
    let mut weight = 1.0;
    let mut node = if k == 0 { Some(0) } else { None };
    for (j, &yj) in observations.iter().enumerate() {
        let step = j + 1;
        weight *= model.observation.get(states[step], yj);
        if weight == 0.0 {
            return Ok(None);
        }
        belief = match hmm_filter_update(&model.transition, &model.observation, &belief, yj) {
            Ok(b) => b,
            // x_{0:N} itself has zero probability along this branch
            Err(CaaError::ImpossibleObservation { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        weight *= model.policy.probability(belief.as_slice(), actions[j]);
        if weight == 0.0 {
            return Ok(None);
        }
        if step == k {
            node = Some(graph.locate(k, &belief).ok_or_else(|| {
                CaaError::Internal(format!(
                    "chained belief {:?} at k = {k} is not a node of the belief graph",
                    belief.as_slice()
                ))
            })?);
        }
    }
    Ok(node.map(|id| (weight, id)))
}
