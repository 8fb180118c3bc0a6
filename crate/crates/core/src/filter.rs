//! Optimal inverse filter: the posterior `α_k` over the adversary's current
//! belief given our states `x_{0:k}` and its observed actions `a_{1:k}`.
//!
//! On the finite belief sets the recursion reads
//!
//! ```text
//! α_k(π) ∝ G_{π,a_k} Σ_{π̄ ∈ Π_{k-1}} Σ_{y : T(π̄,y) = π} B_{x_k,y} α_{k-1}(π̄)
//! ```
//!
//! starting from a point mass on `π_0`.

use crate::error::{CaaError, Result};
use crate::graph::BeliefGraph;
use crate::model::{Belief, CaaModel};

/// Normalized mass over the nodes of layer `layer`, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPmf {
    pub layer: usize,
    pub mass: Vec<f64>,
}

impl PosteriorPmf {
    pub fn point_mass(layer: usize, size: usize, id: usize) -> Self {
        let mut mass = vec![0.0; size];
        mass[id] = 1.0;
        Self { layer, mass }
    }

    /// Node ids with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn total_variation(&self, other: &PosteriorPmf) -> f64 {
        0.5 * self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Below this total, a layer is scaled up by powers of two before dividing.
pub(crate) const RESCALE_FLOOR: f64 = 1e-300;

/// Normalizes `values` to sum to one. Returns `false` if the total is zero.
pub(crate) fn normalize(values: &mut [f64]) -> bool {
    let mut total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return false;
    }
    while total < RESCALE_FLOOR {
        let factor = 2f64.powi(512);
        values.iter_mut().for_each(|v| *v *= factor);
        total = values.iter().sum();
    }
    values.iter_mut().for_each(|v| *v /= total);
    true
}

pub(crate) fn check_inputs(model: &CaaModel, graph: &BeliefGraph, states: &[usize], actions: &[usize]) -> Result<()> {
    if states.len() != actions.len() + 1 {
        return Err(CaaError::InvalidInput(format!(
            "{} states and {} actions; expected one more state than actions",
            states.len(),
            actions.len()
        )));
    }
    if actions.len() > graph.horizon() {
        return Err(CaaError::InvalidInput(format!(
            "trajectory horizon {} exceeds belief graph horizon {}",
            actions.len(),
            graph.horizon()
        )));
    }
    if let Some(k) = states.iter().position(|&x| x >= model.num_states()) {
        return Err(CaaError::InvalidInput(format!("state at k = {k} out of range")));
    }
    if let Some(k) = actions.iter().position(|&a| a >= model.num_actions()) {
        return Err(CaaError::InvalidInput(format!("action at k = {} out of range", k + 1)));
    }
    Ok(())
}

/// `α_0, …, α_N` with `N = actions.len()`; `states` holds `x_0..x_N`.
pub fn forward_pass(
    model: &CaaModel,
    graph: &BeliefGraph,
    states: &[usize],
    actions: &[usize],
) -> Result<Vec<PosteriorPmf>> {
    check_inputs(model, graph, states, actions)?;
    let mut alphas = Vec::with_capacity(actions.len() + 1);
    alphas.push(PosteriorPmf::point_mass(0, graph.layer(0).len(), 0));

    for k in 1..=actions.len() {
        let prev = &alphas[k - 1].mass;
        let (x, a) = (states[k], actions[k - 1]);
        let mut mass = vec![0.0; graph.layer(k).len()];
        for e in graph.edges_into(k) {
            mass[e.child] += model.observation.get(x, e.observation) * prev[e.parent];
        }
        for (m, belief) in mass.iter_mut().zip(graph.layer(k)) {
            if *m > 0.0 {
                *m *= model.policy.probability(belief.as_slice(), a);
            }
        }
        if !normalize(&mut mass) {
            return Err(CaaError::InconsistentAction { step: k, action: a + 1 });
        }
        alphas.push(PosteriorPmf { layer: k, mass });
    }
    Ok(alphas)
}

/// Conditional mean `Σ_π π · pmf(π)` over the pmf's layer.
pub fn posterior_mean(pmf: &PosteriorPmf, graph: &BeliefGraph) -> Belief {
    let layer = graph.layer(pmf.layer);
    let mut mean = vec![0.0; layer[0].dim()];
    for (belief, &m) in layer.iter().zip(&pmf.mass) {
        if m > 0.0 {
            for (acc, p) in mean.iter_mut().zip(belief.as_slice()) {
                *acc += m * p;
            }
        }
    }
    Belief::from_weights_unchecked(mean)
}
