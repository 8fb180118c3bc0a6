//! Fixed-interval smoother `γ_{k|N}` over the adversary's beliefs.
//!
//! The backward variable is only evaluated on the reachable sets `Π_k`
//! (it is zero elsewhere):
//!
//! ```text
//! β_{N|N}(π) = 1
//! β_{k|N}(π) = Σ_{z ∈ Π_{k+1}} G_{z,a_{k+1}} P_{x_k,x_{k+1}} Σ_{y : T(π,y) = z} B_{x_{k+1},y} β_{k+1|N}(z)
//! γ_{k|N}(π) = β_{k|N}(π) α_k(π) / Σ_z β_{k|N}(z) α_k(z)
//! ```
//!
//! The sensor likelihood is evaluated at the state reached at `k + 1`, which
//! is the time the observation `y_{k+1}` is drawn.

use crate::error::{CaaError, Result};
use crate::filter::{check_inputs, normalize, posterior_mean, PosteriorPmf};
use crate::graph::BeliefGraph;
use crate::model::{Belief, CaaModel};

/// `β_{k|N}` on the nodes of `Π_k`, stored as `values · 2^scale_exponent`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardValues {
    pub layer: usize,
    pub values: Vec<f64>,
    pub scale_exponent: i64,
}

impl BackwardValues {
    /// Unscaled value of node `id`. May underflow for long horizons.
    pub fn unscaled(&self, id: usize) -> f64 {
        self.values[id] * 2f64.powi(self.scale_exponent.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }

    /// Scales the layer by a power of two so its largest entry lies in
    /// `[0.5, 1)` (up to rounding in `log2`).
    fn rescale(&mut self) {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            let e = max.log2().floor() as i32 + 1;
            // two half steps keep each factor finite for subnormal maxima
            let (lo, hi) = (-e / 2, -e - (-e / 2));
            let (f1, f2) = (2f64.powi(lo), 2f64.powi(hi));
            self.values.iter_mut().for_each(|v| *v = *v * f1 * f2);
            self.scale_exponent += e as i64;
        }
    }
}

/// `β_{0|N}, …, β_{N|N}` indexed by `k`, computed from `k = N` down to 0.
pub fn backward_pass(
    model: &CaaModel,
    graph: &BeliefGraph,
    states: &[usize],
    actions: &[usize],
) -> Result<Vec<BackwardValues>> {
    check_inputs(model, graph, states, actions)?;
    let n = actions.len();
    let mut betas = vec![
        BackwardValues {
            layer: n,
            values: vec![1.0; graph.layer(n).len()],
            scale_exponent: 0,
        };
        1
    ];

    for k in (0..n).rev() {
        let next = betas.last().expect("terminal layer");
        let (x_now, x_next, a_next) = (states[k], states[k + 1], actions[k]);
        let transition = model.transition.get(x_now, x_next);
        // G_{z,a_{k+1}} β_{k+1|N}(z), shared by every parent of z
        let weighted: Vec<f64> = graph
            .layer(k + 1)
            .iter()
            .zip(&next.values)
            .map(|(z, &b)| {
                if b > 0.0 {
                    model.policy.probability(z.as_slice(), a_next) * b
                } else {
                    0.0
                }
            })
            .collect();
        let values = (0..graph.layer(k).len())
            .map(|parent| {
                transition
                    * graph
                        .children(k, parent)
                        .iter()
                        .map(|e| model.observation.get(x_next, e.observation) * weighted[e.child])
                        .sum::<f64>()
            })
            .collect();
        let mut beta = BackwardValues {
            layer: k,
            values,
            scale_exponent: next.scale_exponent,
        };
        beta.rescale();
        betas.push(beta);
    }
    betas.reverse();
    Ok(betas)
}

/// Combines forward and backward variables into `γ_{k|N}` for every `k`.
pub fn smooth(alphas: &[PosteriorPmf], betas: &[BackwardValues]) -> Result<Vec<PosteriorPmf>> {
    if alphas.len() != betas.len() {
        return Err(CaaError::InvalidInput(format!(
            "{} forward layers but {} backward layers",
            alphas.len(),
            betas.len()
        )));
    }
    alphas
        .iter()
        .zip(betas)
        .map(|(alpha, beta)| {
            if alpha.layer != beta.layer || alpha.mass.len() != beta.values.len() {
                return Err(CaaError::InvalidInput(format!(
                    "forward and backward variables disagree on layer {}",
                    alpha.layer
                )));
            }
            // a flat β (always the case at k = N) leaves α unchanged exactly
            if beta.values.windows(2).all(|w| w[0] == w[1]) && beta.values.first().is_some_and(|&b| b > 0.0) {
                return Ok(alpha.clone());
            }
            let mut mass: Vec<f64> = alpha.mass.iter().zip(&beta.values).map(|(a, b)| a * b).collect();
            if !normalize(&mut mass) {
                return Err(CaaError::InconsistentEvidence { step: alpha.layer });
            }
            Ok(PosteriorPmf {
                layer: alpha.layer,
                mass,
            })
        })
        .collect()
}

/// Smoothed conditional means, one per layer.
pub fn smoothed_means(gammas: &[PosteriorPmf], graph: &BeliefGraph) -> Vec<Belief> {
    gammas.iter().map(|g| posterior_mean(g, graph)).collect()
}

/// Forward pass, backward pass and combination in one call.
pub fn smooth_trajectory(
    model: &CaaModel,
    graph: &BeliefGraph,
    states: &[usize],
    actions: &[usize],
) -> Result<(Vec<PosteriorPmf>, Vec<PosteriorPmf>)> {
    let alphas = crate::filter::forward_pass(model, graph, states, actions)?;
    let betas = backward_pass(model, graph, states, actions)?;
    let gammas = smooth(&alphas, &betas)?;
    Ok((alphas, gammas))
}
