//! Reachable belief sets `Π_0, …, Π_N` as a layered DAG.
//!
//! `Π_0 = {π_0}` and `Π_k = {T(π, y) : y ∈ 𝒴, π ∈ Π_{k-1}}`. Each edge records
//! the observation that generated it. Beliefs within `tol` of each other
//! (max-norm) are identified: a new belief is compared against the layer's
//! nodes in insertion order and merged into the first match. Because of
//! merging, several observations may connect the same parent and child.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{CaaError, Result};
use crate::model::{Belief, CaaModel};
use crate::sim::hmm_filter_update;

pub const DEFAULT_DEDUP_TOL: f64 = 1e-9;

/// Edge `parent --y--> child` between layers `k - 1` and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub parent: usize,
    pub observation: usize,
    pub child: usize,
}

/// A node of the graph: `belief` is the `id`-th element of `Π_layer`.
#[derive(Debug, Clone, Copy)]
pub struct BeliefNode<'a> {
    pub layer: usize,
    pub id: usize,
    pub belief: &'a Belief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGraph {
    layers: Vec<Vec<Belief>>,
    /// `edges[k]` connects layer `k - 1` to layer `k`; `edges[0]` is empty.
    /// Sorted by parent, then observation.
    edges: Vec<Vec<Edge>>,
    /// `out_start[k][p]..out_start[k][p + 1]` indexes the edges of parent `p`
    /// in `edges[k + 1]`.
    out_start: Vec<Vec<usize>>,
    index: Vec<LayerIndex>,
    tol: f64,
}

/// Nodes of one layer keyed by their first coordinate, so that neighbour
/// queries only visit nodes whose first coordinate is within `tol`.
#[derive(Debug, Clone, Default, PartialEq)]
struct LayerIndex {
    by_first: BTreeMap<u64, Vec<usize>>,
}

impl LayerIndex {
    /// Order-preserving key for non-negative coordinates.
    fn key(x: f64) -> u64 {
        x.max(0.0).to_bits()
    }

    fn insert(&mut self, id: usize, belief: &Belief) {
        self.by_first.entry(Self::key(belief[0])).or_default().push(id);
    }

    /// Superset of the ids within `tol` of `belief` in max-norm.
    fn candidates<'a>(&'a self, belief: &Belief, tol: f64) -> impl Iterator<Item = usize> + 'a {
        // doubled window absorbs rounding in the bounds
        let (lo, hi) = (Self::key(belief[0] - 2.0 * tol), Self::key(belief[0] + 2.0 * tol));
        self.by_first.range(lo..=hi).flat_map(|(_, ids)| ids.iter().copied())
    }
}

impl BeliefGraph {
    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn layer(&self, k: usize) -> &[Belief] {
        &self.layers[k]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn nodes(&self, k: usize) -> impl Iterator<Item = BeliefNode<'_>> {
        self.layers[k]
            .iter()
            .enumerate()
            .map(move |(id, belief)| BeliefNode { layer: k, id, belief })
    }

    /// Edges from layer `k - 1` into layer `k` (`1 ≤ k ≤ N`).
    pub fn edges_into(&self, k: usize) -> &[Edge] {
        &self.edges[k]
    }

    /// Outgoing edges of node `parent` of layer `k`; empty for the last layer.
    pub fn children(&self, k: usize, parent: usize) -> &[Edge] {
        if k >= self.horizon() {
            return &[];
        }
        let starts = &self.out_start[k];
        &self.edges[k + 1][starts[parent]..starts[parent + 1]]
    }

    /// Every observation `y` with `T(parent, y) = child`, where `parent` is in
    /// layer `k - 1` and `child` in layer `k`. Empty if no observation connects
    /// them.
    pub fn inverse_observations(&self, k: usize, parent: usize, child: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.horizon() {
            return Err(CaaError::InvalidInput(format!(
                "layer {k} outside 1..={}",
                self.horizon()
            )));
        }
        if parent >= self.layers[k - 1].len() || child >= self.layers[k].len() {
            return Err(CaaError::InvalidInput(format!(
                "node ids ({parent}, {child}) out of range for layers {} and {k}",
                k - 1
            )));
        }
        Ok(self
            .children(k - 1, parent)
            .iter()
            .filter(|e| e.child == child)
            .map(|e| e.observation)
            .collect())
    }

    /// Id of the node of layer `k` closest to `belief` in max-norm, if it is
    /// within the dedup tolerance.
    pub fn locate(&self, k: usize, belief: &Belief) -> Option<usize> {
        self.index[k]
            .candidates(belief, self.tol)
            .map(|i| (i, self.layers[k][i].max_norm_distance(belief)))
            .filter(|&(_, d)| d < self.tol)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    /// JSON-friendly dump with 1-based observations.
    pub fn dump(&self) -> GraphDump {
        GraphDump {
            tolerance: self.tol,
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(k, nodes)| LayerDump {
                    k,
                    beliefs: nodes.iter().map(|b| b.as_slice().to_vec()).collect(),
                    edges: self.edges[k]
                        .iter()
                        .map(|e| (e.parent, e.observation + 1, e.child))
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerDump {
    pub k: usize,
    pub beliefs: Vec<Vec<f64>>,
    /// `(parent id, observation, child id)`.
    pub edges: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphDump {
    pub tolerance: f64,
    pub layers: Vec<LayerDump>,
}

/// Builds layers `0..=horizon` eagerly. Observations with zero one-step
/// likelihood produce no edge.
pub fn expand_belief_graph(model: &CaaModel, horizon: usize, tol: f64) -> Result<BeliefGraph> {
    if !(tol > 0.0) {
        return Err(CaaError::InvalidInput(format!("dedup tolerance must be positive, got {tol}")));
    }
    let mut layers = vec![vec![model.initial_belief.clone()]];
    let mut index = vec![LayerIndex::default()];
    index[0].insert(0, &model.initial_belief);
    let mut edges = vec![Vec::new()];
    let mut out_start = Vec::with_capacity(horizon);

    for _ in 1..=horizon {
        let prev = layers.last().expect("layer 0 exists");
        let mut layer: Vec<Belief> = Vec::new();
        let mut lookup = LayerIndex::default();
        let mut layer_edges = Vec::new();
        let mut starts = Vec::with_capacity(prev.len() + 1);
        for (parent, belief) in prev.iter().enumerate() {
            starts.push(layer_edges.len());
            for y in 0..model.num_observations() {
                let child_belief = match hmm_filter_update(&model.transition, &model.observation, belief, y) {
                    Ok(b) => b,
                    Err(CaaError::ImpossibleObservation { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let first_match = lookup
                    .candidates(&child_belief, tol)
                    .filter(|&id| layer[id].max_norm_distance(&child_belief) < tol)
                    .min();
                let child = match first_match {
                    Some(id) => id,
                    None => {
                        lookup.insert(layer.len(), &child_belief);
                        layer.push(child_belief);
                        layer.len() - 1
                    }
                };
                layer_edges.push(Edge {
                    parent,
                    observation: y,
                    child,
                });
            }
        }
        starts.push(layer_edges.len());
        out_start.push(starts);
        layers.push(layer);
        index.push(lookup);
        edges.push(layer_edges);
    }

    Ok(BeliefGraph {
        layers,
        edges,
        out_start,
        index,
        tol,
    })
}
