//! Seeded generator of small random systems and episodes, used for
//! cross-checking the recursions against the enumeration oracle.

use crate::error::Result;
use crate::model::{Belief, CaaModel, StochasticMatrix};
use crate::policy::{Halfspace, Policy, ThresholdRule};
use crate::sim::{simulate_episode, RngStream, Trajectory};

/// Uniform on the simplex (normalized exponentials).
pub fn random_simplex_point(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Row-stochastic matrix with entries bounded away from zero.
pub fn random_stochastic(rows: usize, cols: usize, rng: &mut RngStream) -> StochasticMatrix {
    StochasticMatrix::from_rows(
        (0..rows)
            .map(|_| {
                let row: Vec<f64> = (0..cols).map(|_| 0.05 + rng.uniform()).collect();
                let sum: f64 = row.iter().sum();
                row.into_iter().map(|v| v / sum).collect()
            })
            .collect(),
    )
    .expect("rectangular")
}

fn pick(n: usize, rng: &mut RngStream) -> usize {
    ((rng.uniform() * n as f64) as usize).min(n - 1)
}

/// One or two half-space rules whose boundaries pass through the simplex.
pub fn random_threshold_policy(num_states: usize, num_actions: usize, rng: &mut RngStream) -> Policy {
    let num_rules = 1 + pick(2, rng);
    let rules = (0..num_rules)
        .map(|_| {
            let normal: Vec<f64> = (0..num_states).map(|_| 2.0 * rng.uniform() - 1.0).collect();
            let anchor = random_simplex_point(num_states, rng);
            let threshold = normal.iter().zip(&anchor).map(|(w, p)| w * p).sum();
            ThresholdRule {
                region: Halfspace { normal, threshold },
                action: pick(num_actions, rng),
            }
        })
        .collect();
    Policy::Threshold {
        rules,
        fallback: pick(num_actions, rng),
        num_actions,
    }
}

pub fn random_model(num_states: usize, num_observations: usize, num_actions: usize, rng: &mut RngStream) -> CaaModel {
    let transition = random_stochastic(num_states, num_states, rng);
    let observation = random_stochastic(num_states, num_observations, rng);
    let policy = random_threshold_policy(num_states, num_actions, rng);
    let initial = Belief::new(random_simplex_point(num_states, rng)).expect("simplex point");
    CaaModel::new(transition, observation, policy, initial).expect("generated model is valid")
}

#[derive(Debug, Clone)]
pub struct BatteryCase {
    pub model: CaaModel,
    pub trajectory: Trajectory,
}

/// `count` random cases with `X, Y, A ∈ {2, 3}` and horizons in
/// `1..=max_horizon`. Case `i` draws from stream `i` of `seed`.
pub fn battery(seed: u64, count: usize, max_horizon: usize) -> Result<Vec<BatteryCase>> {
    (0..count)
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let dims: Vec<usize> = (0..3).map(|_| 2 + (rng.uniform() < 0.5) as usize).collect();
            let horizon = 1 + ((rng.uniform() * max_horizon as f64) as usize).min(max_horizon - 1);
            let model = random_model(dims[0], dims[1], dims[2], &mut rng);
            let trajectory = simulate_episode(&model, horizon, &mut rng)?;
            Ok(BatteryCase { model, trajectory })
        })
        .collect()
}
