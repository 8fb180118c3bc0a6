//! Simulation of the adversarial game: our Markov chain, the adversary's noisy
//! sensor, its HMM filter, and the actions we observe.

use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CaaError, Result};
use crate::model::{Belief, CaaModel, ObservationKernel, TransitionKernel};
use crate::policy::Policy;

/// Reproducible random stream identified by `(seed, index)`.
///
/// Backed by ChaCha20 keyed with `seed` (via `SeedableRng::seed_from_u64`)
/// and positioned on stream `index`, so every pair yields an independent,
/// platform-stable sequence of draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    index: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { seed, index, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Inverse-CDF draw from `pmf` using one uniform variate.
    ///
    /// Index `i` owns `(F(i-1), F(i)]` of the cumulative sum `F`. If rounding
    /// leaves `F(last) < u`, the last positive-mass index is used.
    pub fn categorical(&mut self, pmf: &[f64]) -> usize {
        let u = self.uniform();
        sample_index(pmf, u)
    }
}

/// Inverse CDF over `(F_{i-1}, F_i]`: a draw on a cumulative boundary goes
/// to the lower index. Zero-mass entries are never returned.
pub(crate) fn sample_index(pmf: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        cumulative += p;
        if p > 0.0 && u <= cumulative {
            return i;
        }
    }
    pmf.iter()
        .rposition(|&p| p > 0.0)
        .expect("pmf has positive mass")
}

/// One step of the adversary's HMM filter:
/// `T(π, y) = B_y Pᵀ π / 𝟙ᵀ B_y Pᵀ π`.
pub fn hmm_filter_update(
    transition: &TransitionKernel,
    observation: &ObservationKernel,
    belief: &Belief,
    y: usize,
) -> Result<Belief> {
    let (unnormalized, norm) = filter_numerator(transition, observation, belief.as_slice(), y);
    if !(norm > 0.0) {
        return Err(CaaError::ImpossibleObservation { observation: y + 1 });
    }
    Ok(Belief::from_weights_unchecked(
        unnormalized.into_iter().map(|v| v / norm).collect(),
    ))
}

/// `B_y Pᵀ π` and its sum.
pub(crate) fn filter_numerator(
    transition: &TransitionKernel,
    observation: &ObservationKernel,
    belief: &[f64],
    y: usize,
) -> (Vec<f64>, f64) {
    let n = transition.rows();
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        let predicted: f64 = (0..n).map(|i| transition.get(i, j) * belief[i]).sum();
        *o = observation.get(j, y) * predicted;
    }
    let norm = out.iter().sum();
    (out, norm)
}

/// `x_0 ~ pi0`, then `x_k ~ P[x_{k-1}, ·]` for `k = 1..=horizon`.
pub fn sample_chain(
    transition: &TransitionKernel,
    initial: &Belief,
    horizon: usize,
    rng: &mut RngStream,
) -> Vec<usize> {
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(rng.categorical(initial.as_slice()));
    for k in 1..=horizon {
        states.push(rng.categorical(transition.row(states[k - 1])));
    }
    states
}

pub fn sample_observation(observation: &ObservationKernel, state: usize, rng: &mut RngStream) -> usize {
    rng.categorical(observation.row(state))
}

pub fn sample_action(policy: &Policy, belief: &Belief, rng: &mut RngStream) -> usize {
    rng.categorical(&policy.pmf(belief.as_slice()))
}

/// A realized game. Only `states` and `actions` are visible to us.
///
/// `observations[k - 1]` and `actions[k - 1]` belong to time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub observations: Option<Vec<usize>>,
    pub beliefs: Option<Vec<Belief>>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// The estimator's view: states and actions only.
    pub fn public(&self) -> Self {
        Self {
            states: self.states.clone(),
            observations: None,
            beliefs: None,
            actions: self.actions.clone(),
        }
    }

    /// Checks lengths and index ranges against `model`.
    pub fn check(&self, model: &CaaModel) -> Result<()> {
        let n = self.horizon();
        let bad = |msg: String| Err(CaaError::InvalidInput(msg));
        if self.states.len() != n + 1 {
            return bad(format!("trajectory has {} states, expected N + 1 = {}", self.states.len(), n + 1));
        }
        if let Some(k) = self.states.iter().position(|&x| x >= model.num_states()) {
            return bad(format!("state at k = {k} is outside 1..={}", model.num_states()));
        }
        if let Some(k) = self.actions.iter().position(|&a| a >= model.num_actions()) {
            return bad(format!("action at k = {} is outside 1..={}", k + 1, model.num_actions()));
        }
        if let Some(ys) = &self.observations {
            if ys.len() != n {
                return bad(format!("trajectory has {} observations, expected N = {n}", ys.len()));
            }
            if let Some(k) = ys.iter().position(|&y| y >= model.num_observations()) {
                return bad(format!("observation at k = {} is outside 1..={}", k + 1, model.num_observations()));
            }
        }
        if let Some(pis) = &self.beliefs {
            if pis.len() != n + 1 {
                return bad(format!("trajectory has {} beliefs, expected N + 1 = {}", pis.len(), n + 1));
            }
            if let Some(k) = pis.iter().position(|p| p.dim() != model.num_states()) {
                return bad(format!("belief at k = {k} has the wrong dimension"));
            }
        }
        Ok(())
    }

    /// Relabels states so that old state `i` becomes `perm[i]`.
    pub fn permute_states(&self, perm: &[usize]) -> Self {
        Self {
            states: self.states.iter().map(|&x| perm[x]).collect(),
            observations: self.observations.clone(),
            beliefs: self.beliefs.as_ref().map(|pis| {
                pis.iter()
                    .map(|p| crate::model::permute_belief(p, perm))
                    .collect()
            }),
            actions: self.actions.clone(),
        }
    }
}

/// Plays the game for `horizon` steps. Draw order per step: state,
/// observation, action.
pub fn simulate_episode(model: &CaaModel, horizon: usize, rng: &mut RngStream) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(CaaError::InvalidInput("horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon);
    let mut beliefs = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);

    states.push(rng.categorical(model.initial_belief.as_slice()));
    beliefs.push(model.initial_belief.clone());
    for k in 1..=horizon {
        let x = rng.categorical(model.transition.row(states[k - 1]));
        let y = sample_observation(&model.observation, x, rng);
        let pi = hmm_filter_update(&model.transition, &model.observation, &beliefs[k - 1], y)?;
        let a = sample_action(&model.policy, &pi, rng);
        states.push(x);
        observations.push(y);
        beliefs.push(pi);
        actions.push(a);
    }
    Ok(Trajectory {
        states,
        observations: Some(observations),
        beliefs: Some(beliefs),
        actions,
    })
}

/// On-disk trajectory with 1-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub x: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<Vec<f64>>>,
    pub a: Vec<usize>,
    pub model_hash: String,
}

impl TrajectoryFile {
    pub fn from_trajectory(traj: &Trajectory, model_hash: impl Into<String>) -> Self {
        let one_based = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
        Self {
            horizon: traj.horizon(),
            x: one_based(&traj.states),
            y: traj.observations.as_deref().map(one_based),
            pi: traj
                .beliefs
                .as_ref()
                .map(|pis| pis.iter().map(|p| p.as_slice().to_vec()).collect()),
            a: one_based(&traj.actions),
            model_hash: model_hash.into(),
        }
    }

    /// Converts to 0-based indices and checks consistency with `model`,
    /// including the model hash.
    pub fn into_trajectory(self, model: &CaaModel) -> Result<Trajectory> {
        if self.model_hash != model.model_hash() {
            return Err(CaaError::InvalidInput(
                "trajectory model_hash does not match the loaded model".into(),
            ));
        }
        if self.a.len() != self.horizon {
            return Err(CaaError::InvalidInput(format!(
                "trajectory has {} actions, expected N = {}",
                self.a.len(),
                self.horizon
            )));
        }
        let zero_based = |v: Vec<usize>, name: &str| -> Result<Vec<usize>> {
            v.into_iter()
                .map(|i| {
                    i.checked_sub(1)
                        .ok_or_else(|| CaaError::InvalidInput(format!("`{name}` indices are 1-based, got 0")))
                })
                .collect()
        };
        let traj = Trajectory {
            states: zero_based(self.x, "x")?,
            observations: self.y.map(|y| zero_based(y, "y")).transpose()?,
            beliefs: self
                .pi
                .map(|pis| pis.into_iter().map(Belief::validated).collect::<Result<Vec<_>>>())
                .transpose()?,
            actions: zero_based(self.a, "a")?,
        };
        traj.check(model)?;
        Ok(traj)
    }
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory, model: &CaaModel) -> Result<()> {
    let file = TrajectoryFile::from_trajectory(traj, model.model_hash());
    let text = serde_json::to_string_pretty(&file).map_err(|e| CaaError::Internal(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>, model: &CaaModel) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot read trajectory {}: {e}", path.display()))
    })?;
    let file: TrajectoryFile =
        serde_json::from_str(&text).map_err(|e| CaaError::Parse(format!("trajectory file: {e}")))?;
    file.into_trajectory(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_model, StochasticMatrix};

    fn frequencies(mut draw: impl FnMut() -> usize, n: usize, k: usize) -> Vec<f64> {
        let mut counts = vec![0usize; k];
        for _ in 0..n {
            counts[draw()] += 1;
        }
        counts.into_iter().map(|c| c as f64 / n as f64).collect()
    }

    #[test]
    fn filter_golden_value() {
        let m = reference_model();
        let pi = hmm_filter_update(&m.transition, &m.observation, &Belief::vertex(3, 0), 1).unwrap();
        let expected = [0.21 / 0.41, 0.16 / 0.41, 0.04 / 0.41];
        for (a, b) in pi.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_sensor_collapses_belief() {
        let p = StochasticMatrix::identity(3);
        let b = StochasticMatrix::identity(3);
        let pi = Belief::new(vec![0.2, 0.5, 0.3]).unwrap();
        for y in 0..3 {
            assert_eq!(hmm_filter_update(&p, &b, &pi, y).unwrap(), Belief::vertex(3, y));
        }
    }

    #[test]
    fn uninformative_sensor_keeps_belief() {
        let p = StochasticMatrix::identity(3);
        let b = StochasticMatrix::uniform(3, 4);
        let pi = Belief::new(vec![0.2, 0.5, 0.3]).unwrap();
        for y in 0..4 {
            let out = hmm_filter_update(&p, &b, &pi, y).unwrap();
            assert!(out.max_norm_distance(&pi) < 1e-15);
        }
    }

    #[test]
    fn impossible_observation_errors() {
        let p = StochasticMatrix::identity(2);
        let b = StochasticMatrix::identity(2);
        let err = hmm_filter_update(&p, &b, &Belief::vertex(2, 0), 1).unwrap_err();
        assert!(matches!(err, CaaError::ImpossibleObservation { observation: 2 }));
    }

    #[test]
    fn absorbing_chain_and_empty_horizon() {
        let p = StochasticMatrix::identity(3);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(sample_chain(&p, &Belief::vertex(3, 1), 5, &mut rng), vec![1; 6]);
        assert_eq!(sample_chain(&p, &Belief::vertex(3, 1), 0, &mut rng), vec![1]);
    }

    #[test]
    fn transition_frequencies_match_row() {
        let m = reference_model();
        let mut rng = RngStream::new(11, 3);
        let f = frequencies(|| rng.categorical(m.transition.row(0)), 100_000, 3);
        for (a, b) in f.iter().zip([0.7, 0.2, 0.1]) {
            assert!((a - b).abs() < 0.01, "{f:?}");
        }
    }

    #[test]
    fn observation_sampling() {
        let m = reference_model();
        let mut rng = RngStream::new(5, 0);
        let f = frequencies(|| sample_observation(&m.observation, 1, &mut rng), 100_000, 3);
        for (a, b) in f.iter().zip([0.1, 0.8, 0.1]) {
            assert!((a - b).abs() < 0.01, "{f:?}");
        }
        let eye = StochasticMatrix::identity(3);
        let det = StochasticMatrix::from_rows(vec![vec![0.0, 1.0, 0.0]; 3]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_observation(&eye, 2, &mut rng), 2);
            assert_eq!(sample_observation(&det, 0, &mut rng), 1);
        }
    }

    #[test]
    fn action_sampling() {
        let g = reference_model().policy;
        let mut rng = RngStream::new(9, 9);
        for _ in 0..1000 {
            assert_eq!(sample_action(&g, &Belief::new(vec![0.9, 0.05, 0.05]).unwrap(), &mut rng), 0);
            assert_eq!(sample_action(&g, &Belief::new(vec![0.1, 0.45, 0.45]).unwrap(), &mut rng), 1);
        }
        let uniform = Policy::Tabulated {
            rules: vec![],
            fallback: vec![0.5, 0.5],
        };
        let pi = Belief::uniform(3);
        let f = frequencies(|| sample_action(&uniform, &pi, &mut rng), 100_000, 2);
        assert!((f[0] - 0.5).abs() < 0.01 && (f[1] - 0.5).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn boundaries_go_to_lower_index_and_zero_mass_is_skipped() {
        assert_eq!(sample_index(&[0.0, 1.0, 0.0], 0.0), 1);
        assert_eq!(sample_index(&[0.5, 0.5, 0.0], 0.5), 0);
        assert_eq!(sample_index(&[0.5, 0.0, 0.5], 0.5), 0);
        assert_eq!(sample_index(&[0.5, 0.0, 0.5], 0.5 + 1e-16), 2);
        assert_eq!(sample_index(&[0.5, 0.5 - 1e-16, 0.0], 1.0 - 1e-17), 1);
    }

    #[test]
    fn episode_replays_under_filter() {
        let m = reference_model();
        let traj = simulate_episode(&m, 6, &mut RngStream::new(42, 0)).unwrap();
        let ys = traj.observations.as_ref().unwrap();
        let pis = traj.beliefs.as_ref().unwrap();
        assert_eq!(pis[0], m.initial_belief);
        for k in 1..=6 {
            let replay = hmm_filter_update(&m.transition, &m.observation, &pis[k - 1], ys[k - 1]).unwrap();
            assert_eq!(replay, pis[k]);
            let sum: f64 = pis[k].as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(pis[k].as_slice().iter().all(|&p| p >= 0.0));
        }
        assert_eq!(simulate_episode(&m, 6, &mut RngStream::new(42, 0)).unwrap(), traj);
        assert_ne!(simulate_episode(&m, 6, &mut RngStream::new(42, 1)).unwrap(), traj);
    }

    #[test]
    fn perfect_sensor_episode_beliefs_are_vertices() {
        let mut m = reference_model();
        m.observation = StochasticMatrix::identity(3);
        let traj = simulate_episode(&m, 8, &mut RngStream::new(3, 0)).unwrap();
        let pis = traj.beliefs.unwrap();
        for k in 1..=8 {
            assert_eq!(pis[k], Belief::vertex(3, traj.states[k]));
        }
    }

    #[test]
    fn minimal_horizon() {
        let m = reference_model();
        let traj = simulate_episode(&m, 1, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(traj.states.len(), 2);
        assert_eq!(traj.observations.unwrap().len(), 1);
        assert_eq!(traj.beliefs.unwrap().len(), 2);
        assert_eq!(traj.actions.len(), 1);
        assert!(simulate_episode(&m, 0, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn trajectory_file_round_trip() {
        let m = reference_model();
        let traj = simulate_episode(&m, 5, &mut RngStream::new(8, 2)).unwrap();
        let file = TrajectoryFile::from_trajectory(&traj, m.model_hash());
        assert!(file.x.iter().all(|&x| x >= 1));
        let text = serde_json::to_string(&file).unwrap();
        let back: TrajectoryFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_trajectory(&m).unwrap(), traj);

        let mut wrong = TrajectoryFile::from_trajectory(&traj, "deadbeef");
        assert!(wrong.clone().into_trajectory(&m).is_err());
        wrong.model_hash = m.model_hash();
        wrong.x.pop();
        assert!(wrong.into_trajectory(&m).is_err());
    }
}
