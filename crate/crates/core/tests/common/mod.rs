//! Randomized checks shared by the property suite and the acceptance target.
//! Each check takes a case seed and returns a description of the first
//! violation it finds.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use caa_core::battery::{battery, random_simplex_point, random_stochastic, BatteryCase};
use caa_core::experiments::{infer, monte_carlo_errors, PosteriorMode};
use caa_core::filter::forward_pass;
use caa_core::graph::{expand_belief_graph, DEFAULT_DEDUP_TOL};
use caa_core::model::{permute_belief, validate_model, Belief, StochasticMatrix};
use caa_core::policy::{compose_policy, Halfspace, Policy, TabulatedRule};
use caa_core::sim::{simulate_episode, RngStream};
use caa_core::smoother::{backward_pass, smooth, smooth_trajectory};

pub type Check = Result<(), String>;

pub fn case(seed: u64, max_horizon: usize) -> BatteryCase {
    battery(seed, 1, max_horizon).expect("battery case").remove(0)
}

pub fn random_permutation(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let keys: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    perm
}

pub fn random_tabulated_policy(num_states: usize, num_actions: usize, rng: &mut RngStream) -> Policy {
    let rules = (0..1 + (rng.uniform() < 0.5) as usize)
        .map(|_| {
            let normal: Vec<f64> = (0..num_states).map(|_| 2.0 * rng.uniform() - 1.0).collect();
            let anchor = random_simplex_point(num_states, rng);
            let threshold = normal.iter().zip(&anchor).map(|(w, p)| w * p).sum();
            TabulatedRule {
                region: Halfspace { normal, threshold },
                pmf: random_simplex_point(num_actions, rng),
            }
        })
        .collect();
    Policy::Tabulated {
        rules,
        fallback: random_simplex_point(num_actions, rng),
    }
}

/// Every filter and smoother pmf is non-negative and sums to one.
pub fn pmf_normalization(seed: u64) -> Check {
    let c = case(seed, 8);
    let g = expand_belief_graph(&c.model, c.trajectory.horizon(), DEFAULT_DEDUP_TOL).map_err(|e| e.to_string())?;
    let (alphas, gammas) =
        smooth_trajectory(&c.model, &g, &c.trajectory.states, &c.trajectory.actions).map_err(|e| e.to_string())?;
    for pmf in alphas.iter().chain(&gammas) {
        if pmf.mass.iter().any(|&m| !(m >= 0.0)) {
            return Err(format!("negative or NaN mass at k = {}", pmf.layer));
        }
        if (pmf.total() - 1.0).abs() > 1e-10 {
            return Err(format!("mass sums to {} at k = {}", pmf.total(), pmf.layer));
        }
    }
    Ok(())
}

/// Scaling each backward layer by an arbitrary positive constant leaves the
/// smoother unchanged.
pub fn beta_scale_invariance(seed: u64) -> Check {
    let c = case(seed, 6);
    let (x, a) = (&c.trajectory.states, &c.trajectory.actions);
    let g = expand_belief_graph(&c.model, a.len(), DEFAULT_DEDUP_TOL).map_err(|e| e.to_string())?;
    let alphas = forward_pass(&c.model, &g, x, a).map_err(|e| e.to_string())?;
    let betas = backward_pass(&c.model, &g, x, a).map_err(|e| e.to_string())?;
    let gammas = smooth(&alphas, &betas).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(seed, 1);
    let mut scaled = betas.clone();
    for b in &mut scaled {
        let factor = (1.0 + 9.0 * rng.uniform()) * 10f64.powi((200.0 * rng.uniform()) as i32 - 100);
        b.values.iter_mut().for_each(|v| *v *= factor);
    }
    let rescaled = smooth(&alphas, &scaled).map_err(|e| e.to_string())?;
    for (p, q) in gammas.iter().zip(&rescaled) {
        let tv = p.total_variation(q);
        if tv > 1e-12 {
            return Err(format!("rescaling β moved γ by TV {tv:e} at k = {}", p.layer));
        }
    }
    Ok(())
}

/// Relabelling the states relabels beliefs and leaves every posterior mass
/// on the corresponding node unchanged.
pub fn permutation_equivariance(seed: u64) -> Check {
    let c = case(seed, 6);
    let n = c.trajectory.horizon();
    let perm = random_permutation(c.model.num_states(), &mut RngStream::new(seed, 2));
    let pm = c.model.permute_states(&perm);
    let pt = c.trajectory.permute_states(&perm);
    let g = expand_belief_graph(&c.model, n, DEFAULT_DEDUP_TOL).map_err(|e| e.to_string())?;
    let pg = expand_belief_graph(&pm, n, DEFAULT_DEDUP_TOL).map_err(|e| e.to_string())?;
    if g.layer_sizes() != pg.layer_sizes() {
        return Err(format!("layer sizes {:?} vs {:?}", g.layer_sizes(), pg.layer_sizes()));
    }
    for k in 0..=n {
        for (id, (b, pb)) in g.layer(k).iter().zip(pg.layer(k)).enumerate() {
            let d = permute_belief(b, &perm).max_norm_distance(pb);
            if d > 1e-12 {
                return Err(format!("node {id} of layer {k} is off by {d:e} after relabelling"));
            }
        }
    }
    let (a, gm) = smooth_trajectory(&c.model, &g, &c.trajectory.states, &c.trajectory.actions)
        .map_err(|e| e.to_string())?;
    let (pa, pgm) = smooth_trajectory(&pm, &pg, &pt.states, &pt.actions).map_err(|e| e.to_string())?;
    for (p, q) in a.iter().chain(&gm).zip(pa.iter().chain(&pgm)) {
        let tv = p.total_variation(q);
        if tv > 1e-10 {
            return Err(format!("posterior at k = {} moved by TV {tv:e} after relabelling", p.layer));
        }
    }
    Ok(())
}

/// Equal seeds replay bit-for-bit, from the sampler through the estimators.
pub fn replay_determinism(seed: u64) -> Check {
    let c = case(seed, 6);
    let index = seed % 1000;
    let n = c.trajectory.horizon();
    let t1 = simulate_episode(&c.model, n, &mut RngStream::new(seed, index)).map_err(|e| e.to_string())?;
    let t2 = simulate_episode(&c.model, n, &mut RngStream::new(seed, index)).map_err(|e| e.to_string())?;
    if t1 != t2 {
        return Err("trajectories differ for the same seed and stream".into());
    }
    for mode in [PosteriorMode::Filter, PosteriorMode::Smoothed] {
        let r1 = infer(&c.model, &t1, mode).map_err(|e| e.to_string())?.0;
        let r2 = infer(&c.model, &t2, mode).map_err(|e| e.to_string())?.0;
        if r1 != r2 {
            return Err(format!("{mode:?} posteriors differ on replay"));
        }
    }
    let e1 = monte_carlo_errors(&c.model, n, 3, seed).map_err(|e| e.to_string())?;
    let e2 = monte_carlo_errors(&c.model, n, 3, seed).map_err(|e| e.to_string())?;
    if e1 != e2 {
        return Err("error curves differ on replay".into());
    }
    let mut s1 = RngStream::new(seed, index);
    let mut s2 = RngStream::new(seed, index + 1);
    if (0..8).all(|_| s1.uniform() == s2.uniform()) {
        return Err("adjacent streams coincide".into());
    }
    Ok(())
}

/// Tabulated and composed policies return a pmf of the right length whose
/// entries agree with `probability`.
pub fn policy_pmf_validity(seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 0);
    let x = 2 + (rng.uniform() < 0.5) as usize;
    let a = 2 + (rng.uniform() < 0.5) as usize;
    let inner = random_tabulated_policy(x, a, &mut rng);
    let composed = compose_policy(inner.clone(), random_stochastic(a, a, &mut rng)).map_err(|e| e.to_string())?;
    for policy in [&inner, &composed] {
        for _ in 0..20 {
            let pi = random_simplex_point(x, &mut rng);
            let pmf = policy.pmf(&pi);
            if pmf.len() != a || pmf.iter().any(|&p| !(p >= 0.0)) {
                return Err(format!("bad pmf {pmf:?}"));
            }
            if (pmf.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(format!("pmf {pmf:?} does not sum to one"));
            }
            if (0..a).any(|u| policy.probability(&pi, u) != pmf[u]) {
                return Err("probability disagrees with pmf".into());
            }
        }
    }
    Ok(())
}

/// An identity action channel changes nothing.
pub fn compose_identity(seed: u64) -> Check {
    let c = case(seed, 1);
    let a = c.model.num_actions();
    let composed = compose_policy(c.model.policy.clone(), StochasticMatrix::identity(a)).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(seed, 3);
    for _ in 0..50 {
        let pi = random_simplex_point(c.model.num_states(), &mut rng);
        if composed.pmf(&pi) != c.model.policy.pmf(&pi) {
            return Err(format!("identity channel changed the pmf at {pi:?}"));
        }
    }
    Ok(())
}

/// `G_{π,a} = Σ_u D_{u,a} C_{π,u}` evaluated directly.
pub fn compose_matches_direct_sum(seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 4);
    let x = 2 + (rng.uniform() < 0.5) as usize;
    let a = 2 + (rng.uniform() < 0.5) as usize;
    let inner = random_tabulated_policy(x, a, &mut rng);
    let d = random_stochastic(a, a, &mut rng);
    let composed = compose_policy(inner.clone(), d.clone()).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let pi = random_simplex_point(x, &mut rng);
        let c = inner.pmf(&pi);
        for act in 0..a {
            let direct: f64 = (0..a).map(|u| d.get(u, act) * c[u]).sum();
            let got = composed.probability(&pi, act);
            if (got - direct).abs() > 1e-14 {
                return Err(format!("G = {got}, direct sum = {direct}"));
            }
        }
    }
    Ok(())
}

/// Breaking a single entry of `P`, `B` or `pi0` is reported against that
/// field.
pub fn validate_mutation(seed: u64) -> Check {
    let c = case(seed, 1);
    let mut rng = RngStream::new(seed, 5);
    let (x, y) = (c.model.num_states(), c.model.num_observations());
    let i = ((rng.uniform() * x as f64) as usize).min(x - 1);
    let bump = if rng.uniform() < 0.5 { -1.5 } else { 1e-6 + rng.uniform() };
    let which = ((rng.uniform() * 3.0) as usize).min(2);
    let mut m = c.model.clone();
    let field = match which {
        0 => {
            let j = ((rng.uniform() * x as f64) as usize).min(x - 1);
            m.transition.set(i, j, m.transition.get(i, j) + bump);
            "P"
        }
        1 => {
            let j = ((rng.uniform() * y as f64) as usize).min(y - 1);
            m.observation.set(i, j, m.observation.get(i, j) + bump);
            "B"
        }
        _ => {
            let mut w = m.initial_belief.as_slice().to_vec();
            w[i] += bump;
            m.initial_belief = Belief::from_weights_unchecked(w);
            "pi0"
        }
    };
    match validate_model(&m) {
        Ok(()) => Err(format!("mutated {field} passed validation")),
        Err(report) if report.mentions(field) => Ok(()),
        Err(report) => Err(format!("mutated {field} reported as: {report}")),
    }
}

pub const PROPERTIES: [(&str, fn(u64) -> Check); 8] = [
    ("pmf normalization", pmf_normalization),
    ("β scale invariance", beta_scale_invariance),
    ("permutation equivariance", permutation_equivariance),
    ("replay determinism", replay_determinism),
    ("policy pmf validity", policy_pmf_validity),
    ("identity action channel", compose_identity),
    ("composed policy sum", compose_matches_direct_sum),
    ("validation catches mutations", validate_mutation),
];
