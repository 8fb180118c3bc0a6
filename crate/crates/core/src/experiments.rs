//! Monte Carlo error curves, simplex exports and the posterior JSON format.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CaaError, Result};
use crate::filter::{forward_pass, posterior_mean, PosteriorPmf};
use crate::graph::{expand_belief_graph, BeliefGraph, DEFAULT_DEDUP_TOL};
use crate::model::{Belief, CaaModel};
use crate::oracle::{enumerate_posterior, OracleMode};
use crate::sim::{simulate_episode, RngStream, Trajectory};
use crate::smoother::{backward_pass, smooth, smoothed_means};

/// Mean L2 error of the filter and smoother conditional means against the
/// adversary's true belief, for `k = 1..=horizon` (index `k - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub horizon: usize,
    pub filter: Vec<f64>,
    pub smoother: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
}

impl ErrorCurve {
    /// `k,filter_err,smoother_err` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,filter_err,smoother_err\n");
        for (i, (f, s)) in self.filter.iter().zip(&self.smoother).enumerate() {
            let _ = writeln!(out, "{},{f},{s}", i + 1);
        }
        out
    }
}

/// Per-`k` conditional-mean errors of one simulated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeErrors {
    pub filter: Vec<f64>,
    pub smoother: Vec<f64>,
}

/// Runs the filter and smoother on `traj` and measures both estimates
/// against the recorded beliefs, for `k = 1..=N`.
pub fn episode_errors(model: &CaaModel, graph: &BeliefGraph, traj: &Trajectory) -> Result<EpisodeErrors> {
    let truth = traj
        .beliefs
        .as_ref()
        .ok_or_else(|| CaaError::InvalidInput("trajectory carries no adversary beliefs".into()))?;
    let alphas = forward_pass(model, graph, &traj.states, &traj.actions)?;
    let betas = backward_pass(model, graph, &traj.states, &traj.actions)?;
    let gammas = smooth(&alphas, &betas)?;
    let smoothed = smoothed_means(&gammas, graph);
    let n = traj.horizon();
    Ok(EpisodeErrors {
        filter: (1..=n)
            .map(|k| posterior_mean(&alphas[k], graph).euclidean_distance(&truth[k]))
            .collect(),
        smoother: (1..=n).map(|k| smoothed[k].euclidean_distance(&truth[k])).collect(),
    })
}

/// Averages [`episode_errors`] over `runs` episodes; run `r` uses stream `r`
/// of `seed`. Runs are reduced in index order.
pub fn monte_carlo_errors(model: &CaaModel, horizon: usize, runs: usize, seed: u64) -> Result<ErrorCurve> {
    if horizon == 0 || runs == 0 {
        return Err(CaaError::InvalidInput("horizon and run count must be positive".into()));
    }
    let graph = expand_belief_graph(model, horizon, DEFAULT_DEDUP_TOL)?;
    let mut filter = vec![0.0; horizon];
    let mut smoother = vec![0.0; horizon];
    for r in 0..runs {
        let traj = simulate_episode(model, horizon, &mut RngStream::new(seed, r as u64))?;
        let errs = episode_errors(model, &graph, &traj)?;
        filter.iter_mut().zip(&errs.filter).for_each(|(acc, e)| *acc += e);
        smoother.iter_mut().zip(&errs.smoother).for_each(|(acc, e)| *acc += e);
    }
    let scale = 1.0 / runs as f64;
    filter.iter_mut().for_each(|v| *v *= scale);
    smoother.iter_mut().for_each(|v| *v *= scale);
    Ok(ErrorCurve {
        horizon,
        filter,
        smoother,
        runs,
        seed,
    })
}

/// Maps `(p1, p2, p3)` into the equilateral triangle with vertices
/// `(0, 0)`, `(1, 0)` and `(1/2, √3/2)` for states 1, 2 and 3.
pub fn barycentric_projection(p: &[f64]) -> (f64, f64) {
    (p[1] + 0.5 * p[2], 0.5 * 3f64.sqrt() * p[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// A node of `Π_k`.
    Node,
    /// The filter's conditional mean.
    FilterCme,
    /// The smoother's conditional mean.
    SmoothCme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexRow {
    pub belief: Vec<f64>,
    /// `None` unless `X = 3`.
    pub projection: Option<(f64, f64)>,
    pub filter_mass: f64,
    pub smooth_mass: f64,
    pub kind: RowKind,
    /// The row's belief is the adversary's actual belief at `k`.
    pub is_true_belief: bool,
}

impl SimplexRow {
    pub fn is_cme(&self) -> bool {
        self.kind != RowKind::Node
    }

    fn flags(&self) -> String {
        let mut flags = vec![match self.kind {
            RowKind::Node => "node",
            RowKind::FilterCme => "filter_cme",
            RowKind::SmoothCme => "smooth_cme",
        }];
        if self.is_true_belief {
            flags.push("true");
        }
        flags.join("|")
    }
}

/// Filter and smoother pmfs over `Π_k`, plus the two conditional means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPmfExport {
    pub k: usize,
    pub horizon: usize,
    pub rows: Vec<SimplexRow>,
}

impl SimplexPmfExport {
    pub fn node_rows(&self) -> impl Iterator<Item = &SimplexRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Node)
    }

    pub fn filter_support(&self) -> usize {
        self.node_rows().filter(|r| r.filter_mass > 0.0).count()
    }

    pub fn smooth_support(&self) -> usize {
        self.node_rows().filter(|r| r.smooth_mass > 0.0).count()
    }

    pub fn row(&self, kind: RowKind) -> Option<&SimplexRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// Columns `p1..pX,u,v,filter_mass,smooth_mass,flags`; `u, v` are empty
    /// when no projection is available.
    pub fn to_csv(&self) -> String {
        let dim = self.rows.first().map_or(3, |r| r.belief.len());
        let mut out = String::new();
        for i in 1..=dim {
            let _ = write!(out, "p{i},");
        }
        out.push_str("u,v,filter_mass,smooth_mass,flags\n");
        for r in &self.rows {
            for p in &r.belief {
                let _ = write!(out, "{p},");
            }
            match r.projection {
                Some((u, v)) => {
                    let _ = write!(out, "{u},{v},");
                }
                None => out.push_str(",,"),
            }
            let _ = writeln!(out, "{},{},{}", r.filter_mass, r.smooth_mass, r.flags());
        }
        out
    }
}

/// Exports the pmfs at time `k` for the full record in `traj` (`N` is its
/// horizon). Works for any `X`; the 2-D projection is only filled for `X = 3`.
pub fn export_simplex_pmf(model: &CaaModel, traj: &Trajectory, k: usize) -> Result<SimplexPmfExport> {
    let n = traj.horizon();
    if k > n {
        return Err(CaaError::InvalidInput(format!("k = {k} exceeds the horizon N = {n}")));
    }
    traj.check(model)?;
    let graph = expand_belief_graph(model, n, DEFAULT_DEDUP_TOL)?;
    let alphas = forward_pass(model, &graph, &traj.states, &traj.actions)?;
    let betas = backward_pass(model, &graph, &traj.states, &traj.actions)?;
    let gammas = smooth(&alphas, &betas)?;

    let truth = traj.beliefs.as_ref().map(|b| &b[k]);
    let project = |b: &Belief| (b.dim() == 3).then(|| barycentric_projection(b.as_slice()));
    let is_true = |b: &Belief| truth.is_some_and(|t| t.max_norm_distance(b) < graph.tolerance());

    let mut rows: Vec<SimplexRow> = graph
        .layer(k)
        .iter()
        .zip(alphas[k].mass.iter().zip(&gammas[k].mass))
        .map(|(b, (&fm, &sm))| SimplexRow {
            belief: b.as_slice().to_vec(),
            projection: project(b),
            filter_mass: fm,
            smooth_mass: sm,
            kind: RowKind::Node,
            is_true_belief: is_true(b),
        })
        .collect();
    for (kind, cme) in [
        (RowKind::FilterCme, posterior_mean(&alphas[k], &graph)),
        (RowKind::SmoothCme, posterior_mean(&gammas[k], &graph)),
    ] {
        rows.push(SimplexRow {
            projection: project(&cme),
            belief: cme.into_inner(),
            filter_mass: 0.0,
            smooth_mass: 0.0,
            kind,
            is_true_belief: false,
        });
    }
    Ok(SimplexPmfExport { k, horizon: n, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    Filter,
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMass {
    /// Node id within the layer (0-based, stable for a given model and `N`).
    pub id: usize,
    pub belief: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorStep {
    pub k: usize,
    pub nodes: Vec<NodeMass>,
    pub cme: Vec<f64>,
}

/// Per-step posterior written by `infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub mode: PosteriorMode,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub model_hash: String,
    pub steps: Vec<PosteriorStep>,
}

impl PosteriorReport {
    pub fn new(model: &CaaModel, graph: &BeliefGraph, mode: PosteriorMode, pmfs: &[PosteriorPmf]) -> Self {
        Self {
            mode,
            horizon: pmfs.len().saturating_sub(1),
            model_hash: model.model_hash(),
            steps: pmfs
                .iter()
                .map(|pmf| PosteriorStep {
                    k: pmf.layer,
                    nodes: graph
                        .layer(pmf.layer)
                        .iter()
                        .zip(&pmf.mass)
                        .enumerate()
                        .map(|(id, (b, &mass))| NodeMass {
                            id,
                            belief: b.as_slice().to_vec(),
                            mass,
                        })
                        .collect(),
                    cme: posterior_mean(pmf, graph).into_inner(),
                })
                .collect(),
        }
    }
}

/// Runs the requested estimator on `traj` and wraps the result.
pub fn infer(model: &CaaModel, traj: &Trajectory, mode: PosteriorMode) -> Result<(PosteriorReport, BeliefGraph)> {
    traj.check(model)?;
    let graph = expand_belief_graph(model, traj.horizon(), DEFAULT_DEDUP_TOL)?;
    let alphas = forward_pass(model, &graph, &traj.states, &traj.actions)?;
    let pmfs = match mode {
        PosteriorMode::Filter => alphas,
        PosteriorMode::Smoothed => {
            let betas = backward_pass(model, &graph, &traj.states, &traj.actions)?;
            smooth(&alphas, &betas)?
        }
    };
    Ok((PosteriorReport::new(model, &graph, mode, &pmfs), graph))
}

/// Largest total-variation gaps found by [`oracle_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub runs: usize,
    pub max_filter_tv: f64,
    pub max_smoother_tv: f64,
    /// `(run, k)` pairs whose gap exceeds the tolerance.
    pub failures: Vec<(usize, usize)>,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Simulates `runs` episodes and compares the filter and smoother with the
/// enumeration oracle at every `k`.
pub fn oracle_check(
    model: &CaaModel,
    horizon: usize,
    runs: usize,
    seed: u64,
    tol: f64,
    cap: u64,
) -> Result<OracleCheck> {
    let graph = expand_belief_graph(model, horizon, DEFAULT_DEDUP_TOL)?;
    let mut report = OracleCheck {
        runs,
        max_filter_tv: 0.0,
        max_smoother_tv: 0.0,
        failures: Vec::new(),
    };
    for r in 0..runs {
        let traj = simulate_episode(model, horizon, &mut RngStream::new(seed, r as u64))?;
        let (x, a) = (&traj.states, &traj.actions);
        let alphas = forward_pass(model, &graph, x, a)?;
        let gammas = smooth(&alphas, &backward_pass(model, &graph, x, a)?)?;
        for k in 0..=horizon {
            let of = enumerate_posterior(model, &graph, x, a, k, OracleMode::Filter, cap)?;
            let os = enumerate_posterior(model, &graph, x, a, k, OracleMode::Smoother, cap)?;
            let (tf, ts) = (of.total_variation(&alphas[k]), os.total_variation(&gammas[k]));
            report.max_filter_tv = report.max_filter_tv.max(tf);
            report.max_smoother_tv = report.max_smoother_tv.max(ts);
            if !(tf <= tol && ts <= tol) {
                report.failures.push((r, k));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_model, StochasticMatrix};

    #[test]
    fn projection_of_vertices_and_centroid() {
        assert_eq!(barycentric_projection(&[1.0, 0.0, 0.0]), (0.0, 0.0));
        assert_eq!(barycentric_projection(&[0.0, 1.0, 0.0]), (1.0, 0.0));
        let (u, v) = barycentric_projection(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert!((u - 0.5).abs() < 1e-15);
        assert!((v - 3f64.sqrt() / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_run_curve_is_reproducible() {
        let m = reference_model();
        let a = monte_carlo_errors(&m, 6, 1, 99).unwrap();
        assert_eq!(a, monte_carlo_errors(&m, 6, 1, 99).unwrap());
        assert_eq!(a.filter.len(), 6);
        assert!((a.filter[5] - a.smoother[5]).abs() <= 1e-12);
    }

    #[test]
    fn perfect_sensor_curve_is_zero() {
        let mut m = reference_model();
        m.observation = StochasticMatrix::identity(3);
        let c = monte_carlo_errors(&m, 6, 50, 1).unwrap();
        assert!(c.filter.iter().chain(&c.smoother).all(|&e| e == 0.0), "{c:?}");
    }

    #[test]
    fn csv_layouts() {
        let m = reference_model();
        let c = monte_carlo_errors(&m, 3, 2, 0).unwrap();
        let csv = c.to_csv();
        assert!(csv.starts_with("k,filter_err,smoother_err\n1,"));
        assert_eq!(csv.lines().count(), 4);

        let t = simulate_episode(&m, 4, &mut RngStream::new(0, 0)).unwrap();
        let e = export_simplex_pmf(&m, &t, 2).unwrap();
        let csv = e.to_csv();
        assert!(csv.starts_with("p1,p2,p3,u,v,filter_mass,smooth_mass,flags\n"));
        assert_eq!(csv.lines().count(), 1 + 9 + 2);
        assert_eq!(e.node_rows().filter(|r| r.is_true_belief).count(), 1);
        let fsum: f64 = e.rows.iter().map(|r| r.filter_mass).sum();
        let ssum: f64 = e.rows.iter().map(|r| r.smooth_mass).sum();
        assert!((fsum - 1.0).abs() < 1e-10 && (ssum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn export_without_projection_for_two_states() {
        let mut rng = RngStream::new(4, 4);
        let m = crate::battery::random_model(2, 2, 2, &mut rng);
        let t = simulate_episode(&m, 3, &mut rng).unwrap();
        let e = export_simplex_pmf(&m, &t, 3).unwrap();
        assert!(e.rows.iter().all(|r| r.projection.is_none()));
        assert!(e.to_csv().starts_with("p1,p2,u,v,"));
        assert!(export_simplex_pmf(&m, &t, 4).is_err());
    }

    #[test]
    fn infer_report_has_every_step() {
        let m = reference_model();
        let t = simulate_episode(&m, 4, &mut RngStream::new(2, 0)).unwrap();
        let (rep, g) = infer(&m, &t.public(), PosteriorMode::Smoothed).unwrap();
        assert_eq!(rep.horizon, 4);
        assert_eq!(rep.steps.len(), 5);
        assert_eq!(rep.steps[3].nodes.len(), g.layer(3).len());
        assert_eq!(rep.model_hash, m.model_hash());
    }

    #[test]
    fn oracle_check_passes_on_reference_model() {
        let r = oracle_check(&reference_model(), 4, 3, 7, 1e-10, 1_000_000).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
