//! Action policies `G_{π,a} = p(a | π)`.
//!
//! Policies are region based so that they can be written to the model file
//! and evaluated at any belief. Regions are closed half-spaces `wᵀπ ≥ t`
//! tested in order; the first matching rule fires and a final catch-all
//! covers the rest of the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{CaaError, Result};
use crate::model::{Belief, StochasticMatrix, Violation, STOCHASTIC_TOL};

/// The closed half-space `{π : normalᵀπ ≥ threshold}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub threshold: f64,
}

impl Halfspace {
    #[inline]
    pub fn contains(&self, belief: &[f64]) -> bool {
        let dot: f64 = self.normal.iter().zip(belief).map(|(w, p)| w * p).sum();
        dot >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    pub region: Halfspace,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedRule {
    pub region: Halfspace,
    pub pmf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Deterministic: the first rule whose region contains the belief picks
    /// the action, `fallback` otherwise.
    Threshold {
        rules: Vec<ThresholdRule>,
        fallback: usize,
        num_actions: usize,
    },
    /// Randomized: the first matching region selects an action pmf.
    Tabulated {
        rules: Vec<TabulatedRule>,
        fallback: Vec<f64>,
    },
    /// Adversary control policy `C` followed by our noisy observation `D` of
    /// the action: `G_{π,a} = Σ_u D_{u,a} C_{π,u}`.
    Composed {
        inner: Box<Policy>,
        channel: StochasticMatrix,
    },
}

impl Policy {
    /// Always emits `action`.
    pub fn constant(action: usize, num_actions: usize) -> Self {
        Policy::Threshold {
            rules: Vec::new(),
            fallback: action,
            num_actions,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Policy::Threshold { num_actions, .. } => *num_actions,
            Policy::Tabulated { fallback, .. } => fallback.len(),
            Policy::Composed { channel, .. } => channel.cols(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Policy::Threshold { .. })
    }

    /// Action pmf at `belief`.
    pub fn pmf(&self, belief: &[f64]) -> Vec<f64> {
        match self {
            Policy::Threshold {
                rules,
                fallback,
                num_actions,
            } => {
                let mut out = vec![0.0; *num_actions];
                out[select_action(rules, *fallback, belief)] = 1.0;
                out
            }
            Policy::Tabulated { rules, fallback } => rules
                .iter()
                .find(|r| r.region.contains(belief))
                .map_or(fallback, |r| &r.pmf)
                .clone(),
            Policy::Composed { inner, channel } => {
                let inner_pmf = inner.pmf(belief);
                (0..channel.cols())
                    .map(|a| {
                        inner_pmf
                            .iter()
                            .enumerate()
                            .map(|(u, c)| channel.get(u, a) * c)
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// `G_{belief, action}` without materializing the full pmf where possible.
    pub fn probability(&self, belief: &[f64], action: usize) -> f64 {
        match self {
            Policy::Threshold {
                rules, fallback, ..
            } => {
                if select_action(rules, *fallback, belief) == action {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::Tabulated { rules, fallback } => {
                rules
                    .iter()
                    .find(|r| r.region.contains(belief))
                    .map_or(fallback, |r| &r.pmf)[action]
            }
            Policy::Composed { .. } => self.pmf(belief)[action],
        }
    }

    pub(crate) fn check(&self, num_states: usize, path: &str, out: &mut Vec<Violation>) {
        let check_region = |region: &Halfspace, at: String, out: &mut Vec<Violation>| {
            if region.normal.len() != num_states {
                out.push(Violation::new(
                    "policy",
                    format!(
                        "{at}: normal vector has {} entries, expected X = {num_states}",
                        region.normal.len()
                    ),
                ));
            }
            if region.normal.iter().any(|w| !w.is_finite()) || !region.threshold.is_finite() {
                out.push(Violation::new("policy", format!("{at}: non-finite rule coefficient")));
            }
        };
        match self {
            Policy::Threshold {
                rules,
                fallback,
                num_actions,
            } => {
                if *num_actions == 0 {
                    out.push(Violation::new("policy", format!("{path}: no actions")));
                }
                for (i, rule) in rules.iter().enumerate() {
                    let at = format!("{path}.rules[{}]", i + 1);
                    check_region(&rule.region, at.clone(), out);
                    if rule.action >= *num_actions {
                        out.push(Violation::new(
                            "policy",
                            format!("{at}: action {} outside 1..={num_actions}", rule.action + 1),
                        ));
                    }
                }
                if *fallback >= *num_actions {
                    out.push(Violation::new(
                        "policy",
                        format!("{path}: catch-all action {} outside 1..={num_actions}", fallback + 1),
                    ));
                }
            }
            Policy::Tabulated { rules, fallback } => {
                let a = fallback.len();
                if a == 0 {
                    out.push(Violation::new("policy", format!("{path}: no actions")));
                }
                let check_pmf = |pmf: &[f64], at: &str, out: &mut Vec<Violation>| {
                    if pmf.len() != a {
                        out.push(Violation::new(
                            "policy",
                            format!("{at}: pmf has {} entries, expected {a}", pmf.len()),
                        ));
                    }
                    if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        out.push(Violation::new("policy", format!("{at}: pmf has a negative entry")));
                    }
                    let sum: f64 = pmf.iter().sum();
                    if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                        out.push(Violation::new("policy", format!("{at}: pmf sums to {sum}")));
                    }
                };
                for (i, rule) in rules.iter().enumerate() {
                    let at = format!("{path}.rules[{}]", i + 1);
                    check_region(&rule.region, at.clone(), out);
                    check_pmf(&rule.pmf, &at, out);
                }
                check_pmf(fallback, &format!("{path}.catch-all"), out);
            }
            Policy::Composed { inner, channel } => {
                inner.check(num_states, &format!("{path}.inner"), out);
                if channel.rows() != inner.num_actions() || channel.cols() != channel.rows() {
                    out.push(Violation::new(
                        "policy",
                        format!(
                            "{path}.D is {}x{}, expected {}x{}",
                            channel.rows(),
                            channel.cols(),
                            inner.num_actions(),
                            inner.num_actions()
                        ),
                    ));
                }
                channel.check_stochastic(&format!("{path}.D"), out);
                for v in out.iter_mut().filter(|v| v.field.starts_with(path)) {
                    v.field = "policy".into();
                }
            }
        }
    }

    pub(crate) fn renormalize(&mut self) {
        let norm = |pmf: &mut Vec<f64>| crate::model::rescale_to_unit_sum(pmf);
        match self {
            Policy::Threshold { .. } => {}
            Policy::Tabulated { rules, fallback } => {
                rules.iter_mut().for_each(|r| norm(&mut r.pmf));
                norm(fallback);
            }
            Policy::Composed { inner, channel } => {
                inner.renormalize();
                channel.renormalize_rows();
            }
        }
    }

    /// Relabels states in every normal vector so that old state `i` becomes
    /// `perm[i]`.
    pub fn permute_states(&self, perm: &[usize]) -> Self {
        let permute = |h: &Halfspace| {
            let mut normal = vec![0.0; h.normal.len()];
            for (i, &w) in h.normal.iter().enumerate() {
                normal[perm[i]] = w;
            }
            Halfspace {
                normal,
                threshold: h.threshold,
            }
        };
        match self {
            Policy::Threshold {
                rules,
                fallback,
                num_actions,
            } => Policy::Threshold {
                rules: rules
                    .iter()
                    .map(|r| ThresholdRule {
                        region: permute(&r.region),
                        action: r.action,
                    })
                    .collect(),
                fallback: *fallback,
                num_actions: *num_actions,
            },
            Policy::Tabulated { rules, fallback } => Policy::Tabulated {
                rules: rules
                    .iter()
                    .map(|r| TabulatedRule {
                        region: permute(&r.region),
                        pmf: r.pmf.clone(),
                    })
                    .collect(),
                fallback: fallback.clone(),
            },
            Policy::Composed { inner, channel } => Policy::Composed {
                inner: Box::new(inner.permute_states(perm)),
                channel: channel.clone(),
            },
        }
    }

    pub fn to_spec(&self) -> PolicySpec {
        match self {
            Policy::Threshold {
                rules, fallback, ..
            } => PolicySpec::Threshold {
                rules: rules
                    .iter()
                    .map(|r| ThresholdRuleSpec {
                        w: Some(r.region.normal.clone()),
                        t: Some(r.region.threshold),
                        action: r.action + 1,
                    })
                    .chain(std::iter::once(ThresholdRuleSpec {
                        w: None,
                        t: None,
                        action: fallback + 1,
                    }))
                    .collect(),
            },
            Policy::Tabulated { rules, fallback } => PolicySpec::Tabulated {
                rules: rules
                    .iter()
                    .map(|r| TabulatedRuleSpec {
                        w: Some(r.region.normal.clone()),
                        t: Some(r.region.threshold),
                        pmf: r.pmf.clone(),
                    })
                    .chain(std::iter::once(TabulatedRuleSpec {
                        w: None,
                        t: None,
                        pmf: fallback.clone(),
                    }))
                    .collect(),
            },
            Policy::Composed { inner, channel } => PolicySpec::Composed {
                inner: Box::new(inner.to_spec()),
                channel: channel.to_rows(),
            },
        }
    }
}

#[inline]
fn select_action(rules: &[ThresholdRule], fallback: usize, belief: &[f64]) -> usize {
    rules
        .iter()
        .find(|r| r.region.contains(belief))
        .map_or(fallback, |r| r.action)
}

/// `G_{π,·}` for a belief.
pub fn policy_pmf(policy: &Policy, belief: &Belief) -> Vec<f64> {
    policy.pmf(belief.as_slice())
}

/// Wraps a control policy `C` with a row-stochastic action-observation
/// channel `D`.
pub fn compose_policy(inner: Policy, channel: StochasticMatrix) -> Result<Policy> {
    let a = inner.num_actions();
    let mut violations = Vec::new();
    if channel.rows() != a || channel.cols() != a {
        violations.push(Violation::new(
            "D",
            format!("D is {}x{}, expected {a}x{a}", channel.rows(), channel.cols()),
        ));
    }
    channel.check_stochastic("D", &mut violations);
    if !violations.is_empty() {
        return Err(CaaError::Validation(crate::model::ValidationReport { violations }));
    }
    Ok(Policy::Composed {
        inner: Box::new(inner),
        channel,
    })
}

/// Threshold rule in the model file. The last rule of a list is the
/// catch-all and carries no `w`/`t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRuleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub action: usize,
}

/// Tabulated rule in the model file; `pmf` has one entry per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedRuleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub pmf: Vec<f64>,
}

/// Serialized policy, tagged by `kind`. Actions are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicySpec {
    Threshold {
        rules: Vec<ThresholdRuleSpec>,
    },
    Tabulated {
        rules: Vec<TabulatedRuleSpec>,
    },
    Composed {
        inner: Box<PolicySpec>,
        #[serde(rename = "D")]
        channel: Vec<Vec<f64>>,
    },
}

/// Splits `(w, t)` pairs into half-spaces for every rule but the last, which
/// must be the catch-all.
fn regions(rules: &[(Option<Vec<f64>>, Option<f64>)], path: &str) -> Result<Vec<Halfspace>> {
    let (last, body) = rules.split_last().ok_or_else(|| {
        CaaError::Parse(format!("{path}.rules: at least the catch-all rule is required"))
    })?;
    if last.0.is_some() || last.1.is_some() {
        return Err(CaaError::Parse(format!(
            "{path}.rules: the last rule must be a catch-all without `w` and `t`"
        )));
    }
    body.iter()
        .enumerate()
        .map(|(i, r)| match r {
            (Some(w), Some(t)) => Ok(Halfspace {
                normal: w.clone(),
                threshold: *t,
            }),
            _ => Err(CaaError::Parse(format!(
                "{path}.rules[{}]: missing `w` or `t` (only the last rule may be a catch-all)",
                i + 1
            ))),
        })
        .collect()
}

impl PolicySpec {
    /// Converts to a [`Policy`] with 0-based actions. `num_actions` is the
    /// model's declared `A`.
    pub fn into_policy(self, num_actions: usize) -> Result<Policy> {
        self.convert(num_actions, "policy")
    }

    fn convert(self, num_actions: usize, path: &str) -> Result<Policy> {
        match self {
            PolicySpec::Threshold { rules } => {
                let pairs: Vec<_> = rules.iter().map(|r| (r.w.clone(), r.t)).collect();
                let regions = regions(&pairs, path)?;
                let mut actions = Vec::with_capacity(rules.len());
                for (i, r) in rules.iter().enumerate() {
                    actions.push(r.action.checked_sub(1).ok_or_else(|| {
                        CaaError::Parse(format!("{path}.rules[{}]: actions are 1-based, got 0", i + 1))
                    })?);
                }
                let fallback = actions.pop().expect("catch-all present");
                Ok(Policy::Threshold {
                    rules: regions
                        .into_iter()
                        .zip(actions)
                        .map(|(region, action)| ThresholdRule { region, action })
                        .collect(),
                    fallback,
                    num_actions,
                })
            }
            PolicySpec::Tabulated { mut rules } => {
                let pairs: Vec<_> = rules.iter().map(|r| (r.w.clone(), r.t)).collect();
                let regions = regions(&pairs, path)?;
                let fallback = rules.pop().expect("catch-all present").pmf;
                Ok(Policy::Tabulated {
                    rules: regions
                        .into_iter()
                        .zip(rules)
                        .map(|(region, r)| TabulatedRule { region, pmf: r.pmf })
                        .collect(),
                    fallback,
                })
            }
            PolicySpec::Composed { inner, channel } => {
                let inner = inner.convert(num_actions, &format!("{path}.inner"))?;
                Ok(Policy::Composed {
                    inner: Box::new(inner),
                    channel: StochasticMatrix::from_rows(channel)
                        .map_err(|e| CaaError::Parse(format!("{path}.D: {e}")))?,
                })
            }
        }
    }
}
