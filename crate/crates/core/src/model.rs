//! Domain types for discrete counter-adversarial systems and the JSON model
//! file that describes them.
//!
//! States, observations and actions are 0-based everywhere inside the crate.
//! The model file, trajectory file and every user-facing message use 1-based
//! indices.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CaaError, Result};
use crate::policy::{Policy, PolicySpec};

/// Absolute tolerance on every row sum and on belief normalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Divides by the sum unless it is already one up to summation rounding,
/// so that renormalizing is idempotent and file round-trips are exact.
pub(crate) fn rescale_to_unit_sum(values: &mut [f64]) {
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > 2.0 * values.len() as f64 * f64::EPSILON {
        values.iter_mut().for_each(|v| *v /= sum);
    }
}

/// A point on the probability simplex over the `X` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Validates `weights` and renormalizes them to sum to one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mut checked = Self::validated(weights)?;
        rescale_to_unit_sum(&mut checked.0);
        Ok(checked)
    }

    /// Validates `weights` and keeps them bit-for-bit.
    pub fn validated(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CaaError::InvalidInput("belief must have at least one entry".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(CaaError::InvalidInput(format!(
                "belief entry {} is {w}, expected a nonnegative number",
                i + 1
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(CaaError::InvalidInput(format!("belief sums to {sum}, expected 1")));
        }
        Ok(Self(weights))
    }

    /// Wraps `weights` without any check. Used for intermediate results that
    /// are normalized by construction, and by tests that need an invalid belief.
    pub fn from_weights_unchecked(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    /// The `i`-th vertex of the simplex (0-based).
    pub fn vertex(dim: usize, i: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[i] = 1.0;
        Self(w)
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Largest absolute componentwise difference.
    pub fn max_norm_distance(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn euclidean_distance(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense row-major matrix whose rows are meant to be probability vectors.
///
/// Construction only checks that the shape is rectangular; stochasticity is
/// checked by [`validate_model`] so that invalid inputs can be reported
/// rather than rejected one at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// `P`: entry `(i, j)` is `Pr(x_{k+1} = j | x_k = i)`.
pub type TransitionKernel = StochasticMatrix;
/// `B`: entry `(i, j)` is `Pr(y_k = j | x_k = i)`.
pub type ObservationKernel = StochasticMatrix;

impl StochasticMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(CaaError::InvalidInput("matrix must be non-empty".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
            return Err(CaaError::InvalidInput(format!(
                "row {} has {} entries, expected {ncols}",
                i + 1,
                rows[i].len()
            )));
        }
        Ok(Self {
            rows: nrows,
            cols: ncols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    /// Every row equal to `1 / cols`.
    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![1.0 / cols as f64; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// Appends one violation per negative/out-of-range entry and per row whose
    /// sum is off by more than [`STOCHASTIC_TOL`].
    pub(crate) fn check_stochastic(&self, name: &str, out: &mut Vec<Violation>) {
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    let what = if v < 0.0 { "is negative" } else { "is outside [0, 1]" };
                    out.push(Violation::new(
                        name,
                        format!("entry ({}, {}) of {name} {what} ({v})", i + 1, j + 1),
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                out.push(Violation::new(name, format!("row {} of {name} sums to {sum}", i + 1)));
            }
        }
    }

    pub(crate) fn renormalize_rows(&mut self) {
        for i in 0..self.rows {
                rescale_to_unit_sum(&mut self.data[i * self.cols..(i + 1) * self.cols]);
        }
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Model component the violation refers to (`P`, `B`, `pi0`, `policy`, ...).
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Every invariant a model violates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<&str> = self.violations.iter().map(|v| v.message.as_str()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// A discrete counter-adversarial system: our Markov chain `P`, the
/// adversary's sensor `B`, its (possibly randomized) action policy `G`, and
/// the adversary's initial belief, which is also the law of `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaaModel {
    pub transition: TransitionKernel,
    pub observation: ObservationKernel,
    pub policy: Policy,
    pub initial_belief: Belief,
}

impl CaaModel {
    /// Builds a model, validating every invariant and renormalizing rows that
    /// are stochastic within tolerance.
    pub fn new(
        transition: TransitionKernel,
        observation: ObservationKernel,
        policy: Policy,
        initial_belief: Belief,
    ) -> Result<Self> {
        let mut model = Self {
            transition,
            observation,
            policy,
            initial_belief,
        };
        validate_model(&model).map_err(CaaError::Validation)?;
        model.renormalize();
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.transition.rows()
    }

    pub fn num_observations(&self) -> usize {
        self.observation.cols()
    }

    pub fn num_actions(&self) -> usize {
        self.policy.num_actions()
    }

    fn renormalize(&mut self) {
        self.transition.renormalize_rows();
        self.observation.renormalize_rows();
        self.policy.renormalize();
        rescale_to_unit_sum(&mut self.initial_belief.0);
    }

    /// File representation with 1-based action indices.
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            num_states: self.num_states(),
            num_observations: self.num_observations(),
            num_actions: self.num_actions(),
            transition: self.transition.to_rows(),
            observation: self.observation.to_rows(),
            initial_belief: self.initial_belief.as_slice().to_vec(),
            policy: self.policy.to_spec(),
        }
    }

    /// Hex SHA-256 of the canonical JSON serialization of the model.
    pub fn model_hash(&self) -> String {
        let canonical =
            serde_json::to_string(&self.to_file()).expect("model file serialization cannot fail");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Relabels states so that old state `i` becomes `perm[i]`.
    pub fn permute_states(&self, perm: &[usize]) -> Self {
        let n = self.num_states();
        let mut transition = self.transition.clone();
        for i in 0..n {
            for j in 0..n {
                transition.set(perm[i], perm[j], self.transition.get(i, j));
            }
        }
        let mut observation = self.observation.clone();
        for (i, &pi) in perm.iter().enumerate() {
            for y in 0..self.num_observations() {
                observation.set(pi, y, self.observation.get(i, y));
            }
        }
        Self {
            transition,
            observation,
            policy: self.policy.permute_states(perm),
            initial_belief: permute_belief(&self.initial_belief, perm),
        }
    }
}

/// Moves entry `i` of `belief` to position `perm[i]`.
pub fn permute_belief(belief: &Belief, perm: &[usize]) -> Belief {
    let mut w = vec![0.0; belief.dim()];
    for (i, &v) in belief.as_slice().iter().enumerate() {
        w[perm[i]] = v;
    }
    Belief(w)
}

/// Checks every model invariant and reports all violations at once.
pub fn validate_model(model: &CaaModel) -> std::result::Result<(), ValidationReport> {
    let mut violations = Vec::new();
    let x = model.transition.rows();

    if model.transition.cols() != x {
        violations.push(Violation::new(
            "P",
            format!("P is {}x{}, expected a square matrix", x, model.transition.cols()),
        ));
    }
    if model.observation.rows() != x {
        violations.push(Violation::new(
            "B",
            format!("B has {} rows, expected X = {x}", model.observation.rows()),
        ));
    }
    if model.initial_belief.dim() != x {
        violations.push(Violation::new(
            "pi0",
            format!("pi0 has {} entries, expected X = {x}", model.initial_belief.dim()),
        ));
    }

    model.transition.check_stochastic("P", &mut violations);
    model.observation.check_stochastic("B", &mut violations);

    let pi0 = model.initial_belief.as_slice();
    for (i, &w) in pi0.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            violations.push(Violation::new("pi0", format!("entry {} of pi0 is negative ({w})", i + 1)));
        }
    }
    let sum: f64 = pi0.iter().sum();
    if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
        violations.push(Violation::new("pi0", format!("pi0 sums to {sum}")));
    }

    model.policy.check(x, "policy", &mut violations);

    if violations.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { violations })
    }
}

/// On-disk JSON model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "X")]
    pub num_states: usize,
    #[serde(rename = "Y")]
    pub num_observations: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "P")]
    pub transition: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub observation: Vec<Vec<f64>>,
    #[serde(rename = "pi0")]
    pub initial_belief: Vec<f64>,
    pub policy: PolicySpec,
}

impl ModelFile {
    /// Checks declared dimensions against the arrays, converts to 0-based
    /// indices and validates.
    pub fn into_model(self) -> Result<CaaModel> {
        let (x, y, a) = (self.num_states, self.num_observations, self.num_actions);
        let mut violations = Vec::new();
        if x == 0 || y == 0 || a == 0 {
            violations.push(Violation::new("X", "X, Y and A must be positive"));
        }
        check_shape("P", &self.transition, x, x, &mut violations);
        check_shape("B", &self.observation, x, y, &mut violations);
        if self.initial_belief.len() != x {
            violations.push(Violation::new(
                "pi0",
                format!("pi0 has {} entries, expected X = {x}", self.initial_belief.len()),
            ));
        }
        if !violations.is_empty() {
            return Err(CaaError::Validation(ValidationReport { violations }));
        }

        let policy = self.policy.into_policy(a)?;
        if policy.num_actions() != a {
            return Err(CaaError::Validation(ValidationReport {
                violations: vec![Violation::new(
                    "policy",
                    format!("policy emits {} actions, expected A = {a}", policy.num_actions()),
                )],
            }));
        }
        CaaModel::new(
            StochasticMatrix::from_rows(self.transition)?,
            StochasticMatrix::from_rows(self.observation)?,
            policy,
            Belief(self.initial_belief),
        )
    }
}

fn check_shape(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize, out: &mut Vec<Violation>) {
    let actual_cols = rows.first().map_or(0, Vec::len);
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        out.push(Violation::new(
            name,
            format!(
                "{name} is {}x{actual_cols}, expected {nrows}x{ncols}",
                rows.len()
            ),
        ));
    }
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> Result<CaaModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| CaaError::Parse(format!("model file: {e}")))?;
    file.into_model()
}

/// Reads, parses and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<CaaModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot read model {}: {e}", path.display()))
    })?;
    parse_model(&text)
}

/// The three-state system used in the numerical experiments: action 1 when
/// the first belief component is at least 0.5, action 2 otherwise.
pub fn reference_model() -> CaaModel {
    use crate::policy::{Halfspace, ThresholdRule};
    CaaModel::new(
        StochasticMatrix::from_rows(vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.4, 0.5],
            vec![0.1, 0.1, 0.8],
        ])
        .unwrap(),
        StochasticMatrix::from_rows(vec![
            vec![0.3, 0.3, 0.4],
            vec![0.1, 0.8, 0.1],
            vec![0.1, 0.4, 0.5],
        ])
        .unwrap(),
        Policy::Threshold {
            rules: vec![ThresholdRule {
                region: Halfspace {
                    normal: vec![1.0, 0.0, 0.0],
                    threshold: 0.5,
                },
                action: 0,
            }],
            fallback: 1,
            num_actions: 2,
        },
        Belief::vertex(3, 0),
    )
    .expect("built-in model is valid")
}
