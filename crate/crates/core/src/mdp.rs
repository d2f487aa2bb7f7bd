//! Finite linear MDPs, linear softmax policies and trajectory sampling.
//!
//! All dense tables are stored row-major. A state-action pair `(s, a)` is
//! vectorized as `x_sa[i * k + a] = s[i]`, so a `d x k` weight matrix stored
//! row-major is already in the same coordinates as `x_sa`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const STOCHASTIC_TOL: f64 = 1e-12;

/// Tolerance used when validating generated low-rank MDPs.
pub const GENERATED_VALIDATION_TOL: f64 = 1e-9;
/// Tolerance used when validating tabular MDPs.
pub const TABULAR_VALIDATION_TOL: f64 = 1e-12;

/// A finite MDP whose states are observed through feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    features: Vec<f64>,
    transitions: Vec<f64>,
    reward_means: Vec<f64>,
    gamma: f64,
}

impl Mdp {
    /// Builds an MDP and checks every structural invariant: stochastic
    /// transition rows, reward means in `[0, 1]`, feature norms in `[1/2, 1]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        features: Vec<f64>,
        transitions: Vec<f64>,
        reward_means: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::from_raw(num_states, num_actions, features, transitions, reward_means, gamma)?;
        let report = mdp.structural_violations();
        if let Some(msg) = report {
            return Err(Error::Construction(msg));
        }
        Ok(mdp)
    }

    /// Shape-checked constructor that does not enforce the value invariants.
    /// Used when loading files so that the validator can report problems.
    pub(crate) fn from_raw(
        num_states: usize,
        num_actions: usize,
        features: Vec<f64>,
        transitions: Vec<f64>,
        reward_means: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Construction("need at least one state and one action".into()));
        }
        if features.is_empty() || features.len() % num_states != 0 {
            return Err(Error::Construction(format!(
                "features length {} is not a positive multiple of {num_states}",
                features.len()
            )));
        }
        let dim = features.len() / num_states;
        if transitions.len() != num_states * num_actions * num_states {
            return Err(Error::Construction(format!(
                "transitions length {} != |S|*k*|S| = {}",
                transitions.len(),
                num_states * num_actions * num_states
            )));
        }
        if reward_means.len() != num_states * num_actions {
            return Err(Error::Construction(format!(
                "reward_means length {} != |S|*k = {}",
                reward_means.len(),
                num_states * num_actions
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Construction(format!("gamma {gamma} outside (0, 1)")));
        }
        if features.iter().chain(&transitions).chain(&reward_means).any(|x| !x.is_finite()) {
            return Err(Error::Construction("non-finite entry".into()));
        }
        Ok(Self { num_states, num_actions, dim, features, transitions, reward_means, gamma })
    }

    fn structural_violations(&self) -> Option<String> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.next_distribution(s, a);
                if row.iter().any(|&p| p < 0.0) {
                    return Some(format!("negative transition probability at (s={s}, a={a})"));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Some(format!("transition row (s={s}, a={a}) sums to {total}"));
                }
                let r = self.reward_mean(s, a);
                if !(0.0..=1.0).contains(&r) {
                    return Some(format!("reward mean {r} at (s={s}, a={a}) outside [0, 1]"));
                }
            }
            let norm = norm2(self.feature(s));
            if !feature_norm_ok(norm) {
                return Some(format!("feature norm {norm} of state {s} outside [1/2, 1]"));
            }
        }
        None
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Feature vector of state `s`.
    pub fn feature(&self, s: usize) -> &[f64] {
        &self.features[s * self.dim..(s + 1) * self.dim]
    }

    /// `P(. | s, a)`.
    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        &self.transitions[start..start + n]
    }

    pub fn reward_mean(&self, s: usize, a: usize) -> f64 {
        self.reward_means[s * self.num_actions + a]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn reward_means(&self) -> &[f64] {
        &self.reward_means
    }

    /// `x_sa` for the given state index.
    pub fn state_action_vector(&self, s: usize, a: usize) -> Vec<f64> {
        vectorize(self.feature(s), a, self.num_actions).expect("action index in range")
    }

    /// Replaces one transition row. Used to build fault-injection fixtures.
    pub fn with_transition_row(mut self, s: usize, a: usize, row: &[f64]) -> Result<Self> {
        if row.len() != self.num_states {
            return Err(Error::Argument("row length mismatch".into()));
        }
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        self.transitions[start..start + n].copy_from_slice(row);
        Ok(self)
    }
}

pub(crate) fn feature_norm_ok(norm: f64) -> bool {
    (0.5 - STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&norm)
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Certificate `(M, y)` for the linear MDP property: `E[r | s, a] = x_sa . y`
/// and `E[s' | s, a] = M x_sa`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMdpParams {
    /// Row-major `d x (d k)`.
    pub m_matrix: Vec<f64>,
    /// Length `d k`.
    pub y_vector: Vec<f64>,
}

/// The `d x k` actor weight matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyWeights {
    dim: usize,
    num_actions: usize,
    w: Vec<f64>,
}

impl PolicyWeights {
    pub fn zeros(dim: usize, num_actions: usize) -> Self {
        Self { dim, num_actions, w: vec![0.0; dim * num_actions] }
    }

    pub fn from_vec(dim: usize, num_actions: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != dim * num_actions {
            return Err(Error::Argument(format!(
                "weight length {} != d*k = {}",
                w.len(),
                dim * num_actions
            )));
        }
        Ok(Self { dim, num_actions, w })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    /// Pre-softmax value `s^T W e_a`.
    pub fn logit(&self, state_features: &[f64], a: usize) -> f64 {
        let k = self.num_actions;
        state_features.iter().enumerate().map(|(i, si)| si * self.w[i * k + a]).sum()
    }
}

/// Per-state action distributions, row-major `|S| x k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || probs.is_empty() || probs.len() % num_actions != 0 {
            return Err(Error::Argument("policy table shape".into()));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Argument(format!("policy row {s} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Argument(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Self { num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self { num_actions, probs: vec![p; num_states * num_actions] }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy (nats) of row `s`.
    pub fn entropy(&self, s: usize) -> f64 {
        -self.row(s).iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// A probability distribution over states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("empty distribution".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Argument("distribution has a negative or non-finite entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Argument(format!("distribution sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Clamps roundoff-level negatives and renormalizes.
    pub(crate) fn from_numeric(mut probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < -1e-10 || !p.is_finite()) {
            return Err(Error::Numerical("distribution solve produced negative mass".into()));
        }
        for p in probs.iter_mut() {
            *p = p.max(0.0);
        }
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
        Self::new(probs)
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn dirac(n: usize, s: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[s] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Row-wise unrolling of `s e_a^T`: `x[i * k + a] = s[i]`, zeros elsewhere.
pub fn vectorize(state_features: &[f64], action: usize, num_actions: usize) -> Result<Vec<f64>> {
    if action >= num_actions {
        return Err(Error::Argument(format!("action {action} out of range for k = {num_actions}")));
    }
    let mut x = vec![0.0; state_features.len() * num_actions];
    for (i, si) in state_features.iter().enumerate() {
        x[i * num_actions + action] = *si;
    }
    Ok(x)
}

/// Linear softmax policy `pi(s, a) ∝ exp(s^T W e_a)`, evaluated in log space.
pub fn softmax_policy(weights: &PolicyWeights, mdp: &Mdp) -> Result<Policy> {
    if weights.dim() != mdp.dim() || weights.num_actions() != mdp.num_actions() {
        return Err(Error::Argument("weight shape does not match MDP".into()));
    }
    if weights.as_slice().iter().any(|w| !w.is_finite()) {
        return Err(Error::Argument("non-finite policy weight".into()));
    }
    let k = mdp.num_actions();
    let mut probs = Vec::with_capacity(mdp.num_states() * k);
    let mut logits = vec![0.0; k];
    for s in 0..mdp.num_states() {
        let feat = mdp.feature(s);
        for (a, l) in logits.iter_mut().enumerate() {
            *l = weights.logit(feat, a);
        }
        softmax_row(&logits, &mut probs);
    }
    Ok(Policy { num_actions: k, probs })
}

/// Appends `softmax(logits)` to `out`.
pub(crate) fn softmax_row(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start = out.len();
    let mut total = 0.0;
    for l in logits {
        let e = (l - max).exp();
        total += e;
        out.push(e);
    }
    for p in &mut out[start..] {
        *p /= total;
    }
}

/// Softmax of an arbitrary `|S| x k` logit table.
pub fn softmax_table(num_actions: usize, logits: &[f64]) -> Result<Policy> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Argument("non-finite logit".into()));
    }
    let mut probs = Vec::with_capacity(logits.len());
    for row in logits.chunks(num_actions) {
        softmax_row(row, &mut probs);
    }
    Policy::new(num_actions, probs)
}

/// One environment transition drawn by [`sample_step`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub action: usize,
    pub reward: u8,
    pub next_state: usize,
}

/// Draws `a ~ pi(s, .)`, `r ~ Bernoulli(mean(s, a))`, `s' ~ P(. | s, a)`.
/// Consumes exactly three uniform draws, in that order.
pub fn sample_step<R: Rng + ?Sized>(mdp: &Mdp, policy: &Policy, state: usize, rng: &mut R) -> Step {
    let u_action: f64 = rng.random();
    let u_reward: f64 = rng.random();
    let u_next: f64 = rng.random();
    let action = inverse_cdf(policy.row(state), u_action);
    let reward = u8::from(u_reward < mdp.reward_mean(state, action));
    let next_state = inverse_cdf(mdp.next_distribution(state, action), u_next);
    Step { action, reward, next_state }
}

pub(crate) fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // roundoff: cumulative sum fell short of 1
    last_positive
}

/// Outcome of [`validate_linear`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tol: f64,
    pub max_reward_residual: f64,
    pub max_transition_residual: f64,
    pub max_stochasticity_error: f64,
    pub feature_norm_violations: Vec<usize>,
    pub stochasticity_violations: Vec<(usize, usize)>,
    pub reward_range_violations: Vec<(usize, usize)>,
    pub passed: bool,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "validation {} (tol {:e})", if self.passed { "PASS" } else { "FAIL" }, self.tol)?;
        writeln!(f, "  max reward-linearity residual     {:e}", self.max_reward_residual)?;
        writeln!(f, "  max transition-linearity residual {:e}", self.max_transition_residual)?;
        writeln!(f, "  max stochasticity error           {:e}", self.max_stochasticity_error)?;
        writeln!(f, "  feature norm violations           {:?}", self.feature_norm_violations)?;
        writeln!(f, "  stochasticity violations          {:?}", self.stochasticity_violations)?;
        write!(f, "  reward range violations           {:?}", self.reward_range_violations)
    }
}

/// Checks the linear MDP certificate and the structural invariants.
pub fn validate_linear(mdp: &Mdp, params: &LinearMdpParams, tol: f64) -> ValidationReport {
    let d = mdp.dim();
    let k = mdp.num_actions();
    let dk = d * k;
    let mut report = ValidationReport {
        tol,
        max_reward_residual: 0.0,
        max_transition_residual: 0.0,
        max_stochasticity_error: 0.0,
        feature_norm_violations: Vec::new(),
        stochasticity_violations: Vec::new(),
        reward_range_violations: Vec::new(),
        passed: false,
    };
    let shapes_ok = params.m_matrix.len() == d * dk && params.y_vector.len() == dk;
    if !shapes_ok {
        report.max_reward_residual = f64::INFINITY;
        report.max_transition_residual = f64::INFINITY;
    }
    let mut expected_next = vec![0.0; d];
    for s in 0..mdp.num_states() {
        if !feature_norm_ok(norm2(mdp.feature(s))) {
            report.feature_norm_violations.push(s);
        }
        for a in 0..k {
            let row = mdp.next_distribution(s, a);
            let total: f64 = row.iter().sum();
            let err = (total - 1.0).abs();
            report.max_stochasticity_error = report.max_stochasticity_error.max(err);
            if err > tol || row.iter().any(|&p| p < 0.0) {
                report.stochasticity_violations.push((s, a));
            }
            let r = mdp.reward_mean(s, a);
            if !(0.0..=1.0).contains(&r) {
                report.reward_range_violations.push((s, a));
            }
            if !shapes_ok {
                continue;
            }
            let x = mdp.state_action_vector(s, a);
            let predicted_reward: f64 = x.iter().zip(&params.y_vector).map(|(a, b)| a * b).sum();
            report.max_reward_residual = report.max_reward_residual.max((predicted_reward - r).abs());

            expected_next.iter_mut().for_each(|v| *v = 0.0);
            for (s2, p) in row.iter().enumerate() {
                for (e, f) in expected_next.iter_mut().zip(mdp.feature(s2)) {
                    *e += p * f;
                }
            }
            let mut sq = 0.0;
            for (i, e) in expected_next.iter().enumerate() {
                let mx: f64 = params.m_matrix[i * dk..(i + 1) * dk].iter().zip(&x).map(|(a, b)| a * b).sum();
                sq += (mx - e) * (mx - e);
            }
            report.max_transition_residual = report.max_transition_residual.max(sq.sqrt());
        }
    }
    report.passed = shapes_ok
        && report.max_reward_residual <= tol
        && report.max_transition_residual <= tol
        && report.feature_norm_violations.is_empty()
        && report.stochasticity_violations.is_empty()
        && report.reward_range_violations.is_empty();
    report
}
