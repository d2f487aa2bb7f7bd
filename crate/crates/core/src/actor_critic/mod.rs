//! Single-trajectory linear actor-critic.
//!
//! The critic runs `N` TD(0) steps from `U = 0` and returns the running
//! average `U_hat`. The actor adds `theta U_hat` to the softmax weights. The
//! trajectory is never reset: each critic call resumes from the triple the
//! previous call stopped at, even though that triple was drawn under the old
//! policy. Diagnostics are computed exactly after the fact and never feed
//! back into the updates.

mod record;
mod schedule;

pub use record::{write_csv_header, write_csv_row, CsvSink, IterationRow, RunHeader, RunRecord, Snapshot, CSV_COLUMNS};
pub use schedule::{eta_max, k_mix, theorem_theta, MixingConstants, Schedule, ScheduleConstants, ScheduleMode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::kl_policy;
use crate::error::{Error, Result};
use crate::exact::{policy_values, q_least_squares, stationary, visitation, MaxEntPolicy};
use crate::mdp::{sample_step, softmax_policy, Distribution, Mdp, Policy, PolicyWeights};

/// Position on the trajectory: the pending triple `(state, action, reward)`
/// and the already drawn successor of `(state, action)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryCursor {
    pub state: usize,
    pub action: usize,
    pub reward: u8,
    pub next_state: usize,
    pub steps_elapsed: u64,
}

impl TrajectoryCursor {
    /// Draws the first triple from `state` under `policy`.
    pub fn start<R: Rng + ?Sized>(mdp: &Mdp, policy: &Policy, state: usize, rng: &mut R) -> Self {
        let step = sample_step(mdp, policy, state, rng);
        Self { state, action: step.action, reward: step.reward, next_state: step.next_state, steps_elapsed: 1 }
    }

    fn advance<R: Rng + ?Sized>(&mut self, mdp: &Mdp, policy: &Policy, rng: &mut R) {
        let step = sample_step(mdp, policy, self.next_state, rng);
        self.state = self.next_state;
        self.action = step.action;
        self.reward = step.reward;
        self.next_state = step.next_state;
        self.steps_elapsed += 1;
    }
}

/// Result of one critic call. Matrices are `d x k` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdOutcome {
    pub u_hat: Vec<f64>,
    pub final_iterate: Vec<f64>,
    /// `||U_j - u_bar||` for `j = 0..=N` when a reference point was supplied.
    pub iterate_norm_trace: Option<Vec<f64>>,
    pub max_iterate_norm: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `N` steps of `U <- U - eta s (s^T U a - gamma s'^T U a' - r) a^T` from
/// `U = 0`, continuing `cursor`. Nothing bounds or rescales `U`.
pub fn td_inner_loop<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    cursor: TrajectoryCursor,
    big_n: u64,
    eta: f64,
    rng: &mut R,
    oracle: Option<&[f64]>,
) -> Result<(TdOutcome, TrajectoryCursor)> {
    if big_n == 0 {
        return Err(Error::Argument("N must be at least 1".into()));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Argument(format!("eta = {eta} must be finite and non-negative")));
    }
    let (k, gamma) = (mdp.num_actions(), mdp.gamma());
    let dk = mdp.dim() * k;
    if oracle.is_some_and(|u| u.len() != dk) {
        return Err(Error::Argument("oracle has the wrong dimension".into()));
    }
    let mut cursor = cursor;
    let mut u = vec![0.0; dk];
    let mut sum = vec![0.0; dk];
    let mut trace = oracle.map(|_| Vec::with_capacity(big_n as usize + 1));
    let mut max_norm: f64 = 0.0;

    for j in 0..big_n {
        for (acc, x) in sum.iter_mut().zip(&u) {
            *acc += x;
        }
        if let (Some(tr), Some(ub)) = (trace.as_mut(), oracle) {
            tr.push(dist(&u, ub));
        }
        let (s, a, r) = (cursor.state, cursor.action, cursor.reward);
        cursor.advance(mdp, policy, rng);
        let (s_next, a_next) = (cursor.state, cursor.action);

        let fs = mdp.feature(s);
        let fs_next = mdp.feature(s_next);
        let q: f64 = fs.iter().enumerate().map(|(i, x)| x * u[i * k + a]).sum();
        let q_next: f64 = fs_next.iter().enumerate().map(|(i, x)| x * u[i * k + a_next]).sum();
        let delta = q - gamma * q_next - f64::from(r);
        if !delta.is_finite() {
            return Err(Error::Divergence { iteration: 0, step: j });
        }
        for (i, x) in fs.iter().enumerate() {
            u[i * k + a] -= eta * delta * x;
        }
        let un = norm(&u);
        if !un.is_finite() {
            return Err(Error::Divergence { iteration: 0, step: j + 1 });
        }
        max_norm = max_norm.max(un);
    }
    if let (Some(tr), Some(ub)) = (trace.as_mut(), oracle) {
        tr.push(dist(&u, ub));
    }
    let inv = 1.0 / big_n as f64;
    let u_hat = sum.into_iter().map(|x| x * inv).collect();
    Ok((TdOutcome { u_hat, final_iterate: u, iterate_norm_trace: trace, max_iterate_norm: max_norm }, cursor))
}

/// `W + theta U_hat`.
pub fn actor_step(weights: &PolicyWeights, u_hat: &[f64], theta: f64) -> Result<PolicyWeights> {
    if u_hat.len() != weights.as_slice().len() {
        return Err(Error::Argument("U_hat shape does not match the weights".into()));
    }
    let w = weights.as_slice().iter().zip(u_hat).map(|(w, u)| w + theta * u).collect();
    PolicyWeights::from_vec(weights.dim(), weights.num_actions(), w)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartState {
    #[default]
    Uniform,
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    #[default]
    Td,
    /// Test mode: `U_hat` is the least-squares fit of the exact `Q_i`.
    ExactOracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub start_state: StartState,
    pub diag_every: usize,
    pub snapshot_every: usize,
    pub critic: CriticMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { start_state: StartState::Uniform, diag_every: 1, snapshot_every: 1, critic: CriticMode::Td }
    }
}

/// A run that stopped early, with everything recorded before the failure.
#[derive(Debug)]
pub struct RunAborted {
    pub error: Error,
    pub record: RunRecord,
}

impl From<RunAborted> for Error {
    fn from(a: RunAborted) -> Self {
        a.error
    }
}

/// Exact quantities that stay fixed during a run.
struct Reference<'a> {
    maxent: &'a MaxEntPolicy,
    start_measures: Vec<Distribution>,
}

impl<'a> Reference<'a> {
    fn new(mdp: &Mdp, maxent: &'a MaxEntPolicy) -> Result<Self> {
        let n = mdp.num_states();
        let start_measures = (0..n)
            .map(|s| visitation(mdp, &maxent.policy, &Distribution::dirac(n, s)))
            .collect::<Result<_>>()?;
        Ok(Self { maxent, start_measures })
    }

    fn row(&self, mdp: &Mdp, iter: usize, policy: &Policy, q: &[f64], v: &[f64], critic: Option<(&[f64], f64)>, steps: u64) -> IterationRow {
        let n = mdp.num_states();
        let k = mdp.num_actions();
        let kl: Vec<f64> = self.start_measures.iter().map(|m| kl_policy(&self.maxent.policy, policy, m)).collect();
        let max_kl = kl.iter().cloned().fold(0.0, f64::max);
        let value_gap = (0..n).map(|s| self.maxent.values.v[s] - v[s]).collect();
        let entropy = (0..n).map(|s| policy.entropy(s)).collect();
        let mut row = IterationRow {
            iter,
            entropy,
            kl,
            max_kl,
            value_gap,
            eps_sup: None,
            eps_stat: None,
            eps_combined: None,
            u_hat_norm: None,
            steps,
        };
        if let Some((u_hat, eta_n)) = critic {
            let w = PolicyWeights::from_vec(mdp.dim(), k, u_hat.to_vec()).expect("critic output shape");
            let err: Vec<f64> = (0..n * k).map(|j| w.logit(mdp.feature(j / k), j % k) - q[j]).collect();
            let sup = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            row.eps_sup = Some(sup);
            row.u_hat_norm = Some(norm(u_hat));
            if let Ok(sigma) = stationary(mdp, policy) {
                let mean_sq: f64 = (0..n * k).map(|j| sigma.probs()[j / k] * policy.prob(j / k, j % k) * err[j] * err[j]).sum();
                row.eps_stat = Some(eta_n * mean_sq);
                row.eps_combined = Some(sup * sup + eta_n * mean_sq);
            }
        }
        row
    }
}

pub fn run(mdp: &Mdp, maxent: &MaxEntPolicy, schedule: &Schedule, seed: u64, config: RunConfig) -> Result<RunRecord, RunAborted> {
    run_observed(mdp, maxent, schedule, seed, config, &mut |_| Ok(()))
}

/// Like [`run`], calling `observer` on every row as soon as it is complete.
pub fn run_observed(
    mdp: &Mdp,
    maxent: &MaxEntPolicy,
    schedule: &Schedule,
    seed: u64,
    config: RunConfig,
    observer: &mut dyn FnMut(&IterationRow) -> Result<()>,
) -> Result<RunRecord, RunAborted> {
    run_with_header(mdp, maxent, RunHeader::new(mdp, schedule, seed, config), observer)
}

/// Runs the schedule, seed and configuration stored in `header`.
pub fn run_with_header(
    mdp: &Mdp,
    maxent: &MaxEntPolicy,
    header: RunHeader,
    observer: &mut dyn FnMut(&IterationRow) -> Result<()>,
) -> Result<RunRecord, RunAborted> {
    let (schedule, seed, config) = (header.schedule.clone(), header.seed, header.config);
    let mut record = RunRecord { header, rows: Vec::new(), snapshots: Vec::new(), max_iterate_norm: 0.0, aborted: None };
    if record.header.mdp_digest != crate::io::mdp_digest(mdp) {
        let error = Error::Mismatch("run header was built for a different MDP".into());
        record.aborted = Some(error.to_string());
        return Err(RunAborted { error, record });
    }
    match drive(mdp, maxent, &schedule, seed, config, observer, &mut record) {
        Ok(()) => Ok(record),
        Err(error) => {
            record.aborted = Some(error.to_string());
            Err(RunAborted { error, record })
        }
    }
}

fn drive(
    mdp: &Mdp,
    maxent: &MaxEntPolicy,
    schedule: &Schedule,
    seed: u64,
    config: RunConfig,
    observer: &mut dyn FnMut(&IterationRow) -> Result<()>,
    record: &mut RunRecord,
) -> Result<()> {
    let (n, k, d) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
    if maxent.policy.num_states() != n || maxent.policy.num_actions() != k {
        return Err(Error::Argument("max-entropy policy does not match the MDP".into()));
    }
    if config.diag_every == 0 || config.snapshot_every == 0 {
        return Err(Error::Argument("diag_every and snapshot_every must be positive".into()));
    }
    let reference = Reference::new(mdp, maxent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = PolicyWeights::zeros(d, k);
    let mut policy = softmax_policy(&weights, mdp)?;
    let start = match config.start_state {
        StartState::Uniform => rng.random_range(0..n),
        StartState::Fixed(s) if s < n => s,
        StartState::Fixed(s) => return Err(Error::Argument(format!("start state {s} out of range"))),
    };
    let mut cursor = TrajectoryCursor::start(mdp, &policy, start, &mut rng);
    let eta_n = schedule.eta * schedule.big_n as f64;

    for i in 0..=schedule.t {
        let diagnose = i % config.diag_every == 0 || i == schedule.t;
        let snapshot = i % config.snapshot_every == 0 || i == schedule.t;
        let needs_values = diagnose || (i < schedule.t && config.critic == CriticMode::ExactOracle);
        let values = if needs_values { Some(policy_values(mdp, &policy)?) } else { None };

        let u_hat = if i < schedule.t {
            let outcome = match config.critic {
                CriticMode::Td => {
                    match td_inner_loop(mdp, &policy, cursor, schedule.big_n, schedule.eta, &mut rng, None) {
                        Ok(out) => out,
                        Err(e) => {
                            record.snapshots.push(Snapshot { iter: i, weights: weights.as_slice().to_vec(), u_hat: None });
                            return Err(match e {
                                Error::Divergence { step, .. } => Error::Divergence { iteration: i, step },
                                other => other,
                            });
                        }
                    }
                }
                CriticMode::ExactOracle => {
                    let q = &values.as_ref().expect("values computed for the oracle critic").q;
                    let u = q_least_squares(mdp, q)?;
                    let out = TdOutcome { final_iterate: u.clone(), max_iterate_norm: norm(&u), u_hat: u, iterate_norm_trace: None };
                    (out, cursor)
                }
            };
            cursor = outcome.1;
            record.max_iterate_norm = record.max_iterate_norm.max(outcome.0.max_iterate_norm);
            Some(outcome.0.u_hat)
        } else {
            None
        };

        if diagnose {
            let vals = values.as_ref().expect("values computed for diagnosed rows");
            let critic = u_hat.as_deref().map(|u| (u, eta_n));
            let row = reference.row(mdp, i, &policy, &vals.q, &vals.v, critic, cursor.steps_elapsed);
            observer(&row)?;
            record.rows.push(row);
        }
        if snapshot {
            record.snapshots.push(Snapshot { iter: i, weights: weights.as_slice().to_vec(), u_hat: u_hat.clone() });
        }
        if let Some(u) = u_hat {
            weights = actor_step(&weights, &u, schedule.theta)?;
            policy = softmax_policy(&weights, mdp)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
