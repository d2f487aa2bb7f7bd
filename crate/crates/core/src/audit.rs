//! Term-by-term evaluation of the mirror-descent bounds on a recorded run.
//!
//! Every term is recomputed exactly from the stored weight and critic
//! snapshots, so a record can be audited (or tampered with in a test)
//! without rerunning the trajectory.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::actor_critic::RunRecord;
use crate::chain::kl_policy;
use crate::error::{Error, Result};
use crate::exact::{policy_values, visitation, weighted_inner, MaxEntPolicy, ValueTable};
use crate::io::mdp_digest;
use crate::mdp::{softmax_policy, Distribution, Mdp, Policy, PolicyWeights};

/// Roundoff allowance for the deterministic inequalities.
pub const SLACK_TOL: f64 = 1e-8;

pub const LEDGER_COLUMNS: &str = "iter,lhs_kl,lhs_regret,rhs_kl0,rhs_c2,rhs_error,slack";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerKind {
    Simplified,
    Refined,
}

/// Stand-in for the critic error after the last iteration, which the refined
/// bound needs but no critic ever produces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTerm {
    #[default]
    Zero,
    CarryForward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub iter: usize,
    pub lhs_kl: f64,
    pub lhs_regret: f64,
    pub rhs_kl0: f64,
    /// Simplified: `theta^2 sum C_j^2`. Refined: `theta / (1 - gamma)`.
    pub rhs_c2: f64,
    pub rhs_error: f64,
    pub slack: f64,
    pub theorem_rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub iter: usize,
    pub state: usize,
    /// `None` for the value check, the action for the `Q_hat` check.
    pub action: Option<usize>,
    /// How far below the allowed decrease the quantity fell.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub kind: LedgerKind,
    pub mu: Vec<f64>,
    pub boundary: Option<BoundaryTerm>,
    pub rows: Vec<LedgerRow>,
    pub min_slack: f64,
    pub monotonicity_violations: Vec<MonotonicityViolation>,
}

impl BoundLedger {
    pub fn holds(&self) -> bool {
        self.min_slack >= -SLACK_TOL && self.monotonicity_violations.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{LEDGER_COLUMNS}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.iter, r.lhs_kl, r.lhs_regret, r.rhs_kl0, r.rhs_c2, r.rhs_error, r.slack
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCell {
    pub iter: usize,
    pub state: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremSummary {
    pub max_lhs_over_rhs: f64,
    /// `(iter, state)` pairs where the inequality fails.
    pub violations: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub cells: Vec<TheoremCell>,
    pub summary: TheoremSummary,
    /// `max_{i, s} K_{d^s}(pi_bar, pi_i)`.
    pub max_kl: f64,
    pub rhs: f64,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.summary.violations.is_empty()
    }
}

/// Exact reconstruction of a run: `pi_i`, `V_i`, `Q_i` and `Q_hat_i`.
pub struct AuditedRun<'a> {
    mdp: &'a Mdp,
    maxent: &'a MaxEntPolicy,
    theta: f64,
    t: usize,
    policies: Vec<Policy>,
    values: Vec<ValueTable>,
    /// `Q_hat_i(s, a)` for `i < t`, row-major.
    q_hat: Vec<Vec<f64>>,
}

/// Fails with a mismatch when the record was produced on a different MDP.
pub fn check_digest(mdp: &Mdp, run: &RunRecord) -> Result<()> {
    let digest = mdp_digest(mdp);
    if digest != run.header.mdp_digest {
        return Err(Error::Mismatch(format!(
            "run was recorded on MDP {} but the audit MDP is {}",
            run.header.mdp_digest, digest
        )));
    }
    Ok(())
}

impl<'a> AuditedRun<'a> {
    /// Needs a snapshot for every iteration, with critic output before the last.
    pub fn new(mdp: &'a Mdp, run: &RunRecord, maxent: &'a MaxEntPolicy) -> Result<Self> {
        check_digest(mdp, run)?;
        let (n, k, d) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
        let t = run.header.schedule.t;
        let mut policies = Vec::with_capacity(t + 1);
        let mut values = Vec::with_capacity(t + 1);
        let mut q_hat = Vec::with_capacity(t);
        for i in 0..=t {
            let snap = run
                .snapshot(i)
                .ok_or_else(|| Error::Audit(format!("no snapshot for iteration {i}; record with snapshot_every = 1")))?;
            let w = PolicyWeights::from_vec(d, k, snap.weights.clone())
                .map_err(|e| Error::Audit(format!("snapshot {i}: {e}")))?;
            let pi = softmax_policy(&w, mdp)?;
            values.push(policy_values(mdp, &pi)?);
            policies.push(pi);
            if i < t {
                let u = snap.u_hat.as_ref().ok_or_else(|| Error::Audit(format!("snapshot {i} has no critic output")))?;
                let u = PolicyWeights::from_vec(d, k, u.clone()).map_err(|e| Error::Audit(format!("snapshot {i}: {e}")))?;
                q_hat.push((0..n * k).map(|j| u.logit(mdp.feature(j / k), j % k)).collect());
            }
        }
        Ok(Self { mdp, maxent, theta: run.header.schedule.theta, t, policies, values, q_hat })
    }

    pub fn policy(&self, i: usize) -> &Policy {
        &self.policies[i]
    }

    pub fn values(&self, i: usize) -> &ValueTable {
        &self.values[i]
    }

    /// `sup |Q_hat_i - Q_i|`.
    pub fn eps_hat(&self, i: usize) -> f64 {
        self.q_hat[i].iter().zip(&self.values[i].q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn theorem_rhs(&self) -> f64 {
        let g = self.mdp.gamma();
        (self.mdp.num_actions() as f64).ln() + 1.0 / ((1.0 - g) * (1.0 - g))
    }

    fn lhs_terms(&self, d: &Distribution, mu: &Distribution) -> (Vec<f64>, Vec<f64>) {
        let pi_bar = &self.maxent.policy;
        let v_bar = self.maxent.values.value_at(mu);
        let scale = self.theta * (1.0 - self.mdp.gamma());
        let kl: Vec<f64> = self.policies.iter().map(|p| kl_policy(pi_bar, p, d)).collect();
        let mut regret = vec![0.0; self.t + 1];
        for i in 1..=self.t {
            regret[i] = regret[i - 1] + scale * (v_bar - self.values[i - 1].value_at(mu));
        }
        (kl, regret)
    }

    fn reference_measure(&self, mu: &Distribution) -> Result<Distribution> {
        if mu.len() != self.mdp.num_states() {
            return Err(Error::Argument("measure length does not match the MDP".into()));
        }
        visitation(self.mdp, &self.maxent.policy, mu)
    }

    /// Simplified bound with `C_i = sup |Q_hat_i|`, or `C_i = c` for every `i`
    /// when `c_override` is given.
    pub fn simplified(&self, mu: &Distribution, c_override: Option<f64>) -> Result<BoundLedger> {
        let d = self.reference_measure(mu)?;
        let (kl, regret) = self.lhs_terms(&d, mu);
        let k = self.mdp.num_actions();
        let pi_bar = self.maxent.policy.probs();
        let mut rows = Vec::with_capacity(self.t + 1);
        let (mut c2, mut err) = (0.0, 0.0);
        for i in 0..=self.t {
            if i > 0 {
                let j = i - 1;
                let c = c_override.unwrap_or_else(|| self.q_hat[j].iter().fold(0.0f64, |m, x| m.max(x.abs())));
                c2 += self.theta * self.theta * c * c;
                let diff_q: Vec<f64> = self.q_hat[j].iter().zip(&self.values[j].q).map(|(a, b)| a - b).collect();
                let diff_pi: Vec<f64> = self.policies[j].probs().iter().zip(pi_bar).map(|(a, b)| a - b).collect();
                err += self.theta * weighted_inner(k, &diff_q, &diff_pi, &d);
            }
            rows.push(self.row(i, kl[i], regret[i], kl[0], c2, err));
        }
        Ok(self.finish(LedgerKind::Simplified, mu, None, rows, Vec::new()))
    }

    /// Refined bound plus both approximate-monotonicity checks.
    pub fn refined(&self, mu: &Distribution, boundary: BoundaryTerm) -> Result<BoundLedger> {
        let d = self.reference_measure(mu)?;
        let (kl, regret) = self.lhs_terms(&d, mu);
        let g = self.mdp.gamma();
        let eps: Vec<f64> = (0..self.t).map(|i| self.eps_hat(i)).collect();
        let eps_at = |i: usize| -> f64 {
            if i < self.t {
                eps[i]
            } else {
                match boundary {
                    BoundaryTerm::Zero => 0.0,
                    BoundaryTerm::CarryForward => eps.last().copied().unwrap_or(0.0),
                }
            }
        };
        let constant = self.theta / (1.0 - g);
        let mut rows = Vec::with_capacity(self.t + 1);
        let mut err = 0.0;
        for i in 0..=self.t {
            if i > 0 {
                let j = i - 1;
                err += self.theta * (2.0 * g * eps_at(j) / (1.0 - g) + eps_at(j) + eps_at(j + 1));
            }
            rows.push(self.row(i, kl[i], regret[i], kl[0], constant, err));
        }
        let violations = self.monotonicity(&eps_at);
        Ok(self.finish(LedgerKind::Refined, mu, Some(boundary), rows, violations))
    }

    fn monotonicity(&self, eps_at: &dyn Fn(usize) -> f64) -> Vec<MonotonicityViolation> {
        let (n, k, g) = (self.mdp.num_states(), self.mdp.num_actions(), self.mdp.gamma());
        let mut out = Vec::new();
        for i in 0..self.t {
            let allowed = 2.0 * eps_at(i) / (1.0 - g);
            for s in 0..n {
                let drop = self.values[i].v[s] - self.values[i + 1].v[s];
                if drop > allowed + SLACK_TOL {
                    out.push(MonotonicityViolation { iter: i, state: s, action: None, excess: drop - allowed });
                }
            }
            if i + 1 < self.t {
                let allowed = 2.0 * g * eps_at(i) / (1.0 - g) + eps_at(i) + eps_at(i + 1);
                for j in 0..n * k {
                    let drop = self.q_hat[i][j] - self.q_hat[i + 1][j];
                    if drop > allowed + SLACK_TOL {
                        out.push(MonotonicityViolation { iter: i, state: j / k, action: Some(j % k), excess: drop - allowed });
                    }
                }
            }
        }
        out
    }

    fn row(&self, iter: usize, lhs_kl: f64, lhs_regret: f64, rhs_kl0: f64, rhs_c2: f64, rhs_error: f64) -> LedgerRow {
        let slack = rhs_kl0 + rhs_c2 + rhs_error - lhs_kl - lhs_regret;
        LedgerRow { iter, lhs_kl, lhs_regret, rhs_kl0, rhs_c2, rhs_error, slack, theorem_rhs: self.theorem_rhs() }
    }

    fn finish(
        &self,
        kind: LedgerKind,
        mu: &Distribution,
        boundary: Option<BoundaryTerm>,
        rows: Vec<LedgerRow>,
        monotonicity_violations: Vec<MonotonicityViolation>,
    ) -> BoundLedger {
        let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        BoundLedger { kind, mu: mu.probs().to_vec(), boundary, rows, min_slack, monotonicity_violations }
    }

    /// The per-state inequality at every iteration.
    pub fn theorem(&self) -> Result<TheoremCheck> {
        let n = self.mdp.num_states();
        let rhs = self.theorem_rhs();
        let mut cells = Vec::with_capacity(n * (self.t + 1));
        let mut max_kl: f64 = 0.0;
        for s in 0..n {
            let mu = Distribution::dirac(n, s);
            let d = self.reference_measure(&mu)?;
            let (kl, regret) = self.lhs_terms(&d, &mu);
            for i in 0..=self.t {
                max_kl = max_kl.max(kl[i]);
                let lhs = kl[i] + regret[i];
                cells.push(TheoremCell { iter: i, state: s, lhs, rhs, pass: lhs <= rhs });
            }
        }
        cells.sort_by_key(|c| (c.iter, c.state));
        let max_lhs_over_rhs = cells.iter().map(|c| c.lhs / c.rhs).fold(f64::NEG_INFINITY, f64::max);
        let violations = cells.iter().filter(|c| !c.pass).map(|c| (c.iter, c.state)).collect();
        Ok(TheoremCheck { cells, summary: TheoremSummary { max_lhs_over_rhs, violations }, max_kl, rhs })
    }
}

pub fn simplified_ledger(mdp: &Mdp, run: &RunRecord, maxent: &MaxEntPolicy, mu: &Distribution) -> Result<BoundLedger> {
    AuditedRun::new(mdp, run, maxent)?.simplified(mu, None)
}

pub fn refined_ledger(
    mdp: &Mdp,
    run: &RunRecord,
    maxent: &MaxEntPolicy,
    mu: &Distribution,
    boundary: BoundaryTerm,
) -> Result<BoundLedger> {
    AuditedRun::new(mdp, run, maxent)?.refined(mu, boundary)
}

pub fn theorem_check(mdp: &Mdp, run: &RunRecord, maxent: &MaxEntPolicy) -> Result<TheoremCheck> {
    AuditedRun::new(mdp, run, maxent)?.theorem()
}
