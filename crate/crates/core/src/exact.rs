//! Closed-form oracles: policy evaluation, optimal Q, the max-entropy optimal
//! policy, visitation and stationary distributions, the expected-TD fixed
//! point and the performance-difference identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{induced_chain, induced_matrix};
use crate::error::{Error, Result};
use crate::mdp::{Distribution, Mdp, Policy};

/// Accuracy of [`optimal_q`] used by [`MaxEntPolicy::compute`].
pub const DEFAULT_OPTIMAL_Q_TOL: f64 = 1e-9;
/// Optimal-action tie tolerance used by [`MaxEntPolicy::compute`].
pub const DEFAULT_TIE_TOL: f64 = 1e-7;
/// Relative singular-value cutoff defining the span of supported features.
pub const SPAN_CUTOFF: f64 = 1e-10;

/// `V`, `Q` and advantage of a fixed policy. Tables are row-major `|S| x k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub advantage: Vec<f64>,
}

impl ValueTable {
    pub fn q_at(&self, s: usize, a: usize) -> f64 {
        self.q[s * (self.q.len() / self.v.len()) + a]
    }

    /// `V(mu)`.
    pub fn value_at(&self, mu: &Distribution) -> f64 {
        self.v.iter().zip(mu.probs()).map(|(v, m)| v * m).sum()
    }
}

fn identity_minus(n: usize, gamma: f64, p: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - gamma * p[i * n + j])
}

fn q_from_v(mdp: &Mdp, v: &[f64]) -> Vec<f64> {
    let (n, k, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let mut q = Vec::with_capacity(n * k);
    for s in 0..n {
        for a in 0..k {
            let next: f64 = mdp.next_distribution(s, a).iter().zip(v).map(|(p, v)| p * v).sum();
            q.push(mdp.reward_mean(s, a) + gamma * next);
        }
    }
    q
}

/// Exact evaluation by a direct solve of `(I - gamma P_pi) V = r_pi`.
pub fn policy_values(mdp: &Mdp, policy: &Policy) -> Result<ValueTable> {
    check_policy(mdp, policy)?;
    let (n, k) = (mdp.num_states(), mdp.num_actions());
    let p = induced_matrix(mdp, policy);
    let r = DVector::from_fn(n, |s, _| (0..k).map(|a| policy.prob(s, a) * mdp.reward_mean(s, a)).sum());
    let v = identity_minus(n, mdp.gamma(), &p)
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
    let v: Vec<f64> = v.iter().copied().collect();
    let q = q_from_v(mdp, &v);
    let advantage = q.iter().enumerate().map(|(i, qi)| qi - v[i / k]).collect();
    Ok(ValueTable { v, q, advantage })
}

fn check_policy(mdp: &Mdp, policy: &Policy) -> Result<()> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::Argument("policy shape does not match MDP".into()));
    }
    Ok(())
}

/// Q-value iteration, stopped once `||Q_{n+1} - Q_n|| <= tol (1 - gamma) / (2 gamma)`
/// so that `||Q - Q*|| <= tol`.
pub fn optimal_q(mdp: &Mdp, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Argument("tolerance must be positive".into()));
    }
    let (n, k, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let threshold = tol * (1.0 - gamma) / (2.0 * gamma);
    let mut q = vec![0.0; n * k];
    loop {
        let v: Vec<f64> = q.chunks(k).map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let next = q_from_v(mdp, &v);
        let residual = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        if residual <= threshold {
            return Ok(q);
        }
    }
}

/// The optimal policy that is uniform over each state's optimal action set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntPolicy {
    pub policy: Policy,
    pub optimal_action_sets: Vec<Vec<usize>>,
    pub q_star: Vec<f64>,
    /// Exact values of `policy`.
    pub values: ValueTable,
    /// `min_s` of the gap between the best optimal and best non-optimal action
    /// (infinite when every action is optimal everywhere).
    pub tie_gap: f64,
    pub irreducible: bool,
    pub aperiodic: bool,
}

impl MaxEntPolicy {
    /// Value iteration at [`DEFAULT_OPTIMAL_Q_TOL`], ties at [`DEFAULT_TIE_TOL`].
    pub fn compute(mdp: &Mdp) -> Result<Self> {
        let q_star = optimal_q(mdp, DEFAULT_OPTIMAL_Q_TOL)?;
        maxent_policy(mdp, &q_star, DEFAULT_TIE_TOL)
    }

    pub fn has_stationary(&self) -> bool {
        self.irreducible && self.aperiodic
    }
}

pub fn maxent_policy(mdp: &Mdp, q_star: &[f64], tie_tol: f64) -> Result<MaxEntPolicy> {
    let (n, k) = (mdp.num_states(), mdp.num_actions());
    if q_star.len() != n * k {
        return Err(Error::Argument("q_star shape".into()));
    }
    let mut sets = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n * k);
    let mut tie_gap = f64::INFINITY;
    for row in q_star.chunks(k) {
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let set: Vec<usize> = (0..k).filter(|&a| row[a] >= best - tie_tol).collect();
        let w = 1.0 / set.len() as f64;
        probs.extend((0..k).map(|a| if set.contains(&a) { w } else { 0.0 }));
        let rest = (0..k).filter(|a| !set.contains(a)).map(|a| row[a]).fold(f64::NEG_INFINITY, f64::max);
        tie_gap = tie_gap.min(best - rest);
        sets.push(set);
    }
    let policy = Policy::new(k, probs)?;
    let values = policy_values(mdp, &policy)?;
    for s in 0..n {
        let best = q_star[s * k..(s + 1) * k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gap = (values.v[s] - best).abs();
        if gap > tie_tol {
            return Err(Error::TieTolerance(format!(
                "uniform policy over the near-optimal sets loses {gap:e} at state {s} (tie_tol {tie_tol:e})"
            )));
        }
    }
    let chain = induced_chain(mdp, &policy)?;
    Ok(MaxEntPolicy {
        policy,
        optimal_action_sets: sets,
        q_star: q_star.to_vec(),
        values,
        tie_gap,
        irreducible: chain.irreducible,
        aperiodic: chain.aperiodic,
    })
}

/// Normalized discounted visitation `(1 - gamma) mu^T (I - gamma P_pi)^{-1}`.
pub fn visitation(mdp: &Mdp, policy: &Policy, mu: &Distribution) -> Result<Distribution> {
    check_policy(mdp, policy)?;
    let n = mdp.num_states();
    if mu.len() != n {
        return Err(Error::Argument("start distribution length".into()));
    }
    let p = induced_matrix(mdp, policy);
    let rhs = DVector::from_fn(n, |s, _| (1.0 - mdp.gamma()) * mu.probs()[s]);
    let d = identity_minus(n, mdp.gamma(), &p)
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular visitation system".into()))?;
    Distribution::from_numeric(d.iter().copied().collect())
}

/// `<f, g>_d = sum_s d(s) sum_a f(s, a) g(s, a)`.
pub fn weighted_inner(num_actions: usize, f: &[f64], g: &[f64], d: &Distribution) -> f64 {
    d.probs()
        .iter()
        .enumerate()
        .map(|(s, w)| {
            let r = s * num_actions..(s + 1) * num_actions;
            w * f[r.clone()].iter().zip(&g[r]).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

/// Both sides of `V_pi(mu) - V_pi'(mu) = 1/(1-gamma) <Q_pi, pi - pi'>_{d_pi'^mu}`.
pub fn performance_difference(mdp: &Mdp, pi: &Policy, pi_prime: &Policy, mu: &Distribution) -> Result<(f64, f64)> {
    let vals = policy_values(mdp, pi)?;
    let vals_prime = policy_values(mdp, pi_prime)?;
    let lhs = vals.value_at(mu) - vals_prime.value_at(mu);
    let d = visitation(mdp, pi_prime, mu)?;
    let diff: Vec<f64> = pi.probs().iter().zip(pi_prime.probs()).map(|(a, b)| a - b).collect();
    let rhs = weighted_inner(mdp.num_actions(), &vals.q, &diff, &d) / (1.0 - mdp.gamma());
    Ok((lhs, rhs))
}

/// Stationary distribution of the induced chain.
pub fn stationary(mdp: &Mdp, policy: &Policy) -> Result<Distribution> {
    check_policy(mdp, policy)?;
    induced_chain(mdp, policy)?.stationary()
}

/// Fixed point of the expected TD update under the stationary state-action
/// distribution, restricted to the span of the supported features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdFixedPoint {
    pub u_bar: Vec<f64>,
    pub support_projector_rank: usize,
    /// `max |x_sa . u_bar - Q_pi(s, a)|` over pairs with `sigma(s) pi(s, a) > 0`.
    pub max_support_error: f64,
    /// Same quantity over pairs outside the support, if any.
    pub off_support_max_error: Option<f64>,
    pub norm: f64,
    /// `2 / (1 - gamma)`.
    pub norm_bound: f64,
    pub norm_within_bound: bool,
}

/// Largest on-support error tolerated before the MDP is declared non-linear.
const LINEARITY_TOL: f64 = 1e-6;

pub fn td_fixed_point(mdp: &Mdp, policy: &Policy) -> Result<TdFixedPoint> {
    let sigma = stationary(mdp, policy)?;
    let values = policy_values(mdp, policy)?;
    let (n, k, d, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.dim(), mdp.gamma());
    let dk = d * k;

    // expected next feature under pi for each state
    let next_state_feature: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let mut x = vec![0.0; dk];
            for a in 0..k {
                let w = policy.prob(s, a);
                for (i, f) in mdp.feature(s).iter().enumerate() {
                    x[i * k + a] += w * f;
                }
            }
            x
        })
        .collect();

    let mut a_mat = DMatrix::<f64>::zeros(dk, dk);
    let mut b_vec = DVector::<f64>::zeros(dk);
    let mut supported = Vec::new();
    for s in 0..n {
        for a in 0..k {
            let w = sigma.probs()[s] * policy.prob(s, a);
            if w <= 0.0 {
                continue;
            }
            supported.push((s, a));
            let x = mdp.state_action_vector(s, a);
            let mut x_next = vec![0.0; dk];
            for (s2, p) in mdp.next_distribution(s, a).iter().enumerate() {
                if *p != 0.0 {
                    for (o, v) in x_next.iter_mut().zip(&next_state_feature[s2]) {
                        *o += p * v;
                    }
                }
            }
            for i in 0..dk {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..dk {
                    a_mat[(i, j)] += w * x[i] * (x[j] - gamma * x_next[j]);
                }
                b_vec[i] += w * x[i] * mdp.reward_mean(s, a);
            }
        }
    }

    let basis = support_basis(mdp, &supported)?;
    let rank = basis.ncols();
    let reduced = basis.transpose() * &a_mat * &basis;
    let z = reduced
        .lu()
        .solve(&(basis.transpose() * &b_vec))
        .ok_or_else(|| Error::LinearityViolation("restricted TD system is singular".into()))?;
    let u = &basis * z;
    let u_bar: Vec<f64> = u.iter().copied().collect();

    let mut max_support_error: f64 = 0.0;
    let mut off_support: Option<f64> = None;
    for s in 0..n {
        for a in 0..k {
            let x = mdp.state_action_vector(s, a);
            let pred: f64 = x.iter().zip(&u_bar).map(|(p, q)| p * q).sum();
            let err = (pred - values.q_at(s, a)).abs();
            if supported.contains(&(s, a)) {
                max_support_error = max_support_error.max(err);
            } else {
                off_support = Some(off_support.unwrap_or(0.0).max(err));
            }
        }
    }
    let scale = values.q.iter().fold(1.0f64, |m, q| m.max(q.abs()));
    if max_support_error > LINEARITY_TOL * scale {
        return Err(Error::LinearityViolation(format!(
            "TD fixed point misses Q on the stationary support by {max_support_error:e}"
        )));
    }
    let norm = u_bar.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_bound = 2.0 / (1.0 - gamma);
    Ok(TdFixedPoint {
        u_bar,
        support_projector_rank: rank,
        max_support_error,
        off_support_max_error: off_support,
        norm,
        norm_bound,
        norm_within_bound: norm <= norm_bound,
    })
}

/// Orthonormal basis (as columns) of the span of `x_sa` over `pairs`.
fn support_basis(mdp: &Mdp, pairs: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    let dk = mdp.dim() * mdp.num_actions();
    let rows: Vec<f64> = pairs.iter().flat_map(|&(s, a)| mdp.state_action_vector(s, a)).collect();
    let x = DMatrix::from_row_slice(pairs.len(), dk, &rows);
    let svd = x.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] >= SPAN_CUTOFF * max_sv && max_sv > 0.0)
        .collect();
    Ok(DMatrix::from_fn(dk, keep.len(), |r, c| v_t[(keep[c], r)]))
}

/// Least-squares weights `u` with `x_sa . u ≈ q(s, a)` over every pair.
/// Exact for linear MDPs; this is the oracle critic.
pub fn q_least_squares(mdp: &Mdp, q: &[f64]) -> Result<Vec<f64>> {
    let (n, k) = (mdp.num_states(), mdp.num_actions());
    let dk = mdp.dim() * k;
    let rows: Vec<f64> = (0..n * k).flat_map(|j| mdp.state_action_vector(j / k, j % k)).collect();
    let x = DMatrix::from_row_slice(n * k, dk, &rows);
    let target = DVector::from_column_slice(q);
    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let u = svd
        .solve(&target, SPAN_CUTOFF * max_sv)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(u.iter().copied().collect())
}
