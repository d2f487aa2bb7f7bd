use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chain::{kl_ball_audit, BallMeasure, KlBallAudit, MixingOptions};
use crate::error::{Error, Result};
use crate::exact::MaxEntPolicy;
use crate::mdp::{softmax_policy, Mdp, Policy, PolicyWeights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConstants {
    pub c_theta: f64,
    pub c_n: f64,
    pub c_eta: f64,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        Self { c_theta: 1.0, c_n: 1.0, c_eta: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Theorem,
    Explicit,
    AppendixD,
}

/// Mixing constants over a KL ball: every member has stationary mass at
/// least `p_min` and TV distance to stationarity at most `c2 exp(-c1 q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingConstants {
    pub p_min: f64,
    pub c1: f64,
    pub c2: f64,
}

impl MixingConstants {
    /// `c2 = max(m1, policy ratio bound, 1)`, `c1 = m2`.
    pub fn from_ball_audit(audit: &KlBallAudit) -> Result<Self> {
        if audit.members.is_empty() {
            return Err(Error::Audit("KL ball audit has no members".into()));
        }
        Ok(Self {
            p_min: audit.min_stationary_mass,
            c1: audit.m2,
            c2: audit.m1.max(audit.policy_ratio_bound).max(1.0),
        })
    }

    /// Audits the ball `K_{d^s}(pi_bar, pi) <= ln k + 1/(1-gamma)^2` (every
    /// `s`) over `pi_bar`, the uniform policy and `samples` random softmax
    /// policies, and reads the constants off the members.
    pub fn estimate(mdp: &Mdp, maxent: &MaxEntPolicy, samples: usize, seed: u64, opts: MixingOptions) -> Result<(Self, KlBallAudit)> {
        let (n, k, d) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
        let g = mdp.gamma();
        let radius = (k as f64).ln() + 1.0 / ((1.0 - g) * (1.0 - g));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policies = vec![maxent.policy.clone(), Policy::uniform(n, k)];
        for j in 0..samples {
            let scale = 0.5 + 4.0 * j as f64 / samples.max(1) as f64;
            let w: Vec<f64> = (0..d * k).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            policies.push(softmax_policy(&PolicyWeights::from_vec(d, k, w)?, mdp)?);
        }
        let audit = kl_ball_audit(mdp, &maxent.policy, &policies, radius, BallMeasure::Visitation, opts)?;
        Ok((Self::from_ball_audit(&audit)?, audit))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub t: usize,
    pub theta: f64,
    pub big_n: u64,
    pub eta: f64,
    pub constants: ScheduleConstants,
    /// Set when the schedule was checked against measured mixing constants.
    pub k_mix: Option<u64>,
}

/// `c / (t^{13/16} (ln t)^{1/4})`.
pub fn theorem_theta(t: usize, c_theta: f64) -> f64 {
    let t = t as f64;
    c_theta / (t.powf(13.0 / 16.0) * t.ln().powf(0.25))
}

fn check_t(t: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::Argument(format!("iteration budget t={t} must be at least 2")));
    }
    Ok(())
}

fn to_count(x: f64, what: &str) -> Result<u64> {
    if !x.is_finite() || x < 1.0 || x >= u64::MAX as f64 {
        return Err(Error::Argument(format!("{what} = {x} is not a usable iteration count")));
    }
    Ok(x.ceil() as u64)
}

/// `ceil((ln N + ln c2) / c1)`, at least 1.
pub fn k_mix(big_n: u64, c1: f64, c2: f64) -> Result<u64> {
    if !(c1 > 0.0) || !(c2 >= 1.0) {
        return Err(Error::Argument(format!("mixing constants need c1 > 0 and c2 >= 1 (got {c1}, {c2})")));
    }
    Ok((((big_n as f64).ln() + c2.ln()) / c1).ceil().max(1.0) as u64)
}

/// Largest TD step size allowed with `k_mix` mixing steps: `1 / (400 sqrt(k_mix N))`.
pub fn eta_max(k_mix: u64, big_n: u64) -> f64 {
    1.0 / (400.0 * ((k_mix as f64) * (big_n as f64)).sqrt())
}

impl Schedule {
    /// `theta = c_theta / (t^{13/16} (ln t)^{1/4})`, `N = ceil(c_n t^2 ln t)`,
    /// `eta = c_eta / sqrt(N ln N)`.
    pub fn theorem(t: usize, constants: ScheduleConstants) -> Result<Self> {
        check_t(t)?;
        let ScheduleConstants { c_theta, c_n, c_eta } = constants;
        if !(c_theta > 0.0 && c_n > 0.0 && c_eta > 0.0) {
            return Err(Error::Argument("schedule constants must be positive".into()));
        }
        let tf = t as f64;
        let big_n = to_count(c_n * tf * tf * tf.ln(), "N")?;
        if big_n < 2 {
            return Err(Error::Argument("N = 1 makes eta = c_eta / sqrt(N ln N) infinite".into()));
        }
        let nf = big_n as f64;
        Ok(Self {
            mode: ScheduleMode::Theorem,
            t,
            theta: theorem_theta(t, c_theta),
            big_n,
            eta: c_eta / (nf * nf.ln()).sqrt(),
            constants,
            k_mix: None,
        })
    }

    pub fn explicit(t: usize, theta: f64, big_n: u64, eta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite() && eta > 0.0 && eta.is_finite()) || big_n == 0 {
            return Err(Error::Argument(format!("need theta > 0, eta > 0, N >= 1 (got {theta}, {eta}, {big_n})")));
        }
        Ok(Self { mode: ScheduleMode::Explicit, t, theta, big_n, eta, constants: ScheduleConstants::default(), k_mix: None })
    }

    /// `N = X ln X` with `X = 1e7 t^2 c2^4 ln c2 / (p_min^4 c1)` and
    /// `eta = 1 / (400 sqrt(k_mix N))`.
    pub fn appendix_d(t: usize, c_theta: f64, mix: MixingConstants) -> Result<Self> {
        check_t(t)?;
        let MixingConstants { p_min, c1, c2 } = mix;
        if !(p_min > 0.0 && p_min <= 1.0 && c1 > 0.0 && c2 >= 1.0 && c_theta > 0.0) {
            return Err(Error::Argument(format!("need 0 < p_min <= 1, c1 > 0, c2 >= 1 (got {p_min}, {c1}, {c2})")));
        }
        let tf = t as f64;
        let x = 1e7 * tf * tf * c2.powi(4) * c2.ln() / (p_min.powi(4) * c1);
        if !(x > 1.0) {
            return Err(Error::Argument(format!("X = {x} <= 1 gives a non-positive N (c2 = {c2})")));
        }
        let big_n = to_count(x * x.ln(), "N")?;
        let k = k_mix(big_n, c1, c2)?;
        Ok(Self {
            mode: ScheduleMode::AppendixD,
            t,
            theta: theorem_theta(t, c_theta),
            big_n,
            eta: eta_max(k, big_n),
            constants: ScheduleConstants { c_theta, ..ScheduleConstants::default() },
            k_mix: Some(k),
        })
    }

    /// Records `k_mix` for the given constants and rejects a step size above
    /// [`eta_max`].
    pub fn check_mixing(mut self, c1: f64, c2: f64) -> Result<Self> {
        let k = k_mix(self.big_n, c1, c2)?;
        if self.big_n < k {
            return Err(Error::Argument(format!("N = {} is below k_mix = {k}", self.big_n)));
        }
        let cap = eta_max(k, self.big_n);
        if self.eta > cap {
            return Err(Error::Argument(format!("eta = {} exceeds 1/(400 sqrt(k_mix N)) = {cap}", self.eta)));
        }
        self.k_mix = Some(k);
        Ok(self)
    }

    /// Environment steps of a full run, counting the initial triple.
    pub fn total_steps(&self) -> u64 {
        self.t as u64 * self.big_n + 1
    }
}
