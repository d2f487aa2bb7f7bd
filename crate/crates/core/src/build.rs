//! MDP constructors: tabular (one-hot features) and random low-rank.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::exact::MaxEntPolicy;
use crate::mdp::{LinearMdpParams, Mdp};

/// Retry budget of [`build_lowrank_random`].
pub const GENERATION_ATTEMPTS: usize = 64;

/// First feature coordinate of every low-rank state.
const ANCHOR: f64 = 0.5;

/// Tabular MDP with `features = I`. `transitions[s][a]` is `P(. | s, a)`.
pub fn build_tabular(transitions: &[Vec<Vec<f64>>], reward_means: &[Vec<f64>], gamma: f64) -> Result<(Mdp, LinearMdpParams)> {
    let n = transitions.len();
    if n == 0 || reward_means.len() != n {
        return Err(Error::Construction("transitions and rewards must cover the same non-empty state set".into()));
    }
    let k = transitions[0].len();
    let mut flat = Vec::with_capacity(n * k * n);
    let mut rewards = Vec::with_capacity(n * k);
    for s in 0..n {
        if transitions[s].len() != k || reward_means[s].len() != k {
            return Err(Error::Construction(format!("state {s} has the wrong number of actions")));
        }
        for a in 0..k {
            if transitions[s][a].len() != n {
                return Err(Error::Construction(format!("row (s={s}, a={a}) has length {}", transitions[s][a].len())));
            }
            flat.extend_from_slice(&transitions[s][a]);
        }
        rewards.extend_from_slice(&reward_means[s]);
    }
    let features = identity(n);
    let mdp = Mdp::new(n, k, features, flat, rewards, gamma)?;
    Ok((mdp.clone(), tabular_params(&mdp)))
}

fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()
}

/// Exact certificate of a tabular MDP: `y = r` and column `s k + a` of `M`
/// is `P(. | s, a)`.
fn tabular_params(mdp: &Mdp) -> LinearMdpParams {
    let (n, k) = (mdp.num_states(), mdp.num_actions());
    let dk = n * k;
    let mut m = vec![0.0; n * dk];
    for s in 0..n {
        for a in 0..k {
            for (s2, p) in mdp.next_distribution(s, a).iter().enumerate() {
                m[s2 * dk + s * k + a] = *p;
            }
        }
    }
    LinearMdpParams { m_matrix: m, y_vector: mdp.reward_means().to_vec() }
}

fn dirichlet<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Tabular MDP with flat-Dirichlet transition rows and uniform reward means.
pub fn build_tabular_random(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Result<(Mdp, LinearMdpParams)> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::Argument("need at least one state and one action".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transitions: Vec<Vec<Vec<f64>>> = (0..num_states)
        .map(|_| (0..num_actions).map(|_| dirichlet(num_states, &mut rng)).collect())
        .collect();
    let rewards: Vec<Vec<f64>> = (0..num_states)
        .map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    build_tabular(&transitions, &rewards, gamma)
}

/// Random linear MDP in `d` dimensions.
///
/// Each state is `s = (1/2, z)` with `z >= 0` and `||s||` uniform in
/// `[1/2, 1]`. Transitions mix `d` Dirichlet measures per action:
/// `P(. | s, a) = (1 - kappa sum_i z_i) nu_0a + kappa sum_i z_i nu_ia`
/// with `kappa = 2 / sqrt(3 (d - 1))`, which keeps the weights convex.
/// Rewards are `beta_a + sum_i z_i y_ia` with both parts in `[0, 1/2]`.
/// Instances are redrawn until the max-entropy optimal policy induces an
/// irreducible aperiodic chain.
pub fn build_lowrank_random(
    d: usize,
    k: usize,
    num_states: usize,
    gamma: f64,
    seed: u64,
) -> Result<(Mdp, LinearMdpParams)> {
    if d == 0 || k < 2 || num_states < 2 {
        return Err(Error::Argument(format!("need d >= 1, k >= 2, |S| >= 2 (got d={d}, k={k}, |S|={num_states})")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Argument(format!("gamma {gamma} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_failure = String::new();
    for _ in 0..GENERATION_ATTEMPTS {
        let (mdp, params) = lowrank_candidate(d, k, num_states, gamma, &mut rng)?;
        match MaxEntPolicy::compute(&mdp) {
            Ok(me) if me.has_stationary() => return Ok((mdp, params)),
            Ok(me) if !me.irreducible => last_failure = "max-entropy optimal policy is not irreducible".into(),
            Ok(_) => last_failure = "max-entropy optimal policy is periodic".into(),
            Err(e) => last_failure = format!("max-entropy optimal policy unavailable: {e}"),
        }
    }
    Err(Error::Generation { attempts: GENERATION_ATTEMPTS, property: last_failure })
}

fn lowrank_candidate<R: Rng>(d: usize, k: usize, n: usize, gamma: f64, rng: &mut R) -> Result<(Mdp, LinearMdpParams)> {
    let dk = d * k;
    let mut features = Vec::with_capacity(n * d);
    if d == 1 {
        // one coordinate: every state shares the feature, so P and r may only depend on a
        let c = rng.random_range(0.5..=1.0);
        features.resize(n, c);
    } else {
        for _ in 0..n {
            let rho: f64 = rng.random_range(0.5..=1.0);
            let radius = (rho * rho - ANCHOR * ANCHOR).max(0.0).sqrt();
            let mut z: Vec<f64> = (0..d - 1).map(|_| StandardNormal.sample(rng)).map(|x: f64| x.abs()).collect();
            let zn = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            if zn > 0.0 {
                z.iter_mut().for_each(|x| *x *= radius / zn);
            }
            features.push(ANCHOR);
            features.extend(z);
        }
    }
    let anchor = features[0];
    let kappa = if d > 1 { 2.0 / (3.0 * (d - 1) as f64).sqrt() } else { 0.0 };

    // nu[i][a] is a distribution over next states
    let nu: Vec<Vec<Vec<f64>>> = (0..d).map(|_| (0..k).map(|_| dirichlet(n, rng)).collect()).collect();
    let beta: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=if d > 1 { 0.5 } else { 1.0 })).collect();
    let y_hi = if d > 1 { 1.0 / (3.0 * (d - 1) as f64).sqrt() } else { 0.0 };
    let y_rest: Vec<f64> = (0..(d - 1) * k).map(|_| rng.random_range(0.0..=y_hi)).collect();

    let mut y = vec![0.0; dk];
    // signed certificate measures, mu[i][a]
    let mut mu = vec![vec![vec![0.0; n]; k]; d];
    for a in 0..k {
        y[a] = beta[a] / anchor;
        for s2 in 0..n {
            mu[0][a][s2] = nu[0][a][s2] / anchor;
        }
        for i in 1..d {
            y[i * k + a] = y_rest[(i - 1) * k + a];
            for s2 in 0..n {
                mu[i][a][s2] = kappa * (nu[i][a][s2] - nu[0][a][s2]);
            }
        }
    }

    let mut transitions = Vec::with_capacity(n * k * n);
    let mut rewards = Vec::with_capacity(n * k);
    for s in 0..n {
        let z = &features[s * d + 1..(s + 1) * d];
        let base = (1.0 - kappa * z.iter().sum::<f64>()).max(0.0);
        for a in 0..k {
            for s2 in 0..n {
                let mixed: f64 = z.iter().enumerate().map(|(i, zi)| kappa * zi * nu[i + 1][a][s2]).sum();
                transitions.push(base * nu[0][a][s2] + mixed);
            }
            let r: f64 = beta[a] + z.iter().enumerate().map(|(i, zi)| zi * y[(i + 1) * k + a]).sum::<f64>();
            rewards.push(r.clamp(0.0, 1.0));
        }
    }

    let mut m = vec![0.0; d * dk];
    for i in 0..d {
        for a in 0..k {
            let col = i * k + a;
            for s2 in 0..n {
                let w = mu[i][a][s2];
                for (row, f) in features[s2 * d..(s2 + 1) * d].iter().enumerate() {
                    m[row * dk + col] += w * f;
                }
            }
        }
    }
    let mdp = Mdp::new(n, k, features, transitions, rewards, gamma)?;
    Ok((mdp, LinearMdpParams { m_matrix: m, y_vector: y }))
}
