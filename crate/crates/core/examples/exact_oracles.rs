//! The exact oracles the audits lean on: visitation, the
//! performance-difference identity, and the TD fixed point.

use aclab::build::build_lowrank_random;
use aclab::exact::{performance_difference, td_fixed_point, visitation};
use aclab::mdp::{softmax_policy, Distribution, Policy, PolicyWeights};

fn main() -> aclab::error::Result<()> {
    let (mdp, _) = build_lowrank_random(3, 2, 5, 0.8, 4)?;
    let (d, k, n) = (mdp.dim(), mdp.num_actions(), mdp.num_states());

    let w: Vec<f64> = (0..d * k).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.6).collect();
    let pi = softmax_policy(&PolicyWeights::from_vec(d, k, w)?, &mdp)?;
    let uniform = Policy::uniform(n, k);
    let mu = Distribution::dirac(n, 0);

    let dv = visitation(&mdp, &uniform, &mu)?;
    println!("d_uniform^mu = {:.4?}", dv.probs());

    let (lhs, rhs) = performance_difference(&mdp, &pi, &uniform, &mu)?;
    println!("V_pi(mu) - V_u(mu) = {lhs:.12}");
    println!("<Q_pi, pi - u> / (1-g) = {rhs:.12}");

    let fp = td_fixed_point(&mdp, &pi)?;
    println!(
        "TD fixed point: error on support {:.2e}, ||u_bar|| = {:.4} (2/(1-g) = {:.1}, within: {})",
        fp.max_support_error, fp.norm, fp.norm_bound, fp.norm_within_bound
    );
    Ok(())
}
