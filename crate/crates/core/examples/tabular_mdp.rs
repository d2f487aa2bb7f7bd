//! Build a small tabular MDP by hand, check its linear certificate and
//! evaluate a policy exactly.
//!
//! ```text
//! cargo run --example tabular_mdp
//! ```

use aclab::build::build_tabular;
use aclab::exact::policy_values;
use aclab::mdp::{validate_linear, Policy};

fn main() -> aclab::error::Result<()> {
    // two states; action 0 stays, action 1 swaps
    let transitions = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    ];
    let rewards = vec![vec![0.2, 0.0], vec![1.0, 0.5]];
    let (mdp, params) = build_tabular(&transitions, &rewards, 0.9)?;

    let report = validate_linear(&mdp, &params, 1e-12);
    println!("d = {}, certificate residuals: reward {:.1e}, transition {:.1e}, passed {}",
        mdp.dim(), report.max_reward_residual, report.max_transition_residual, report.passed);

    let uniform = Policy::uniform(2, 2);
    let v = policy_values(&mdp, &uniform)?;
    for s in 0..2 {
        println!("state {s}: V = {:.4}, Q = ({:.4}, {:.4})", v.v[s], v.q_at(s, 0), v.q_at(s, 1));
    }
    Ok(())
}
