//! One critic call: TD(0) on a single trajectory, averaged, against the
//! exact fixed point.

use aclab::actor_critic::{td_inner_loop, TrajectoryCursor};
use aclab::build::build_tabular_random;
use aclab::exact::td_fixed_point;
use aclab::mdp::Policy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> aclab::error::Result<()> {
    let (mdp, _) = build_tabular_random(3, 2, 0.5, 5)?;
    let pi = Policy::uniform(3, 2);
    let fp = td_fixed_point(&mdp, &pi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cursor = TrajectoryCursor::start(&mdp, &pi, 0, &mut rng);
    for big_n in [1_000u64, 10_000, 100_000] {
        let eta = 1.0 / ((big_n as f64) * (big_n as f64).ln()).sqrt();
        let (out, next) = td_inner_loop(&mdp, &pi, cursor, big_n, eta, &mut rng, Some(&fp.u_bar))?;
        cursor = next;
        let err: f64 = out.u_hat.iter().zip(&fp.u_bar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        println!(
            "N = {big_n:>6}, eta = {eta:.2e}: ||U_hat - u_bar|| = {err:.4}, max ||U_j|| = {:.3}, steps so far {}",
            out.max_iterate_norm, cursor.steps_elapsed
        );
    }
    Ok(())
}
