//! Which softmax policies lie in the KL ball around the max-entropy policy,
//! and the mixing constants shared by all of them.

use aclab::actor_critic::MixingConstants;
use aclab::build::build_lowrank_random;
use aclab::chain::MixingOptions;
use aclab::exact::MaxEntPolicy;
use aclab::actor_critic::Schedule;

fn main() -> aclab::error::Result<()> {
    let (mdp, _) = build_lowrank_random(4, 3, 6, 0.5, 8)?;
    let me = MaxEntPolicy::compute(&mdp)?;
    let (mix, audit) = MixingConstants::estimate(&mdp, &me, 40, 1, MixingOptions::default())?;
    println!(
        "radius {:.3}: {} inside, {} outside, {} failures",
        audit.radius,
        audit.members.len(),
        audit.outside.len(),
        audit.failures.len()
    );
    println!("p_min {:.4}, C1 {:.4}, C2 {:.4}, policy ratio {:.3}", mix.p_min, mix.c1, mix.c2, audit.policy_ratio_bound);

    match Schedule::appendix_d(16, 1.0, mix) {
        Ok(s) => println!("fully specified schedule: N = {:.3e}, eta = {:.3e}, k_mix = {:?}", s.big_n as f64, s.eta, s.k_mix),
        Err(e) => println!("fully specified schedule unavailable: {e}"),
    }
    Ok(())
}
