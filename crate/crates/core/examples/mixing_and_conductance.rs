//! Mixing curve, fitted envelope and conductance of an induced chain, plus
//! the lazy chain.

use aclab::build::build_tabular_random;
use aclab::chain::{conductance, induced_chain, lazy_chain, mixing_report, MixingOptions};
use aclab::mdp::Policy;

fn main() -> aclab::error::Result<()> {
    let (mdp, _) = build_tabular_random(6, 2, 0.9, 21)?;
    let chain = induced_chain(&mdp, &Policy::uniform(6, 2))?;
    let sigma = chain.stationary()?;
    println!("stationary {:.4?}", sigma.probs());

    let rep = mixing_report(&chain, &sigma, MixingOptions { horizon: 40, ..Default::default() })?;
    for (t, tv) in rep.tv_curve.iter().enumerate().take(8) {
        println!("t = {:>2}  TV = {tv:.3e}  envelope = {:.3e}", t + 1, rep.m1 * (-rep.m2 * (t + 1) as f64).exp());
    }
    println!("TV <= {:.3} exp(-{:.3} t), conductance {:.4}", rep.m1, rep.m2, rep.conductance.unwrap());

    let lazy = lazy_chain(&chain);
    println!("lazy conductance {:.4}", conductance(&lazy, &lazy.stationary()?)?);
    Ok(())
}
