//! Random low-rank linear MDPs: features in the unit ball, a signed
//! certificate, and a max-entropy policy whose chain mixes.
//!
//! ```text
//! cargo run --example lowrank_generator -- 4 3 8
//! ```

use aclab::build::build_lowrank_random;
use aclab::exact::MaxEntPolicy;
use aclab::io::{mdp_digest, MdpDocument};
use aclab::mdp::validate_linear;

fn main() -> aclab::error::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (d, k, n) = match args[..] {
        [d, k, n] => (d, k, n),
        _ => (4, 3, 8),
    };
    for seed in 0..3 {
        let (mdp, params) = build_lowrank_random(d, k, n, 0.9, seed)?;
        let report = validate_linear(&mdp, &params, 1e-9);
        let me = MaxEntPolicy::compute(&mdp)?;
        let max_norm = (0..n)
            .map(|s| mdp.feature(s).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        println!(
            "seed {seed}: valid {}, max ||s|| {max_norm:.3}, optimal sets {:?}, digest {}",
            report.passed,
            me.optimal_action_sets,
            &mdp_digest(&mdp)[..12]
        );
    }
    let (mdp, params) = build_lowrank_random(d, k, n, 0.9, 0)?;
    let doc = MdpDocument::new(&mdp, &params, Some(0));
    println!("JSON document: {} bytes", serde_json::to_string(&doc).unwrap().len());
    Ok(())
}
