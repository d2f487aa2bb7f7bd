//! The max-entropy optimal policy, and softmax(r * advantage) approaching it
//! as r grows.

use aclab::build::build_tabular;
use aclab::exact::MaxEntPolicy;
use aclab::mdp::softmax_table;

fn main() -> aclab::error::Result<()> {
    // action 2 duplicates action 0, so every state has a tie
    let t = vec![
        vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0], vec![0.5, 0.5, 0.0]],
        vec![vec![0.1, 0.1, 0.8], vec![0.3, 0.4, 0.3], vec![0.1, 0.1, 0.8]],
        vec![vec![0.2, 0.6, 0.2], vec![1.0, 0.0, 0.0], vec![0.2, 0.6, 0.2]],
    ];
    let r = vec![vec![0.7, 0.2, 0.7], vec![0.4, 0.9, 0.4], vec![0.6, 0.1, 0.6]];
    let (mdp, _) = build_tabular(&t, &r, 0.9)?;
    let me = MaxEntPolicy::compute(&mdp)?;
    println!("optimal sets {:?}, tie gap {:.4}", me.optimal_action_sets, me.tie_gap);
    for s in 0..3 {
        println!("pi_bar({s}) = {:.3?}", me.policy.row(s));
    }
    let k = mdp.num_actions();
    for scale in [1.0, 10.0, 100.0, 1e4] {
        let logits: Vec<f64> = me
            .q_star
            .chunks(k)
            .flat_map(|row| {
                let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.iter().map(move |q| scale * (q - best))
            })
            .collect();
        let phi = softmax_table(k, &logits)?;
        let tv = (0..3)
            .map(|s| 0.5 * (0..k).map(|a| (phi.prob(s, a) - me.policy.prob(s, a)).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        println!("r = {scale:>7}: max_s TV(softmax(r A), pi_bar) = {tv:.3e}");
    }
    Ok(())
}
