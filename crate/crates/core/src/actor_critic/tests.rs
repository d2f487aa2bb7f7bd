use super::*;
use crate::build::{build_lowrank_random, build_tabular, build_tabular_random};
use crate::exact::td_fixed_point;
use crate::mdp::softmax_table;

fn single_state(rewards: &[f64], gamma: f64) -> Mdp {
    let k = rewards.len();
    build_tabular(&[vec![vec![1.0]; k]], &[rewards.to_vec()], gamma).unwrap().0
}

fn start(mdp: &Mdp, policy: &Policy, seed: u64) -> (TrajectoryCursor, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = TrajectoryCursor::start(mdp, policy, 0, &mut rng);
    (c, rng)
}

#[test]
fn td_recovers_single_state_fixed_point() {
    let mdp = single_state(&[1.0], 0.5);
    let pi = Policy::uniform(1, 1);
    let fp = td_fixed_point(&mdp, &pi).unwrap();
    assert!((fp.u_bar[0] - 2.0).abs() < 1e-12);
    let (c, mut rng) = start(&mdp, &pi, 3);
    let (out, _) = td_inner_loop(&mdp, &pi, c, 10_000, 0.01, &mut rng, Some(&fp.u_bar)).unwrap();
    assert!((out.u_hat[0] - 2.0).abs() < 0.05, "{}", out.u_hat[0]);
    let trace = out.iterate_norm_trace.unwrap();
    assert_eq!(trace.len(), 10_001);
    assert_eq!(trace[0], 2.0);
    assert!(trace[10_000] < 1e-6);
}

#[test]
fn zero_step_size_freezes_the_critic() {
    let mdp = build_tabular_random(3, 2, 0.9, 1).unwrap().0;
    let pi = Policy::uniform(3, 2);
    let (c, mut rng) = start(&mdp, &pi, 0);
    let (out, next) = td_inner_loop(&mdp, &pi, c, 500, 0.0, &mut rng, None).unwrap();
    assert!(out.u_hat.iter().chain(&out.final_iterate).all(|&x| x == 0.0));
    assert_eq!(next.steps_elapsed, 501);
}

#[test]
fn td_is_deterministic() {
    let (mdp, _) = build_lowrank_random(3, 2, 6, 0.9, 5).unwrap();
    let pi = softmax_table(2, &[0.1, 0.0, -0.4, 0.3, 0.0, 0.0, 1.0, -1.0, 0.2, 0.2, 0.5, 0.0]).unwrap();
    let (c, rng) = start(&mdp, &pi, 9);
    let a = td_inner_loop(&mdp, &pi, c, 2000, 0.05, &mut rng.clone(), None).unwrap();
    let b = td_inner_loop(&mdp, &pi, c, 2000, 0.05, &mut rng.clone(), None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn u_hat_is_the_mean_of_the_iterates() {
    // a loop of length m ends at U_m on the same random stream
    let (mdp, _) = build_lowrank_random(3, 2, 5, 0.7, 2).unwrap();
    let pi = Policy::uniform(5, 2);
    let (c, rng) = start(&mdp, &pi, 4);
    let big_n = 40;
    let (full, _) = td_inner_loop(&mdp, &pi, c, big_n, 0.2, &mut rng.clone(), None).unwrap();
    let mut mean = vec![0.0; 6];
    for m in 1..big_n {
        let (prefix, _) = td_inner_loop(&mdp, &pi, c, m, 0.2, &mut rng.clone(), None).unwrap();
        mean.iter_mut().zip(&prefix.final_iterate).for_each(|(a, b)| *a += b);
    }
    for (a, b) in mean.iter().zip(&full.u_hat) {
        assert!((a / big_n as f64 - b).abs() <= 1e-12);
    }
}

#[test]
fn large_step_size_diverges_with_step_index() {
    let mdp = single_state(&[1.0, 0.5], 0.99);
    let pi = Policy::uniform(1, 2);
    let (c, mut rng) = start(&mdp, &pi, 0);
    match td_inner_loop(&mdp, &pi, c, 100_000, 1e6, &mut rng, None) {
        Err(Error::Divergence { step, .. }) => assert!(step > 0 && step < 100_000),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn actor_step_examples() {
    let w = PolicyWeights::from_vec(2, 2, vec![0.3, -0.1, 0.0, 2.0]).unwrap();
    assert_eq!(actor_step(&w, &[1.0, 2.0, 3.0, 4.0], 0.0).unwrap(), w);
    assert_eq!(actor_step(&w, &[0.0; 4], 0.7).unwrap(), w);

    let (mdp, _) = build_lowrank_random(2, 2, 4, 0.9, 3).unwrap();
    let a = [0.5, -1.0, 2.0, 0.25];
    let w1 = actor_step(&PolicyWeights::zeros(2, 2), &a, 1.0).unwrap();
    let pi = softmax_policy(&w1, &mdp).unwrap();
    let am = PolicyWeights::from_vec(2, 2, a.to_vec()).unwrap();
    for s in 0..4 {
        let logits: Vec<f64> = (0..2).map(|b| am.logit(mdp.feature(s), b)).collect();
        let expect = softmax_table(2, &logits).unwrap();
        for b in 0..2 {
            assert!((pi.prob(s, b) - expect.prob(0, b)).abs() < 1e-15);
        }
    }
}

#[test]
fn zero_budget_records_the_uniform_start() {
    let mdp = single_state(&[0.9, 0.1], 0.5);
    let me = MaxEntPolicy::compute(&mdp).unwrap();
    let mut sched = Schedule::theorem(2, ScheduleConstants::default()).unwrap();
    sched.t = 0;
    let rec = run(&mdp, &me, &sched, 1, RunConfig::default()).unwrap();
    assert_eq!(rec.rows.len(), 1);
    let row = &rec.rows[0];
    // K(pi_bar, uniform) = ln(k / |A_s|)
    assert!((row.kl[0] - 2f64.ln()).abs() < 1e-12);
    assert!((row.entropy[0] - 2f64.ln()).abs() < 1e-12);
    assert!(row.eps_sup.is_none());
    assert_eq!(rec.snapshots[0].weights, vec![0.0, 0.0]);
}

#[test]
fn runs_are_reproducible_and_continuous() {
    let (mdp, _) = build_tabular_random(3, 2, 0.5, 8).unwrap();
    let me = MaxEntPolicy::compute(&mdp).unwrap();
    let sched = Schedule::explicit(6, 0.3, 200, 0.05).unwrap();
    let a = run(&mdp, &me, &sched, 42, RunConfig::default()).unwrap();
    let b = run(&mdp, &me, &sched, 42, RunConfig::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.rows.len(), 7);
    for (i, row) in a.rows.iter().enumerate() {
        assert_eq!(row.iter, i);
        let expected = if i < 6 { (i as u64 + 1) * 200 + 1 } else { 6 * 200 + 1 };
        assert_eq!(row.steps, expected);
        assert!(row.kl.iter().all(|&k| k >= 0.0));
        assert!(row.eps_combined.map_or(i == 6, |e| e >= 0.0));
    }
    let c = run(&mdp, &me, &sched, 43, RunConfig::default()).unwrap();
    assert_ne!(a.rows[6].max_kl, c.rows[6].max_kl);
}

#[test]
fn values_are_approximately_monotone() {
    let (mdp, _) = build_lowrank_random(3, 3, 6, 0.9, 4).unwrap();
    let me = MaxEntPolicy::compute(&mdp).unwrap();
    let sched = Schedule::explicit(10, 0.2, 3000, 0.02).unwrap();
    let rec = run(&mdp, &me, &sched, 7, RunConfig::default()).unwrap();
    for w in rec.rows.windows(2) {
        let bound = 2.0 * w[0].eps_sup.unwrap() / (1.0 - 0.9);
        for s in 0..6 {
            // V_i = V_bar - gap_i
            let drop = w[1].value_gap[s] - w[0].value_gap[s];
            assert!(drop <= bound + 1e-9);
        }
    }
}

#[test]
fn diagnostics_stride_and_thinning() {
    let (mdp, _) = build_tabular_random(3, 2, 0.5, 8).unwrap();
    let me = MaxEntPolicy::compute(&mdp).unwrap();
    let sched = Schedule::explicit(7, 0.3, 50, 0.05).unwrap();
    let cfg = RunConfig { diag_every: 3, snapshot_every: 2, ..RunConfig::default() };
    let rec = run(&mdp, &me, &sched, 1, cfg).unwrap();
    assert_eq!(rec.rows.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![0, 3, 6, 7]);
    assert_eq!(rec.snapshots.iter().map(|s| s.iter).collect::<Vec<_>>(), vec![0, 2, 4, 6, 7]);
    // the trajectory does not depend on the diagnostics
    let full = run(&mdp, &me, &sched, 1, RunConfig::default()).unwrap();
    assert_eq!(full.snapshots[7].weights, rec.snapshots[4].weights);
}

#[test]
fn exact_oracle_critic_has_no_error() {
    let (mdp, _) = build_lowrank_random(3, 2, 5, 0.9, 6).unwrap();
    let me = MaxEntPolicy::compute(&mdp).unwrap();
    let sched = Schedule::explicit(5, 0.5, 10, 0.1).unwrap();
    let cfg = RunConfig { critic: CriticMode::ExactOracle, ..RunConfig::default() };
    let rec = run(&mdp, &me, &sched, 0, cfg).unwrap();
    for row in &rec.rows[..5] {
        assert!(row.eps_sup.unwrap() < 1e-10);
    }
    assert!(rec.rows[5].max_value_gap() < rec.rows[0].max_value_gap());
}

#[test]
fn divergence_keeps_the_partial_record() {
    let mdp = single_state(&[1.0, 0.5], 0.99);
    let me = MaxEntPolicy::compute(&mdp).unwrap();
    let sched = Schedule::explicit(3, 0.1, 100_000, 1e6).unwrap();
    let err = run(&mdp, &me, &sched, 0, RunConfig::default()).unwrap_err();
    assert!(matches!(err.error, Error::Divergence { iteration: 0, .. }));
    assert!(err.record.rows.is_empty());
    assert_eq!(err.record.snapshots.len(), 1);
    assert!(err.record.aborted.is_some());
}

#[test]
fn csv_has_one_line_per_row() {
    let (mdp, _) = build_tabular_random(3, 2, 0.5, 8).unwrap();
    let me = MaxEntPolicy::compute(&mdp).unwrap();
    let sched = Schedule::explicit(4, 0.3, 20, 0.05).unwrap();
    let rec = run(&mdp, &me, &sched, 5, RunConfig::default()).unwrap();
    let csv = rec.to_csv();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], CSV_COLUMNS);
    assert_eq!(body.len(), 6);
    assert!(body[5].split(',').nth(4).unwrap().is_empty());
    let parsed: f64 = body[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(parsed.to_bits(), rec.rows[0].max_kl.to_bits());
}
