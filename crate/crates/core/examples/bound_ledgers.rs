//! Audit one run: the simplified and refined ledgers for each start state and
//! the per-state theorem table.

use aclab::actor_critic::{run, RunConfig, Schedule, ScheduleConstants};
use aclab::audit::{AuditedRun, BoundaryTerm};
use aclab::build::build_tabular_random;
use aclab::exact::MaxEntPolicy;
use aclab::mdp::Distribution;

fn main() -> aclab::error::Result<()> {
    let (mdp, _) = build_tabular_random(3, 2, 0.5, 1)?;
    let maxent = MaxEntPolicy::compute(&mdp)?;
    let schedule = Schedule::theorem(24, ScheduleConstants::default())?;
    let record = run(&mdp, &maxent, &schedule, 42, RunConfig::default())?;
    let audited = AuditedRun::new(&mdp, &record, &maxent)?;

    for s in 0..mdp.num_states() {
        let mu = Distribution::dirac(mdp.num_states(), s);
        let simple = audited.simplified(&mu, None)?;
        let refined = audited.refined(&mu, BoundaryTerm::CarryForward)?;
        println!(
            "s = {s}: simplified min slack {:.4}, refined min slack {:.4}, monotonicity violations {}",
            simple.min_slack,
            refined.min_slack,
            refined.monotonicity_violations.len()
        );
    }
    let mut ledger = Vec::new();
    audited.simplified(&Distribution::uniform(mdp.num_states()), None)?.write_csv(&mut ledger)?;
    print!("{}", String::from_utf8_lossy(&ledger).lines().take(5).collect::<Vec<_>>().join("\n"));
    println!();

    let check = audited.theorem()?;
    println!("theorem: max lhs/rhs {:.4}, violations {:?}, max KL {:.4} <= {:.4}",
        check.summary.max_lhs_over_rhs, check.summary.violations, check.max_kl, check.rhs);
    Ok(())
}
