//! Seeds in parallel: how often the theorem inequality holds along the
//! whole path, and how far each run got.

use aclab::actor_critic::{run, RunConfig, Schedule, ScheduleConstants};
use aclab::audit::theorem_check;
use aclab::build::build_tabular_random;
use aclab::exact::MaxEntPolicy;
use rayon::prelude::*;

fn main() -> aclab::error::Result<()> {
    let (mdp, _) = build_tabular_random(3, 2, 0.5, 7)?;
    let maxent = MaxEntPolicy::compute(&mdp)?;
    let schedule = Schedule::theorem(32, ScheduleConstants { c_n: 0.5, ..Default::default() })?;

    let results: Vec<(u64, bool, f64)> = (0..12u64)
        .into_par_iter()
        .map(|seed| {
            let record = run(&mdp, &maxent, &schedule, seed, RunConfig::default()).expect("run");
            let check = theorem_check(&mdp, &record, &maxent).expect("audit");
            (seed, check.passed(), record.rows.last().unwrap().max_value_gap())
        })
        .collect();
    for (seed, passed, gap) in &results {
        println!("seed {seed:>2}: theorem {}  final value gap {gap:.4}", if *passed { "holds" } else { "FAILS" });
    }
    let rate = results.iter().filter(|r| r.1).count() as f64 / results.len() as f64;
    println!("pass rate {rate:.2}");
    Ok(())
}
