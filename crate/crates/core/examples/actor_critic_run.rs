//! A full single-trajectory run with the theorem schedule, streamed as CSV
//! to stdout.
//!
//! ```text
//! cargo run --release --example actor_critic_run -- 32
//! ```

use aclab::actor_critic::{run_observed, write_csv_header, write_csv_row, RunConfig, RunHeader, Schedule, ScheduleConstants};
use aclab::build::build_tabular_random;
use aclab::exact::MaxEntPolicy;

fn main() -> aclab::error::Result<()> {
    let t = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(16);
    let (mdp, _) = build_tabular_random(4, 2, 0.5, 3)?;
    let maxent = MaxEntPolicy::compute(&mdp)?;
    let schedule = Schedule::theorem(t, ScheduleConstants::default())?;
    let config = RunConfig::default();

    let mut out = std::io::stdout().lock();
    write_csv_header(&mut out, &RunHeader::new(&mdp, &schedule, 0, config))?;
    let record = run_observed(&mdp, &maxent, &schedule, 0, config, &mut |row| Ok(write_csv_row(&mut out, row)?))?;
    eprintln!("{} rows, {} steps, largest TD iterate norm {:.3}", record.rows.len(), schedule.total_steps(), record.max_iterate_norm);
    Ok(())
}
