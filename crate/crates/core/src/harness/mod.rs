//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 generation failure,
//! 3 divergence, 4 consistency mismatch, 5 chain-structure failure.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
pub use config::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_GENERATION: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_STRUCTURE: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Generation { .. } => EXIT_GENERATION,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Mismatch(_) | Error::Audit(_) | Error::LinearityViolation(_) => EXIT_MISMATCH,
        Error::Structure(_) => EXIT_STRUCTURE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Parser, Debug)]
#[command(name = "aclab", version, about = "Single-trajectory linear actor-critic: generate, run, audit")]
pub struct Cli {
    /// Flat key = value settings file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a random tabular or low-rank linear MDP.
    Generate(GenerateArgs),
    /// Check an MDP file against its linear certificate.
    Validate(ValidateArgs),
    /// Run the actor-critic on one seed.
    Run(RunArgs),
    /// Evaluate the mirror-descent bounds on a recorded run.
    Audit(AuditArgs),
    /// Mixing constants of a policy, or KL-ball audit of a run's policies.
    Mixing(MixingArgs),
    /// Run and audit a range of seeds in parallel.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, conflicts_with = "lowrank")]
    pub tabular: bool,
    #[arg(long)]
    pub lowrank: bool,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub t: Option<usize>,
    /// theorem | explicit | appendix_d
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub c_theta: Option<f64>,
    #[arg(long)]
    pub c_n: Option<f64>,
    #[arg(long)]
    pub c_eta: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub big_n: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Policies sampled when estimating mixing constants.
    #[arg(long)]
    pub samples: Option<usize>,
    /// uniform | state index
    #[arg(long)]
    pub start_state: Option<String>,
    #[arg(long)]
    pub diag_every: Option<usize>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// td | exact
    #[arg(long)]
    pub critic: Option<String>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// zero | carry
    #[arg(long)]
    pub boundary: Option<String>,
}

#[derive(Args, Debug)]
pub struct MixingArgs {
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// maxent | uniform
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// stationary | visitation
    #[arg(long)]
    pub measure: Option<String>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub boundary: Option<String>,
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

impl RunArgs {
    fn fill(self, s: &mut Settings) {
        s.flag("mdp", path_str(self.mdp));
        s.flag("t", self.t);
        s.flag("schedule", self.schedule);
        s.flag("c_theta", self.c_theta);
        s.flag("c_n", self.c_n);
        s.flag("c_eta", self.c_eta);
        s.flag("theta", self.theta);
        s.flag("big_n", self.big_n);
        s.flag("eta", self.eta);
        s.flag("p_min", self.p_min);
        s.flag("c1", self.c1);
        s.flag("c2", self.c2);
        s.flag("samples", self.samples);
        s.flag("start_state", self.start_state);
        s.flag("diag_every", self.diag_every);
        s.flag("snapshot_every", self.snapshot_every);
        s.flag("critic", self.critic);
    }
}

/// Merges the config file and the flags into one settings map.
pub fn resolve(cli: Cli) -> Result<(Settings, Command), Error> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    s.flag("seed", cli.seed);
    s.flag("out", path_str(cli.out));
    if cli.quiet {
        s.set("quiet", "true");
    }
    let command = match cli.command {
        Command::Generate(a) => {
            if a.tabular {
                s.set("generator", "tabular");
            } else if a.lowrank {
                s.set("generator", "lowrank");
            }
            s.flag("states", a.states);
            s.flag("actions", a.actions);
            s.flag("dim", a.dim);
            s.flag("gamma", a.gamma);
            s.flag("output", path_str(a.output));
            Command::Generate(GenerateArgs { tabular: false, lowrank: false, states: None, actions: None, dim: None, gamma: None, output: None })
        }
        Command::Validate(a) => {
            s.flag("mdp", path_str(a.mdp));
            s.flag("tol", a.tol);
            Command::Validate(ValidateArgs { mdp: None, tol: None })
        }
        Command::Run(a) => {
            a.fill(&mut s);
            Command::Run(RunArgs::empty())
        }
        Command::Audit(a) => {
            s.flag("mdp", path_str(a.mdp));
            s.flag("run", path_str(a.run));
            s.flag("boundary", a.boundary);
            Command::Audit(AuditArgs { mdp: None, run: None, boundary: None })
        }
        Command::Mixing(a) => {
            s.flag("mdp", path_str(a.mdp));
            s.flag("run", path_str(a.run));
            s.flag("policy", a.policy);
            s.flag("horizon", a.horizon);
            s.flag("measure", a.measure);
            Command::Mixing(MixingArgs { mdp: None, run: None, policy: None, horizon: None, measure: None })
        }
        Command::Sweep(a) => {
            a.run.fill(&mut s);
            s.flag("seeds", a.seeds);
            s.flag("boundary", a.boundary);
            Command::Sweep(SweepArgs { run: RunArgs::empty(), seeds: None, boundary: None })
        }
    };
    Ok((s, command))
}

impl RunArgs {
    fn empty() -> Self {
        Self {
            mdp: None,
            t: None,
            schedule: None,
            c_theta: None,
            c_n: None,
            c_eta: None,
            theta: None,
            big_n: None,
            eta: None,
            p_min: None,
            c1: None,
            c2: None,
            samples: None,
            start_state: None,
            diag_every: None,
            snapshot_every: None,
            critic: None,
        }
    }
}

/// Runs one command on resolved settings and returns the exit code.
pub fn dispatch(settings: &Settings, command: &Command) -> i32 {
    let result = match command {
        Command::Generate(_) => commands::generate(settings),
        Command::Validate(_) => commands::validate(settings),
        Command::Run(_) => commands::run(settings),
        Command::Audit(_) => commands::audit(settings),
        Command::Mixing(_) => commands::mixing(settings),
        Command::Sweep(_) => commands::sweep(settings),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `std::env::args` and runs the command.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match resolve(cli) {
        Ok((settings, command)) => dispatch(&settings, &command),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
