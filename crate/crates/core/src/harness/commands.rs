use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::Settings;
use super::{EXIT_DIVERGENCE, EXIT_MISMATCH, EXIT_OK};
use crate::actor_critic::{
    run_with_header, CriticMode, CsvSink, MixingConstants, RunConfig, RunHeader, RunRecord, Schedule,
    ScheduleConstants, StartState,
};
use crate::audit::{check_digest, AuditedRun, BoundLedger, BoundaryTerm, TheoremCheck};
use crate::build::{build_lowrank_random, build_tabular_random};
use crate::chain::{induced_chain, kl_ball_audit, mixing_report, BallMeasure, MixingOptions};
use crate::error::{Error, Result};
use crate::exact::MaxEntPolicy;
use crate::io::{load_mdp, mdp_digest, read_json, write_json, MdpDocument, SCHEMA_VERSION};
use crate::mdp::{softmax_policy, validate_linear, Distribution, Mdp, Policy, PolicyWeights};

const DEFAULT_VALIDATE_TOL: f64 = 1e-9;

fn say(s: &Settings, msg: impl AsRef<str>) {
    if !s.quiet() {
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), "{}", msg.as_ref());
    }
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = s.path("out").unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn seed(s: &Settings) -> Result<u64> {
    s.get_or("seed", 0)
}

fn config_map(s: &Settings) -> BTreeMap<String, String> {
    s.as_map().iter().filter(|(k, _)| k.as_str() != "quiet").map(|(k, v)| (k.clone(), v.clone())).collect()
}

/// Adds schema version, digest, seed and settings to a JSON body.
fn artifact<T: Serialize>(s: &Settings, digest: &str, seed: u64, body: &T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(body)?;
    let head = json!({
        "schema_version": SCHEMA_VERSION,
        "mdp_digest": digest,
        "seed": seed,
        "config": config_map(s),
    });
    match (&mut v, head) {
        (serde_json::Value::Object(m), serde_json::Value::Object(h)) => {
            for (k, x) in h {
                m.entry(k).or_insert(x);
            }
            Ok(v)
        }
        (_, h) => Ok(json!({ "header": h, "body": v })),
    }
}

/// Loads an MDP and rejects one that fails validation.
fn load_checked(s: &Settings) -> Result<Mdp> {
    let path = s.path("mdp").ok_or_else(|| Error::Argument("missing required setting 'mdp'".into()))?;
    let (mdp, params, _) = load_mdp(&path).map_err(as_mismatch)?;
    let tol = s.get_or("tol", DEFAULT_VALIDATE_TOL)?;
    let report = validate_linear(&mdp, &params, tol);
    if !report.passed {
        return Err(Error::Mismatch(format!("{} fails linear-MDP validation at tol {tol}", path.display())));
    }
    Ok(mdp)
}

/// A file that exists but cannot be decoded is a consistency failure.
fn as_mismatch(e: Error) -> Error {
    match e {
        Error::Json(e) => Error::Mismatch(format!("corrupted file: {e}")),
        Error::Construction(m) => Error::Mismatch(format!("malformed MDP: {m}")),
        e => e,
    }
}

fn load_run(s: &Settings) -> Result<RunRecord> {
    let path = s.path("run").ok_or_else(|| Error::Argument("missing required setting 'run'".into()))?;
    read_json(&path).map_err(as_mismatch)
}

pub fn generate(s: &Settings) -> Result<i32> {
    let generator = s.raw("generator").unwrap_or("lowrank");
    let states = s.get_or("states", 5usize)?;
    let actions = s.get_or("actions", 3usize)?;
    let dim = s.get_or("dim", 4usize)?;
    let gamma = s.get_or("gamma", 0.9f64)?;
    let seed = seed(s)?;
    let impossible = |e: Error| match e {
        Error::Argument(m) => Error::Generation { attempts: 0, property: m },
        e => e,
    };
    let ((mdp, params), tol) = match generator {
        "tabular" => (build_tabular_random(states, actions, gamma, seed).map_err(impossible)?, 1e-12),
        "lowrank" => (build_lowrank_random(dim, actions, states, gamma, seed).map_err(impossible)?, DEFAULT_VALIDATE_TOL),
        other => return Err(Error::Argument(format!("unknown generator '{other}' (tabular | lowrank)"))),
    };
    let tol = s.get_or("tol", tol)?;
    let mut doc = MdpDocument::new(&mdp, &params, Some(seed));
    doc.config = config_map(s);
    let path = match s.path("output") {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            p
        }
        None => out_dir(s)?.join("mdp.json"),
    };
    write_json(&path, &doc)?;
    let report = validate_linear(&mdp, &params, tol);
    say(s, format!("wrote {} (n={states}, k={actions}, d={}, digest {})", path.display(), mdp.dim(), doc.digest));
    say(s, serde_json::to_string_pretty(&report)?);
    Ok(if report.passed { EXIT_OK } else { EXIT_MISMATCH })
}

pub fn validate(s: &Settings) -> Result<i32> {
    let path = s.path("mdp").ok_or_else(|| Error::Argument("missing required setting 'mdp'".into()))?;
    let (mdp, params, _) = load_mdp(&path).map_err(as_mismatch)?;
    let tol = s.get_or("tol", DEFAULT_VALIDATE_TOL)?;
    let report = validate_linear(&mdp, &params, tol);
    say(s, serde_json::to_string_pretty(&report)?);
    Ok(if report.passed { EXIT_OK } else { EXIT_MISMATCH })
}

fn schedule(s: &Settings, mdp: &Mdp, maxent: &MaxEntPolicy) -> Result<Schedule> {
    let explicit_given = ["theta", "big_n", "eta"].iter().any(|k| s.raw(k).is_some());
    let mode = match s.raw("schedule") {
        Some(m) => m,
        None if explicit_given => "explicit",
        None => "theorem",
    };
    if explicit_given && mode != "explicit" {
        return Err(Error::Argument(format!("theta/big_n/eta conflict with schedule = {mode}")));
    }
    let t: usize = s.require("t")?;
    let constants = ScheduleConstants {
        c_theta: s.get_or("c_theta", 1.0)?,
        c_n: s.get_or("c_n", 1.0)?,
        c_eta: s.get_or("c_eta", 1.0)?,
    };
    match mode {
        "theorem" => Schedule::theorem(t, constants),
        "explicit" => Schedule::explicit(t, s.require("theta")?, s.require("big_n")?, s.require("eta")?),
        "appendix_d" => {
            let given = (s.get::<f64>("p_min")?, s.get::<f64>("c1")?, s.get::<f64>("c2")?);
            let mix = match given {
                (Some(p_min), Some(c1), Some(c2)) => MixingConstants { p_min, c1, c2 },
                (None, None, None) => {
                    let samples = s.get_or("samples", 64usize)?;
                    MixingConstants::estimate(mdp, maxent, samples, seed(s)?, MixingOptions::default())?.0
                }
                _ => return Err(Error::Argument("give all of p_min, c1, c2 or none of them".into())),
            };
            Schedule::appendix_d(t, constants.c_theta, mix)
        }
        other => Err(Error::Argument(format!("unknown schedule '{other}' (theorem | explicit | appendix_d)"))),
    }
}

fn run_config(s: &Settings) -> Result<RunConfig> {
    let start_state = match s.raw("start_state") {
        None | Some("uniform") => StartState::Uniform,
        Some(x) => StartState::Fixed(
            x.parse().map_err(|_| Error::Argument(format!("start_state '{x}' is neither 'uniform' nor an index")))?,
        ),
    };
    let critic = match s.raw("critic") {
        None | Some("td") => CriticMode::Td,
        Some("exact") => CriticMode::ExactOracle,
        Some(x) => return Err(Error::Argument(format!("unknown critic '{x}' (td | exact)"))),
    };
    Ok(RunConfig {
        start_state,
        diag_every: s.get_or("diag_every", 1)?,
        snapshot_every: s.get_or("snapshot_every", 1)?,
        critic,
    })
}

fn boundary(s: &Settings) -> Result<BoundaryTerm> {
    match s.raw("boundary") {
        None | Some("zero") => Ok(BoundaryTerm::Zero),
        Some("carry") | Some("carry_forward") => Ok(BoundaryTerm::CarryForward),
        Some(x) => Err(Error::Argument(format!("unknown boundary '{x}' (zero | carry)"))),
    }
}

struct Prepared {
    mdp: Mdp,
    maxent: MaxEntPolicy,
    schedule: Schedule,
    config: RunConfig,
}

fn prepare(s: &Settings) -> Result<Prepared> {
    let mdp = load_checked(s)?;
    let maxent = MaxEntPolicy::compute(&mdp)?;
    let schedule = schedule(s, &mdp, &maxent)?;
    let config = run_config(s)?;
    Ok(Prepared { mdp, maxent, schedule, config })
}

/// Runs one seed, streaming the CSV and writing the JSON record, including
/// the partial record of a run that diverged.
fn execute(s: &Settings, p: &Prepared, seed: u64, dir: &Path) -> Result<RunRecord> {
    let mut header = RunHeader::new(&p.mdp, &p.schedule, seed, p.config);
    header.resolved = config_map(s);
    header.resolved.insert("seed".into(), seed.to_string());
    let mut sink = CsvSink::create(&dir.join(format!("run_{seed}.csv")), &header)?;
    let json_path = dir.join(format!("run_{seed}.json"));
    match run_with_header(&p.mdp, &p.maxent, header, &mut |row| sink.push(row)) {
        Ok(record) => {
            write_json(&json_path, &record)?;
            Ok(record)
        }
        Err(aborted) => {
            write_json(&json_path, &aborted.record)?;
            Err(aborted.error)
        }
    }
}

pub fn run(s: &Settings) -> Result<i32> {
    let p = prepare(s)?;
    let dir = out_dir(s)?;
    let seed = seed(s)?;
    say(
        s,
        format!(
            "schedule {:?}: t={} theta={:.6e} N={} eta={:.6e} ({} steps)",
            p.schedule.mode,
            p.schedule.t,
            p.schedule.theta,
            p.schedule.big_n,
            p.schedule.eta,
            p.schedule.total_steps()
        ),
    );
    let record = execute(s, &p, seed, &dir)?;
    if let Some(last) = record.rows.last() {
        say(
            s,
            format!(
                "iter {}: max KL {:.6e}, value gap [{:.6e}, {:.6e}], min entropy {:.6e}",
                last.iter,
                last.max_kl,
                last.min_value_gap(),
                last.max_value_gap(),
                last.min_entropy()
            ),
        );
    }
    say(s, format!("wrote {}", dir.join(format!("run_{seed}.json")).display()));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct LedgerSummary {
    state: usize,
    simplified_min_slack: f64,
    refined_min_slack: f64,
    refined_monotonicity_violations: usize,
}

#[derive(Serialize)]
struct AuditSummary {
    t: usize,
    boundary: BoundaryTerm,
    max_lhs_over_rhs: f64,
    violations: Vec<(usize, usize)>,
    theorem_passed: bool,
    max_kl: f64,
    theorem_rhs: f64,
    ledgers: Vec<LedgerSummary>,
    deterministic_ok: bool,
}

struct Audited {
    theorem: TheoremCheck,
    simplified: Vec<BoundLedger>,
    refined: Vec<BoundLedger>,
}

impl Audited {
    /// Simplified slack and both monotonicity checks.
    fn deterministic_ok(&self) -> bool {
        self.simplified.iter().all(BoundLedger::holds) && self.refined.iter().all(|l| l.monotonicity_violations.is_empty())
    }

    fn summary(&self, t: usize, boundary: BoundaryTerm) -> AuditSummary {
        AuditSummary {
            t,
            boundary,
            max_lhs_over_rhs: self.theorem.summary.max_lhs_over_rhs,
            violations: self.theorem.summary.violations.clone(),
            theorem_passed: self.theorem.passed(),
            max_kl: self.theorem.max_kl,
            theorem_rhs: self.theorem.rhs,
            ledgers: self
                .simplified
                .iter()
                .zip(&self.refined)
                .enumerate()
                .map(|(state, (a, b))| LedgerSummary {
                    state,
                    simplified_min_slack: a.min_slack,
                    refined_min_slack: b.min_slack,
                    refined_monotonicity_violations: b.monotonicity_violations.len(),
                })
                .collect(),
            deterministic_ok: self.deterministic_ok(),
        }
    }
}

fn audit_record(mdp: &Mdp, maxent: &MaxEntPolicy, record: &RunRecord, boundary: BoundaryTerm) -> Result<Audited> {
    check_digest(mdp, record)?;
    let audited = AuditedRun::new(mdp, record, maxent)?;
    let n = mdp.num_states();
    let mut simplified = Vec::with_capacity(n);
    let mut refined = Vec::with_capacity(n);
    for st in 0..n {
        let mu = Distribution::dirac(n, st);
        simplified.push(audited.simplified(&mu, None)?);
        refined.push(audited.refined(&mu, boundary)?);
    }
    Ok(Audited { theorem: audited.theorem()?, simplified, refined })
}

fn write_ledger(path: &Path, ledger: &BoundLedger) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ledger.write_csv(&mut w)?;
    Ok(())
}

pub fn audit(s: &Settings) -> Result<i32> {
    let mdp = load_checked(s)?;
    let record = load_run(s)?;
    let maxent = MaxEntPolicy::compute(&mdp)?;
    let boundary = boundary(s)?;
    let audited = audit_record(&mdp, &maxent, &record, boundary)?;
    let dir = out_dir(s)?;
    let seed = record.header.seed;
    for (st, (a, b)) in audited.simplified.iter().zip(&audited.refined).enumerate() {
        write_ledger(&dir.join(format!("ledger_simplified_{seed}_s{st}.csv")), a)?;
        write_ledger(&dir.join(format!("ledger_refined_{seed}_s{st}.csv")), b)?;
    }
    {
        use std::io::Write;
        let mut w = BufWriter::new(File::create(dir.join(format!("theorem_{seed}.csv")))?);
        writeln!(w, "iter,state,lhs,rhs,pass")?;
        for c in &audited.theorem.cells {
            writeln!(w, "{},{},{:.16e},{:.16e},{}", c.iter, c.state, c.lhs, c.rhs, c.pass)?;
        }
    }
    let summary = audited.summary(record.header.schedule.t, boundary);
    let doc = artifact(s, &record.header.mdp_digest, seed, &summary)?;
    write_json(&dir.join(format!("audit_{seed}.json")), &doc)?;
    say(
        s,
        format!(
            "theorem: max lhs/rhs {:.4}, {} violations; deterministic checks {}",
            summary.max_lhs_over_rhs,
            summary.violations.len(),
            if summary.deterministic_ok { "hold" } else { "FAIL" }
        ),
    );
    Ok(if summary.deterministic_ok { EXIT_OK } else { EXIT_MISMATCH })
}

fn measure(s: &Settings) -> Result<BallMeasure> {
    match s.raw("measure") {
        None | Some("visitation") => Ok(BallMeasure::Visitation),
        Some("stationary") => Ok(BallMeasure::Stationary),
        Some(x) => Err(Error::Argument(format!("unknown measure '{x}' (stationary | visitation)"))),
    }
}

pub fn mixing(s: &Settings) -> Result<i32> {
    let mdp = load_checked(s)?;
    let digest = mdp_digest(&mdp);
    let maxent = MaxEntPolicy::compute(&mdp)?;
    let opts = MixingOptions { horizon: s.get_or("horizon", MixingOptions::default().horizon)?, ..MixingOptions::default() };
    let g = mdp.gamma();
    let radius = (mdp.num_actions() as f64).ln() + 1.0 / ((1.0 - g) * (1.0 - g));
    let dir = out_dir(s)?;

    if s.raw("run").is_some() {
        let record = load_run(s)?;
        check_digest(&mdp, &record)?;
        let (d, k) = (mdp.dim(), mdp.num_actions());
        let policies: Vec<Policy> = record
            .snapshots
            .iter()
            .map(|snap| softmax_policy(&PolicyWeights::from_vec(d, k, snap.weights.clone())?, &mdp))
            .collect::<Result<_>>()?;
        let ball = kl_ball_audit(&mdp, &maxent.policy, &policies, radius, measure(s)?, opts)?;
        let seed = record.header.seed;
        write_json(&dir.join(format!("ball_{seed}.json")), &artifact(s, &digest, seed, &ball)?)?;
        say(
            s,
            format!(
                "{} of {} policies inside radius {radius:.4}; p_min {:.4e}, C1 {:.4e}, C2 {:.4e}, policy ratio {:.4e}",
                ball.members.len(),
                policies.len(),
                ball.min_stationary_mass,
                ball.m2,
                ball.m1,
                ball.policy_ratio_bound
            ),
        );
        if !ball.failures.is_empty() {
            return Err(Error::Structure(format!("{} policies induce chains without a stationary law", ball.failures.len())));
        }
        return Ok(EXIT_OK);
    }

    let (name, policy) = match s.raw("policy") {
        None | Some("maxent") => ("maxent", maxent.policy.clone()),
        Some("uniform") => ("uniform", Policy::uniform(mdp.num_states(), mdp.num_actions())),
        Some(x) => return Err(Error::Argument(format!("unknown policy '{x}' (maxent | uniform)"))),
    };
    let chain = induced_chain(&mdp, &policy)?;
    let path = dir.join(format!("mixing_{name}.json"));
    let seed = seed(s)?;
    if !(chain.irreducible && chain.aperiodic) {
        let report = json!({
            "policy": name,
            "irreducible": chain.irreducible,
            "aperiodic": chain.aperiodic,
            "period": chain.period,
        });
        write_json(&path, &artifact(s, &digest, seed, &report)?)?;
        return Err(Error::Structure(format!(
            "{name} chain is {}{}",
            if chain.irreducible { "" } else { "reducible " },
            if chain.aperiodic { "" } else { "periodic" }
        )));
    }
    let sigma = chain.stationary()?;
    let mut report = mixing_report(&chain, &sigma, opts)?;
    report.kl_radius = Some(radius);
    let body = json!({ "policy": name, "stationary": sigma.probs(), "report": report });
    write_json(&path, &artifact(s, &digest, seed, &body)?)?;
    say(
        s,
        format!(
            "{name}: TV <= {:.4e} exp(-{:.4e} q){}; conductance {}",
            report.m1,
            report.m2,
            if report.non_mixing { " (non-mixing)" } else { "" },
            report.conductance.map_or("n/a".to_string(), |c| format!("{c:.4e}"))
        ),
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SeedResult {
    seed: u64,
    diverged: Option<String>,
    theorem_passed: Option<bool>,
    max_lhs_over_rhs: Option<f64>,
    deterministic_ok: Option<bool>,
    final_max_kl: Option<f64>,
}

#[derive(Serialize)]
struct SweepSummary {
    runs: usize,
    completed: usize,
    diverged: usize,
    theorem_pass_rate: f64,
    deterministic_violations: usize,
    schedule: Schedule,
    results: Vec<SeedResult>,
}

pub fn sweep(s: &Settings) -> Result<i32> {
    let p = prepare(s)?;
    let dir = out_dir(s)?;
    let base = seed(s)?;
    let count: u64 = s.get_or("seeds", 20)?;
    if count == 0 {
        return Err(Error::Argument("seeds must be positive".into()));
    }
    let boundary = boundary(s)?;
    let results: Vec<SeedResult> = (base..base + count)
        .into_par_iter()
        .map(|seed| -> Result<SeedResult> {
            let mut r = SeedResult {
                seed,
                diverged: None,
                theorem_passed: None,
                max_lhs_over_rhs: None,
                deterministic_ok: None,
                final_max_kl: None,
            };
            let record = match execute(s, &p, seed, &dir) {
                Ok(record) => record,
                Err(e @ Error::Divergence { .. }) => {
                    r.diverged = Some(e.to_string());
                    return Ok(r);
                }
                Err(e) => return Err(e),
            };
            r.final_max_kl = record.rows.last().map(|row| row.max_kl);
            if record.snapshots.len() == record.header.schedule.t + 1 {
                let a = audit_record(&p.mdp, &p.maxent, &record, boundary)?;
                r.theorem_passed = Some(a.theorem.passed());
                r.max_lhs_over_rhs = Some(a.theorem.summary.max_lhs_over_rhs);
                r.deterministic_ok = Some(a.deterministic_ok());
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let completed = results.iter().filter(|r| r.diverged.is_none()).count();
    let audited: Vec<&SeedResult> = results.iter().filter(|r| r.theorem_passed.is_some()).collect();
    let passes = audited.iter().filter(|r| r.theorem_passed == Some(true)).count();
    let summary = SweepSummary {
        runs: results.len(),
        completed,
        diverged: results.len() - completed,
        theorem_pass_rate: if audited.is_empty() { 0.0 } else { passes as f64 / audited.len() as f64 },
        deterministic_violations: results.iter().filter(|r| r.deterministic_ok == Some(false)).count(),
        schedule: p.schedule.clone(),
        results,
    };
    write_json(&dir.join("sweep_summary.json"), &artifact(s, &mdp_digest(&p.mdp), base, &summary)?)?;
    say(
        s,
        format!(
            "{} runs, {} diverged, theorem pass rate {:.3}, {} deterministic violations",
            summary.runs, summary.diverged, summary.theorem_pass_rate, summary.deterministic_violations
        ),
    );
    Ok(if summary.diverged > 0 {
        EXIT_DIVERGENCE
    } else if summary.deterministic_violations > 0 {
        EXIT_MISMATCH
    } else {
        EXIT_OK
    })
}
