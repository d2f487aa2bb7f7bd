use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, Schedule, StartState};
use crate::error::Result;
use crate::io::{mdp_digest, SCHEMA_VERSION};
use crate::mdp::Mdp;

pub const CSV_COLUMNS: &str =
    "iter,max_kl,min_value_gap,max_value_gap,eps_sup,eps_stat,eps_combined,policy_min_entropy,u_hat_norm,steps";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub seed: u64,
    pub mdp_digest: String,
    pub schedule: Schedule,
    pub config: RunConfig,
    /// Free-form settings of the caller, echoed into every artifact.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resolved: BTreeMap<String, String>,
}

impl RunHeader {
    pub fn new(mdp: &Mdp, schedule: &Schedule, seed: u64, config: RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            mdp_digest: mdp_digest(mdp),
            schedule: schedule.clone(),
            config,
            resolved: BTreeMap::new(),
        }
    }
}

/// Exact diagnostics of `pi_i`, plus the error of critic `i` when it ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iter: usize,
    pub entropy: Vec<f64>,
    /// `K(pi_bar, pi_i)` under the visitation of `pi_bar` from each state.
    pub kl: Vec<f64>,
    pub max_kl: f64,
    /// `V_bar(s) - V_i(s)`.
    pub value_gap: Vec<f64>,
    /// `sup |Q_hat_i - Q_i|`.
    pub eps_sup: Option<f64>,
    /// `eta N E_{sigma_i, pi_i} (Q_hat_i - Q_i)^2`.
    pub eps_stat: Option<f64>,
    /// `eps_sup^2 + eps_stat`.
    pub eps_combined: Option<f64>,
    pub u_hat_norm: Option<f64>,
    pub steps: u64,
}

impl IterationRow {
    pub fn min_value_gap(&self) -> f64 {
        self.value_gap.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value_gap(&self) -> f64 {
        self.value_gap.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_entropy(&self) -> f64 {
        self.entropy.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iter: usize,
    pub weights: Vec<f64>,
    pub u_hat: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub header: RunHeader,
    pub rows: Vec<IterationRow>,
    pub snapshots: Vec<Snapshot>,
    pub max_iterate_norm: f64,
    pub aborted: Option<String>,
}

impl RunRecord {
    pub fn snapshot(&self, iter: usize) -> Option<&Snapshot> {
        self.snapshots.binary_search_by_key(&iter, |s| s.iter).ok().map(|i| &self.snapshots[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        write_csv_header(&mut out, &self.header).expect("writing to memory");
        for row in &self.rows {
            write_csv_row(&mut out, row).expect("writing to memory");
        }
        String::from_utf8(out).expect("ascii output")
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_csv_header<W: Write>(w: &mut W, h: &RunHeader) -> io::Result<()> {
    let s = &h.schedule;
    let start = match h.config.start_state {
        StartState::Uniform => "uniform".to_string(),
        StartState::Fixed(i) => i.to_string(),
    };
    let mut text = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(text, "# {k}={v}");
    };
    line("schema_version", h.schema_version.to_string());
    line("seed", h.seed.to_string());
    line("mdp_digest", h.mdp_digest.clone());
    line("schedule", serde_json::to_value(s.mode).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default());
    line("t", s.t.to_string());
    line("theta", num(s.theta));
    line("big_n", s.big_n.to_string());
    line("eta", num(s.eta));
    line("c_theta", num(s.constants.c_theta));
    line("c_n", num(s.constants.c_n));
    line("c_eta", num(s.constants.c_eta));
    line("k_mix", s.k_mix.map(|k| k.to_string()).unwrap_or_default());
    line("start_state", start);
    line("diag_every", h.config.diag_every.to_string());
    line("snapshot_every", h.config.snapshot_every.to_string());
    line("critic", serde_json::to_value(h.config.critic).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default());
    for (k, v) in &h.resolved {
        line(&format!("config.{k}"), v.clone());
    }
    w.write_all(text.as_bytes())?;
    writeln!(w, "{CSV_COLUMNS}")
}

pub fn write_csv_row<W: Write>(w: &mut W, r: &IterationRow) -> io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{}",
        r.iter,
        num(r.max_kl),
        num(r.min_value_gap()),
        num(r.max_value_gap()),
        opt(r.eps_sup),
        opt(r.eps_stat),
        opt(r.eps_combined),
        num(r.min_entropy()),
        opt(r.u_hat_norm),
        r.steps
    )
}

/// CSV file written one flushed line at a time, so an interrupted run
/// leaves a prefix of the complete file.
pub struct CsvSink {
    file: File,
}

impl CsvSink {
    pub fn create(path: &Path, header: &RunHeader) -> Result<Self> {
        let mut file = File::create(path)?;
        let mut buf = Vec::new();
        write_csv_header(&mut buf, header)?;
        file.write_all(&buf)?;
        file.flush()?;
        Ok(Self { file })
    }

    pub fn push(&mut self, row: &IterationRow) -> Result<()> {
        let mut buf = Vec::new();
        write_csv_row(&mut buf, row)?;
        self.file.write_all(&buf)?;
        self.file.flush()?;
        Ok(())
    }
}
