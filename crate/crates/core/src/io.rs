//! JSON documents and content digests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mdp::{LinearMdpParams, Mdp};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk MDP. Floats are written in shortest round-trip form, so a
/// load/store cycle is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub schema_version: u32,
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub features: Vec<f64>,
    pub transitions: Vec<f64>,
    pub reward_means: Vec<f64>,
    pub m_matrix: Vec<f64>,
    pub y_vector: Vec<f64>,
    pub seed: Option<u64>,
    pub digest: String,
    /// Settings that produced the file.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

impl MdpDocument {
    pub fn new(mdp: &Mdp, params: &LinearMdpParams, seed: Option<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            gamma: mdp.gamma(),
            features: mdp.features().to_vec(),
            transitions: mdp.transitions().to_vec(),
            reward_means: mdp.reward_means().to_vec(),
            m_matrix: params.m_matrix.clone(),
            y_vector: params.y_vector.clone(),
            seed,
            digest: mdp_digest(mdp),
            config: BTreeMap::new(),
        }
    }

    /// Rebuilds the MDP with shape checks only; value invariants are left to
    /// the validator. A stored digest that disagrees with the content is a
    /// mismatch.
    pub fn into_parts(self) -> Result<(Mdp, LinearMdpParams)> {
        let mdp = Mdp::from_raw(
            self.num_states,
            self.num_actions,
            self.features,
            self.transitions,
            self.reward_means,
            self.gamma,
        )?;
        let digest = mdp_digest(&mdp);
        if !self.digest.is_empty() && digest != self.digest {
            return Err(Error::Mismatch(format!("MDP digest {} does not match content {}", self.digest, digest)));
        }
        Ok((mdp, LinearMdpParams { m_matrix: self.m_matrix, y_vector: self.y_vector }))
    }
}

/// SHA-256 over dimensions, `gamma` and every table, as little-endian bits.
pub fn mdp_digest(mdp: &Mdp) -> String {
    let mut h = Sha256::new();
    for n in [mdp.num_states(), mdp.num_actions(), mdp.dim()] {
        h.update((n as u64).to_le_bytes());
    }
    h.update(mdp.gamma().to_bits().to_le_bytes());
    for table in [mdp.features(), mdp.transitions(), mdp.reward_means()] {
        for x in table {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

pub fn load_mdp(path: &Path) -> Result<(Mdp, LinearMdpParams, Option<u64>)> {
    let doc: MdpDocument = read_json(path)?;
    let seed = doc.seed;
    let (mdp, params) = doc.into_parts()?;
    Ok((mdp, params, seed))
}
