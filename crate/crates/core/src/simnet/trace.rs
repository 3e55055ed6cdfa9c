use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::certificate::{Digest, StateCommitment, SubnetId};
use crate::prb::ProcessId;
use crate::wcprb::Rejection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    UnregisteredSender,
}

/// One trace line. Times are event-time units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceRecord {
    Start {
        schema_version: u32,
        seed: u64,
        n: usize,
        byzantine: Vec<ProcessId>,
        sample_size: usize,
        thresholds: [usize; 3],
        validate_at_prb: bool,
    },
    Keygen {
        subnet: String,
        subnet_id: SubnetId,
        participants: u32,
        threshold: u32,
        excluded: Vec<u32>,
        verdicts: Vec<String>,
    },
    RegisterSubnet {
        subnet: String,
        subnet_id: SubnetId,
        genesis: StateCommitment,
        byzantine: bool,
    },
    Signing {
        t: f64,
        subnet_id: SubnetId,
        excluded: Vec<u32>,
        attempts: u32,
    },
    Submit {
        t: f64,
        process: ProcessId,
        subnet_id: SubnetId,
        cert: Digest,
        height: u64,
        prev: StateCommitment,
        state: StateCommitment,
        deps: Vec<Digest>,
        honest: bool,
    },
    Reject {
        t: f64,
        process: ProcessId,
        subnet_id: SubnetId,
        cert: Digest,
        reason: Rejection,
    },
    Equivocate {
        t: f64,
        subnet_id: SubnetId,
        prev: StateCommitment,
        certs: [Digest; 2],
    },
    Bogus {
        t: f64,
        subnet_id: SubnetId,
        cert: Digest,
        /// Digest of the PRB payload carrying it.
        payload: Digest,
        malformation: String,
    },
    Send {
        t: f64,
        from: ProcessId,
        to: ProcessId,
        kind: String,
        digest: Option<Digest>,
    },
    Drop {
        t: f64,
        from: ProcessId,
        to: ProcessId,
        reason: DropReason,
    },
    PrbDeliver {
        t: f64,
        process: ProcessId,
        cert: Digest,
        subnet_id: SubnetId,
        height: u64,
    },
    WcprbDeliver {
        t: f64,
        process: ProcessId,
        cert: Digest,
        subnet_id: SubnetId,
        height: u64,
        prev: StateCommitment,
        state: StateCommitment,
        deps: Vec<Digest>,
        pending: usize,
    },
    PendingGc {
        t: f64,
        process: ProcessId,
        dropped: usize,
    },
    /// Global supply of `asset` after a subnet state change: balances of all
    /// subnets plus burned-but-not-minted transfers.
    Supply {
        t: f64,
        asset: String,
        #[serde(with = "decimal")]
        total: u128,
        #[serde(with = "decimal")]
        in_flight: u128,
    },
    Summary(RunSummary),
}

/// `u128` as a decimal string; tagged enums cannot buffer 128-bit numbers.
mod decimal {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

/// Process-keyed maps with their keys parsed back from JSON strings.
mod process_keys {
    use std::collections::BTreeMap;

    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    use crate::prb::ProcessId;

    pub fn serialize<S: Serializer>(m: &BTreeMap<ProcessId, u64>, s: S) -> Result<S::Ok, S::Error> {
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<ProcessId, u64>, D::Error> {
        BTreeMap::<String, u64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n: usize,
    pub correct: usize,
    pub events: u64,
    pub end_time: f64,
    /// The queue drained before the horizon.
    pub quiescent: bool,
    /// Messages sent by correct processes, by kind.
    pub sent_by_kind: BTreeMap<String, u64>,
    /// Per correct process, non-subscription messages sent.
    #[serde(with = "process_keys")]
    pub sent_per_process: BTreeMap<ProcessId, u64>,
    /// Echo messages sent by correct processes, by payload digest.
    pub echoes_by_payload: BTreeMap<Digest, u64>,
    pub honest_submissions: u64,
    pub gate_drops: u64,
    pub pending_high_water: usize,
    pub pending_collected: u64,
    pub monotonicity_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn summary(&self) -> Option<&RunSummary> {
        self.records.iter().rev().find_map(|r| match r {
            TraceRecord::Summary(s) => Some(s),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(io::Error::other)?);
        }
        Ok(Self { records })
    }

    /// SHA-256 of the JSON-lines form.
    pub fn fingerprint(&self) -> Digest {
        Digest(Sha256::digest(self.to_jsonl().as_bytes()).into())
    }
}
