//! Deterministic discrete-event simulation of a TCE network.
//!
//! [`run`] registers processes and subnets, runs each subnet's key
//! generation, then drives subnet block production and every PRB/WCPRB
//! message through a seeded event queue until quiescence or the horizon.
//! Everything observable is appended to a [`Trace`]. A run is a pure
//! function of its [`SimConfig`].

mod adversary;
mod engine;
mod registry;
mod trace;

use serde::{Deserialize, Serialize};

use crate::certificate::CertError;
use crate::ice_frost::FrostError;
use crate::prb::{GossipConfig, PrbError, ProcessId, SampleConfig};

pub use adversary::{AdversaryScript, Behavior, Malformation, Selection};
pub use engine::{run, Simulation};
pub use registry::{Gate, Registry, RegistryError};
pub use trace::{DropReason, RunSummary, Trace, TraceRecord};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Prb(#[from] PrbError),
    #[error("key generation failed: {0}")]
    Keygen(#[from] FrostError),
    #[error("certificate construction failed: {0}")]
    Certificate(#[from] CertError),
}

/// Per-message latency, in event-time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LatencyModel {
    LogNormal { median: f64, sigma: f64 },
    Uniform { min: f64, max: f64 },
    Constant { value: f64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::LogNormal {
            median: 1.0,
            sigma: 0.5,
        }
    }
}

/// Sample sizing. `size` forces one size for every sample regardless of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub k: f64,
    pub size: Option<usize>,
    pub echo_threshold: Option<usize>,
    pub ready_threshold: Option<usize>,
    pub delivery_threshold: Option<usize>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            k: 4.0,
            size: None,
            echo_threshold: None,
            ready_threshold: None,
            delivery_threshold: None,
        }
    }
}

impl SampleSpec {
    pub fn resolve(&self, n: usize) -> SampleConfig {
        let mut c = match self.size {
            Some(s) => SampleConfig::with_size(s),
            None => SampleConfig::for_network(n, self.k),
        };
        if let Some(e) = self.echo_threshold {
            c.echo_threshold = e;
        }
        if let Some(r) = self.ready_threshold {
            c.ready_threshold = r;
        }
        if let Some(d) = self.delivery_threshold {
            c.delivery_threshold = d;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GossipSpec {
    pub fanout: Option<usize>,
    pub rounds: Option<usize>,
    /// Event-time units between waves.
    pub wave_spacing: Option<f64>,
}

impl GossipSpec {
    pub fn resolve(&self, n: usize, ticks_per_unit: u64) -> GossipConfig {
        let mut g = GossipConfig::for_network(n, ticks_per_unit);
        if let Some(f) = self.fanout {
            g.fanout = f;
        }
        if let Some(r) = self.rounds {
            g.rounds = r;
        }
        if let Some(w) = self.wave_spacing {
            g.wave_spacing = to_ticks(w, ticks_per_unit);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balance {
    pub account: String,
    pub asset: String,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubnetSpec {
    pub name: String,
    /// TCE processes run by the subnet's nodes; the i-th member holds key
    /// share `i + 1`.
    pub members: Vec<ProcessId>,
    /// The member whose `deps_p` feeds the subnet's submissions.
    pub submitter: ProcessId,
    pub threshold: u32,
    #[serde(default)]
    pub balances: Vec<Balance>,
    /// Controlled by the adversary; its submitter is Byzantine.
    #[serde(default)]
    pub byzantine: bool,
}

/// Block production and random transfers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Workload {
    /// Certificates per subnet.
    pub blocks: u32,
    /// First block time, event-time units.
    pub start: f64,
    pub block_interval: f64,
    /// Random transfers spread over all blocks of all honest subnets.
    pub transfers: u32,
    /// Share of transfers that stay on the source subnet.
    pub local_fraction: f64,
    pub max_amount: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            blocks: 1,
            start: 5.0,
            block_interval: 5.0,
            transfers: 0,
            local_fraction: 0.2,
            max_amount: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub schema_version: u32,
    pub n: usize,
    pub byzantine_fraction: f64,
    pub seed: u64,
    pub latency: LatencyModel,
    pub ticks_per_unit: u64,
    pub samples: SampleSpec,
    pub gossip: GossipSpec,
    pub subnets: Vec<SubnetSpec>,
    pub workload: Workload,
    pub adversary: AdversaryScript,
    pub validate_at_prb: bool,
    /// Event-time units after which the run stops.
    pub horizon: f64,
    /// Pending entries older than this many event-time units are dropped.
    pub pending_horizon: Option<f64>,
    pub audit_monotonicity: bool,
    /// Record every sent message in the trace.
    pub record_messages: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n: 6,
            byzantine_fraction: 0.0,
            seed: 0,
            latency: LatencyModel::default(),
            ticks_per_unit: 1000,
            samples: SampleSpec::default(),
            gossip: GossipSpec::default(),
            subnets: Vec::new(),
            workload: Workload::default(),
            adversary: AdversaryScript::default(),
            validate_at_prb: false,
            horizon: 500.0,
            pending_horizon: None,
            audit_monotonicity: true,
            record_messages: false,
        }
    }
}

impl SimConfig {
    /// `n` processes and one honest 2-of-3 subnet run by processes 0..3.
    pub fn single_subnet(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            subnets: vec![SubnetSpec {
                name: "s0".into(),
                members: vec![0, 1, 2],
                submitter: 0,
                threshold: 2,
                balances: vec![Balance {
                    account: "alice".into(),
                    asset: "TKN".into(),
                    amount: 1000,
                }],
                byzantine: false,
            }],
            ..Self::default()
        }
    }

    pub fn byzantine_count(&self) -> usize {
        (self.byzantine_fraction * self.n as f64).round() as usize
    }

    pub fn to_ticks(&self, units: f64) -> u64 {
        to_ticks(units, self.ticks_per_unit)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.schema_version));
        }
        if self.n < 2 {
            return bad("need at least two processes".into());
        }
        if !(0.0..1.0).contains(&self.byzantine_fraction) {
            return bad("byzantine_fraction must be in [0, 1)".into());
        }
        if self.ticks_per_unit == 0 || self.horizon.is_nan() || self.horizon <= 0.0 {
            return bad("ticks_per_unit and horizon must be positive".into());
        }
        match self.latency {
            LatencyModel::LogNormal { median, sigma } if median > 0.0 && sigma >= 0.0 => {}
            LatencyModel::Uniform { min, max } if 0.0 <= min && min <= max => {}
            LatencyModel::Constant { value } if value >= 0.0 => {}
            m => return bad(format!("bad latency model {m:?}")),
        }
        let forced: Vec<_> = self
            .subnets
            .iter()
            .filter(|s| s.byzantine)
            .map(|s| s.submitter)
            .collect();
        if forced.len() > self.byzantine_count() {
            return bad("more byzantine submitters than byzantine processes".into());
        }
        for s in &self.subnets {
            if s.members.is_empty() || !s.members.contains(&s.submitter) {
                return bad(format!("subnet {}: submitter must be a member", s.name));
            }
            if s.members.iter().any(|m| *m as usize >= self.n) {
                return bad(format!("subnet {}: member outside 0..n", s.name));
            }
            if s.threshold == 0 || s.threshold as usize > s.members.len() {
                return bad(format!("subnet {}: bad threshold", s.name));
            }
        }
        if !self.subnets.iter().any(|s| !s.byzantine) && self.workload.transfers > 0 {
            return bad("transfers need an honest subnet".into());
        }
        self.adversary.validate(self)?;
        Ok(())
    }
}

pub(crate) fn to_ticks(units: f64, ticks_per_unit: u64) -> u64 {
    (units * ticks_per_unit as f64).round().max(0.0) as u64
}
