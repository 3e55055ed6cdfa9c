//! Scenarios, trace audits, metric reduction and parameter sweeps.

mod audit;
mod metrics;
pub mod scenarios;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::simnet::{run, SimConfig, SimError, Trace};

pub use audit::{audit_trace, RunAudit};
pub use metrics::MetricsSummary;
pub use sweep::{sweep_config, sweep_message_complexity, SweepOptions, SweepReport, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn holds(self, observed: f64, expected: f64) -> bool {
        match self {
            Self::Eq => observed == expected,
            Self::Ne => observed != expected,
            Self::Lt => observed < expected,
            Self::Le => observed <= expected,
            Self::Gt => observed > expected,
            Self::Ge => observed >= expected,
        }
    }
}

/// `metric op value`, checked against the scenario's [`MetricsSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub metric: String,
    pub op: Cmp,
    pub value: f64,
}

impl Assertion {
    pub fn new(metric: &str, op: Cmp, value: f64) -> Self {
        Self {
            metric: metric.into(),
            op,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub observed: f64,
    pub passed: bool,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub config: SimConfig,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Run `r` uses seed `seed_base + r`.
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("scenario {scenario}: unknown metric {metric:?}")]
    UnknownMetric { scenario: String, metric: String },
    #[error("scenario needs at least one repetition")]
    NoRepetitions,
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repetitions == 0 {
            return Err(HarnessError::NoRepetitions);
        }
        let probe = MetricsSummary::default();
        for a in &self.assertions {
            if probe.metric(&a.metric).is_none() {
                return Err(HarnessError::UnknownMetric {
                    scenario: self.name.clone(),
                    metric: a.metric.clone(),
                });
            }
        }
        self.config.validate()?;
        Ok(())
    }

    pub fn config_for(&self, repetition: usize) -> SimConfig {
        let mut c = self.config.clone();
        c.seed = self.seed_base + repetition as u64;
        c
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub metrics: MetricsSummary,
    pub audits: Vec<RunAudit>,
    pub assertions: Vec<AssertionResult>,
    /// Traces, when requested.
    pub traces: Vec<Trace>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    fn from_audits(name: &str, audits: Vec<RunAudit>, assertions: &[Assertion], traces: Vec<Trace>) -> Self {
        let metrics = MetricsSummary::reduce(&audits);
        let assertions = assertions
            .iter()
            .map(|a| {
                let observed = metrics.metric(&a.metric).unwrap_or(f64::NAN);
                AssertionResult {
                    assertion: a.clone(),
                    observed,
                    passed: a.op.holds(observed, a.value),
                }
            })
            .collect();
        Self {
            name: name.to_string(),
            metrics,
            audits,
            assertions,
            traces,
        }
    }
}

/// Runs every repetition (in parallel), audits each trace and evaluates the
/// assertions on the reduced metrics.
pub fn run_scenario(s: &Scenario, keep_traces: bool) -> Result<ScenarioReport, HarnessError> {
    s.validate()?;
    let results: Vec<Result<(RunAudit, Option<Trace>), SimError>> = (0..s.repetitions)
        .into_par_iter()
        .map(|r| {
            let trace = run(s.config_for(r))?;
            let audit = audit_trace(&trace);
            Ok((audit, keep_traces.then_some(trace)))
        })
        .collect();
    let mut audits = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for r in results {
        let (a, t) = r?;
        audits.push(a);
        traces.extend(t);
    }
    Ok(ScenarioReport::from_audits(&s.name, audits, &s.assertions, traces))
}

/// Audits previously written traces, e.g. for `report`.
pub fn report_traces(name: &str, traces: &[Trace]) -> ScenarioReport {
    let audits = traces.iter().map(audit_trace).collect();
    ScenarioReport::from_audits(name, audits, &[], Vec::new())
}
