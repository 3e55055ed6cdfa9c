use std::collections::{BTreeMap, BTreeSet};

use crate::certificate::{StateCommitment, SubnetId};
use crate::prb::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("process {0} is already registered")]
    DuplicateProcess(ProcessId),
    #[error("subnet {0} is already registered")]
    DuplicateSubnet(SubnetId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Pass,
    Drop,
}

/// Registered TCE processes and subnet genesis commitments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    processes: BTreeSet<ProcessId>,
    subnets: BTreeMap<SubnetId, StateCommitment>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_process(&mut self, id: ProcessId) -> Result<(), RegistryError> {
        if !self.processes.insert(id) {
            return Err(RegistryError::DuplicateProcess(id));
        }
        Ok(())
    }

    pub fn register_subnet(&mut self, id: SubnetId, genesis: StateCommitment) -> Result<(), RegistryError> {
        if self.subnets.contains_key(&id) {
            return Err(RegistryError::DuplicateSubnet(id));
        }
        self.subnets.insert(id, genesis);
        Ok(())
    }

    pub fn processes(&self) -> &BTreeSet<ProcessId> {
        &self.processes
    }

    pub fn subnets(&self) -> &BTreeMap<SubnetId, StateCommitment> {
        &self.subnets
    }

    pub fn genesis(&self, subnet: &SubnetId) -> Option<StateCommitment> {
        self.subnets.get(subnet).copied()
    }

    /// Correct processes only talk to registered peers.
    pub fn gate(&self, sender: ProcessId) -> Gate {
        if self.processes.contains(&sender) {
            Gate::Pass
        } else {
            Gate::Drop
        }
    }
}
