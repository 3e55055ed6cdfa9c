//! Weak causal probabilistic reliable broadcast of certificates.
//!
//! PRB delivers per-slot certificate messages; [`ProcessLedger`] parks them
//! in a pending set and releases a message only once it is valid at the
//! process: its certificate is intrinsically valid, it links to the latest
//! accepted certificate of its subnet, and every declared dependency was
//! already accepted. [`TceProcess`] wires a ledger to a [`PrbProcess`].
//!
//! [`PrbProcess`]: crate::prb::PrbProcess

mod ledger;
mod process;

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::certificate::{valid_cert, Certificate, Digest, StateCommitment, SubnetId};
use crate::prb::PrbPayload;

pub use ledger::{tce_state, Delivery, LedgerConfig, ProcessLedger};
pub use process::{ProcessOutput, TceProcess};

/// A certificate together with its digest, shared between messages.
#[derive(Clone)]
pub struct CertRef {
    digest: Digest,
    cert: Arc<Certificate>,
}

impl CertRef {
    pub fn new(cert: Certificate) -> Self {
        Self {
            digest: cert.digest(),
            cert: Arc::new(cert),
        }
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn cert(&self) -> &Certificate {
        &self.cert
    }

    pub fn subnet(&self) -> SubnetId {
        self.cert.subnet_id
    }

    pub fn slot(&self) -> InstanceId {
        InstanceId {
            subnet: self.cert.subnet_id,
            prev_state_hash: self.cert.prev_state_hash,
        }
    }
}

impl PartialEq for CertRef {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl Eq for CertRef {}

impl fmt::Debug for CertRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CertRef({}@{})", self.digest.short(), self.cert.height())
    }
}

/// One broadcast slot: a subnet's chain position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId {
    pub subnet: SubnetId,
    pub prev_state_hash: StateCommitment,
}

/// `m = (Cert, deps)`. Dependencies travel as full copies, sorted and deduplicated
/// by digest.
#[derive(Clone, PartialEq, Eq)]
pub struct CertificateMessage {
    cert: CertRef,
    deps: Vec<CertRef>,
    digest: Digest,
}

impl CertificateMessage {
    pub fn new(cert: CertRef, deps: impl IntoIterator<Item = CertRef>) -> Self {
        let mut deps: Vec<_> = deps.into_iter().collect();
        deps.sort_by_key(CertRef::digest);
        deps.dedup();
        let mut h = Sha256::new();
        h.update(b"tce-cert-message");
        h.update(cert.digest.as_bytes());
        h.update((deps.len() as u32).to_be_bytes());
        for d in &deps {
            h.update(d.digest.as_bytes());
        }
        Self {
            cert,
            deps,
            digest: Digest(h.finalize().into()),
        }
    }

    pub fn cert(&self) -> &CertRef {
        &self.cert
    }

    pub fn deps(&self) -> &[CertRef] {
        &self.deps
    }

    pub fn dep_digests(&self) -> BTreeSet<Digest> {
        self.deps.iter().map(CertRef::digest).collect()
    }
}

impl fmt::Debug for CertificateMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CertificateMessage")
            .field("cert", &self.cert)
            .field("deps", &self.deps)
            .finish()
    }
}

impl PrbPayload for CertificateMessage {
    type Instance = InstanceId;

    fn instance(&self) -> InstanceId {
        self.cert.slot()
    }

    fn digest(&self) -> Digest {
        self.digest
    }
}

/// Stateless certificate checks. Results depend only on the certificate, so
/// implementations may cache them by digest.
pub trait CertValidator {
    fn signature_ok(&self, cert: &CertRef) -> bool;

    /// `Valid_cert`.
    fn intrinsic_ok(&self, cert: &CertRef) -> bool;
}

/// Recomputes every check.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectValidator;

impl CertValidator for DirectValidator {
    fn signature_ok(&self, cert: &CertRef) -> bool {
        cert.cert().verify_signature()
    }

    fn intrinsic_ok(&self, cert: &CertRef) -> bool {
        valid_cert(cert.cert())
    }
}

/// Memoises [`DirectValidator`] by certificate digest. Single-threaded; one
/// instance is shared by all processes of a simulation run.
#[derive(Debug, Default)]
pub struct CachingValidator {
    signatures: RefCell<HashMap<Digest, bool>>,
    intrinsic: RefCell<HashMap<Digest, bool>>,
}

impl CachingValidator {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CertValidator for CachingValidator {
    fn signature_ok(&self, cert: &CertRef) -> bool {
        *self
            .signatures
            .borrow_mut()
            .entry(cert.digest())
            .or_insert_with(|| DirectValidator.signature_ok(cert))
    }

    fn intrinsic_ok(&self, cert: &CertRef) -> bool {
        *self
            .intrinsic
            .borrow_mut()
            .entry(cert.digest())
            .or_insert_with(|| DirectValidator.intrinsic_ok(cert))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    #[error("subnet is not registered")]
    UnknownSubnet,
    #[error("certificate signature does not verify")]
    BadSignature,
    #[error("certificate is not intrinsically valid")]
    InvalidCertificate,
    #[error("certificate does not extend the subnet's latest accepted state")]
    BrokenLinkage,
    #[error("a dependency is not yet accepted")]
    MissingDependency,
}
