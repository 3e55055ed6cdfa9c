//! Toy subnet ledger and its state-transition function.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::codec::{Reader, Writer};
use super::{CertError, Digest, SubnetId};

pub type AccountId = String;
pub type AssetId = String;

/// Payload of a cross-subnet message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossSubnetMessage {
    TransferAsset {
        target_subnet: SubnetId,
        asset_id: AssetId,
        recipient: AccountId,
        amount: u64,
    },
    ContractCall {
        target_subnet: SubnetId,
        contract_addr: AccountId,
        func_name: String,
        #[serde(with = "hex::serde")]
        func_args: Vec<u8>,
    },
}

impl CrossSubnetMessage {
    pub fn target(&self) -> &SubnetId {
        match self {
            Self::TransferAsset { target_subnet, .. } | Self::ContractCall { target_subnet, .. } => {
                target_subnet
            }
        }
    }

    pub(crate) fn encode_into(&self, w: &mut Writer) {
        match self {
            Self::TransferAsset {
                target_subnet,
                asset_id,
                recipient,
                amount,
            } => {
                w.u8(0)
                    .fixed(target_subnet.as_bytes())
                    .str(asset_id)
                    .str(recipient)
                    .u64(*amount);
            }
            Self::ContractCall {
                target_subnet,
                contract_addr,
                func_name,
                func_args,
            } => {
                w.u8(1)
                    .fixed(target_subnet.as_bytes())
                    .str(contract_addr)
                    .str(func_name)
                    .bytes(func_args);
            }
        }
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, CertError> {
        match r.u8()? {
            0 => Ok(Self::TransferAsset {
                target_subnet: SubnetId::from_bytes(r.fixed()?),
                asset_id: r.str()?,
                recipient: r.str()?,
                amount: r.u64()?,
            }),
            1 => Ok(Self::ContractCall {
                target_subnet: SubnetId::from_bytes(r.fixed()?),
                contract_addr: r.str()?,
                func_name: r.str()?,
                func_args: r.bytes()?,
            }),
            _ => Err(CertError::Decode("unknown cross-subnet message tag")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transaction {
    LocalTransfer {
        from: AccountId,
        to: AccountId,
        asset_id: AssetId,
        amount: u64,
    },
    /// Sends `message`; an asset transfer burns `amount` from `from`.
    #[serde(rename = "outbound_xs")]
    OutboundXS {
        from: AccountId,
        message: CrossSubnetMessage,
    },
    /// Credits an incoming transfer identified by `digest`.
    InboundMint {
        digest: Digest,
        recipient: AccountId,
        asset_id: AssetId,
        amount: u64,
    },
}

impl Transaction {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub(crate) fn encode_into(&self, w: &mut Writer) {
        match self {
            Self::LocalTransfer {
                from,
                to,
                asset_id,
                amount,
            } => {
                w.u8(0).str(from).str(to).str(asset_id).u64(*amount);
            }
            Self::OutboundXS { from, message } => {
                w.u8(1).str(from);
                message.encode_into(w);
            }
            Self::InboundMint {
                digest,
                recipient,
                asset_id,
                amount,
            } => {
                w.u8(2)
                    .fixed(digest.as_bytes())
                    .str(recipient)
                    .str(asset_id)
                    .u64(*amount);
            }
        }
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, CertError> {
        match r.u8()? {
            0 => Ok(Self::LocalTransfer {
                from: r.str()?,
                to: r.str()?,
                asset_id: r.str()?,
                amount: r.u64()?,
            }),
            1 => Ok(Self::OutboundXS {
                from: r.str()?,
                message: CrossSubnetMessage::decode_from(r)?,
            }),
            2 => Ok(Self::InboundMint {
                digest: Digest(r.fixed()?),
                recipient: r.str()?,
                asset_id: r.str()?,
                amount: r.u64()?,
            }),
            _ => Err(CertError::Decode("unknown transaction tag")),
        }
    }
}

/// Balances, applied inbound digests and the certificate height.
///
/// Zero balances are never stored, so the encoding of a state is canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubnetState {
    balances: BTreeMap<(AccountId, AssetId), u64>,
    received_log: BTreeSet<Digest>,
    height: u64,
}

impl SubnetState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Initial state with the given balances.
    pub fn with_balances<I, A, B>(entries: I) -> Self
    where
        I: IntoIterator<Item = (A, B, u64)>,
        A: Into<AccountId>,
        B: Into<AssetId>,
    {
        let mut s = Self::new();
        for (a, b, v) in entries {
            s.credit(a.into(), b.into(), v)
                .expect("initial balances overflow");
        }
        s
    }

    pub fn balance(&self, account: &str, asset: &str) -> u64 {
        self.balances
            .get(&(account.to_string(), asset.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn balances(&self) -> impl Iterator<Item = (&AccountId, &AssetId, u64)> {
        self.balances.iter().map(|((a, b), v)| (a, b, *v))
    }

    /// Σ balances of `asset` over all accounts.
    pub fn supply(&self, asset: &str) -> u128 {
        self.balances
            .iter()
            .filter(|((_, b), _)| b == asset)
            .map(|(_, v)| u128::from(*v))
            .sum()
    }

    pub fn assets(&self) -> BTreeSet<AssetId> {
        self.balances.keys().map(|(_, b)| b.clone()).collect()
    }

    pub fn has_received(&self, digest: &Digest) -> bool {
        self.received_log.contains(digest)
    }

    pub fn received_log(&self) -> &BTreeSet<Digest> {
        &self.received_log
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    fn credit(&mut self, account: AccountId, asset: AssetId, amount: u64) -> Result<(), CertError> {
        if amount == 0 {
            return Ok(());
        }
        let slot = self.balances.entry((account, asset)).or_insert(0);
        *slot = slot.checked_add(amount).ok_or(CertError::Overflow)?;
        Ok(())
    }

    fn debit(&mut self, account: &str, asset: &str, amount: u64) -> Result<(), CertError> {
        let key = (account.to_string(), asset.to_string());
        let available = self.balances.get(&key).copied().unwrap_or(0);
        if available < amount {
            return Err(CertError::InsufficientBalance {
                account: account.to_string(),
                asset: asset.to_string(),
                needed: amount,
                available,
            });
        }
        if available == amount {
            self.balances.remove(&key);
        } else {
            self.balances.insert(key, available - amount);
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.height).count(self.balances.len());
        for ((a, b), v) in &self.balances {
            w.str(a).str(b).u64(*v);
        }
        w.count(self.received_log.len());
        for d in &self.received_log {
            w.fixed(d.as_bytes());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = Reader::new(bytes);
        let s = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(s)
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, CertError> {
        let height = r.u64()?;
        let mut balances = BTreeMap::new();
        let mut last = None;
        for _ in 0..r.count()? {
            let key = (r.str()?, r.str()?);
            let v = r.u64()?;
            if v == 0 || last.as_ref().is_some_and(|l| l >= &key) {
                return Err(CertError::Decode("state balances are not canonical"));
            }
            last = Some(key.clone());
            balances.insert(key, v);
        }
        let mut received_log = BTreeSet::new();
        for _ in 0..r.count()? {
            let d = Digest(r.fixed()?);
            if received_log.last().is_some_and(|l| l >= &d) {
                return Err(CertError::Decode("received log is not canonical"));
            }
            received_log.insert(d);
        }
        Ok(Self {
            balances,
            received_log,
            height,
        })
    }

    /// `Hash(S_k)` over the canonical encoding.
    pub fn commitment(&self) -> StateCommitment {
        let mut h = Sha256::new();
        h.update(b"tce-state");
        h.update(self.encode());
        Digest(h.finalize().into())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "height": self.height,
            "balances": self
                .balances
                .iter()
                .map(|((a, b), v)| serde_json::json!({"account": a, "asset": b, "amount": v}))
                .collect::<Vec<_>>(),
            "received_log": self.received_log.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        })
    }
}

pub type StateCommitment = Digest;

/// `STF(S_k, T_{k+1})`. The batch is atomic: any failing transaction rejects
/// the whole batch. The height grows by one per batch.
pub fn apply_stf(state: &SubnetState, txs: &[Transaction]) -> Result<SubnetState, CertError> {
    let mut next = state.clone();
    for tx in txs {
        match tx {
            Transaction::LocalTransfer {
                from,
                to,
                asset_id,
                amount,
            } => {
                if *amount == 0 {
                    return Err(CertError::ZeroAmount);
                }
                next.debit(from, asset_id, *amount)?;
                next.credit(to.clone(), asset_id.clone(), *amount)?;
            }
            Transaction::OutboundXS { from, message } => match message {
                CrossSubnetMessage::TransferAsset {
                    asset_id, amount, ..
                } => {
                    if *amount == 0 {
                        return Err(CertError::ZeroAmount);
                    }
                    next.debit(from, asset_id, *amount)?;
                }
                CrossSubnetMessage::ContractCall { .. } => {}
            },
            Transaction::InboundMint {
                digest,
                recipient,
                asset_id,
                amount,
            } => {
                if *amount == 0 {
                    return Err(CertError::ZeroAmount);
                }
                if !next.received_log.insert(*digest) {
                    return Err(CertError::DuplicateMint(*digest));
                }
                next.credit(recipient.clone(), asset_id.clone(), *amount)?;
            }
        }
    }
    next.height = next.height.checked_add(1).ok_or(CertError::Overflow)?;
    Ok(next)
}
