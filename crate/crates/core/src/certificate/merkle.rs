//! Binary Merkle tree over transaction encodings.
//!
//! Leaves hash as `H(0x00 || data)`, inner nodes as `H(0x01 || l || r)`, and
//! an odd node at any level is paired with itself. The published root also
//! commits to the leaf count, `H(0x02 || count || tree_root)`, so a padded
//! tree cannot be passed off as one with a duplicated trailing leaf.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::Digest;

const LEAF: u8 = 0x00;
const NODE: u8 = 0x01;
const ROOT: u8 = 0x02;

pub fn leaf_hash(data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF]);
    h.update(data);
    Digest(h.finalize().into())
}

fn node_hash(l: &Digest, r: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE]);
    h.update(l.as_bytes());
    h.update(r.as_bytes());
    Digest(h.finalize().into())
}

fn seal(count: u32, tree_root: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([ROOT]);
    h.update(count.to_be_bytes());
    h.update(tree_root.as_bytes());
    Digest(h.finalize().into())
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks(2)
        .map(|pair| node_hash(&pair[0], pair.get(1).unwrap_or(&pair[0])))
        .collect()
}

/// Root over the given leaves; the empty tree seals an all-zero root.
pub fn merkle_root<T: AsRef<[u8]>>(leaves: &[T]) -> Digest {
    let mut level: Vec<_> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
    if level.is_empty() {
        return seal(0, &Digest([0; 32]));
    }
    while level.len() > 1 {
        level = next_level(&level);
    }
    seal(leaves.len() as u32, &level[0])
}

/// Sibling path from one leaf to the sealed root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerklePath {
    pub leaf_index: u32,
    pub leaf_count: u32,
    pub siblings: Vec<Digest>,
}

impl MerklePath {
    pub fn build<T: AsRef<[u8]>>(leaves: &[T], index: usize) -> Option<Self> {
        if index >= leaves.len() {
            return None;
        }
        let mut level: Vec<_> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
        let mut pos = index;
        let mut siblings = Vec::new();
        while level.len() > 1 {
            let sib = pos ^ 1;
            siblings.push(*level.get(sib).unwrap_or(&level[pos]));
            level = next_level(&level);
            pos /= 2;
        }
        Some(Self {
            leaf_index: index as u32,
            leaf_count: leaves.len() as u32,
            siblings,
        })
    }

    pub fn verify(&self, leaf: &[u8], root: &Digest) -> bool {
        if self.leaf_index >= self.leaf_count {
            return false;
        }
        // The path length is fixed by the leaf count.
        let mut width = self.leaf_count as usize;
        let mut depth = 0;
        while width > 1 {
            width = width.div_ceil(2);
            depth += 1;
        }
        if self.siblings.len() != depth {
            return false;
        }
        let mut acc = leaf_hash(leaf);
        let mut pos = self.leaf_index;
        let mut width = self.leaf_count;
        for sib in &self.siblings {
            let lone = pos.is_multiple_of(2) && pos + 1 == width;
            if lone && *sib != acc {
                return false;
            }
            acc = if pos.is_multiple_of(2) {
                node_hash(&acc, sib)
            } else {
                node_hash(sib, &acc)
            };
            pos /= 2;
            width = width.div_ceil(2);
        }
        seal(self.leaf_count, &acc) == *root
    }
}
