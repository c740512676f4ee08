//! Data placement: consistent-hashing ring with virtual nodes.
//!
//! Every key maps to an ordered owner set of `replication` distinct
//! servers found by walking the ring clockwise from the key's hash
//! point; the first owner is the key's primary. The mapping depends
//! only on `(server count, vnodes, replication)`, so every simulation
//! object can compute it locally without coordination.

use serde::{Deserialize, Serialize};

use crate::types::{mix64, Key, ObjectId};

const KEY_SALT: u64 = 0xd1b5_4a32_d192_ed03;

/// Which owners take part in two-phase commit.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicationMode {
    /// Only each write key's primary owner prepares; committed primaries
    /// relay the commit to the non-primary owners afterwards.
    #[default]
    Primary,
    /// Every owner of a write key prepares.
    Multimaster,
}

#[derive(Debug)]
pub struct Placement {
    /// Ring points sorted by position: `(point, server)`.
    ring: Vec<(u64, ObjectId)>,
    n_servers: usize,
    replication: usize,
}

impl Placement {
    /// Build the ring for servers `0..n_servers`.
    ///
    /// `replication` is clamped nowhere: it must be `1..=n_servers`.
    pub fn new(n_servers: usize, vnodes_per_server: usize, replication: usize) -> Self {
        assert!(n_servers >= 1, "need at least one server");
        assert!(vnodes_per_server >= 1, "need at least one virtual node per server");
        assert!(
            (1..=n_servers).contains(&replication),
            "replication degree {replication} must be in 1..={n_servers}"
        );
        let mut ring = Vec::with_capacity(n_servers * vnodes_per_server);
        for s in 0..n_servers {
            for v in 0..vnodes_per_server {
                let point = mix64(((s as u64) << 32) | v as u64);
                ring.push((point, ObjectId(s as u32)));
            }
        }
        ring.sort_unstable();
        Placement { ring, n_servers, replication }
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn replication(&self) -> usize {
        self.replication
    }

    fn key_point(key: Key) -> u64 {
        mix64(key.0 ^ KEY_SALT)
    }

    /// Ordered owner set of `key`: `replication` distinct servers,
    /// clockwise from the key's hash point. The first is the primary.
    pub fn owners(&self, key: Key) -> Vec<ObjectId> {
        let point = Self::key_point(key);
        let start = self.ring.partition_point(|&(p, _)| p < point);
        let mut owners = Vec::with_capacity(self.replication);
        for i in 0..self.ring.len() {
            let (_, server) = self.ring[(start + i) % self.ring.len()];
            if !owners.contains(&server) {
                owners.push(server);
                if owners.len() == self.replication {
                    break;
                }
            }
        }
        owners
    }

    pub fn primary(&self, key: Key) -> ObjectId {
        self.owners(key)[0]
    }

    pub fn is_owner(&self, key: Key, server: ObjectId) -> bool {
        self.owners(key).contains(&server)
    }

    /// Number of keys in `0..dataset_size` stored on each server (its
    /// local copy count). Feeds the memory-usage load signal.
    pub fn copy_counts(&self, dataset_size: u64) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_servers];
        for k in 0..dataset_size {
            for owner in self.owners(Key(k)) {
                counts[owner.0 as usize] += 1;
            }
        }
        counts
    }
}
