//! Per-key FIFO wait rows shared by the built-in protocols.
//!
//! A transaction is *linked* onto the row of every key it prepares for;
//! it is *granted* once it stands at the head of all of them. Releasing
//! a transaction (commit, abort or timeout) removes it everywhere and
//! reports which queued transactions become granted as a result.

use std::collections::{BTreeMap, VecDeque};

use crate::types::{Key, TxId};

struct TxRec {
    keys: Vec<Key>,
    granted: bool,
}

#[derive(Default)]
pub(super) struct WaitRows {
    rows: BTreeMap<Key, VecDeque<TxId>>,
    txs: BTreeMap<TxId, TxRec>,
}

impl WaitRows {
    pub fn new() -> Self {
        Self::default()
    }

    fn head_everywhere(&self, tx: TxId) -> bool {
        self.txs[&tx]
            .keys
            .iter()
            .all(|k| self.rows[k].front() == Some(&tx))
    }

    /// Enqueue `tx` on the row of every key; returns whether the
    /// transaction is granted immediately (head of all its rows).
    pub fn link(&mut self, tx: TxId, keys: &[Key]) -> bool {
        debug_assert!(!self.txs.contains_key(&tx), "transaction linked twice");
        let mut keys: Vec<Key> = keys.to_vec();
        keys.sort_unstable();
        keys.dedup();
        for &k in &keys {
            self.rows.entry(k).or_default().push_back(tx);
        }
        self.txs.insert(tx, TxRec { keys, granted: false });
        let granted = self.head_everywhere(tx);
        self.txs.get_mut(&tx).unwrap().granted = granted;
        granted
    }

    /// `tx` is linked but not granted.
    pub fn is_waiting(&self, tx: TxId) -> bool {
        self.txs.get(&tx).is_some_and(|rec| !rec.granted)
    }

    /// Remove `tx` from all its rows and return the transactions that
    /// become granted as a result, in key order of the released keys.
    pub fn release(&mut self, tx: TxId) -> Vec<TxId> {
        let Some(rec) = self.txs.remove(&tx) else {
            return Vec::new();
        };
        // Remove everywhere first: a successor may need this
        // transaction gone from several rows before it can be granted.
        for &k in &rec.keys {
            let row = self.rows.get_mut(&k).expect("row exists while a tx is linked");
            if let Some(pos) = row.iter().position(|&t| t == tx) {
                row.remove(pos);
            }
            if row.is_empty() {
                self.rows.remove(&k);
            }
        }
        let mut promoted = Vec::new();
        for &k in &rec.keys {
            let Some(row) = self.rows.get(&k) else { continue };
            let head = *row.front().expect("non-empty row has a head");
            if !self.txs[&head].granted && self.head_everywhere(head) {
                self.txs.get_mut(&head).unwrap().granted = true;
                promoted.push(head);
            }
        }
        promoted
    }
}
