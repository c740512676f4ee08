//! `ts2pc`: timestamp-guarded two-phase commit.
//!
//! Transactions are stamped at begin time with `(local counter,
//! coordinator id)`, compared lexicographically. Prepare first checks
//! the guard — the transaction's timestamp must be strictly greater
//! than the last-committed-writer timestamp (DOT entry) of **every**
//! key it prepares for — and only then enqueues on the wait rows like
//! the lock protocol. A guard failure votes no immediately without
//! queueing, so stale transactions cannot clog the rows.
//!
//! On commit the DOT entries of the written keys advance to the
//! committer's timestamp. A queued transaction is re-checked against
//! the guard at the moment it would inherit a grant: the holder it
//! waited behind may have committed with a larger timestamp, making the
//! waiter stale. Killing such waiters keeps every DOT entry strictly
//! increasing over the commits it serializes.

use std::collections::BTreeMap;

use super::rows::WaitRows;
use super::{CcIndication, CcInvocation, CcProtocol};
use crate::types::{Key, ObjectId, SimTime, TxId, TxTimestamp};

struct Prepared {
    timestamp: TxTimestamp,
    keys: Vec<Key>,
}

pub struct TimestampCc {
    server: ObjectId,
    counter: u64,
    deadlock_timeout: f64,
    /// DOT: last committed writer's timestamp per key. Missing entry
    /// means "never written", which every timestamp beats.
    dot: BTreeMap<Key, TxTimestamp>,
    rows: WaitRows,
    /// Timestamp and keys of transactions currently linked in the
    /// rows, needed for guard re-checks at promotion time.
    prepared: BTreeMap<TxId, Prepared>,
}

impl TimestampCc {
    pub fn new(server: ObjectId, deadlock_timeout: f64) -> Self {
        TimestampCc {
            server,
            counter: 0,
            deadlock_timeout,
            dot: BTreeMap::new(),
            rows: WaitRows::new(),
            prepared: BTreeMap::new(),
        }
    }

    fn guard_passes(&self, ts: TxTimestamp, keys: &[Key]) -> bool {
        keys.iter().all(|k| match self.dot.get(k) {
            Some(&committed) => ts > committed,
            None => true,
        })
    }

    /// Unlink `tx` and resolve the transactions that inherit grants:
    /// still-valid ones are granted, stale ones are killed, and kills
    /// cascade to the waiters behind them.
    fn release_resolving(&mut self, tx: TxId, out: &mut Vec<CcIndication>) {
        self.prepared.remove(&tx);
        let mut work = self.rows.release(tx);
        while let Some(t) = work.first().copied() {
            work.remove(0);
            let rec = &self.prepared[&t];
            if self.guard_passes(rec.timestamp, &rec.keys) {
                out.push(CcIndication::PrepareDone { tx: t });
            } else {
                out.push(CcIndication::PrepareFail { tx: t });
                self.prepared.remove(&t);
                work.extend(self.rows.release(t));
            }
        }
    }
}

impl CcProtocol for TimestampCc {
    fn name(&self) -> &'static str {
        "ts2pc"
    }

    fn stamp(&mut self, _tx: TxId, _now: SimTime) -> TxTimestamp {
        self.counter += 1;
        TxTimestamp { counter: self.counter, node: self.server }
    }

    fn invoke(&mut self, invocation: CcInvocation<'_>) -> Vec<CcIndication> {
        match invocation {
            CcInvocation::Read { tx, .. } => vec![CcIndication::ReadDone { tx: tx.id }],
            CcInvocation::Prepare { tx, keys } => {
                // Guard before linking: a rejected transaction never
                // enters the rows.
                if !self.guard_passes(tx.timestamp, keys) {
                    return vec![CcIndication::PrepareFail { tx: tx.id }];
                }
                let mut sorted = keys.to_vec();
                sorted.sort_unstable();
                sorted.dedup();
                self.prepared
                    .insert(tx.id, Prepared { timestamp: tx.timestamp, keys: sorted });
                if self.rows.link(tx.id, keys) {
                    vec![CcIndication::PrepareDone { tx: tx.id }]
                } else {
                    vec![
                        CcIndication::TxWait { tx: tx.id },
                        CcIndication::TimeoutRequest { tx: tx.id, delay: self.deadlock_timeout },
                    ]
                }
            }
            CcInvocation::Commit { tx, keys } => {
                for &k in keys {
                    // Max-assign: equivalent to plain assignment at the
                    // server that serialized the key (the guard plus the
                    // grant guarantee the committer is newest there),
                    // but replica copies applying relayed commits out of
                    // order must never move a DOT entry backwards.
                    let e = self.dot.entry(k).or_insert(tx.timestamp);
                    if tx.timestamp > *e {
                        *e = tx.timestamp;
                    }
                }
                let mut out = vec![CcIndication::CommitDone { tx: tx.id }];
                self.release_resolving(tx.id, &mut out);
                out
            }
            CcInvocation::Abort { tx, .. } => {
                let mut out = vec![CcIndication::PrepareFail { tx: tx.id }];
                self.release_resolving(tx.id, &mut out);
                out
            }
            CcInvocation::Timeout { tx } => {
                if !self.rows.is_waiting(tx.id) {
                    return Vec::new();
                }
                let mut out = vec![CcIndication::PrepareFail { tx: tx.id }];
                self.release_resolving(tx.id, &mut out);
                out
            }
        }
    }
}
