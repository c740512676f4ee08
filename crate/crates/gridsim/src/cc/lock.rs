//! `lock2pc`: two-phase commit over queued exclusive locks.
//!
//! Prepare enqueues the transaction on the wait row of each of its
//! write keys. Head of all rows ⇒ vote yes; otherwise the transaction
//! waits with a deadlock-avoidance timer running. Commit and abort
//! unlink the transaction and hand the grant to whoever is next.
//! Reads never block: the store serves the last committed value
//! (repeatable read is enforced by the transaction's own read caching,
//! not by read locks).

use super::rows::WaitRows;
use super::{CcIndication, CcInvocation, CcProtocol};

pub struct LockCc {
    rows: WaitRows,
    /// Wait bound attached to timer requests, seconds.
    deadlock_timeout: f64,
}

impl LockCc {
    pub fn new(deadlock_timeout: f64) -> Self {
        LockCc { rows: WaitRows::new(), deadlock_timeout }
    }
}

impl CcProtocol for LockCc {
    fn name(&self) -> &'static str {
        "lock2pc"
    }

    fn invoke(&mut self, invocation: CcInvocation<'_>) -> Vec<CcIndication> {
        match invocation {
            CcInvocation::Read { tx, .. } => vec![CcIndication::ReadDone { tx: tx.id }],
            CcInvocation::Prepare { tx, keys } => {
                if self.rows.link(tx.id, keys) {
                    vec![CcIndication::PrepareDone { tx: tx.id }]
                } else {
                    vec![
                        CcIndication::TxWait { tx: tx.id },
                        CcIndication::TimeoutRequest { tx: tx.id, delay: self.deadlock_timeout },
                    ]
                }
            }
            CcInvocation::Commit { tx, .. } => {
                let mut out = vec![CcIndication::CommitDone { tx: tx.id }];
                out.extend(
                    self.rows
                        .release(tx.id)
                        .into_iter()
                        .map(|t| CcIndication::PrepareDone { tx: t }),
                );
                out
            }
            CcInvocation::Abort { tx, .. } => {
                let mut out = vec![CcIndication::PrepareFail { tx: tx.id }];
                out.extend(
                    self.rows
                        .release(tx.id)
                        .into_iter()
                        .map(|t| CcIndication::PrepareDone { tx: t }),
                );
                out
            }
            CcInvocation::Timeout { tx } => {
                // Only a still-waiting transaction is killed; if the
                // grant arrived before the timer fired, the timer is
                // stale and ignored.
                if !self.rows.is_waiting(tx.id) {
                    return Vec::new();
                }
                let mut out = vec![CcIndication::PrepareFail { tx: tx.id }];
                out.extend(
                    self.rows
                        .release(tx.id)
                        .into_iter()
                        .map(|t| CcIndication::PrepareDone { tx: t }),
                );
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Key, ObjectId, TxId, TxInfo, TxTimestamp};

    const TIMEOUT: f64 = 0.005;

    fn info(seq: u64) -> TxInfo {
        let id = TxId { coordinator: ObjectId(0), seq };
        TxInfo { id, timestamp: TxTimestamp { counter: 0, node: ObjectId(0) } }
    }

    fn prepare(cc: &mut LockCc, seq: u64, keys: &[Key]) -> Vec<CcIndication> {
        cc.invoke(CcInvocation::Prepare { tx: info(seq), keys })
    }

    #[test]
    fn uncontended_prepare_votes_yes_immediately() {
        let mut cc = LockCc::new(TIMEOUT);
        let out = prepare(&mut cc, 1, &[Key(1), Key(2)]);
        assert_eq!(out, vec![CcIndication::PrepareDone { tx: info(1).id }]);
    }

    #[test]
    fn conflicting_prepare_waits_with_timer() {
        let mut cc = LockCc::new(TIMEOUT);
        prepare(&mut cc, 1, &[Key(1)]);
        let out = prepare(&mut cc, 2, &[Key(1)]);
        assert_eq!(
            out,
            vec![
                CcIndication::TxWait { tx: info(2).id },
                CcIndication::TimeoutRequest { tx: info(2).id, delay: TIMEOUT },
            ]
        );
    }

    #[test]
    fn commit_hands_the_lock_to_the_next_waiter() {
        let mut cc = LockCc::new(TIMEOUT);
        prepare(&mut cc, 1, &[Key(1)]);
        prepare(&mut cc, 2, &[Key(1)]);
        let out = cc.invoke(CcInvocation::Commit { tx: info(1), keys: &[Key(1)] });
        assert_eq!(
            out,
            vec![
                CcIndication::CommitDone { tx: info(1).id },
                CcIndication::PrepareDone { tx: info(2).id },
            ]
        );
    }

    #[test]
    fn abort_fails_itself_and_releases() {
        let mut cc = LockCc::new(TIMEOUT);
        prepare(&mut cc, 1, &[Key(1)]);
        prepare(&mut cc, 2, &[Key(1)]);
        let out = cc.invoke(CcInvocation::Abort { tx: info(1), keys: &[Key(1)] });
        assert_eq!(
            out,
            vec![
                CcIndication::PrepareFail { tx: info(1).id },
                CcIndication::PrepareDone { tx: info(2).id },
            ]
        );
    }

    #[test]
    fn grant_requires_head_of_every_row() {
        let mut cc = LockCc::new(TIMEOUT);
        prepare(&mut cc, 1, &[Key(1)]);
        prepare(&mut cc, 2, &[Key(2)]);
        let out = prepare(&mut cc, 3, &[Key(1), Key(2)]);
        assert_eq!(out[0], CcIndication::TxWait { tx: info(3).id });
        // First holder leaves; the multi-key waiter still lacks key 2.
        let out = cc.invoke(CcInvocation::Commit { tx: info(1), keys: &[Key(1)] });
        assert_eq!(out, vec![CcIndication::CommitDone { tx: info(1).id }]);
        // Second holder leaves; now the waiter holds both rows.
        let out = cc.invoke(CcInvocation::Commit { tx: info(2), keys: &[Key(2)] });
        assert_eq!(
            out,
            vec![
                CcIndication::CommitDone { tx: info(2).id },
                CcIndication::PrepareDone { tx: info(3).id },
            ]
        );
    }

    #[test]
    fn timeout_kills_only_waiting_transactions() {
        let mut cc = LockCc::new(TIMEOUT);
        prepare(&mut cc, 1, &[Key(1)]);
        prepare(&mut cc, 2, &[Key(1)]);
        // Granted transaction: stale timer, no effect.
        assert_eq!(cc.invoke(CcInvocation::Timeout { tx: info(1) }), vec![]);
        // Waiting transaction: killed, vote no.
        let out = cc.invoke(CcInvocation::Timeout { tx: info(2) });
        assert_eq!(out, vec![CcIndication::PrepareFail { tx: info(2).id }]);
        // The holder is unaffected and can still commit.
        let out = cc.invoke(CcInvocation::Commit { tx: info(1), keys: &[Key(1)] });
        assert_eq!(out, vec![CcIndication::CommitDone { tx: info(1).id }]);
    }

    #[test]
    fn fifo_chain_of_waiters_grants_in_arrival_order() {
        let mut cc = LockCc::new(TIMEOUT);
        prepare(&mut cc, 1, &[Key(1)]);
        prepare(&mut cc, 2, &[Key(1)]);
        prepare(&mut cc, 3, &[Key(1)]);
        let mut granted = Vec::new();
        for seq in [1, 2, 3] {
            for ind in cc.invoke(CcInvocation::Commit { tx: info(seq), keys: &[Key(1)] }) {
                if let CcIndication::PrepareDone { tx } = ind {
                    granted.push(tx.seq);
                }
            }
        }
        assert_eq!(granted, vec![2, 3]);
    }

    #[test]
    fn reads_never_block() {
        let mut cc = LockCc::new(TIMEOUT);
        prepare(&mut cc, 1, &[Key(1)]);
        // Key 1 is locked for writing, yet a read sails through.
        let out = cc.invoke(CcInvocation::Read { tx: info(2), key: Key(1) });
        assert_eq!(out, vec![CcIndication::ReadDone { tx: info(2).id }]);
    }
}
