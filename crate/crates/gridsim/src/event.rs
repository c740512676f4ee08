//! Event vocabulary of the simulator.
//!
//! Every interaction — client requests, CPU completions, replication
//! messages, timeouts — is an [`SimEvent`] stamped with a delivery time
//! and routed to one simulation object. Handlers run to completion and
//! may only schedule further events.

use std::fmt;

use crate::types::{mix64, Key, ObjectId, OpId, SimTime, TxId, TxInfo};

/// Outcome reported back to the issuing client.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ClientReplyKind {
    /// Transaction allocated; subsequent operations may be issued.
    BeginAck,
    /// A get/put finished (reads waited for their value, writes are
    /// buffered locally and acknowledged immediately).
    OpDone,
    /// Two-phase commit finished with a commit decision.
    Committed,
    /// Transaction aborted (conflict or timeout); the client decides
    /// whether to retry.
    Aborted,
}

/// Deferred work carried by a `CpuComplete` event: what the server
/// should do once the CPU finishes crunching for the triggering event.
#[derive(Clone, PartialEq, Debug)]
pub enum Stage {
    /// Begin processed: allocate the transaction and ack the client.
    BeginDone { client: ObjectId, script: u64, attempt: u32 },
    /// Local get processed; consult concurrency control / fast path.
    GetDone { tx: TxId, key: Key },
    /// Marshalling done; fan out remote get messages to all owners.
    SendRemoteGets { tx: TxId, key: Key, owners: Vec<ObjectId> },
    /// Remote get processed on an owner; consult local concurrency control.
    RemoteGetDone { op: OpId, requester: ObjectId, tx_info: TxInfo, key: Key },
    /// Local put processed: buffer the write and ack the client.
    PutDone { tx: TxId, key: Key },
    /// Commit request processed at the coordinator; start two-phase
    /// commit (or finish immediately for read-only transactions).
    CoordinatorPrepareDone { tx: TxId },
    /// Prepare processed at a participant; consult concurrency control.
    ParticipantPrepareDone { tx_info: TxInfo, coordinator: ObjectId, keys: Vec<Key> },
    /// Commit applied at a participant: release protocol state, install
    /// writes, and (at the coordinator) report back to the client.
    CommitApplied { tx_info: TxInfo, keys: Vec<Key> },
    /// Abort applied at a participant.
    AbortApplied { tx: TxId },
}

/// The kind (and payload) of a simulation event.
#[derive(Clone, PartialEq, Debug)]
pub enum EventKind {
    /// Client asks its server to start a transaction. `script` is the
    /// client-local identifier used to route replies; `attempt` counts
    /// executions of the same script (1 = first try).
    Begin { client: ObjectId, script: u64, attempt: u32 },
    /// Client read. Answered from the transaction's own write/read set,
    /// the local store, or via remote gets to the owners.
    Get { tx: TxId, key: Key },
    /// Client write. Buffered in the transaction write set until commit.
    Put { tx: TxId, key: Key },
    /// Client asks the coordinator to commit.
    CommitRequest { tx: TxId },
    /// The server CPU finished the service demand for an earlier event;
    /// `stage` says how to continue.
    CpuComplete { stage: Stage },
    /// Read request sent to an owner of `key`.
    RemoteGet { op: OpId, requester: ObjectId, tx_info: TxInfo, key: Key },
    /// Owner's answer to a remote get (value sizes are modelled, not
    /// carried). `src` identifies the replying owner.
    ReadReply { op: OpId },
    /// Prepare sent to a participant, listing the keys it must guard.
    RemotePrepare { tx_info: TxInfo, coordinator: ObjectId, keys: Vec<Key> },
    /// Participant's vote. `positive = false` forces a global abort.
    PrepareReply { tx: TxId, positive: bool },
    /// Global commit decision; participants install `keys` from the
    /// transaction's write set. Carries the TxInfo snapshot so servers
    /// that never prepared (replicas receiving a relayed commit) can
    /// still feed their protocol instance.
    FinalCommit { tx_info: TxInfo, keys: Vec<Key> },
    /// Global abort decision (explicit or conflict-triggered).
    Abort { tx: TxId },
    /// Deadlock-avoidance timer armed when a transaction was told to
    /// wait. Ignored if the wait was resolved in the meantime.
    Timeout { tx: TxId },
    /// Client-internal tick: the next open-system script arrival is
    /// due. Routed from a client to itself.
    Arrival,
    /// Server reports an outcome to a client. `tx` is absent only for
    /// replies that could not be tied to a live transaction.
    ClientReply { tx: Option<TxId>, script: u64, kind: ClientReplyKind },
}

impl EventKind {
    /// Short label used in traces and debugging output.
    pub fn label(&self) -> String {
        match self {
            EventKind::Begin { client, attempt, .. } => {
                format!("BEGIN client={client} attempt={attempt}")
            }
            EventKind::Get { tx, key } => format!("GET tx={tx} key={key}"),
            EventKind::Put { tx, key } => format!("PUT tx={tx} key={key}"),
            EventKind::CommitRequest { tx } => format!("COMMIT_REQUEST tx={tx}"),
            EventKind::CpuComplete { stage } => format!("CPU_COMPLETE {}", stage_label(stage)),
            EventKind::RemoteGet { tx_info, key, .. } => {
                format!("REMOTE_GET tx={} key={key}", tx_info.id)
            }
            EventKind::ReadReply { .. } => "READ_REPLY".to_string(),
            EventKind::RemotePrepare { tx_info, keys, .. } => {
                format!("REMOTE_PREPARE tx={} keys={}", tx_info.id, keys.len())
            }
            EventKind::PrepareReply { tx, positive } => {
                format!("PREPARE_REPLY tx={tx} positive={positive}")
            }
            EventKind::FinalCommit { tx_info, .. } => format!("FINAL_COMMIT tx={}", tx_info.id),
            EventKind::Abort { tx } => format!("ABORT tx={tx}"),
            EventKind::Timeout { tx } => format!("TIMEOUT tx={tx}"),
            EventKind::Arrival => "ARRIVAL".to_string(),
            EventKind::ClientReply { tx, kind, .. } => match tx {
                Some(tx) => format!("CLIENT_REPLY tx={tx} {kind:?}"),
                None => format!("CLIENT_REPLY {kind:?}"),
            },
        }
    }

    /// Stable fingerprint folded into the run's trace hash.
    pub fn fingerprint(&self) -> u64 {
        fn tx_bits(tx: &TxId) -> u64 {
            (u64::from(tx.coordinator.0) << 40) ^ tx.seq
        }
        let (tag, a, b) = match self {
            EventKind::Begin { client, script, attempt } => {
                (1, u64::from(client.0), script ^ u64::from(*attempt) << 48)
            }
            EventKind::Get { tx, key } => (2, tx_bits(tx), key.0),
            EventKind::Put { tx, key } => (3, tx_bits(tx), key.0),
            EventKind::CommitRequest { tx } => (4, tx_bits(tx), 0),
            EventKind::CpuComplete { stage } => (5, stage_fingerprint(stage), 0),
            EventKind::RemoteGet { op, tx_info, key, .. } => {
                (6, tx_bits(&tx_info.id) ^ op.0, key.0)
            }
            EventKind::ReadReply { op } => (7, op.0, 0),
            EventKind::RemotePrepare { tx_info, keys, .. } => {
                (8, tx_bits(&tx_info.id), keys.len() as u64)
            }
            EventKind::PrepareReply { tx, positive } => (9, tx_bits(tx), u64::from(*positive)),
            EventKind::FinalCommit { tx_info, keys } => {
                (10, tx_bits(&tx_info.id), keys.len() as u64)
            }
            EventKind::Abort { tx } => (11, tx_bits(tx), 0),
            EventKind::Timeout { tx } => (12, tx_bits(tx), 0),
            EventKind::Arrival => (14, 0, 0),
            EventKind::ClientReply { tx, script, kind } => (
                13,
                tx.as_ref().map(tx_bits).unwrap_or(0) ^ script,
                *kind as u64,
            ),
        };
        mix64(tag ^ mix64(a) ^ mix64(b.wrapping_add(0x51ed_270b)))
    }
}

fn stage_label(stage: &Stage) -> String {
    match stage {
        Stage::BeginDone { .. } => "begin".into(),
        Stage::GetDone { tx, key } => format!("get tx={tx} key={key}"),
        Stage::SendRemoteGets { tx, key, .. } => format!("send_remote_gets tx={tx} key={key}"),
        Stage::RemoteGetDone { tx_info, key, .. } => {
            format!("remote_get tx={} key={key}", tx_info.id)
        }
        Stage::PutDone { tx, key } => format!("put tx={tx} key={key}"),
        Stage::CoordinatorPrepareDone { tx } => format!("coord_prepare tx={tx}"),
        Stage::ParticipantPrepareDone { tx_info, .. } => {
            format!("part_prepare tx={}", tx_info.id)
        }
        Stage::CommitApplied { tx_info, .. } => format!("commit_applied tx={}", tx_info.id),
        Stage::AbortApplied { tx } => format!("abort_applied tx={tx}"),
    }
}

fn stage_fingerprint(stage: &Stage) -> u64 {
    fn tx_bits(tx: &TxId) -> u64 {
        (u64::from(tx.coordinator.0) << 40) ^ tx.seq
    }
    match stage {
        Stage::BeginDone { client, script, .. } => mix64(101 ^ u64::from(client.0) ^ script),
        Stage::GetDone { tx, key } => mix64(102 ^ tx_bits(tx) ^ mix64(key.0)),
        Stage::SendRemoteGets { tx, key, .. } => mix64(103 ^ tx_bits(tx) ^ mix64(key.0)),
        Stage::RemoteGetDone { tx_info, key, .. } => {
            mix64(104 ^ tx_bits(&tx_info.id) ^ mix64(key.0))
        }
        Stage::PutDone { tx, key } => mix64(105 ^ tx_bits(tx) ^ mix64(key.0)),
        Stage::CoordinatorPrepareDone { tx } => mix64(106 ^ tx_bits(tx)),
        Stage::ParticipantPrepareDone { tx_info, .. } => mix64(107 ^ tx_bits(&tx_info.id)),
        Stage::CommitApplied { tx_info, .. } => mix64(108 ^ tx_bits(&tx_info.id)),
        Stage::AbortApplied { tx } => mix64(109 ^ tx_bits(tx)),
    }
}

/// A scheduled event: deliver `kind` to `dst` at `time`.
#[derive(Clone, PartialEq, Debug)]
pub struct SimEvent {
    pub time: SimTime,
    pub src: ObjectId,
    pub dst: ObjectId,
    pub kind: EventKind,
}

impl SimEvent {
    /// Fingerprint of the full event, mixed into the trace hash as
    /// events are *dequeued* (i.e. in execution order).
    pub fn fingerprint(&self) -> u64 {
        let t = mix64(self.time.as_secs().to_bits());
        let route = mix64(u64::from(self.src.0) << 32 | u64::from(self.dst.0));
        t ^ route.rotate_left(17) ^ self.kind.fingerprint()
    }
}

/// One line of a recorded execution trace (only kept when recording is
/// switched on; production runs carry just the rolling hash).
#[derive(Clone, PartialEq, Debug)]
pub struct TraceRecord {
    pub time: SimTime,
    pub src: ObjectId,
    pub dst: ObjectId,
    pub label: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}->{} {}", self.time, self.src, self.dst, self.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TxTimestamp;

    fn tx(seq: u64) -> TxId {
        TxId { coordinator: ObjectId(0), seq }
    }

    #[test]
    fn fingerprints_distinguish_payloads() {
        let a = EventKind::Get { tx: tx(1), key: Key(5) };
        let b = EventKind::Get { tx: tx(1), key: Key(6) };
        let c = EventKind::Put { tx: tx(1), key: Key(5) };
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn event_fingerprint_covers_route_and_time() {
        let kind = EventKind::Abort { tx: tx(9) };
        let base = SimEvent {
            time: SimTime::from_secs(1.0),
            src: ObjectId(0),
            dst: ObjectId(1),
            kind: kind.clone(),
        };
        let mut shifted = base.clone();
        shifted.time = SimTime::from_secs(2.0);
        let mut rerouted = base.clone();
        rerouted.dst = ObjectId(2);
        assert_ne!(base.fingerprint(), shifted.fingerprint());
        assert_ne!(base.fingerprint(), rerouted.fingerprint());
    }

    #[test]
    fn labels_are_stable() {
        let info = TxInfo {
            id: tx(3),
            timestamp: TxTimestamp { counter: 7, node: ObjectId(0) },
        };
        let kind = EventKind::RemoteGet {
            op: OpId(1),
            requester: ObjectId(4),
            tx_info: info,
            key: Key(42),
        };
        assert_eq!(kind.label(), "REMOTE_GET tx=0.3 key=42");
    }
}
