//! The cache-server simulation object.
//!
//! A server is the transaction-manager front-end of one grid node: it
//! charges every incoming event to its CPU queue, keeps the transaction
//! records (write/read sets, phase) for transactions it coordinates,
//! tracks pending remote reads and outstanding prepare votes, and
//! brokers all traffic to and from its concurrency-control instance.
//!
//! Event patterns implemented here:
//!
//! * **begin** — `tx_begin` CPU stage, then transaction allocation, the
//!   protocol's setup hook, and a begin-ack to the client.
//! * **get** — `local_tx_get` CPU stage, then: answered from the
//!   transaction's own write/read set; or a local concurrency-control
//!   read; or (non-owned key) a marshalling CPU stage followed by
//!   `REMOTE_GET` to *every* owner. The first `READ_REPLY` answers the
//!   client, the rest only retire the pending-operation record.
//! * **put** — `local_tx_put` CPU stage, write-set upsert, ack. Writes
//!   never touch the network before commit.
//! * **commit** — `tx_prepare` CPU stage. Read-only transactions commit
//!   on the spot. Otherwise prepares fan out to the participant set
//!   (primaries of the write keys, or all owners in multi-master mode);
//!   the coordinator's own participation runs through a second local
//!   CPU stage and votes via a delay-free self event. The outcome is
//!   decided at the first negative vote (abort everywhere) or when all
//!   votes are in (commit everywhere); stragglers still retire the
//!   vote counter. In primary mode, committed primaries relay the
//!   commit to non-primary owners of their keys.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::ChaCha8Rng;

use crate::cc::{CcIndication, CcInvocation, CcProtocol};
use crate::cpu::{Activity, CpuQueue};
use crate::event::{ClientReplyKind, EventKind, SimEvent, Stage};
use crate::net::SenderNetState;
use crate::placement::{Placement, ReplicationMode};
use crate::sim::Ctx;
use crate::stats::TxRecord;
use crate::types::{Key, ObjectId, OpId, SimTime, TxId, TxInfo};

/// Life-cycle of a coordinated transaction.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum TxPhase {
    Active,
    Preparing,
    Committing,
    Aborting,
    Committed,
    Aborted,
}

/// Coordinator-side transaction record. Statistics (begin time, attempt
/// number) live only here — they are never copied onto cross-server
/// events.
struct CoordTx {
    client: ObjectId,
    script: u64,
    attempt: u32,
    begin_time: SimTime,
    timestamp: crate::types::TxTimestamp,
    read_set: BTreeSet<Key>,
    write_set: BTreeSet<Key>,
    phase: TxPhase,
    participants: Vec<ObjectId>,
    votes_pending: usize,
    finalized: bool,
}

/// Participant-side record: lives from the prepare CPU stage until the
/// global outcome is applied here.
struct PartTx {
    tx_info: TxInfo,
    coordinator: ObjectId,
    /// The prepare keys restricted to this server's copies.
    local_keys: Vec<Key>,
    /// A participant votes exactly once; later indications for the same
    /// transaction (e.g. the release triggered by the global abort) are
    /// swallowed.
    voted: bool,
}

/// A fanned-out remote read awaiting its replies.
struct PendingRead {
    tx: TxId,
    key: Key,
    remaining: usize,
    replied: bool,
}

/// Where to route a read once the protocol clears it.
enum ParkedRead {
    /// Local read issued by this coordinator's client.
    Client { key: Key },
    /// Read served on behalf of another server.
    Requester { op: OpId, requester: ObjectId },
}

/// Participant set for a write-key set under the given mode, sorted.
pub(crate) fn participants_for(
    mode: ReplicationMode,
    placement: &Placement,
    keys: &BTreeSet<Key>,
) -> Vec<ObjectId> {
    let mut set = BTreeSet::new();
    for &k in keys {
        match mode {
            ReplicationMode::Primary => {
                set.insert(placement.primary(k));
            }
            ReplicationMode::Multimaster => set.extend(placement.owners(k)),
        }
    }
    set.into_iter().collect()
}

/// The subset of `keys` stored on `server`.
pub(crate) fn restrict_owned(placement: &Placement, server: ObjectId, keys: &[Key]) -> Vec<Key> {
    keys.iter().copied().filter(|&k| placement.is_owner(k, server)).collect()
}

pub struct Server {
    id: ObjectId,
    cpu: CpuQueue,
    cc: Box<dyn CcProtocol>,
    net_state: SenderNetState,
    net_rng: ChaCha8Rng,
    next_tx_seq: u64,
    next_op_seq: u64,
    /// Begin arrival times, keyed by (client, script): the transaction
    /// latency clock starts when the begin request arrives, not when
    /// its CPU stage completes.
    pending_begin: BTreeMap<(ObjectId, u64), SimTime>,
    coord: BTreeMap<TxId, CoordTx>,
    part: BTreeMap<TxId, PartTx>,
    pending_reads: BTreeMap<OpId, PendingRead>,
    /// Reads handed to the protocol, FIFO per transaction, matched to
    /// `READ_DONE` indications in order.
    parked_reads: BTreeMap<TxId, VecDeque<ParkedRead>>,
}

impl Server {
    pub fn new(
        id: ObjectId,
        cpu: CpuQueue,
        cc: Box<dyn CcProtocol>,
        net_state: SenderNetState,
        net_rng: ChaCha8Rng,
    ) -> Self {
        Server {
            id,
            cpu,
            cc,
            net_state,
            net_rng,
            next_tx_seq: 0,
            next_op_seq: 0,
            pending_begin: BTreeMap::new(),
            coord: BTreeMap::new(),
            part: BTreeMap::new(),
            pending_reads: BTreeMap::new(),
            parked_reads: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> ObjectId {
        self.id
    }

    pub fn cpu(&self) -> &CpuQueue {
        &self.cpu
    }

    pub fn net_state(&self) -> &SenderNetState {
        &self.net_state
    }

    /// Transactions currently coordinated here.
    pub fn in_flight(&self) -> usize {
        self.coord.len()
    }

    /// Drain invariant: once the event set empties, no transaction,
    /// vote, or pending read may remain on any server.
    pub fn assert_drained(&self) {
        assert!(self.coord.is_empty(), "server {}: live coordinated transactions at drain", self.id);
        assert!(self.part.is_empty(), "server {}: live participant records at drain", self.id);
        assert!(self.pending_reads.is_empty(), "server {}: pending reads at drain", self.id);
        assert!(self.parked_reads.is_empty(), "server {}: parked reads at drain", self.id);
        assert!(self.pending_begin.is_empty(), "server {}: unanswered begins at drain", self.id);
    }

    fn alloc_op(&mut self) -> OpId {
        let op = OpId((u64::from(self.id.0) << 40) | self.next_op_seq);
        self.next_op_seq += 1;
        op
    }

    /// Charge `activity` to the CPU and schedule the continuation.
    fn enqueue_cpu(&mut self, ctx: &mut Ctx, activity: Activity, stage: Stage) {
        let done = self.cpu.enqueue(ctx.now, activity);
        ctx.emit(SimEvent {
            time: done,
            src: self.id,
            dst: self.id,
            kind: EventKind::CpuComplete { stage },
        });
    }

    /// Send a server-to-server message (or a delay-free self event when
    /// the destination is this server). `prepare_phase` routes the
    /// sampled delay into the prepare-delay report line.
    fn send_msg(
        &mut self,
        ctx: &mut Ctx,
        dst: ObjectId,
        size: f64,
        prepare_phase: bool,
        kind: EventKind,
    ) {
        if dst == self.id {
            ctx.emit(SimEvent { time: ctx.now, src: self.id, dst, kind });
            return;
        }
        let util = self.cpu.utilization_window(ctx.now);
        let delay = ctx.net.delay_for_send(
            &mut self.net_state,
            util,
            ctx.copies[dst.0 as usize],
            size,
            ctx.now,
            self.id,
            dst,
            &mut self.net_rng,
        );
        ctx.stats.note_send(ctx.now);
        if prepare_phase {
            ctx.stats.note_prepare_delay(delay);
        }
        ctx.emit(SimEvent { time: ctx.now + delay, src: self.id, dst, kind });
    }

    fn reply_client(
        &mut self,
        ctx: &mut Ctx,
        client: ObjectId,
        tx: Option<TxId>,
        script: u64,
        kind: ClientReplyKind,
    ) {
        ctx.emit(SimEvent {
            time: ctx.now,
            src: self.id,
            dst: client,
            kind: EventKind::ClientReply { tx, script, kind },
        });
    }

    pub fn handle(&mut self, ev: SimEvent, ctx: &mut Ctx) {
        match ev.kind {
            EventKind::Begin { client, script, attempt } => {
                self.pending_begin.insert((client, script), ev.time);
                self.enqueue_cpu(ctx, Activity::TxBegin, Stage::BeginDone { client, script, attempt });
            }
            EventKind::Get { tx, key } => {
                let c = self.coord.get(&tx).expect("get for an unknown transaction (model bug)");
                assert_eq!(c.phase, TxPhase::Active, "get for a non-active transaction (model bug)");
                self.enqueue_cpu(ctx, Activity::LocalTxGet, Stage::GetDone { tx, key });
            }
            EventKind::Put { tx, key } => {
                let c = self.coord.get(&tx).expect("put for an unknown transaction (model bug)");
                assert_eq!(c.phase, TxPhase::Active, "put for a non-active transaction (model bug)");
                self.enqueue_cpu(ctx, Activity::LocalTxPut, Stage::PutDone { tx, key });
            }
            EventKind::CommitRequest { tx } => {
                let c = self
                    .coord
                    .get_mut(&tx)
                    .expect("commit request for an unknown transaction (model bug)");
                assert_eq!(c.phase, TxPhase::Active, "commit request for a non-active transaction");
                c.phase = TxPhase::Preparing;
                self.enqueue_cpu(ctx, Activity::TxPrepare, Stage::CoordinatorPrepareDone { tx });
            }
            EventKind::CpuComplete { stage } => self.on_stage(stage, ctx),
            EventKind::RemoteGet { op, requester, tx_info, key } => {
                self.enqueue_cpu(
                    ctx,
                    Activity::LocalTxGetFromRemote,
                    Stage::RemoteGetDone { op, requester, tx_info, key },
                );
            }
            EventKind::ReadReply { op } => self.on_read_reply(op, ctx),
            EventKind::RemotePrepare { tx_info, coordinator, keys } => {
                self.enqueue_cpu(
                    ctx,
                    Activity::TxPrepare,
                    Stage::ParticipantPrepareDone { tx_info, coordinator, keys },
                );
            }
            EventKind::PrepareReply { tx, positive } => self.on_prepare_reply(tx, positive, ctx),
            EventKind::FinalCommit { tx_info, keys } => {
                self.enqueue_cpu(
                    ctx,
                    Activity::DistributedFinalTxCommit,
                    Stage::CommitApplied { tx_info, keys },
                );
            }
            EventKind::Abort { tx } => {
                self.enqueue_cpu(ctx, Activity::TxAbort, Stage::AbortApplied { tx });
            }
            EventKind::Timeout { tx } => {
                // Stale when the participant record is gone (outcome
                // already applied); the protocol additionally ignores
                // timers for transactions it no longer parks.
                if let Some(p) = self.part.get(&tx) {
                    let info = p.tx_info;
                    let inds = self.cc.invoke(CcInvocation::Timeout { tx: info });
                    self.dispatch(inds, ctx);
                }
            }
            EventKind::ClientReply { .. } | EventKind::Arrival => {
                panic!("client-bound event routed to server {} (model bug)", self.id)
            }
        }
    }

    fn on_stage(&mut self, stage: Stage, ctx: &mut Ctx) {
        match stage {
            Stage::BeginDone { client, script, attempt } => {
                let begin_time = self
                    .pending_begin
                    .remove(&(client, script))
                    .expect("begin completion without a pending begin (model bug)");
                let tx = TxId { coordinator: self.id, seq: self.next_tx_seq };
                self.next_tx_seq += 1;
                let timestamp = self.cc.stamp(tx, ctx.now);
                self.coord.insert(
                    tx,
                    CoordTx {
                        client,
                        script,
                        attempt,
                        begin_time,
                        timestamp,
                        read_set: BTreeSet::new(),
                        write_set: BTreeSet::new(),
                        phase: TxPhase::Active,
                        participants: Vec::new(),
                        votes_pending: 0,
                        finalized: false,
                    },
                );
                self.reply_client(ctx, client, Some(tx), script, ClientReplyKind::BeginAck);
            }
            Stage::GetDone { tx, key } => self.on_get_done(tx, key, ctx),
            Stage::SendRemoteGets { tx, key, owners } => {
                let c = self.coord.get(&tx).expect("remote-get fan-out for unknown transaction");
                let info = TxInfo { id: tx, timestamp: c.timestamp };
                let op = self.alloc_op();
                self.pending_reads
                    .insert(op, PendingRead { tx, key, remaining: owners.len(), replied: false });
                let size = ctx.net.costs.remote_get();
                for dst in owners {
                    self.send_msg(
                        ctx,
                        dst,
                        size,
                        false,
                        EventKind::RemoteGet { op, requester: self.id, tx_info: info, key },
                    );
                }
            }
            Stage::RemoteGetDone { op, requester, tx_info, key } => {
                self.parked_reads
                    .entry(tx_info.id)
                    .or_default()
                    .push_back(ParkedRead::Requester { op, requester });
                let inds = self.cc.invoke(CcInvocation::Read { tx: tx_info, key });
                self.dispatch(inds, ctx);
            }
            Stage::PutDone { tx, key } => {
                let c = self.coord.get_mut(&tx).expect("put completion for unknown transaction");
                // Upsert: a second put on the same key replaces the
                // buffered write, it does not grow the write set.
                c.write_set.insert(key);
                let (client, script) = (c.client, c.script);
                self.reply_client(ctx, client, Some(tx), script, ClientReplyKind::OpDone);
            }
            Stage::CoordinatorPrepareDone { tx } => self.on_coordinator_prepare_done(tx, ctx),
            Stage::ParticipantPrepareDone { tx_info, coordinator, keys } => {
                let local_keys = restrict_owned(ctx.placement, self.id, &keys);
                self.part.insert(
                    tx_info.id,
                    PartTx { tx_info, coordinator, local_keys: local_keys.clone(), voted: false },
                );
                let inds = self.cc.invoke(CcInvocation::Prepare { tx: tx_info, keys: &local_keys });
                self.dispatch(inds, ctx);
            }
            Stage::CommitApplied { tx_info, keys } => self.on_commit_applied(tx_info, keys, ctx),
            Stage::AbortApplied { tx } => self.on_abort_applied(tx, ctx),
        }
    }

    fn on_get_done(&mut self, tx: TxId, key: Key, ctx: &mut Ctx) {
        let c = self.coord.get(&tx).expect("get completion for unknown transaction");
        // Read-your-writes fast path: anything this transaction already
        // wrote or read is answered without protocol or network work.
        if c.write_set.contains(&key) || c.read_set.contains(&key) {
            let (client, script) = (c.client, c.script);
            self.reply_client(ctx, client, Some(tx), script, ClientReplyKind::OpDone);
            return;
        }
        if ctx.placement.is_owner(key, self.id) {
            let info = TxInfo { id: tx, timestamp: c.timestamp };
            self.parked_reads.entry(tx).or_default().push_back(ParkedRead::Client { key });
            let inds = self.cc.invoke(CcInvocation::Read { tx: info, key });
            self.dispatch(inds, ctx);
        } else {
            let owners = ctx.placement.owners(key);
            self.enqueue_cpu(
                ctx,
                Activity::TxSendRemoteTxGet,
                Stage::SendRemoteGets { tx, key, owners },
            );
        }
    }

    fn on_coordinator_prepare_done(&mut self, tx: TxId, ctx: &mut Ctx) {
        let c = self.coord.get_mut(&tx).expect("prepare completion for unknown transaction");
        if c.write_set.is_empty() {
            // Read-only: no participants, no second phase, never aborts.
            c.phase = TxPhase::Committed;
            let rec = TxRecord {
                tx,
                read_only: true,
                committed: true,
                attempt: c.attempt,
                begin_time: c.begin_time,
                end_time: ctx.now,
            };
            let (client, script) = (c.client, c.script);
            ctx.stats.record(rec);
            self.reply_client(ctx, client, Some(tx), script, ClientReplyKind::Committed);
            self.coord.remove(&tx);
            return;
        }
        let participants = participants_for(ctx.mode, ctx.placement, &c.write_set);
        let keys: Vec<Key> = c.write_set.iter().copied().collect();
        let info = TxInfo { id: tx, timestamp: c.timestamp };
        c.participants = participants.clone();
        c.votes_pending = participants.len();
        let size = ctx.net.costs.remote_prepare(keys.len());
        for p in participants {
            if p == self.id {
                // The coordinator's own participation pays its own
                // prepare CPU stage and votes via a self event.
                self.enqueue_cpu(
                    ctx,
                    Activity::TxPrepare,
                    Stage::ParticipantPrepareDone {
                        tx_info: info,
                        coordinator: self.id,
                        keys: keys.clone(),
                    },
                );
            } else {
                self.send_msg(
                    ctx,
                    p,
                    size,
                    true,
                    EventKind::RemotePrepare {
                        tx_info: info,
                        coordinator: self.id,
                        keys: keys.clone(),
                    },
                );
            }
        }
    }

    fn on_prepare_reply(&mut self, tx: TxId, positive: bool, ctx: &mut Ctx) {
        let c = self
            .coord
            .get_mut(&tx)
            .expect("prepare reply for an unknown pending operation (model bug)");
        assert!(c.votes_pending > 0, "more prepare replies than participants (model bug)");
        c.votes_pending -= 1;
        let decision = if c.phase == TxPhase::Preparing {
            if !positive {
                c.phase = TxPhase::Aborting;
                Some(false)
            } else if c.votes_pending == 0 {
                c.phase = TxPhase::Committing;
                Some(true)
            } else {
                None
            }
        } else {
            None // outcome already decided; this is a straggler
        };
        let all_in = c.votes_pending == 0;
        if let Some(commit) = decision {
            let participants = c.participants.clone();
            let keys: Vec<Key> = c.write_set.iter().copied().collect();
            let info = TxInfo { id: tx, timestamp: c.timestamp };
            let self_included = participants.contains(&self.id);
            for p in participants {
                let kind = if commit {
                    EventKind::FinalCommit { tx_info: info, keys: keys.clone() }
                } else {
                    EventKind::Abort { tx }
                };
                let size = if commit {
                    ctx.net.costs.final_commit(keys.len())
                } else {
                    ctx.net.costs.abort()
                };
                self.send_msg(ctx, p, size, false, kind);
            }
            if !self_included {
                // The coordinator always runs the outcome stage, even
                // when it holds no copy of the written data.
                let kind = if commit {
                    EventKind::FinalCommit { tx_info: info, keys }
                } else {
                    EventKind::Abort { tx }
                };
                ctx.emit(SimEvent { time: ctx.now, src: self.id, dst: self.id, kind });
            }
        }
        if all_in {
            self.try_retire(tx);
        }
    }

    fn on_commit_applied(&mut self, tx_info: TxInfo, keys: Vec<Key>, ctx: &mut Ctx) {
        let tx = tx_info.id;
        let local = restrict_owned(ctx.placement, self.id, &keys);
        let inds = self.cc.invoke(CcInvocation::Commit { tx: tx_info, keys: &local });
        self.dispatch(inds, ctx);
        let was_participant = self.part.remove(&tx).is_some();
        if was_participant
            && ctx.mode == ReplicationMode::Primary
            && ctx.placement.replication() > 1
        {
            // Relay the commit to replicas that were not part of the
            // vote: the non-primary owners of keys primaried here.
            // Participants and the coordinator already received (or
            // self-delivered) the decision.
            let primaries: BTreeSet<ObjectId> =
                keys.iter().map(|&k| ctx.placement.primary(k)).collect();
            let mut targets: BTreeSet<ObjectId> = BTreeSet::new();
            for &k in &keys {
                if ctx.placement.primary(k) == self.id {
                    for o in ctx.placement.owners(k) {
                        if o != self.id && o != tx.coordinator && !primaries.contains(&o) {
                            targets.insert(o);
                        }
                    }
                }
            }
            let size = ctx.net.costs.final_commit(keys.len());
            for t in targets {
                self.send_msg(
                    ctx,
                    t,
                    size,
                    false,
                    EventKind::FinalCommit { tx_info, keys: keys.clone() },
                );
            }
        }
        if tx.coordinator == self.id {
            self.finalize(tx, true, ctx);
        }
    }

    fn on_abort_applied(&mut self, tx: TxId, ctx: &mut Ctx) {
        let info = self
            .part
            .get(&tx)
            .map(|p| p.tx_info)
            .or_else(|| {
                self.coord.get(&tx).map(|c| TxInfo { id: tx, timestamp: c.timestamp })
            })
            .expect("abort for a transaction unknown at this server (model bug)");
        let local = self.part.get(&tx).map(|p| p.local_keys.clone()).unwrap_or_default();
        let inds = self.cc.invoke(CcInvocation::Abort { tx: info, keys: &local });
        // Dispatch before dropping the participant record: a participant
        // that was still waiting votes its (negative) straggler reply
        // here, and the voted flag suppresses duplicates.
        self.dispatch(inds, ctx);
        self.part.remove(&tx);
        if tx.coordinator == self.id {
            self.finalize(tx, false, ctx);
        }
    }

    /// Coordinator epilogue, run at most once per transaction: log the
    /// outcome and answer the client. The record is retired once the
    /// last straggler vote arrives.
    fn finalize(&mut self, tx: TxId, committed: bool, ctx: &mut Ctx) {
        let c = self
            .coord
            .get_mut(&tx)
            .expect("outcome finalization for unknown transaction (model bug)");
        if c.finalized {
            return;
        }
        c.finalized = true;
        c.phase = if committed { TxPhase::Committed } else { TxPhase::Aborted };
        let rec = TxRecord {
            tx,
            read_only: false,
            committed,
            attempt: c.attempt,
            begin_time: c.begin_time,
            end_time: ctx.now,
        };
        let (client, script) = (c.client, c.script);
        ctx.stats.record(rec);
        let kind = if committed { ClientReplyKind::Committed } else { ClientReplyKind::Aborted };
        self.reply_client(ctx, client, Some(tx), script, kind);
        self.try_retire(tx);
    }

    fn try_retire(&mut self, tx: TxId) {
        if let Some(c) = self.coord.get(&tx) {
            if c.finalized && c.votes_pending == 0 {
                self.coord.remove(&tx);
            }
        }
    }

    fn on_read_reply(&mut self, op: OpId, ctx: &mut Ctx) {
        let pr = self
            .pending_reads
            .get_mut(&op)
            .expect("read reply for an unknown pending operation (model bug)");
        pr.remaining -= 1;
        let first = !pr.replied;
        pr.replied = true;
        let (tx, key) = (pr.tx, pr.key);
        if pr.remaining == 0 {
            self.pending_reads.remove(&op);
        }
        if first {
            // The client is blocked on exactly this operation, so the
            // transaction must still be live.
            let c = self.coord.get_mut(&tx).expect("first read reply after transaction retired");
            c.read_set.insert(key);
            let (client, script) = (c.client, c.script);
            self.reply_client(ctx, client, Some(tx), script, ClientReplyKind::OpDone);
        }
    }

    /// Route protocol indications: reads back to their issuer, votes to
    /// the coordinator, timer requests into the event set.
    fn dispatch(&mut self, inds: Vec<CcIndication>, ctx: &mut Ctx) {
        for ind in inds {
            match ind {
                CcIndication::ReadDone { tx } => {
                    let queue = self
                        .parked_reads
                        .get_mut(&tx)
                        .expect("read indication without a parked read (model bug)");
                    let parked = queue.pop_front().expect("empty parked-read queue (model bug)");
                    if queue.is_empty() {
                        self.parked_reads.remove(&tx);
                    }
                    match parked {
                        ParkedRead::Client { key } => {
                            let c = self
                                .coord
                                .get_mut(&tx)
                                .expect("local read done for unknown transaction");
                            c.read_set.insert(key);
                            let (client, script) = (c.client, c.script);
                            self.reply_client(ctx, client, Some(tx), script, ClientReplyKind::OpDone);
                        }
                        ParkedRead::Requester { op, requester } => {
                            let size = ctx.net.costs.read_reply();
                            self.send_msg(ctx, requester, size, false, EventKind::ReadReply { op });
                        }
                    }
                }
                CcIndication::TxWait { .. } => {
                    // The transaction stays parked at this server; a
                    // later indication (grant, timeout, abort) resolves
                    // it.
                }
                CcIndication::TimeoutRequest { tx, delay } => {
                    ctx.emit(SimEvent {
                        time: ctx.now + delay,
                        src: self.id,
                        dst: self.id,
                        kind: EventKind::Timeout { tx },
                    });
                }
                CcIndication::PrepareDone { tx } => self.vote(tx, true, ctx),
                CcIndication::PrepareFail { tx } => self.vote(tx, false, ctx),
                CcIndication::CommitDone { .. } => {
                    // Internal completion; the write install is implicit
                    // (only metadata is modelled).
                }
            }
        }
    }

    /// Turn a prepare verdict into this participant's vote, at most
    /// once. Indications for transactions without a live participant
    /// record (e.g. releases on the coordinator's own instance) are
    /// deliberately ignored.
    fn vote(&mut self, tx: TxId, positive: bool, ctx: &mut Ctx) {
        let Some(p) = self.part.get_mut(&tx) else { return };
        if p.voted {
            return;
        }
        p.voted = true;
        let coordinator = p.coordinator;
        let size = ctx.net.costs.prepare_reply();
        self.send_msg(ctx, coordinator, size, true, EventKind::PrepareReply { tx, positive });
    }
}
