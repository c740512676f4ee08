//! Client simulation objects.
//!
//! Each client is bound to one (collocated) cache server and exchanges
//! delay-free request/reply events with it. A closed-loop client keeps
//! at most one script in flight: think, begin, issue the ops one by
//! one, commit, repeat. An open-loop client starts scripts on a Poisson
//! arrival process regardless of completions. Aborted scripts are
//! retried as fresh transactions with the same keys (configurable:
//! disabled, or redrawn keys).

use std::collections::BTreeMap;
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::event::{ClientReplyKind, EventKind, SimEvent};
use crate::sim::Ctx;
use crate::types::{ObjectId, SimTime, TxId};
use crate::workload::{Script, ScriptGen, ScriptOp, SystemMode};

/// One script execution in flight.
struct ScriptRun {
    script: Script,
    next_op: usize,
    attempt: u32,
    tx: Option<TxId>,
}

pub struct Client {
    id: ObjectId,
    server: ObjectId,
    gen: Rc<ScriptGen>,
    rng: ChaCha8Rng,
    /// Private position in the shared trace (each client replays it
    /// from the top, once).
    cursor: usize,
    next_script: u64,
    runs: BTreeMap<u64, ScriptRun>,
    started: u64,
    completed: u64,
}

impl Client {
    pub fn new(id: ObjectId, server: ObjectId, gen: Rc<ScriptGen>, rng: ChaCha8Rng) -> Self {
        Client {
            id,
            server,
            gen,
            rng,
            cursor: 0,
            next_script: 0,
            runs: BTreeMap::new(),
            started: 0,
            completed: 0,
        }
    }

    pub fn id(&self) -> ObjectId {
        self.id
    }

    pub fn scripts_started(&self) -> u64 {
        self.started
    }

    pub fn scripts_completed(&self) -> u64 {
        self.completed
    }

    /// Scripts currently in flight (≤ 1 in closed mode).
    pub fn in_flight(&self) -> usize {
        self.runs.len()
    }

    pub fn assert_drained(&self) {
        assert!(self.runs.is_empty(), "client {}: scripts in flight at drain", self.id);
    }

    /// Schedule this client's first activity. Closed clients think and
    /// then begin; open clients arm their first arrival tick.
    pub fn init(&mut self, ctx: &mut Ctx) {
        match self.gen.spec().system {
            SystemMode::Closed { think_time } => {
                let delay = think_time.draw(&mut self.rng);
                self.start_script(ctx.now + delay, ctx);
            }
            SystemMode::Open { arrival_rate } => {
                let gap = Exp::new(arrival_rate).expect("positive arrival rate").sample(&mut self.rng);
                self.arm_arrival(ctx.now + gap, ctx);
            }
        }
    }

    fn arm_arrival(&mut self, at: SimTime, ctx: &mut Ctx) {
        ctx.emit(SimEvent { time: at, src: self.id, dst: self.id, kind: EventKind::Arrival });
    }

    /// Draw the next script (if any) and schedule its begin at `at`.
    fn start_script(&mut self, at: SimTime, ctx: &mut Ctx) {
        let Some(script) = self.gen.next_script(&mut self.cursor, &mut self.rng) else {
            return; // trace exhausted: the client goes idle
        };
        let id = self.next_script;
        self.next_script += 1;
        self.started += 1;
        self.runs.insert(id, ScriptRun { script, next_op: 0, attempt: 1, tx: None });
        ctx.emit(SimEvent {
            time: at,
            src: self.id,
            dst: self.server,
            kind: EventKind::Begin { client: self.id, script: id, attempt: 1 },
        });
    }

    fn issue_op(&mut self, script: u64, ctx: &mut Ctx) {
        let run = &self.runs[&script];
        let tx = run.tx.expect("issuing an op before the begin ack (model bug)");
        let kind = match run.script.ops[run.next_op] {
            ScriptOp::Get(key) => EventKind::Get { tx, key },
            ScriptOp::Put(key) => EventKind::Put { tx, key },
        };
        ctx.emit(SimEvent { time: ctx.now, src: self.id, dst: self.server, kind });
    }

    /// A script reached a terminal outcome; in closed mode line up the
    /// next one after a think time.
    fn script_finished(&mut self, script: u64, ctx: &mut Ctx) {
        self.runs.remove(&script);
        self.completed += 1;
        if let SystemMode::Closed { think_time } = self.gen.spec().system {
            let delay = think_time.draw(&mut self.rng);
            self.start_script(ctx.now + delay, ctx);
        }
    }

    /// Re-run the aborted script as a brand-new transaction, with zero
    /// backoff. The keys are replayed verbatim unless redraw-on-retry
    /// is set (and the workload is distributional).
    fn retry(&mut self, script: u64, ctx: &mut Ctx) {
        let spec = self.gen.spec().clone();
        let run = self.runs.get_mut(&script).expect("retry of an unknown script (model bug)");
        if spec.redraw_on_retry {
            if let Some(fresh) = self.gen.next_script(&mut self.cursor, &mut self.rng) {
                run.script = fresh;
            }
        }
        run.next_op = 0;
        run.tx = None;
        run.attempt += 1;
        let attempt = run.attempt;
        ctx.emit(SimEvent {
            time: ctx.now,
            src: self.id,
            dst: self.server,
            kind: EventKind::Begin { client: self.id, script, attempt },
        });
    }

    pub fn handle(&mut self, ev: SimEvent, ctx: &mut Ctx) {
        match ev.kind {
            EventKind::Arrival => {
                self.start_script(ctx.now, ctx);
                let SystemMode::Open { arrival_rate } = self.gen.spec().system else {
                    panic!("arrival tick on a closed-loop client (model bug)");
                };
                let gap =
                    Exp::new(arrival_rate).expect("positive arrival rate").sample(&mut self.rng);
                self.arm_arrival(ctx.now + gap, ctx);
            }
            EventKind::ClientReply { tx, script, kind } => {
                match kind {
                    ClientReplyKind::BeginAck => {
                        let run = self
                            .runs
                            .get_mut(&script)
                            .expect("begin ack for an unknown script (model bug)");
                        run.tx = Some(tx.expect("begin ack without a transaction id"));
                        self.issue_op(script, ctx);
                    }
                    ClientReplyKind::OpDone => {
                        let run = self
                            .runs
                            .get_mut(&script)
                            .expect("op reply for an unknown script (model bug)");
                        run.next_op += 1;
                        if run.next_op < run.script.ops.len() {
                            self.issue_op(script, ctx);
                        } else {
                            let tx = run.tx.expect("commit without a transaction id");
                            ctx.emit(SimEvent {
                                time: ctx.now,
                                src: self.id,
                                dst: self.server,
                                kind: EventKind::CommitRequest { tx },
                            });
                        }
                    }
                    ClientReplyKind::Committed => self.script_finished(script, ctx),
                    ClientReplyKind::Aborted => {
                        if self.gen.spec().retry_aborted {
                            self.retry(script, ctx);
                        } else {
                            self.script_finished(script, ctx);
                        }
                    }
                }
            }
            _ => panic!("server-bound event routed to client {} (model bug)", self.id),
        }
    }
}

/// Draw an exponential inter-arrival gap — shared by tests.
#[cfg(test)]
pub(crate) fn poisson_gap(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    Exp::new(rate).expect("positive arrival rate").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn poisson_gaps_have_the_right_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let total: f64 = (0..n).map(|_| poisson_gap(50.0, &mut rng)).sum();
        let mean = total / n as f64;
        assert!((mean - 0.02).abs() < 2e-4, "mean gap {mean}");
    }
}
