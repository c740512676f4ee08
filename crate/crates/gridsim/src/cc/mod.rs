//! Concurrency-control plugin boundary.
//!
//! Each cache server hosts one protocol instance behind [`CcProtocol`].
//! The server drives it with *invocations* (read / prepare / commit /
//! abort / timeout) and reacts to the *indications* it returns. The
//! protocol sees only transaction records and keys — never placement,
//! replication or messaging — so alternative algorithms drop in
//! without touching the server.
//!
//! Indications may concern transactions other than the invoking one:
//! releasing a lock row hands the grant to the next queued transaction,
//! and the server turns that into a vote message on its behalf.

mod lock;
mod rows;
mod timestamp;

pub use lock::LockCc;
pub use timestamp::TimestampCc;

use crate::types::{Key, ObjectId, SimTime, TxId, TxInfo, TxTimestamp};

/// Request from the server to the protocol.
#[derive(Clone, Copy, Debug)]
pub enum CcInvocation<'a> {
    /// A transactional read of `key` is about to be served locally.
    Read { tx: TxInfo, key: Key },
    /// Two-phase-commit prepare for the transaction's local write keys.
    Prepare { tx: TxInfo, keys: &'a [Key] },
    /// Global commit decision reached; release protocol state.
    Commit { tx: TxInfo, keys: &'a [Key] },
    /// Global abort decision reached; release protocol state.
    Abort { tx: TxInfo, keys: &'a [Key] },
    /// A deadlock-avoidance timer armed via
    /// [`CcIndication::TimeoutRequest`] has fired.
    Timeout { tx: TxInfo },
}

/// Response from the protocol to the server.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum CcIndication {
    /// The read may proceed with the currently committed value.
    ReadDone { tx: TxId },
    /// The transaction must wait; the server should not reply yet.
    TxWait { tx: TxId },
    /// Arm a timer for `tx` that fires as a `Timeout` invocation after
    /// `delay` seconds unless the wait resolves first.
    TimeoutRequest { tx: TxId, delay: f64 },
    /// Prepare succeeded here: vote yes on behalf of `tx`.
    PrepareDone { tx: TxId },
    /// Prepare failed here (conflict, stale timestamp, timeout or
    /// abort): vote no on behalf of `tx` if it has not voted yet.
    PrepareFail { tx: TxId },
    /// Commit applied; the server may install the writes.
    CommitDone { tx: TxId },
}

/// A pluggable concurrency-control protocol instance (one per server).
pub trait CcProtocol {
    /// Registry name, e.g. `"lock2pc"`.
    fn name(&self) -> &'static str;

    /// Transaction-setup hook: stamp ordering metadata onto a freshly
    /// begun transaction. Called exactly once, on the coordinating
    /// server's instance, with the current simulated time. Protocols
    /// that do not order transactions keep the zero default.
    fn stamp(&mut self, tx: TxId, _now: SimTime) -> TxTimestamp {
        TxTimestamp { counter: 0, node: tx.coordinator }
    }

    /// Handle one invocation, returning any number of indications.
    fn invoke(&mut self, invocation: CcInvocation<'_>) -> Vec<CcIndication>;
}

/// Constructor for per-server protocol instances. The argument is the
/// hosting server's id.
pub type CcFactory = Box<dyn Fn(ObjectId) -> Box<dyn CcProtocol>>;

/// Look up a built-in protocol by registry name.
///
/// * `"lock2pc"` — queued exclusive locks on write keys.
/// * `"ts2pc"` — timestamp guard over the last-committed-writer table,
///   then queued locks.
///
/// `deadlock_timeout` (seconds) is the wait bound the protocols attach
/// to their timer requests.
pub fn builtin_factory(name: &str, deadlock_timeout: f64) -> Option<CcFactory> {
    match name {
        "lock2pc" => Some(Box::new(move |_| Box::new(LockCc::new(deadlock_timeout)))),
        "ts2pc" => Some(Box::new(move |server| {
            Box::new(TimestampCc::new(server, deadlock_timeout))
        })),
        _ => None,
    }
}
