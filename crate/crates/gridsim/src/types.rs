//! Core identifier and time types shared across the simulator.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// Simulated time in seconds. Monotone over a run; never NaN.
#[derive(Clone, Copy, PartialEq, PartialOrd, Default, Debug)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn from_secs(secs: f64) -> Self {
        debug_assert!(secs.is_finite(), "non-finite simulation time");
        SimTime(secs)
    }

    pub fn as_secs(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, secs: f64) -> SimTime {
        SimTime(self.0 + secs)
    }
}

impl AddAssign<f64> for SimTime {
    fn add_assign(&mut self, secs: f64) {
        self.0 += secs;
    }
}

impl Sub<SimTime> for SimTime {
    type Output = f64;
    fn sub(self, other: SimTime) -> f64 {
        self.0 - other.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

/// Identifier of a simulation object (cache server or client).
///
/// Servers occupy ids `0..n`, clients follow at `n..n+m`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A data object key. Keys are dense integers `0..dataset_size`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Key(pub u64);

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Globally unique transaction identifier: coordinating server plus a
/// local sequence number assigned at begin time.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TxId {
    pub coordinator: ObjectId,
    pub seq: u64,
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.coordinator.0, self.seq)
    }
}

/// Per-server identifier for a pending read operation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OpId(pub u64);

/// Transaction timestamp: (logical counter, coordinator id) compared
/// lexicographically. Assigned by the protocol setup hook; protocols
/// that do not order transactions simply ignore it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TxTimestamp {
    pub counter: u64,
    pub node: ObjectId,
}

/// Cross-server transaction record. Snapshot-copied onto every event
/// that crosses cache servers; the concurrency control layer sees only
/// this record (plus keys), never the distribution scheme.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct TxInfo {
    pub id: TxId,
    pub timestamp: TxTimestamp,
}

/// 64-bit mixing finalizer (splitmix64). Used for ring-point hashing,
/// key scattering and trace fingerprints; fixed for reproducibility.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
