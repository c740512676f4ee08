//! Network latency oracle: decides when a server-to-server message
//! arrives.
//!
//! Two families are supported: closed-form delay distributions
//! (constant, exponential, per-link constant) and a trained
//! [`tree::ModelTree`] queried with a feature vector assembled from
//! live simulated state — memory footprint, CPU utilization, message
//! size, and the sender's recent send rate. Client↔server hops are
//! modelled as delay-free (clients are collocated with their server),
//! so the oracle only prices server↔server messages.

pub mod tree;

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::types::{ObjectId, SimTime};
use tree::{ModelTree, N_FEATURES};

/// Byte-size model for the messages the servers exchange. Values are
/// not carried in events; sizes are computed from these constants.
#[derive(Clone, Copy, Debug)]
pub struct MessageCosts {
    pub header_bytes: f64,
    pub key_bytes: f64,
    pub value_bytes: f64,
}

impl Default for MessageCosts {
    fn default() -> Self {
        MessageCosts { header_bytes: 200.0, key_bytes: 16.0, value_bytes: 1024.0 }
    }
}

impl MessageCosts {
    /// Read request for one key.
    pub fn remote_get(&self) -> f64 {
        self.header_bytes + self.key_bytes
    }

    /// Read response carrying one value.
    pub fn read_reply(&self) -> f64 {
        self.header_bytes + self.value_bytes
    }

    /// Prepare carrying the write-set keys (keys only, no values).
    pub fn remote_prepare(&self, n_keys: usize) -> f64 {
        self.header_bytes + self.key_bytes * n_keys as f64
    }

    /// A participant's vote.
    pub fn prepare_reply(&self) -> f64 {
        self.header_bytes
    }

    /// Commit decision carrying the keys and values to install.
    pub fn final_commit(&self, n_keys: usize) -> f64 {
        self.header_bytes + (self.key_bytes + self.value_bytes) * n_keys as f64
    }

    /// Abort decision.
    pub fn abort(&self) -> f64 {
        self.header_bytes
    }
}

/// How the used-memory feature is derived, and for which endpoint.
#[derive(Clone, Copy, Debug)]
pub struct MemoryModel {
    /// Fixed per-node footprint, bytes.
    pub base_bytes: f64,
    /// Additional bytes per locally stored key copy.
    pub per_copy_bytes: f64,
    /// Feed the receiver's footprint instead of the sender's.
    pub use_receiver: bool,
}

impl Default for MemoryModel {
    fn default() -> Self {
        MemoryModel {
            base_bytes: 64.0 * 1024.0 * 1024.0,
            per_copy_bytes: 1200.0,
            use_receiver: false,
        }
    }
}

impl MemoryModel {
    pub fn used_memory(&self, copies: u64) -> f64 {
        self.base_bytes + self.per_copy_bytes * copies as f64
    }
}

/// The delay source.
pub enum NetOracle {
    /// Every message takes exactly `mean` seconds.
    Constant { mean: f64 },
    /// Exponentially distributed delay with the given mean.
    Exponential { mean: f64 },
    /// Constant per direction with per-link overrides, for scenario
    /// scripting (e.g. one slow replica). Keys are `(src, dst)` ids.
    PerLink { default: f64, overrides: BTreeMap<(u32, u32), f64> },
    /// A trained model tree; predictions are clamped to `floor`.
    Tree { tree: ModelTree, floor: f64 },
}

/// Per-sender network state: static copy count plus the decayed send
/// counter behind the msg_rate feature.
pub struct SenderNetState {
    /// Keys this server stores (its local copy count).
    pub copy_count: u64,
    /// Exponential decay rate of the send counter (ln 2 / half-life).
    lambda: f64,
    decayed_count: f64,
    last_send: SimTime,
    pub sends: u64,
    pub extrapolations: u64,
}

impl SenderNetState {
    pub fn new(copy_count: u64, ema_half_life: f64) -> Self {
        assert!(ema_half_life > 0.0);
        SenderNetState {
            copy_count,
            lambda: std::f64::consts::LN_2 / ema_half_life,
            decayed_count: 0.0,
            last_send: SimTime::ZERO,
            sends: 0,
            extrapolations: 0,
        }
    }

    /// Estimated sends/second over the trailing exponential window.
    /// A decayed event counter `N` satisfies `N → rate/λ` in steady
    /// state, so `rate ≈ N·λ`.
    pub fn send_rate(&self, now: SimTime) -> f64 {
        let dt = now - self.last_send;
        self.decayed_count * (-self.lambda * dt).exp() * self.lambda
    }

    fn note_send(&mut self, now: SimTime) {
        let dt = now - self.last_send;
        self.decayed_count = self.decayed_count * (-self.lambda * dt).exp() + 1.0;
        self.last_send = now;
        self.sends += 1;
    }
}

/// The assembled live feature vector (exposed for diagnostics).
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

/// Oracle plus the feature-assembly configuration.
pub struct NetModel {
    pub oracle: NetOracle,
    pub memory: MemoryModel,
    pub costs: MessageCosts,
}

impl NetModel {
    /// Features the tree oracle would see for this send.
    pub fn features(
        &self,
        sender: &SenderNetState,
        cpu_utilization: f64,
        receiver_copies: u64,
        message_size: f64,
        now: SimTime,
    ) -> FeatureVector {
        let copies = if self.memory.use_receiver { receiver_copies } else { sender.copy_count };
        FeatureVector([
            self.memory.used_memory(copies),
            cpu_utilization,
            message_size,
            sender.send_rate(now),
        ])
    }

    /// Delivery delay for one server-to-server message, in seconds.
    /// Updates the sender's send-rate window and extrapolation count.
    #[allow(clippy::too_many_arguments)]
    pub fn delay_for_send(
        &self,
        sender: &mut SenderNetState,
        cpu_utilization: f64,
        receiver_copies: u64,
        message_size: f64,
        now: SimTime,
        src: ObjectId,
        dst: ObjectId,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let delay = match &self.oracle {
            NetOracle::Constant { mean } => *mean,
            NetOracle::Exponential { mean } => {
                Exp::new(1.0 / mean).expect("positive mean delay").sample(rng)
            }
            NetOracle::PerLink { default, overrides } => {
                overrides.get(&(src.0, dst.0)).copied().unwrap_or(*default)
            }
            NetOracle::Tree { tree, floor } => {
                let x = self.features(sender, cpu_utilization, receiver_copies, message_size, now);
                let p = tree.predict(&x.0, *floor);
                if p.extrapolated {
                    sender.extrapolations += 1;
                }
                p.latency
            }
        };
        sender.note_send(now);
        delay
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use tree::TrainParams;

    fn model(oracle: NetOracle) -> NetModel {
        NetModel { oracle, memory: MemoryModel::default(), costs: MessageCosts::default() }
    }

    fn send(model: &NetModel, state: &mut SenderNetState, now: f64, rng: &mut ChaCha8Rng) -> f64 {
        model.delay_for_send(
            state,
            0.5,
            100,
            256.0,
            SimTime::from_secs(now),
            ObjectId(0),
            ObjectId(1),
            rng,
        )
    }

    #[test]
    fn constant_oracle_is_exact() {
        let m = model(NetOracle::Constant { mean: 1e-3 });
        let mut state = SenderNetState::new(10, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..100 {
            assert_eq!(send(&m, &mut state, i as f64 * 0.01, &mut rng), 1e-3);
        }
    }

    #[test]
    fn exponential_oracle_matches_mean_within_one_percent() {
        let m = model(NetOracle::Exponential { mean: 1e-3 });
        let mut state = SenderNetState::new(10, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let total: f64 = (0..n).map(|i| send(&m, &mut state, i as f64 * 1e-4, &mut rng)).sum();
        let mean = total / n as f64;
        assert!((mean - 1e-3).abs() < 1e-5, "sample mean {mean}");
    }

    #[test]
    fn per_link_overrides_take_precedence() {
        let overrides = BTreeMap::from([((0, 1), 5e-3), ((1, 0), 2e-3)]);
        let m = model(NetOracle::PerLink { default: 1e-3, overrides });
        let mut state = SenderNetState::new(10, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = SimTime::from_secs(0.0);
        let d01 = m.delay_for_send(&mut state, 0.0, 0, 1.0, t, ObjectId(0), ObjectId(1), &mut rng);
        let d10 = m.delay_for_send(&mut state, 0.0, 0, 1.0, t, ObjectId(1), ObjectId(0), &mut rng);
        let d12 = m.delay_for_send(&mut state, 0.0, 0, 1.0, t, ObjectId(1), ObjectId(2), &mut rng);
        assert_eq!((d01, d10, d12), (5e-3, 2e-3, 1e-3));
    }

    #[test]
    fn send_rate_converges_to_the_true_rate() {
        // 100 sends/second for 5 s (10 half-lives of 0.5 s) should
        // estimate ≈100/s.
        let mut state = SenderNetState::new(0, 0.5);
        let mut t = 0.0;
        while t < 5.0 {
            state.note_send(SimTime::from_secs(t));
            t += 0.01;
        }
        let rate = state.send_rate(SimTime::from_secs(5.0));
        assert!((rate - 100.0).abs() < 5.0, "estimated rate {rate}");
    }

    #[test]
    fn send_rate_decays_when_traffic_stops() {
        let mut state = SenderNetState::new(0, 0.5);
        for i in 0..100 {
            state.note_send(SimTime::from_secs(i as f64 * 0.01));
        }
        let busy = state.send_rate(SimTime::from_secs(1.0));
        let quiet = state.send_rate(SimTime::from_secs(10.0));
        assert!(quiet < busy / 1000.0, "rate must decay: {busy} → {quiet}");
    }

    #[test]
    fn memory_feature_switches_between_endpoints() {
        let mut m = model(NetOracle::Constant { mean: 1e-3 });
        let state = SenderNetState::new(100, 0.5);
        let now = SimTime::ZERO;
        let sender_view = m.features(&state, 0.0, 900, 64.0, now).0[0];
        m.memory.use_receiver = true;
        let receiver_view = m.features(&state, 0.0, 900, 64.0, now).0[0];
        assert_eq!(sender_view, m.memory.used_memory(100));
        assert_eq!(receiver_view, m.memory.used_memory(900));
        assert!(receiver_view > sender_view);
    }

    #[test]
    fn tree_oracle_counts_extrapolations_and_applies_floor() {
        // Train on sizes 100..1000 with a descending law (msg_rate
        // range covers 0 so a cold sender is in range), then query far
        // outside the size range.
        let rows: Vec<tree::KbRow> = (0..100)
            .map(|i| {
                let size = 100.0 + 9.0 * i as f64;
                let rate = (i % 21) as f64;
                ([1e6, 0.5, size, rate], (2e-3 - 1e-6 * size).max(1e-9))
            })
            .collect();
        let t = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        let mut m = model(NetOracle::Tree { tree: t, floor: 1e-6 });
        // Make the live memory feature land exactly on the trained
        // value: base 1e6 and no per-copy term.
        m.memory = MemoryModel { base_bytes: 1e6, per_copy_bytes: 0.0, use_receiver: false };
        let mut state = SenderNetState::new(0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = m.delay_for_send(
            &mut state,
            0.5,
            0,
            500.0,
            SimTime::ZERO,
            ObjectId(0),
            ObjectId(1),
            &mut rng,
        );
        assert!(d > 1e-6);
        assert_eq!(state.extrapolations, 0, "query inside the training box");
        // Huge size is outside the box and drives the descending law
        // under the floor.
        let d = m.delay_for_send(
            &mut state,
            0.5,
            0,
            1e7,
            SimTime::ZERO,
            ObjectId(0),
            ObjectId(1),
            &mut rng,
        );
        assert_eq!(d, 1e-6);
        assert_eq!(state.extrapolations, 1);
    }

    #[test]
    fn message_costs_follow_the_documented_shapes() {
        let c = MessageCosts::default();
        assert_eq!(c.remote_get(), 216.0);
        assert_eq!(c.read_reply(), 1224.0);
        assert_eq!(c.remote_prepare(3), 248.0);
        assert_eq!(c.prepare_reply(), 200.0);
        assert_eq!(c.final_commit(2), 200.0 + 2.0 * 1040.0);
        assert_eq!(c.abort(), 200.0);
    }
}
