//! Counter-based random variates.
//!
//! Every variate is a pure function of `(master seed, replica, t, i, j, lane)`,
//! so the order in which weights or replicas are evaluated never changes the
//! numbers drawn. Mixing uses the SplitMix64 finalizer; the derivation below
//! is part of the reproducibility contract and must not change.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(state: u64, word: u64) -> u64 {
    mix64(state.wrapping_add(GOLDEN) ^ word)
}

/// Seed of replica `r`: `mix64(mix64(master) + φ ^ r)`.
/// Independent of how many replicas exist.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    absorb(mix64(master), replica)
}

/// Lanes at `t = 0` are reserved for initial conditions.
pub const INIT_STEP: u64 = 0;

/// Stream for one replica. Coordinates are 1-based bird labels `i`, `j`
/// and the step `t` whose weights are being drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    master: u64,
    replica: u64,
    key: u64,
}

impl RngStream {
    pub fn new(master: u64, replica: u64) -> Self {
        RngStream { master, replica, key: replica_seed(master, replica) }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn bits(&self, t: u64, i: u64, j: u64, lane: u64) -> u64 {
        let mut s = absorb(self.key, t);
        s = absorb(s, i);
        s = absorb(s, j);
        absorb(s, lane)
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&self, t: u64, i: u64, j: u64, lane: u64) -> f64 {
        (self.bits(t, i, j, lane) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
