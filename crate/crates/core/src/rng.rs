//! Deterministic random streams.
//!
//! Two flavors:
//! - [`SplitMix64`], a sequential generator for one-shot jobs (spawn sampling).
//! - [`counter_hash`] / [`counter_unit`], stateless counter-based draws keyed
//!   by `(seed, stream, counter)`. Per-agent streams derived this way are
//!   independent of thread scheduling, which is what makes full-run traces
//!   reproducible under any thread count.

/// SplitMix64 step: advances the state and returns the mixed output.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Sequential SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform draw in [0, 1).
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit_f64() * (hi - lo)
    }

    pub fn range_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }
}

/// Stateless mix of `(seed, stream, counter)` into a u64.
#[inline]
pub fn counter_hash(seed: u64, stream: u64, counter: u64) -> u64 {
    let mut s = seed ^ stream.rotate_left(32) ^ 0xD1B54A32D192ED03u64.wrapping_mul(counter | 1);
    let a = splitmix64(&mut s);
    let mut s2 = a ^ counter;
    splitmix64(&mut s2)
}

/// Stateless uniform draw in [0, 1) keyed by `(seed, stream, counter)`.
#[inline]
pub fn counter_unit(seed: u64, stream: u64, counter: u64) -> f64 {
    (counter_hash(seed, stream, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
