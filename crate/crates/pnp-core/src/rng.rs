//! Counter-based deterministic random streams.
//!
//! Every random decision in the pipeline draws from a stream addressed by
//! `(root_seed, path)`, where the path is a list of integers naming the
//! decision site (question index, caption index, stage). Streams derived
//! from distinct paths are statistically independent, and a stream's output
//! depends only on its address and the draw counter, never on what other
//! streams consumed. That makes runs reproducible under any evaluation
//! order, including multi-threaded ones.

use alloc::vec::Vec;

const GAMMA: u64 = 0x9E3779B97F4A7C15;

/// SplitMix64 finalizer. Bijective on u64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A deterministic random stream addressed by `(root_seed, path)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<u64>,
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Root stream for a run: path is empty.
    pub fn new(root_seed: u64) -> Self {
        RngStream {
            root_seed,
            path: Vec::new(),
            key: mix64(root_seed ^ GAMMA),
            counter: 0,
        }
    }

    /// Derive the child stream at `index`. The child's draw counter starts
    /// at zero and its output is independent of the parent's position.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        RngStream {
            root_seed: self.root_seed,
            path,
            key: mix64(self.key ^ mix64(index.wrapping_add(GAMMA))),
            counter: 0,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// FNV-1a over the bytes of a name, for deriving stable stream addresses
/// from strings (tensor names, question ids).
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_stream() {
        let mut a = RngStream::new(7).child(3).child(1);
        let mut b = RngStream::new(7).child(3).child(1);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn sibling_streams_differ() {
        let root = RngStream::new(0);
        let mut a = root.child(0);
        let mut b = root.child(1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn child_independent_of_parent_position() {
        let mut parent = RngStream::new(42);
        let fresh_child_first = parent.child(5).next_u64();
        for _ in 0..100 {
            parent.next_u64();
        }
        let advanced_child_first = parent.child(5).next_u64();
        assert_eq!(fresh_child_first, advanced_child_first);
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = RngStream::new(1);
        let mut b = RngStream::new(2);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn path_records_derivation() {
        let s = RngStream::new(9).child(4).child(7);
        assert_eq!(s.path(), &[4, 7]);
        assert_eq!(s.root_seed(), 9);
    }

    #[test]
    fn unit_floats_in_range_with_expected_mean() {
        let mut s = RngStream::new(0).child(99);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = s.next_f64();
            assert!((0.0..1.0).contains(&x));
            sum += x;
        }
        let mean = sum / n as f64;
        // Monte Carlo bound: sd of the mean is 1/sqrt(12 n) ~ 2.9e-4,
        // so 2e-3 is a ~7 sigma envelope.
        assert!((mean - 0.5).abs() < 2e-3, "mean {mean}");
    }

    #[test]
    fn prefix_reuse_leaves_sibling_draws_unchanged() {
        // Draws under child i are untouched by how many draws happened
        // under child j. This is what makes per-question and per-caption
        // work order-independent.
        let base = RngStream::new(123);
        let mut lone = base.child(2);
        let lone_seq: Vec<u64> = (0..8).map(|_| lone.next_u64()).collect();

        let mut noisy_sibling = base.child(1);
        for _ in 0..1000 {
            noisy_sibling.next_u64();
        }
        let mut again = base.child(2);
        let again_seq: Vec<u64> = (0..8).map(|_| again.next_u64()).collect();
        assert_eq!(lone_seq, again_seq);
    }
}
