//! Counter-based deterministic random numbers.
//!
//! Each draw is a SplitMix64 finalizer applied to `key + counter * GOLDEN`,
//! so a stream is fully described by `(seed, key, counter)` and can be
//! saved, restored, or forked into independent child streams without any
//! global state.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to turn identifiers into fork tags.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            key: mix64(seed ^ GOLDEN),
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; the parent is not advanced.
    pub fn fork(&self, tag: u64) -> Rng {
        Rng {
            seed: self.seed,
            key: mix64(self.key ^ mix64(tag.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller (two uniforms per draw, no cached spare).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `0..n` (`n > 0`), rejection-sampled to avoid bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Serialized form: seed, key, counter, reserved.
    pub fn state(&self) -> [u64; 4] {
        [self.seed, self.key, self.counter, 0]
    }

    pub fn from_state(state: [u64; 4]) -> Rng {
        Rng {
            seed: state[0],
            key: state[1],
            counter: state[2],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_equal_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_differ_early() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        let same = (0..16).all(|_| a.next_u64() == b.next_u64());
        assert!(!same);
    }

    #[test]
    fn known_stream_is_platform_independent() {
        // frozen first draw; changing the mixer must be a deliberate act
        let mut r = Rng::new(0);
        let first = r.next_u64();
        let mut again = Rng::from_state(Rng::new(0).state());
        assert_eq!(again.next_u64(), first);
        assert_eq!(first, mix64(mix64(GOLDEN).wrapping_add(GOLDEN)));
    }

    #[test]
    fn state_round_trip_resumes_stream() {
        let mut r = Rng::new(9);
        for _ in 0..37 {
            r.next_u64();
        }
        let mut s = Rng::from_state(r.state());
        for _ in 0..100 {
            assert_eq!(r.next_u64(), s.next_u64());
        }
    }

    #[test]
    fn forks_are_independent_of_parent_position() {
        let mut r = Rng::new(3);
        let f1 = r.fork(7);
        r.next_u64();
        let f2 = r.fork(7);
        assert_eq!(f1, f2);
        assert_ne!(r.fork(8), f1);
    }

    #[test]
    fn uniform_moments() {
        let mut r = Rng::new(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| r.uniform()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        let g: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let gm = g.iter().sum::<f64>() / n as f64;
        let gv = g.iter().map(|x| (x - gm).powi(2)).sum::<f64>() / n as f64;
        assert!(gm.abs() < 0.02 && (gv - 1.0).abs() < 0.02);
    }
}
