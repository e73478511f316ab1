//! Counter-based splittable random numbers.
//!
//! Every draw is a pure function of a key tuple (seed, path, step, mode,
//! counter), so path-parallel execution is order-independent and
//! bit-reproducible regardless of scheduling.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    splitmix(state.wrapping_add(GOLDEN).wrapping_add(word))
}

/// Derive a 64-bit key from the tuple identifying one random draw site.
#[inline]
pub fn key(seed: u64, path: u64, step: u64, mode: u64) -> u64 {
    let mut s = splitmix(seed ^ 0xA0761D6478BD642F);
    s = absorb(s, path);
    s = absorb(s, step);
    s = absorb(s, mode);
    s
}

/// i-th uniform u64 under a fixed key.
#[inline]
pub fn uniform_u64(key: u64, i: u64) -> u64 {
    splitmix(key.wrapping_add(i.wrapping_mul(GOLDEN)).wrapping_add(GOLDEN))
}

/// i-th uniform in (0, 1) under a fixed key (53-bit mantissa, never 0).
#[inline]
pub fn uniform_f64(key: u64, i: u64) -> f64 {
    const DEN: f64 = (1u64 << 53) as f64;
    (((uniform_u64(key, i) >> 11) as f64) + 0.5) / DEN
}

/// Standard normal draw at (key, i) via Box-Muller on counters 2i, 2i+1.
#[inline]
pub fn standard_normal(key: u64, i: u64) -> f64 {
    let u1 = uniform_f64(key, 2 * i);
    let u2 = uniform_f64(key, 2 * i + 1);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Sequential convenience stream over the same generator, for sampling
/// loops that do not need counter addressing (ellipticity probes, test
/// fields, random initial data).
#[derive(Clone, Debug)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, tag: u64) -> Self {
        Stream { key: key(seed, tag, 0, 0), counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = uniform_u64(self.key, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in (0, 1).
    pub fn next_f64(&mut self) -> f64 {
        let v = uniform_f64(self.key, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Log-uniform in [lo, hi), lo > 0.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (self.uniform(lo.ln(), hi.ln())).exp()
    }

    pub fn normal(&mut self) -> f64 {
        let z = standard_normal(self.key, self.counter);
        self.counter += 1;
        z
    }
}
