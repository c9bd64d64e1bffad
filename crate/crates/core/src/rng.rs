//! Deterministic random stream for instance generation.
//!
//! The generator is pinned so that corpora reproduce bit-for-bit on every
//! platform and toolchain: SplitMix64 drives the integer stream, uniforms
//! take the top 53 bits, and pseudo-normals are the classic sum of twelve
//! uniforms minus six. The normal approximation deliberately avoids `ln`
//! and `cos`, whose libm implementations differ across platforms.

/// SplitMix64 (Steele, Lea, Flood 2014): 64-bit state, full period.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Pseudo standard normal: sum of 12 uniforms minus 6 (mean 0,
    /// variance 1, support [-6, 6]). Addition only, so the stream is
    /// platform-independent.
    pub fn normal(&mut self) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += self.uniform();
        }
        acc - 6.0
    }
}
