//! Counter-based random number generation.
//!
//! Every path (and every nested Monte-Carlo evaluation) owns a substream keyed by
//! `(seed, stream ids...)`. Jumping to a substream is O(1), so batches can be generated
//! in parallel in any order and still reproduce bit-identical output.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0x5851_F42D_4C95_7F2D;

/// SplitMix64 finaliser; full-avalanche mix of a 64-bit word.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based generator. Output `i` is a pure function of
/// `(key, i)`, which makes the stream reproducible independent of threading.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    ctr: u64,
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self::from_stream(seed, &[])
    }

    /// Substream keyed by `(seed, ids...)`. Distinct id tuples give statistically
    /// independent streams.
    pub fn from_stream(seed: u64, ids: &[u64]) -> Self {
        let mut key = mix64(seed ^ STREAM_SALT);
        for &id in ids {
            key = mix64(key.wrapping_add(GOLDEN) ^ mix64(id.wrapping_add(GOLDEN)));
        }
        Self {
            key,
            ctr: 0,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(1);
        mix64(self.key.wrapping_add(self.ctr.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in the open interval (0, 1); never returns 0 or 1,
    /// so it is safe under `ln`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box–Muller; the second draw of each pair is cached.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.next_normal();
        }
    }
}
