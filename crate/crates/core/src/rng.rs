//! Counter-based Gaussian stream.
//!
//! Every Gaussian draw is a pure function of `(seed, stream, path, index)`:
//! a Philox4x32-10 block is computed from the counter
//! `[index / 2, stream, path_lo, path_hi]` under the key `seed`, its 128 output
//! bits give two 52-bit uniforms in `(0, 1)`, and each uniform is mapped to a
//! standard normal through the inverse CDF. No generator state is carried
//! between draws, so output is independent of evaluation order and thread count.

use statrs::function::erf::erfc_inv;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Identifies one independent Gaussian sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct SeedId {
    /// Experiment seed.
    pub seed: u64,
    /// Purpose tag (experiment kind, MLMC level, ...), keeps streams disjoint.
    pub stream: u32,
    /// Trajectory id.
    pub path: u64,
}

impl SeedId {
    pub const fn new(seed: u64, stream: u32, path: u64) -> Self {
        Self { seed, stream, path }
    }

    #[inline]
    fn block(&self, block: u64) -> [u32; 4] {
        assert!(block <= u64::from(u32::MAX), "gaussian stream exhausted");
        philox4x32_10(
            [
                block as u32,
                self.stream,
                self.path as u32,
                (self.path >> 32) as u32,
            ],
            [self.seed as u32, (self.seed >> 32) as u32],
        )
    }

    /// Standard normal draw number `index` of this stream.
    pub fn normal(&self, index: u64) -> f64 {
        let out = self.block(index / 2);
        let lane = (index % 2) as usize * 2;
        standard_normal_quantile(open_unit(out[lane], out[lane + 1]))
    }

    /// Fills `out` with draws `0..out.len()`.
    pub fn fill_normals(&self, out: &mut [f64]) {
        for (block, chunk) in out.chunks_mut(2).enumerate() {
            let bits = self.block(block as u64);
            chunk[0] = standard_normal_quantile(open_unit(bits[0], bits[1]));
            if let Some(second) = chunk.get_mut(1) {
                *second = standard_normal_quantile(open_unit(bits[2], bits[3]));
            }
        }
    }
}

/// 52 random bits mapped to the midpoint lattice of `(0, 1)`; never 0 or 1.
#[inline]
fn open_unit(hi: u32, lo: u32) -> f64 {
    let bits = ((u64::from(hi) << 32) | u64::from(lo)) >> 12;
    (bits as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// Inverse of the standard normal CDF.
#[inline]
pub fn standard_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
