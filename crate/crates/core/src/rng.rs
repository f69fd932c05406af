//! Counter-based Gaussian streams.
//!
//! Every variate is a pure function of `(master_seed, stream_id, index)`:
//! a Philox-4x32-10 block is keyed by the master seed, the counter carries
//! the block index and the stream id, and the two 64-bit halves of each
//! block are turned into a pair of standard normals by Box-Muller. Paths
//! therefore draw identical noise no matter how they are scheduled.

use std::f64::consts::FRAC_PI_2;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox-4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Four independent Philox-4x32-10 blocks sharing one key. `ctr[w][l]` is
/// word `w` of block `l`.
#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn philox_x4(ctr: [[u32; 4]; 4], key: [u32; 2]) -> [[u32; 4]; 4] {
    use std::arch::x86_64::*;
    // SAFETY: SSE2 is part of the x86_64 baseline; loads and stores are unaligned.
    unsafe {
        let load = |w: &[u32; 4]| _mm_loadu_si128(w.as_ptr().cast());
        let (mut c0, mut c1, mut c2, mut c3) =
            (load(&ctr[0]), load(&ctr[1]), load(&ctr[2]), load(&ctr[3]));
        let m0 = _mm_set1_epi32(PHILOX_M0 as i32);
        let m1 = _mm_set1_epi32(PHILOX_M1 as i32);
        // (hi, lo) halves of the lane-wise 32x32 -> 64 bit products
        let mulhilo = |a: __m128i, m: __m128i| {
            let even = _mm_mul_epu32(a, m);
            let odd = _mm_mul_epu32(_mm_srli_epi64::<32>(a), m);
            let lo = _mm_unpacklo_epi32(
                _mm_shuffle_epi32::<0b00_00_10_00>(even),
                _mm_shuffle_epi32::<0b00_00_10_00>(odd),
            );
            let hi = _mm_unpacklo_epi32(
                _mm_shuffle_epi32::<0b00_00_11_01>(even),
                _mm_shuffle_epi32::<0b00_00_11_01>(odd),
            );
            (hi, lo)
        };
        let (mut k0, mut k1) = (key[0], key[1]);
        for round in 0..10 {
            if round > 0 {
                k0 = k0.wrapping_add(PHILOX_W0);
                k1 = k1.wrapping_add(PHILOX_W1);
            }
            let (hi0, lo0) = mulhilo(c0, m0);
            let (hi1, lo1) = mulhilo(c2, m1);
            c0 = _mm_xor_si128(_mm_xor_si128(hi1, c1), _mm_set1_epi32(k0 as i32));
            c1 = lo1;
            c2 = _mm_xor_si128(_mm_xor_si128(hi0, c3), _mm_set1_epi32(k1 as i32));
            c3 = lo0;
        }
        let mut out = [[0u32; 4]; 4];
        for (w, v) in out.iter_mut().zip([c0, c1, c2, c3]) {
            _mm_storeu_si128(w.as_mut_ptr().cast(), v);
        }
        out
    }
}

#[cfg(not(target_arch = "x86_64"))]
#[inline(always)]
fn philox_x4(ctr: [[u32; 4]; 4], key: [u32; 2]) -> [[u32; 4]; 4] {
    let mut out = [[0u32; 4]; 4];
    for l in 0..4 {
        let block = philox4x32_10([ctr[0][l], ctr[1][l], ctr[2][l], ctr[3][l]], key);
        for w in 0..4 {
            out[w][l] = block[w];
        }
    }
    out
}

/// Maps 64 random bits to a uniform in the open interval (0, 1).
#[inline(always)]
fn open_unit(bits: u64) -> f64 {
    // below 2^53, so the signed conversion is exact and cheaper
    (((bits >> 11) as i64) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// A deterministic stream of standard normal variates.
#[derive(Debug, Clone)]
pub struct RandomStream {
    master_seed: u64,
    stream_id: u64,
    counter: u64,
    cached_group: u64,
    cached: [f64; GROUP_NORMALS],
}

/// Blocks generated together, four at a time in SIMD lanes.
const GROUP_BLOCKS: u64 = 8;
const GROUP_NORMALS: usize = 2 * GROUP_BLOCKS as usize;

/// Creates the stream `(master_seed, stream_id)` positioned at its first variate.
pub fn make_stream(master_seed: u64, stream_id: u64) -> RandomStream {
    RandomStream::new(master_seed, stream_id)
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut s = Self {
            master_seed,
            stream_id,
            counter: 0,
            cached_group: 0,
            cached: [0.0; GROUP_NORMALS],
        };
        s.cached = s.group(0);
        s
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Index of the next variate to be drawn.
    pub fn position(&self) -> u64 {
        self.counter
    }

    pub fn seek(&mut self, position: u64) {
        self.counter = position;
    }

    #[inline(always)]
    fn raw_block(&self, block: u64) -> [u32; 4] {
        philox4x32_10(
            [
                block as u32,
                (block >> 32) as u32,
                self.stream_id as u32,
                (self.stream_id >> 32) as u32,
            ],
            [self.master_seed as u32, (self.master_seed >> 32) as u32],
        )
    }

    #[inline(always)]
    fn box_muller(out: [u32; 4]) -> [f64; 2] {
        let u1 = open_unit(((out[0] as u64) << 32) | out[1] as u64);
        let bits2 = ((out[2] as u64) << 32) | out[3] as u64;
        let u2 = open_unit(bits2);
        let radius = (-2.0 * libm::log(u1)).sqrt();
        // angle 2 pi u2 = quadrant * pi/2 + phi with |phi| <= pi/4; 4 u2 is
        // (m + 1/2) 2^-51 with m = bits >> 11, never a tie, so it rounds to
        // (m + 2^50) >> 51
        let quarters = 4.0 * u2;
        let q = ((bits2 >> 11) + (1 << 50)) >> 51;
        let (s, c) = libm::sincos((quarters - q as f64) * FRAC_PI_2);
        let q = (q & 3) as usize;
        let sin = [s, c, -s, -c][q];
        let cos = [c, -s, -c, s][q];
        [radius * cos, radius * sin]
    }

    fn block(&self, block: u64) -> [f64; 2] {
        Self::box_muller(self.raw_block(block))
    }

    fn group(&self, group: u64) -> [f64; GROUP_NORMALS] {
        let key = [self.master_seed as u32, (self.master_seed >> 32) as u32];
        let sid = [self.stream_id as u32; 4];
        let sid_hi = [(self.stream_id >> 32) as u32; 4];
        let mut out = [0.0; GROUP_NORMALS];
        for (quad, chunk) in out.chunks_exact_mut(8).enumerate() {
            let first = group * GROUP_BLOCKS + 4 * quad as u64;
            let lo = std::array::from_fn(|b| (first + b as u64) as u32);
            let hi = std::array::from_fn(|b| ((first + b as u64) >> 32) as u32);
            let [w0, w1, w2, w3] = philox_x4([lo, hi, sid, sid_hi], key);
            for (b, pair) in chunk.chunks_exact_mut(2).enumerate() {
                pair.copy_from_slice(&Self::box_muller([w0[b], w1[b], w2[b], w3[b]]));
            }
        }
        out
    }

    /// The `index`-th standard normal of this stream, without moving the cursor.
    pub fn normal_at(&self, index: u64) -> f64 {
        self.block(index / 2)[(index % 2) as usize]
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let group = self.counter / GROUP_NORMALS as u64;
        if group != self.cached_group {
            self.cached = self.group(group);
            self.cached_group = group;
        }
        let z = self.cached[(self.counter % GROUP_NORMALS as u64) as usize];
        self.counter += 1;
        z
    }

    pub fn fill_normals(&mut self, out: &mut [f64]) {
        let mut rest = out;
        while !rest.is_empty() {
            let group = self.counter / GROUP_NORMALS as u64;
            if group != self.cached_group {
                self.cached = self.group(group);
                self.cached_group = group;
            }
            let offset = (self.counter % GROUP_NORMALS as u64) as usize;
            let take = (GROUP_NORMALS - offset).min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            head.copy_from_slice(&self.cached[offset..offset + take]);
            self.counter += take as u64;
            rest = tail;
        }
    }
}

/// `n` independent N(0, dt) increments drawn from `stream`.
pub fn wiener_increments(stream: &mut RandomStream, n: usize, dt: f64) -> Vec<f64> {
    assert!(dt > 0.0, "wiener_increments requires dt > 0");
    let sd = dt.sqrt();
    (0..n).map(|_| sd * stream.next_normal()).collect()
}
