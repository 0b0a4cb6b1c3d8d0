//! Counter-based, path-addressed random streams.
//!
//! A stream is identified by a 64-bit seed plus a list of string labels.
//! The labels are folded into a 64-bit key; the `i`-th output of the stream
//! is the SplitMix64 finalizer applied to `key + (i + 1) * GOLDEN`. Nothing
//! depends on platform word size, endianness or floating-point mode, so a
//! given `(seed, path, call index)` produces the same bits everywhere.
//!
//! Key derivation: start from `fmix(seed ^ SEED_SALT)`, then for every label
//! fold in its FNV-1a hash and its byte length:
//! `key = fmix(key ^ fnv1a(label)) + len * GOLDEN`.

use crate::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x5851_F42D_4C95_7F2D;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

#[inline]
fn fmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// A deterministic random stream addressed by `(seed, path)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    path: Vec<String>,
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Root stream of a run.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
            key: fmix(seed ^ SEED_SALT),
            counter: 0,
        }
    }

    /// Independent substream one level below this one. The child does not
    /// depend on how many values the parent has already produced.
    pub fn child(&self, label: impl std::fmt::Display) -> Self {
        let label = label.to_string();
        let key = fmix(self.key ^ fnv1a(label.as_bytes()))
            .wrapping_add((label.len() as u64).wrapping_mul(GOLDEN));
        let mut path = self.path.clone();
        path.push(label);
        Self {
            seed: self.seed,
            path,
            key,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        fmix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform real in `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::Argument(format!("uniform: lo {lo} > hi {hi}")));
        }
        let u = self.next_f64();
        if lo == hi {
            return Ok(lo);
        }
        let v = lo + (hi - lo) * u;
        // lo + (hi - lo) * u can round up to hi
        Ok(if v >= hi { prev_down(hi).max(lo) } else { v })
    }

    /// Uniform integer in the closed range `[lo, hi]`, unbiased.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::Argument(format!("uniform_int: lo {lo} > hi {hi}")));
        }
        let span = (hi as i128 - lo as i128 + 1) as u128;
        Ok(lo + self.below_u128(span) as i64)
    }

    /// Uniform index in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.below_u128(n as u128) as usize
    }

    fn below_u128(&mut self, span: u128) -> u128 {
        if span > u64::MAX as u128 {
            return self.next_u64() as u128;
        }
        let span = span as u64;
        // rejection on the largest multiple of span
        let zone = u64::MAX - (u64::MAX % span + 1) % span;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % span) as u128;
            }
        }
    }

    /// `true` with probability `p` (one draw regardless of outcome).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller (two draws per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniformly random permutation of `0..n` (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::Argument("permutation of zero elements".into()));
        }
        let mut out: Vec<usize> = (0..n).collect();
        self.shuffle(&mut out);
        Ok(out)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn prev_down(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else if x < 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        -f64::from_bits(1)
    }
}
