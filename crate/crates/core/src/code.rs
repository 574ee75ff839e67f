use std::fmt;

use crate::error::{Error, Result};
use crate::net::Real;

/// A B-bit binary code with entries in {-1, +1}, packed into a `u64`
/// (bit j set means entry j is +1).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashCode {
    bits: u64,
    len: u8,
}

impl HashCode {
    pub const MAX_BITS: usize = 64;

    /// Sign quantization: -1 where `z_j < 0`, +1 otherwise (zero maps to +1).
    pub fn quantize<T: Real>(z: &[T]) -> Self {
        assert!(z.len() <= Self::MAX_BITS, "at most 64 bits");
        let bits = z
            .iter()
            .enumerate()
            .filter(|(_, v)| !(**v < T::zero()))
            .fold(0u64, |acc, (j, _)| acc | (1 << j));
        HashCode {
            bits,
            len: z.len() as u8,
        }
    }

    pub fn from_bits(bits: u64, len: usize) -> Result<Self> {
        if len == 0 || len > Self::MAX_BITS {
            return Err(Error::format("hash code", format!("length {len} outside 1..=64")));
        }
        if len < 64 && bits >> len != 0 {
            return Err(Error::format("hash code", "bits set beyond the code length"));
        }
        Ok(HashCode {
            bits,
            len: len as u8,
        })
    }

    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::format("hash code", "entries must be -1 or +1"));
        }
        let code = HashCode::quantize(&signs.iter().map(|&s| s as f64).collect::<Vec<_>>());
        HashCode::from_bits(code.bits, signs.len())
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Entry `j` as -1 or +1.
    pub fn sign(&self, j: usize) -> i8 {
        assert!(j < self.len(), "bit index out of range");
        if self.bits >> j & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn signs(&self) -> Vec<i8> {
        (0..self.len()).map(|j| self.sign(j)).collect()
    }

    pub fn flipped(&self, j: usize) -> Self {
        assert!(j < self.len(), "bit index out of range");
        HashCode {
            bits: self.bits ^ (1 << j),
            len: self.len,
        }
    }

    pub fn hamming(&self, other: &HashCode) -> u32 {
        debug_assert_eq!(self.len, other.len);
        (self.bits ^ other.bits).count_ones()
    }
}

impl fmt::Debug for HashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashCode({self})")
    }
}

/// Entry 0 first, `+` for +1 and `-` for -1.
impl fmt::Display for HashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len() {
            f.write_str(if self.sign(j) > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}
