//! Packed bit sequences.
//!
//! Bits are stored LSB-first inside `u64` words; bits past `len` in the last
//! word are always zero. The packing is internal: every external byte format
//! goes through [`BitBlock::to_bytes`] / [`BitBlock::from_bytes`], which are
//! MSB-first.

use std::fmt;
use std::ops::{BitXor, BitXorAssign, Range};

use rand::Rng;

use crate::error::{invalid, Result};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitBlock {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitBlock {
    pub fn zeros(len: usize) -> Self {
        BitBlock {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = BitBlock {
            words: vec![u64::MAX; words_for(len)],
            len,
        };
        b.clear_tail();
        b
    }

    /// Builds a block from 0/1 bytes; any nonzero byte is a one.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut b = Self::zeros(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            if v != 0 {
                b.set(i, true);
            }
        }
        b
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in iter {
            if len % 64 == 0 {
                words.push(0);
            }
            if bit {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        BitBlock { words, len }
    }

    /// Wraps raw LSB-first words. Bits beyond `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(words_for(len), 0);
        let mut b = BitBlock { words, len };
        b.clear_tail();
        b
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let words = (0..words_for(len)).map(|_| rng.gen::<u64>()).collect();
        let mut b = BitBlock { words, len };
        b.clear_tail();
        b
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| (self.words[i / 64] >> (i % 64)) & 1 == 1)
    }

    /// Bits as 0/1 bytes.
    pub fn to_bits(&self) -> Vec<u8> {
        self.iter().map(u8::from).collect()
    }

    /// Copies `range` into a new block.
    pub fn slice(&self, range: Range<usize>) -> BitBlock {
        assert!(range.start <= range.end && range.end <= self.len);
        let len = range.end - range.start;
        let mut out = BitBlock::zeros(len);
        if range.start.is_multiple_of(64) {
            let w0 = range.start / 64;
            let nw = words_for(len);
            out.words.copy_from_slice(&self.words[w0..w0 + nw]);
            out.clear_tail();
        } else {
            for i in 0..len {
                if self.get(range.start + i) {
                    out.set(i, true);
                }
            }
        }
        out
    }

    /// Overwrites bits `[at, at + src.len())` with `src`.
    pub fn copy_from(&mut self, at: usize, src: &BitBlock) {
        assert!(at + src.len <= self.len);
        if at.is_multiple_of(64) && (src.len.is_multiple_of(64) || at + src.len == self.len) {
            let w0 = at / 64;
            self.words[w0..w0 + src.words.len()].copy_from_slice(&src.words);
        } else {
            for i in 0..src.len {
                self.set(at + i, src.get(i));
            }
        }
    }

    /// Splits into `m` equal sub-blocks.
    pub fn split(&self, m: usize) -> Result<Vec<BitBlock>> {
        if m == 0 || !self.len.is_multiple_of(m) {
            return invalid(format!("{m} sub-blocks do not divide length {}", self.len));
        }
        let sub = self.len / m;
        Ok((0..m).map(|i| self.slice(i * sub..(i + 1) * sub)).collect())
    }

    pub fn concat(parts: &[BitBlock]) -> BitBlock {
        let len = parts.iter().map(|p| p.len).sum();
        let mut out = BitBlock::zeros(len);
        let mut at = 0;
        for p in parts {
            out.copy_from(at, p);
            at += p.len;
        }
        out
    }

    pub fn xor(&self, other: &BitBlock) -> Result<BitBlock> {
        if self.len != other.len {
            return invalid(format!("xor of lengths {} and {}", self.len, other.len));
        }
        Ok(self ^ other)
    }

    /// Number of positions where the blocks differ.
    pub fn hamming_distance(&self, other: &BitBlock) -> usize {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// MSB-first byte serialization: bit 0 is the most significant bit of
    /// byte 0. The final byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(nbytes + 8);
        for &w in &self.words {
            for b in 0..8 {
                out.push(((w >> (8 * b)) as u8).reverse_bits());
            }
        }
        out.truncate(nbytes);
        out
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<BitBlock> {
        if bytes.len() != len.div_ceil(8) {
            return invalid(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            ));
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, &byte) in bytes.iter().enumerate() {
            words[i / 8] |= u64::from(byte.reverse_bits()) << (8 * (i % 8));
        }
        Ok(BitBlock::from_words(words, len))
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl BitXorAssign<&BitBlock> for BitBlock {
    fn bitxor_assign(&mut self, rhs: &BitBlock) {
        assert_eq!(self.len, rhs.len, "xor of unequal lengths");
        for (a, b) in self.words.iter_mut().zip(&rhs.words) {
            *a ^= b;
        }
    }
}

impl BitXor for &BitBlock {
    type Output = BitBlock;

    fn bitxor(self, rhs: &BitBlock) -> BitBlock {
        let mut out = self.clone();
        out ^= rhs;
        out
    }
}

impl fmt::Debug for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
            write!(f, "BitBlock[{}]({s})", self.len)
        } else {
            write!(f, "BitBlock[{}](weight {})", self.len, self.count_ones())
        }
    }
}
