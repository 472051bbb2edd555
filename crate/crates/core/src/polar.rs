//! Polar transform primitives and the forward-reconciliation encoder.
//!
//! The generator is `G_n = B · F^{⊗log n}` with `F = [[1,0],[1,1]]` and `B`
//! the bit-reversal permutation. Row vectors multiply from the left, so
//! `encode(u, k) = u·G_n ⊕ k`. Index `i` of `u` is bit-channel `i` for both
//! construction and decoding.

use crate::bits::BitBlock;
use crate::error::{invalid, Result};

/// Per-position frozen markers. `marks()[i]` is `0` for a frozen position and
/// `-1` for an information position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrozenVector {
    info: BitBlock,
    k: usize,
}

impl FrozenVector {
    pub fn all_frozen(n: usize) -> Self {
        FrozenVector {
            info: BitBlock::zeros(n),
            k: 0,
        }
    }

    /// From an information mask (1 = information position).
    pub fn from_info_mask(info: BitBlock) -> Self {
        let k = info.count_ones();
        FrozenVector { info, k }
    }

    pub fn from_marks(marks: &[i8]) -> Result<Self> {
        let mut info = BitBlock::zeros(marks.len());
        for (i, &m) in marks.iter().enumerate() {
            match m {
                0 => {}
                -1 => info.set(i, true),
                other => return invalid(format!("frozen mark {other} at {i} is not 0 or -1")),
            }
        }
        Ok(Self::from_info_mask(info))
    }

    pub fn marks(&self) -> Vec<i8> {
        self.info.iter().map(|b| if b { -1 } else { 0 }).collect()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.info.len()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn is_info(&self, i: usize) -> bool {
        self.info.get(i)
    }

    pub fn info_mask(&self) -> &BitBlock {
        &self.info
    }

    pub fn info_positions(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.info.get(i)).collect()
    }
}

pub(crate) fn check_pow2(len: usize) -> Result<u32> {
    if len == 0 || !len.is_power_of_two() {
        return invalid(format!("length {len} is not a power of two"));
    }
    Ok(len.trailing_zeros())
}

/// Reverses the low `bits` bits of `j`.
#[inline]
pub fn reverse_index(j: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        j.reverse_bits() >> (usize::BITS - bits)
    }
}

/// `out[j] = x[rev(j)]`. An involution.
pub fn bit_reversal_permute(x: &BitBlock) -> Result<BitBlock> {
    let bits = check_pow2(x.len())?;
    let mut out = BitBlock::zeros(x.len());
    let src = x.words();
    let dst = out.words_mut();
    for j in 0..x.len() {
        let r = reverse_index(j, bits);
        dst[j / 64] |= ((src[r / 64] >> (r % 64)) & 1) << (j % 64);
    }
    Ok(out)
}

/// Real-valued counterpart of [`bit_reversal_permute`].
pub fn bit_reversal_permute_values<T: Copy>(x: &[T]) -> Result<Vec<T>> {
    let bits = check_pow2(x.len())?;
    Ok((0..x.len()).map(|j| x[reverse_index(j, bits)]).collect())
}

// MASKS[s] selects positions p within a word with bit s of p clear.
const MASKS: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0F0F_0F0F_0F0F_0F0F,
    0x00FF_00FF_00FF_00FF,
    0x0000_FFFF_0000_FFFF,
    0x0000_0000_FFFF_FFFF,
];

/// In-place `x ← x·F^{⊗log n}`: butterfly `x[i] ^= x[i + h]` for every `i`
/// with bit `h` clear, over all stages `h`.
pub(crate) fn polar_transform_in_place(x: &mut BitBlock) {
    let n = x.len();
    let words = x.words_mut();
    let in_word = n.min(64);
    for (s, &mask) in MASKS.iter().enumerate() {
        let h = 1usize << s;
        if h >= in_word {
            break;
        }
        for w in words.iter_mut() {
            *w ^= (*w >> h) & mask;
        }
    }
    let mut hw = 1;
    while hw * 64 < n {
        for block in words.chunks_mut(2 * hw) {
            let (lo, hi) = block.split_at_mut(hw);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= *b;
            }
        }
        hw *= 2;
    }
}

/// `x·F^{⊗log n}` over GF(2) in `O(n log n)` XORs (word-parallel).
pub fn polar_transform(x: &BitBlock) -> Result<BitBlock> {
    check_pow2(x.len())?;
    let mut out = x.clone();
    polar_transform_in_place(&mut out);
    Ok(out)
}

/// `Z = U·G_n ⊕ K`.
pub fn encode(u: &BitBlock, k: &BitBlock) -> Result<BitBlock> {
    if u.len() != k.len() {
        return invalid(format!("encoder lengths differ: {} vs {}", u.len(), k.len()));
    }
    check_pow2(u.len())?;
    let mut t = u.clone();
    polar_transform_in_place(&mut t);
    let mut z = bit_reversal_permute(&t)?;
    z ^= k;
    Ok(z)
}
