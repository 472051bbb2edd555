//! Configurable-width CRC over bit sequences.
//!
//! Follows the usual parameter model (width, poly, init, refin = refout,
//! xorout). A bit sequence is fed in order; with `reflected` set, each
//! 8-bit group (and a trailing partial group) is fed in reverse order, which
//! makes byte-aligned inputs agree with the standard byte-oriented
//! definitions. Any width in `4..=64` is supported, so tag length can be
//! swept freely.

use serde::{Deserialize, Serialize};

use crate::bits::BitBlock;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrcSpec {
    pub width: u32,
    /// Generator without its implicit leading `x^width` term.
    pub poly: u64,
    pub init: u64,
    pub xorout: u64,
    pub reflected: bool,
}

impl CrcSpec {
    pub fn new(width: u32, poly: u64, init: u64, xorout: u64, reflected: bool) -> Result<Self> {
        if !(4..=64).contains(&width) {
            return invalid(format!("CRC width {width} outside 4..=64"));
        }
        let mask = width_mask(width);
        if poly & !mask != 0 || init & !mask != 0 || xorout & !mask != 0 {
            return invalid(format!("CRC parameters wider than {width} bits"));
        }
        if poly & 1 == 0 {
            return invalid("CRC generator must have a nonzero constant term");
        }
        Ok(CrcSpec {
            width,
            poly,
            init,
            xorout,
            reflected,
        })
    }

    /// CRC-32/ISO-HDLC (the zlib / Ethernet CRC).
    pub fn crc32() -> Self {
        CrcSpec {
            width: 32,
            poly: 0x04C1_1DB7,
            init: 0xFFFF_FFFF,
            xorout: 0xFFFF_FFFF,
            reflected: true,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name.to_ascii_lowercase().as_str() {
            "crc-32" | "crc32" | "crc-32/iso-hdlc" => Self::crc32(),
            "crc-32c" | "crc32c" | "crc-32/iscsi" => {
                CrcSpec::new(32, 0x1EDC_6F41, 0xFFFF_FFFF, 0xFFFF_FFFF, true)?
            }
            "crc-16/ibm-3740" | "crc-16/ccitt-false" => CrcSpec::new(16, 0x1021, 0xFFFF, 0, false)?,
            "crc-8/smbus" | "crc-8" => CrcSpec::new(8, 0x07, 0, 0, false)?,
            "crc-64/ecma-182" => CrcSpec::new(64, 0x42F0_E1EB_A9EA_3693, 0, 0, false)?,
            "crc-64/xz" => CrcSpec::new(
                64,
                0x42F0_E1EB_A9EA_3693,
                u64::MAX,
                u64::MAX,
                true,
            )?,
            other => {
                if let Some(w) = other.strip_prefix("generic-") {
                    let width = w
                        .parse()
                        .map_err(|_| crate::Error::InvalidArgument(format!("bad width in {other}")))?;
                    return Self::generic(width);
                }
                return invalid(format!("unknown CRC preset {name:?}"));
            }
        };
        Ok(spec)
    }

    /// Generic width-`d` CRC: the first irreducible generator of degree `d`
    /// (ordered by coefficient value, constant term set), init all-ones,
    /// xorout zero, not reflected. Width 32 maps to CRC-32/ISO-HDLC.
    pub fn generic(width: u32) -> Result<Self> {
        if width == 32 {
            return Ok(Self::crc32());
        }
        if !(4..=64).contains(&width) {
            return invalid(format!("CRC width {width} outside 4..=64"));
        }
        let poly = first_irreducible(width);
        CrcSpec::new(width, poly, width_mask(width), 0, false)
    }

    pub fn mask(&self) -> u64 {
        width_mask(self.width)
    }
}

impl Default for CrcSpec {
    fn default() -> Self {
        Self::crc32()
    }
}

fn width_mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Table-driven CRC engine for one spec.
#[derive(Clone, Debug)]
pub struct Crc {
    spec: CrcSpec,
    shift: u32,
    poly_top: u64,
    table: Box<[u64; 256]>,
}

impl Crc {
    pub fn new(spec: CrcSpec) -> Self {
        // Register is kept left-aligned in a u64 so every width shares one path.
        let shift = 64 - spec.width;
        let poly_top = spec.poly << shift;
        let mut table = Box::new([0u64; 256]);
        for (i, slot) in table.iter_mut().enumerate() {
            let mut r = (i as u64) << 56;
            for _ in 0..8 {
                r = if r >> 63 == 1 { (r << 1) ^ poly_top } else { r << 1 };
            }
            *slot = r;
        }
        Crc {
            spec,
            shift,
            poly_top,
            table,
        }
    }

    pub fn spec(&self) -> &CrcSpec {
        &self.spec
    }

    #[inline]
    fn feed_byte(&self, reg: u64, byte: u8) -> u64 {
        let idx = ((reg >> 56) as u8 ^ byte) as usize;
        (reg << 8) ^ self.table[idx]
    }

    #[inline]
    fn feed_bit(&self, reg: u64, bit: bool) -> u64 {
        let top = (reg >> 63 == 1) ^ bit;
        if top {
            (reg << 1) ^ self.poly_top
        } else {
            reg << 1
        }
    }

    fn finish(&self, reg: u64) -> u64 {
        let mut r = reg >> self.shift;
        if self.spec.reflected {
            r = r.reverse_bits() >> self.shift;
        }
        r ^ self.spec.xorout
    }

    /// CRC of `bits[range]`. The range start must be byte aligned.
    pub fn compute_range(&self, bits: &BitBlock, start: usize, end: usize) -> u64 {
        assert!(start.is_multiple_of(8) && start <= end && end <= bits.len());
        let words = bits.words();
        let mut reg = self.spec.init << self.shift;
        let mut i = start;
        while i + 8 <= end {
            let raw = (words[i / 64] >> (i % 64)) as u8;
            // `raw` holds the group LSB-first; the standard byte order wants it reversed.
            let byte = if self.spec.reflected { raw } else { raw.reverse_bits() };
            reg = self.feed_byte(reg, byte);
            i += 8;
        }
        let rem = end - i;
        if rem > 0 {
            for j in 0..rem {
                let pos = if self.spec.reflected { i + rem - 1 - j } else { i + j };
                reg = self.feed_bit(reg, bits.get(pos));
            }
        }
        self.finish(reg)
    }

    pub fn compute(&self, bits: &BitBlock) -> u64 {
        self.compute_range(bits, 0, bits.len())
    }

    /// Tags of `m` equal sub-blocks of `u`.
    pub fn tags(&self, u: &BitBlock, m: usize) -> Result<TagVector> {
        if m == 0 || !u.len().is_multiple_of(m) {
            return invalid(format!("{m} sub-blocks do not divide length {}", u.len()));
        }
        let sub = u.len() / m;
        let tags = (0..m)
            .map(|i| {
                if sub.is_multiple_of(8) {
                    self.compute_range(u, i * sub, (i + 1) * sub)
                } else {
                    self.compute(&u.slice(i * sub..(i + 1) * sub))
                }
            })
            .collect();
        Ok(TagVector {
            width: self.spec.width,
            tags,
        })
    }
}

/// `T = (T_0 | T_1 | … | T_{m-1})`, each tag `width` bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagVector {
    pub width: u32,
    pub tags: Vec<u64>,
}

impl TagVector {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn total_bits(&self) -> usize {
        self.tags.len() * self.width as usize
    }
}

pub fn crc_compute(bits: &BitBlock, spec: &CrcSpec) -> u64 {
    Crc::new(*spec).compute(bits)
}

pub fn crc_tags(u: &BitBlock, m: usize, spec: &CrcSpec) -> Result<TagVector> {
    Crc::new(*spec).tags(u, m)
}

// GF(2)[x] helpers for picking default generators. Polynomials are bit masks
// of coefficients; degree ≤ 64 fits in u128 with room for products.

fn clmul(a: u128, b: u128) -> u128 {
    let mut r = 0u128;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    r
}

fn degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

fn poly_mod(mut a: u128, m: u128) -> u128 {
    let dm = degree(m);
    while a != 0 && degree(a) >= dm {
        a ^= m << (degree(a) - dm);
    }
    a
}

fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = poly_mod(a, b);
        a = b;
        b = r;
    }
    a
}

/// Ben-Or irreducibility test.
fn is_irreducible(f: u128) -> bool {
    let d = degree(f);
    let mut xp = 2u128; // x
    for _ in 0..d / 2 {
        xp = poly_mod(clmul(xp, xp), f);
        if poly_gcd(f, xp ^ 2) != 1 {
            return false;
        }
    }
    true
}

fn first_irreducible(width: u32) -> u64 {
    let top = 1u128 << width;
    let mut low: u64 = 1;
    loop {
        if is_irreducible(top | u128::from(low)) {
            return low;
        }
        low += 2;
    }
}
