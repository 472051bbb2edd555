//! Two-party session: forward polar phase, LDPC acknowledgment of failed
//! sub-blocks, final key assembly and leakage accounting.
//!
//! Alice holds `k_a`, Bob holds `k_b`. Alice sends `Z = encode(U, k_a)` and
//! the sub-block CRC tags of `U`; Bob decodes `U′` and reports the failure
//! map `σ`. For every failed block Bob also sends the LDPC syndrome of his
//! bit-reversed sifted key's sub-block, which Alice corrects her own
//! permuted sub-block toward. Each party's key keeps `U` where `σ_i = 0` and
//! the permuted sifted sub-block where `σ_i = 1`.

use std::sync::Arc;

use rand::Rng;

use crate::bits::BitBlock;
use crate::crc::{crc_tags, CrcSpec, TagVector};
use crate::decoder::{BcSclDecoder, DecodeOutcome, MetricMode};
use crate::error::{invalid, Error, Result};
use crate::ldpc::{decode_syndrome, syndrome, ParityCheckMatrix, DEFAULT_MAX_ITERS};
use crate::polar::{bit_reversal_permute, check_pow2, encode, FrozenVector};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardMessage {
    pub z: BitBlock,
    pub tags: TagVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AckMessage {
    pub sigma: BitBlock,
    /// One syndrome per failed sub-block, in ascending block order.
    pub syndromes: Vec<BitBlock>,
}

impl AckMessage {
    pub fn failed_blocks(&self) -> Vec<usize> {
        (0..self.sigma.len()).filter(|&i| self.sigma.get(i)).collect()
    }
}

/// Everything both parties agree on before a session.
#[derive(Clone, Debug)]
pub struct SessionParams {
    pub n: usize,
    pub sub_blocks: usize,
    pub list_size: usize,
    /// QBER the frozen set and decoders are tuned for.
    pub qber: f64,
    pub frozen: Arc<FrozenVector>,
    pub crc: CrcSpec,
    /// Acknowledgment code of length `n / sub_blocks`.
    pub ldpc: Arc<ParityCheckMatrix>,
    pub metric: MetricMode,
    pub max_iters: usize,
}

impl SessionParams {
    /// Params with the default metric mode and BP iteration cap.
    pub fn new(
        list_size: usize,
        sub_blocks: usize,
        qber: f64,
        frozen: Arc<FrozenVector>,
        crc: CrcSpec,
        ldpc: Arc<ParityCheckMatrix>,
    ) -> Result<Self> {
        let params = SessionParams {
            n: frozen.n(),
            sub_blocks,
            list_size,
            qber,
            frozen,
            crc,
            ldpc,
            metric: MetricMode::default(),
            max_iters: DEFAULT_MAX_ITERS,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_pow2(self.n)?;
        if self.sub_blocks == 0 || !self.n.is_multiple_of(self.sub_blocks) {
            return invalid(format!("{} sub-blocks do not divide n = {}", self.sub_blocks, self.n));
        }
        if self.frozen.n() != self.n {
            return invalid(format!("frozen vector of length {} for n = {}", self.frozen.n(), self.n));
        }
        if self.list_size == 0 {
            return invalid("list size must be at least 1");
        }
        if (self.crc.width as f64) < (self.list_size as f64).log2() {
            return invalid(format!(
                "CRC width {} below log2 of list size {}",
                self.crc.width, self.list_size
            ));
        }
        if !(self.qber > 0.0 && self.qber < 0.5) {
            return invalid(format!("design qber {} outside (0, 0.5)", self.qber));
        }
        if self.ldpc.cols() != self.sub_len() {
            return invalid(format!(
                "LDPC length {} differs from sub-block length {}",
                self.ldpc.cols(),
                self.sub_len()
            ));
        }
        Ok(())
    }

    pub fn sub_len(&self) -> usize {
        self.n / self.sub_blocks
    }

    pub fn crc_bits(&self) -> usize {
        self.crc.width as usize
    }

    pub fn decoder(&self) -> Result<BcSclDecoder> {
        BcSclDecoder::new(self.list_size, self.sub_blocks, self.crc, self.metric)
    }

    fn check_key(&self, key: &BitBlock, who: &str) -> Result<()> {
        if key.len() != self.n {
            return invalid(format!("{who} of {} bits for n = {}", key.len(), self.n));
        }
        Ok(())
    }
}

/// Bits disclosed over the public channel in one session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LeakageLedger {
    /// `n − k`: the frozen part of `Z`.
    pub forward_bits: u64,
    /// `m·d`.
    pub tag_bits: u64,
    /// `m`, charged even when no block fails.
    pub sigma_bits: u64,
    pub ack_bits: u64,
}

impl LeakageLedger {
    pub fn total(&self) -> u64 {
        self.forward_bits + self.tag_bits + self.sigma_bits + self.ack_bits
    }
}

/// `U` with zeros at frozen positions and fresh bits elsewhere.
fn fill_payload<R: Rng + ?Sized>(frozen: &FrozenVector, rng: &mut R) -> BitBlock {
    let n = frozen.n();
    let fresh = BitBlock::random(n, rng);
    let words = fresh
        .words()
        .iter()
        .zip(frozen.info_mask().words())
        .map(|(a, b)| a & b)
        .collect();
    BitBlock::from_words(words, n)
}

/// Alice's forward message and the `U` it encodes.
pub fn alice_forward<R: Rng + ?Sized>(
    k_a: &BitBlock,
    params: &SessionParams,
    rng: &mut R,
) -> Result<(ForwardMessage, BitBlock)> {
    params.validate()?;
    params.check_key(k_a, "Alice's key")?;
    let u = fill_payload(&params.frozen, rng);
    let z = encode(&u, k_a)?;
    let tags = crc_tags(&u, params.sub_blocks, &params.crc)?;
    Ok((ForwardMessage { z, tags }, u))
}

/// Bob's BC-SCL decode of `k_b ⊕ Z`.
pub fn bob_forward(k_b: &BitBlock, msg: &ForwardMessage, params: &SessionParams) -> Result<DecodeOutcome> {
    params.validate()?;
    params.check_key(k_b, "Bob's key")?;
    params.check_key(&msg.z, "Z")?;
    if msg.tags.len() != params.sub_blocks || msg.tags.width != params.crc.width {
        return invalid(format!(
            "{} tags of width {} for {} sub-blocks of width {}",
            msg.tags.len(),
            msg.tags.width,
            params.sub_blocks,
            params.crc.width
        ));
    }
    let received = k_b ^ &msg.z;
    params
        .decoder()?
        .decode(&received, &params.frozen, &msg.tags, params.qber)
}

/// `σ`, plus the syndrome of every failed sub-block of `bitrev(k_b)`.
pub fn bob_ack(k_b: &BitBlock, outcome: &DecodeOutcome, params: &SessionParams) -> Result<AckMessage> {
    params.check_key(k_b, "Bob's key")?;
    if outcome.sigma.len() != params.sub_blocks {
        return invalid("failure map length differs from the sub-block count");
    }
    let failed = outcome.failed_blocks();
    let mut syndromes = Vec::with_capacity(failed.len());
    if !failed.is_empty() {
        let y = bit_reversal_permute(k_b)?;
        let sub = params.sub_len();
        for i in failed {
            syndromes.push(syndrome(&params.ldpc, &y.slice(i * sub..(i + 1) * sub))?);
        }
    }
    Ok(AckMessage {
        sigma: outcome.sigma.clone(),
        syndromes,
    })
}

/// Alice's reconciled key and whether every LDPC decode converged.
pub fn alice_ack(
    k_a: &BitBlock,
    u: &BitBlock,
    ack: &AckMessage,
    params: &SessionParams,
) -> Result<(BitBlock, bool)> {
    params.check_key(k_a, "Alice's key")?;
    params.check_key(u, "U")?;
    check_ack_shape(ack, params)?;
    let failed = ack.failed_blocks();
    if failed.is_empty() {
        return Ok((u.clone(), true));
    }
    let x = bit_reversal_permute(k_a)?;
    let sub = params.sub_len();
    let mut key = u.clone();
    let mut converged = true;
    for (i, target) in failed.into_iter().zip(&ack.syndromes) {
        let block = x.slice(i * sub..(i + 1) * sub);
        let out = decode_syndrome(&params.ldpc, &block, target, params.qber, params.max_iters)?;
        converged &= out.converged;
        key.copy_from(i * sub, &out.corrected);
    }
    Ok((key, converged))
}

/// Bob's reconciled key: `U′_i` where `σ_i = 0`, `bitrev(k_b)_i` elsewhere.
pub fn bob_assemble(k_b: &BitBlock, outcome: &DecodeOutcome, params: &SessionParams) -> Result<BitBlock> {
    params.check_key(k_b, "Bob's key")?;
    params.check_key(&outcome.u_prime, "U′")?;
    if outcome.sigma.len() != params.sub_blocks {
        return invalid("failure map length differs from the sub-block count");
    }
    let failed = outcome.failed_blocks();
    let mut key = outcome.u_prime.clone();
    if !failed.is_empty() {
        let y = bit_reversal_permute(k_b)?;
        let sub = params.sub_len();
        for i in failed {
            key.copy_from(i * sub, &y.slice(i * sub..(i + 1) * sub));
        }
    }
    Ok(key)
}

fn check_ack_shape(ack: &AckMessage, params: &SessionParams) -> Result<()> {
    if ack.sigma.len() != params.sub_blocks {
        return invalid("failure map length differs from the sub-block count");
    }
    if ack.syndromes.len() != ack.sigma.count_ones() {
        return invalid(format!(
            "{} syndromes for {} failed blocks",
            ack.syndromes.len(),
            ack.sigma.count_ones()
        ));
    }
    if let Some(s) = ack.syndromes.iter().find(|s| s.len() != params.ldpc.rows()) {
        return invalid(format!("syndrome of {} bits for {} checks", s.len(), params.ldpc.rows()));
    }
    Ok(())
}

pub fn leakage(params: &SessionParams, ack: &AckMessage) -> LeakageLedger {
    LeakageLedger {
        forward_bits: (params.n - params.frozen.k()) as u64,
        tag_bits: (params.sub_blocks * params.crc_bits()) as u64,
        sigma_bits: params.sub_blocks as u64,
        ack_bits: ack.syndromes.iter().map(|s| s.len() as u64).sum(),
    }
}

// Transcript framing. All integers are big-endian.
//
//   transcript := MAGIC version:u8 frame(forward) frame(ack)
//   frame      := len:u32 payload[len]
//   forward    := n:u32 bytes(Z) m:u32 width:u8 tag[m]
//   tag        := ⌈width/8⌉ bytes, value right-aligned
//   ack        := m:u32 bytes(σ) count:u32 (bits:u32 bytes(S))[count]
//   bytes(X)   := ⌈len(X)/8⌉ bytes, first bit in the MSB of the first byte

const MAGIC: &[u8; 4] = b"PRTX";
const VERSION: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} exceeds a 32-bit field")))?;
    out.extend_from_slice(&v.to_be_bytes());
    Ok(())
}

fn put_frame(out: &mut Vec<u8>, payload: &[u8]) -> Result<()> {
    put_u32(out, payload.len())?;
    out.extend_from_slice(payload);
    Ok(())
}

pub fn write_transcript(fwd: &ForwardMessage, ack: &AckMessage) -> Result<Vec<u8>> {
    let mut f = Vec::new();
    put_u32(&mut f, fwd.z.len())?;
    f.extend_from_slice(&fwd.z.to_bytes());
    put_u32(&mut f, fwd.tags.len())?;
    f.push(fwd.tags.width as u8);
    let tag_bytes = (fwd.tags.width as usize).div_ceil(8);
    for &t in &fwd.tags.tags {
        f.extend_from_slice(&t.to_be_bytes()[8 - tag_bytes..]);
    }
    let mut a = Vec::new();
    put_u32(&mut a, ack.sigma.len())?;
    a.extend_from_slice(&ack.sigma.to_bytes());
    put_u32(&mut a, ack.syndromes.len())?;
    for s in &ack.syndromes {
        put_u32(&mut a, s.len())?;
        a.extend_from_slice(&s.to_bytes());
    }
    let mut out = Vec::with_capacity(f.len() + a.len() + 13);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_frame(&mut out, &f)?;
    put_frame(&mut out, &a)?;
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Transcript(msg.into()))
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return malformed(format!("truncated at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn bits(&mut self, len: usize) -> Result<BitBlock> {
        BitBlock::from_bytes(self.take(len.div_ceil(8))?, len).map_err(|e| Error::Transcript(e.to_string()))
    }

    fn frame(&mut self) -> Result<Reader<'a>> {
        let len = self.u32()?;
        Ok(Reader {
            buf: self.take(len)?,
            pos: 0,
        })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return malformed(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}

pub fn read_transcript(bytes: &[u8]) -> Result<(ForwardMessage, AckMessage)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return malformed("bad magic");
    }
    let version = r.u8()?;
    if version != VERSION {
        return malformed(format!("unsupported version {version}"));
    }
    let mut f = r.frame()?;
    let n = f.u32()?;
    let z = f.bits(n)?;
    let m = f.u32()?;
    let width = f.u8()? as u32;
    if !(1..=64).contains(&width) {
        return malformed(format!("tag width {width}"));
    }
    let tag_bytes = (width as usize).div_ceil(8);
    let mut tags = Vec::with_capacity(m);
    for _ in 0..m {
        let mut word = [0u8; 8];
        word[8 - tag_bytes..].copy_from_slice(f.take(tag_bytes)?);
        tags.push(u64::from_be_bytes(word));
    }
    f.finish()?;
    let mut a = r.frame()?;
    let sigma_len = a.u32()?;
    let sigma = a.bits(sigma_len)?;
    let count = a.u32()?;
    let mut syndromes = Vec::new();
    for _ in 0..count {
        let len = a.u32()?;
        syndromes.push(a.bits(len)?);
    }
    a.finish()?;
    r.finish()?;
    Ok((
        ForwardMessage {
            z,
            tags: TagVector { width, tags },
        },
        AckMessage { sigma, syndromes },
    ))
}
