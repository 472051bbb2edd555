//! Bit-channel construction for BSC(p) and frozen-set selection.
//!
//! A binary-input symmetric channel is kept as a mixture of BSCs
//! `{(weight, crossover)}`. Each polarization step squares the mixture and
//! then quantizes it back to at most `fidelity / 2` components by binning on
//! the component LLR `ln((1 - z) / z)`:
//!
//! * degrading: components sharing a bin are merged (output-symbol merging),
//!   which yields upper bounds on the bit-channel error probabilities;
//! * upgrading: each component is split onto the two bin edges so that its
//!   crossover is the weighted mean, which yields lower bounds.
//!
//! Bit-channel `i` is obtained by applying the minus/plus transforms in the
//! order of the bits of `i`, most significant first, which matches the
//! decoding order of `U` under `G_n`.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::bits::BitBlock;
use crate::error::{invalid, Error, Result};
use crate::polar::{check_pow2, FrozenVector};

/// Default output-alphabet size of the quantized channels.
pub const DEFAULT_FIDELITY: usize = 256;

/// Union-bound budget for library frozen sets. The bound counts every
/// bit-channel error as a block error, which overstates list-decoder block
/// errors by a wide factor at this scale.
pub const DEFAULT_DESIGN_BUDGET: f64 = 4.0;

/// LLR span covered by the quantization bins; larger LLRs share the top bin.
const LLR_SPAN: f64 = 36.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BitChannelStats {
    pub n: usize,
    pub qber: f64,
    /// Zero when the statistics were read back from a library file.
    pub fidelity: usize,
    /// Upper bounds on the bit-channel error probabilities.
    pub pe: Vec<f64>,
    /// Lower bounds from the upgrading construction, when requested.
    pub pe_lower: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Merge {
    Degrade,
    Upgrade,
}

#[derive(Clone, Copy, Debug)]
struct Comp {
    p: f64,
    z: f64,
    llr: f64,
}

#[inline]
fn llr_of(z: f64) -> f64 {
    ((1.0 - z) / z).ln()
}

struct Quantizer {
    bins: usize,
    width: f64,
    /// Crossover at the lower LLR edge of each bin, plus a final 0 for LLR = ∞.
    edge_z: Vec<f64>,
}

impl Quantizer {
    fn new(fidelity: usize) -> Self {
        let bins = (fidelity / 2).max(1);
        let width = if bins > 1 { LLR_SPAN / (bins - 1) as f64 } else { f64::INFINITY };
        let mut edge_z: Vec<f64> = (0..bins)
            .map(|b| 1.0 / (1.0 + (b as f64 * width).exp()))
            .collect();
        edge_z[0] = 0.5;
        edge_z.push(0.0);
        Quantizer {
            bins,
            width,
            edge_z,
        }
    }

    #[inline]
    fn bin(&self, llr: f64) -> usize {
        ((llr / self.width) as usize).min(self.bins - 1)
    }
}

struct Accum {
    p: Vec<f64>,
    pz: Vec<f64>,
}

impl Accum {
    fn new(slots: usize) -> Self {
        Accum {
            p: vec![0.0; slots],
            pz: vec![0.0; slots],
        }
    }

    /// Adds mass `p` with crossover `z` into bin `b`, whose LLR range must
    /// contain `ln((1 - z) / z)`.
    #[inline]
    fn add(&mut self, q: &Quantizer, mode: Merge, b: usize, p: f64, z: f64) {
        if p <= 0.0 {
            return;
        }
        match mode {
            Merge::Degrade => {
                self.p[b] += p;
                self.pz[b] += p * z;
            }
            Merge::Upgrade => {
                let hi = q.edge_z[b];
                let lo = q.edge_z[b + 1];
                let alpha = if hi > lo { ((hi - z) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
                self.p[b] += p * (1.0 - alpha);
                self.p[b + 1] += p * alpha;
            }
        }
    }

    fn finish(self, q: &Quantizer, mode: Merge) -> Vec<Comp> {
        let mut out = Vec::new();
        for (b, &p) in self.p.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let z = match mode {
                Merge::Degrade => (self.pz[b] / p).clamp(0.0, 0.5),
                Merge::Upgrade => q.edge_z[b],
            };
            out.push(Comp { p, z, llr: llr_of(z) });
        }
        out
    }
}

/// Bin of crossover `z`, searching upward from `from`. Components sorted by
/// increasing LLR give non-decreasing bins, so callers walk a cursor.
#[inline]
fn bin_from(q: &Quantizer, z: f64, mut from: usize) -> usize {
    while from + 1 < q.bins && z <= q.edge_z[from + 1] {
        from += 1;
    }
    from
}

fn minus(ch: &[Comp], q: &Quantizer, mode: Merge) -> Vec<Comp> {
    let mut acc = Accum::new(q.bins + 1);
    for (i, a) in ch.iter().enumerate() {
        // For fixed `a` the output LLR grows with `b`.
        let mut cursor = 0;
        for (j, b) in ch.iter().enumerate().skip(i) {
            let w = if i == j { a.p * a.p } else { 2.0 * a.p * b.p };
            let z = a.z + b.z - 2.0 * a.z * b.z;
            cursor = bin_from(q, z, cursor);
            acc.add(q, mode, cursor, w, z);
        }
    }
    acc.finish(q, mode)
}

fn plus(ch: &[Comp], q: &Quantizer, mode: Merge) -> Vec<Comp> {
    let mut acc = Accum::new(q.bins + 1);
    for (i, a) in ch.iter().enumerate() {
        for (j, b) in ch.iter().enumerate().skip(i) {
            let w = if i == j { a.p * a.p } else { 2.0 * a.p * b.p };
            let agree = (1.0 - a.z) * (1.0 - b.z) + a.z * b.z;
            if agree > 0.0 {
                acc.add(q, mode, q.bin(a.llr + b.llr), w * agree, a.z * b.z / agree);
            }
            let x = a.z * (1.0 - b.z);
            let y = b.z * (1.0 - a.z);
            let disagree = x + y;
            if disagree > 0.0 {
                acc.add(q, mode, q.bin((a.llr - b.llr).abs()), w * disagree, x.min(y) / disagree);
            }
        }
    }
    acc.finish(q, mode)
}

fn error_probability(ch: &[Comp]) -> f64 {
    ch.iter().map(|c| c.p * c.z).sum::<f64>().clamp(0.0, 0.5)
}

fn evolve(ch: Vec<Comp>, out: &mut [f64], q: &Quantizer, mode: Merge) {
    if out.len() == 1 {
        out[0] = error_probability(&ch);
        return;
    }
    let half = out.len() / 2;
    let (lo, hi) = out.split_at_mut(half);
    if half >= 256 {
        rayon::join(
            || evolve(minus(&ch, q, mode), lo, q, mode),
            || evolve(plus(&ch, q, mode), hi, q, mode),
        );
    } else {
        evolve(minus(&ch, q, mode), lo, q, mode);
        evolve(plus(&ch, q, mode), hi, q, mode);
    }
}

fn run(n: usize, qber: f64, fidelity: usize, mode: Merge) -> Vec<f64> {
    let q = Quantizer::new(fidelity);
    let base = Accum::new(q.bins + 1);
    let mut base = base;
    base.add(&q, mode, q.bin(llr_of(qber)), 1.0, qber);
    let ch = base.finish(&q, mode);
    let mut out = vec![0.0; n];
    evolve(ch, &mut out, &q, mode);
    out
}

fn validate(n: usize, qber: f64, fidelity: usize) -> Result<()> {
    check_pow2(n)?;
    if !(qber > 0.0 && qber < 0.5) {
        return invalid(format!("qber {qber} outside (0, 0.5)"));
    }
    if fidelity < 2 {
        return invalid(format!("fidelity {fidelity} below 2"));
    }
    Ok(())
}

/// Degrading construction: `pe[i] ≥ P_e(W_i)`.
pub fn construct_bsc(n: usize, qber: f64, fidelity: usize) -> Result<BitChannelStats> {
    validate(n, qber, fidelity)?;
    Ok(BitChannelStats {
        n,
        qber,
        fidelity,
        pe: run(n, qber, fidelity, Merge::Degrade),
        pe_lower: None,
    })
}

/// Degrading and upgrading constructions together.
pub fn construct_bsc_bounds(n: usize, qber: f64, fidelity: usize) -> Result<BitChannelStats> {
    validate(n, qber, fidelity)?;
    let (pe, lower) = rayon::join(
        || run(n, qber, fidelity, Merge::Degrade),
        || run(n, qber, fidelity, Merge::Upgrade),
    );
    Ok(BitChannelStats {
        n,
        qber,
        fidelity,
        pe,
        pe_lower: Some(lower),
    })
}

/// Positions sorted by increasing `pe`, ties by index.
fn reliability_order(pe: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pe.len()).collect();
    idx.sort_by(|&a, &b| pe[a].total_cmp(&pe[b]).then(a.cmp(&b)));
    idx
}

/// Largest information set whose union bound `Σ pe` stays within `target_fer`.
///
/// The bound is loose for list decoding, so targets of 1 or more are accepted
/// as a design budget; a target at or above `Σ pe` selects every position.
pub fn select_frozen(stats: &BitChannelStats, target_fer: f64) -> Result<FrozenVector> {
    if !(target_fer > 0.0 && target_fer.is_finite()) {
        return invalid(format!("target FER {target_fer} is not positive and finite"));
    }
    let mut info = crate::bits::BitBlock::zeros(stats.n);
    let mut sum = 0.0;
    for i in reliability_order(&stats.pe) {
        if sum + stats.pe[i] > target_fer {
            break;
        }
        sum += stats.pe[i];
        info.set(i, true);
    }
    Ok(FrozenVector::from_info_mask(info))
}

/// Fixed-rate selection: the `k` most reliable positions carry information.
pub fn select_frozen_rate(stats: &BitChannelStats, k: usize) -> Result<FrozenVector> {
    if k > stats.n {
        return invalid(format!("k = {k} exceeds n = {}", stats.n));
    }
    let mut info = crate::bits::BitBlock::zeros(stats.n);
    for &i in reliability_order(&stats.pe).iter().take(k) {
        info.set(i, true);
    }
    Ok(FrozenVector::from_info_mask(info))
}

/// `Σ pe[i]` over the information positions of `v`.
pub fn union_bound(stats: &BitChannelStats, v: &FrozenVector) -> f64 {
    (0..stats.n).filter(|&i| v.is_info(i)).map(|i| stats.pe[i]).sum()
}

/// Per-sub-block error bounds `P^U_j` and the count of blocks above
/// `eps_block`.
pub fn estimate_failed_blocks(
    stats: &BitChannelStats,
    v: &FrozenVector,
    m: usize,
    eps_block: f64,
) -> Result<(Vec<f64>, usize)> {
    if m == 0 || !stats.n.is_multiple_of(m) {
        return invalid(format!("{m} sub-blocks do not divide n = {}", stats.n));
    }
    if v.n() != stats.n {
        return invalid("frozen vector length differs from construction length");
    }
    if !(eps_block > 0.0 && eps_block < 1.0) {
        return invalid(format!("block threshold {eps_block} outside (0, 1)"));
    }
    let sub = stats.n / m;
    let pu: Vec<f64> = (0..m)
        .map(|j| {
            (j * sub..(j + 1) * sub)
                .filter(|&i| v.is_info(i))
                .map(|i| stats.pe[i])
                .sum()
        })
        .collect();
    let r = pu.iter().filter(|&&p| p > eps_block).count();
    Ok((pu, r))
}

/// One library entry: the frozen vector selected for a QBER grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    pub qber: f64,
    pub target_fer: f64,
    pub frozen: FrozenVector,
    pub stats: Option<BitChannelStats>,
}

/// Frozen vectors keyed by QBER at two-decimal granularity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrozenLibrary {
    n: usize,
    entries: BTreeMap<u32, LibraryEntry>,
}

/// Grid key of a QBER: hundredths, rounded.
pub fn qber_key(qber: f64) -> u32 {
    (qber * 100.0).round() as u32
}

impl FrozenLibrary {
    pub fn new(n: usize) -> Self {
        FrozenLibrary {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, entry: LibraryEntry) -> Result<()> {
        if entry.frozen.n() != self.n {
            return invalid(format!(
                "frozen vector of length {} in a library for n = {}",
                entry.frozen.n(),
                self.n
            ));
        }
        self.entries.insert(qber_key(entry.qber), entry);
        Ok(())
    }

    pub fn get(&self, qber: f64) -> Option<&LibraryEntry> {
        self.entries.get(&qber_key(qber))
    }

    pub fn entries(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.values()
    }
}

/// File name of the library entry for `(n, qber)`.
pub fn entry_file_name(n: usize, qber: f64) -> String {
    format!("frozen_n{n}_q{:03}.txt", qber_key(qber))
}

/// Serializes one entry: `key=value` header lines `n`, `qber`,
/// `target_fer`, `k`, then the information mask as hex, first bit in the
/// most significant position. When `pe` is present a `pe=binary64le` line
/// follows, then `n` little-endian doubles.
pub fn write_entry(entry: &LibraryEntry) -> Vec<u8> {
    let v = &entry.frozen;
    let mut out = format!(
        "n={}\nqber={}\ntarget_fer={}\nk={}\n",
        v.n(),
        entry.qber,
        entry.target_fer,
        v.k()
    )
    .into_bytes();
    for b in v.info_mask().to_bytes() {
        out.extend_from_slice(format!("{b:02x}").as_bytes());
    }
    out.push(b'\n');
    if let Some(stats) = &entry.stats {
        out.extend_from_slice(b"pe=binary64le\n");
        for p in &stats.pe {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

fn format_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Format { line, msg: msg.into() })
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, line: usize) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return format_err(line, "unexpected end of file");
        };
        self.pos += end + 1;
        Ok(&rest[..end])
    }

    fn header(&mut self, line: usize, key: &str) -> Result<String> {
        let text = std::str::from_utf8(self.next(line)?).or_else(|_| format_err(line, "not UTF-8"))?;
        match text.trim_end_matches('\r').split_once('=') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => format_err(line, format!("expected `{key}=`")),
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().or_else(|_| format_err(line, format!("bad number `{s}`")))
}

/// Inverse of [`write_entry`].
pub fn parse_entry(bytes: &[u8]) -> Result<LibraryEntry> {
    let mut lines = Lines { bytes, pos: 0 };
    let n: usize = num(1, &lines.header(1, "n")?)?;
    let qber: f64 = num(2, &lines.header(2, "qber")?)?;
    let target_fer: f64 = num(3, &lines.header(3, "target_fer")?)?;
    let k: usize = num(4, &lines.header(4, "k")?)?;
    check_pow2(n).or_else(|_| format_err(1, format!("n = {n} is not a power of two")))?;
    let hex = lines.next(5)?;
    let n_bytes = n.div_ceil(8);
    if hex.len() != 2 * n_bytes {
        return format_err(5, format!("{} hex digits for n = {n}", hex.len()));
    }
    let mut mask = Vec::with_capacity(n_bytes);
    for pair in hex.chunks(2) {
        let digits = std::str::from_utf8(pair).or_else(|_| format_err(5, "not UTF-8"))?;
        mask.push(u8::from_str_radix(digits, 16).or_else(|_| format_err(5, format!("bad hex `{digits}`")))?);
    }
    let info = BitBlock::from_bytes(&mask, n).or_else(|e| format_err(5, e.to_string()))?;
    let frozen = FrozenVector::from_info_mask(info);
    if frozen.k() != k {
        return format_err(4, format!("header k = {k} but the mask has {} information bits", frozen.k()));
    }
    let stats = if lines.at_end() {
        None
    } else {
        if lines.next(6)? != b"pe=binary64le" {
            return format_err(6, "expected `pe=binary64le`");
        }
        let payload = lines.rest();
        if payload.len() != 8 * n {
            return format_err(7, format!("{} appendix bytes for n = {n}", payload.len()));
        }
        let pe = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Some(BitChannelStats {
            n,
            qber,
            fidelity: 0,
            pe,
            pe_lower: None,
        })
    };
    Ok(LibraryEntry {
        qber,
        target_fer,
        frozen,
        stats,
    })
}

impl FrozenLibrary {
    /// Writes one file per entry into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for e in self.entries() {
            std::fs::write(dir.join(entry_file_name(self.n, e.qber)), write_entry(e))?;
        }
        Ok(())
    }

    /// Loads every entry of length `n` found in `dir`; a missing directory
    /// gives an empty library.
    pub fn load(dir: impl AsRef<Path>, n: usize) -> Result<Self> {
        let mut lib = FrozenLibrary::new(n);
        let dir = dir.as_ref();
        if !dir.exists() {
            return Ok(lib);
        }
        let prefix = format!("frozen_n{n}_q");
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|f| f.to_str())
                    .is_some_and(|f| f.starts_with(&prefix) && f.ends_with(".txt"))
            })
            .collect();
        paths.sort();
        for p in paths {
            lib.insert(parse_entry(&std::fs::read(&p)?)?)?;
        }
        Ok(lib)
    }
}

pub fn build_library(
    n: usize,
    qber_list: &[f64],
    target_fer: f64,
    fidelity: usize,
) -> Result<FrozenLibrary> {
    if qber_list.is_empty() {
        return invalid("empty QBER list");
    }
    let mut grid: BTreeMap<u32, f64> = BTreeMap::new();
    for &q in qber_list {
        if !(q > 0.0 && q < 0.5) {
            return invalid(format!("qber {q} outside (0, 0.5)"));
        }
        grid.entry(qber_key(q)).or_insert(q);
    }
    let built: Vec<Result<LibraryEntry>> = grid
        .values()
        .copied()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|q| {
            let stats = construct_bsc(n, q, fidelity)?;
            let frozen = select_frozen(&stats, target_fer)?;
            Ok(LibraryEntry {
                qber: q,
                target_fer,
                frozen,
                stats: Some(stats),
            })
        })
        .collect();
    let mut lib = FrozenLibrary::new(n);
    for e in built {
        lib.insert(e?)?;
    }
    Ok(lib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::encode;

    /// Genie-aided bit-channel error probabilities by exhaustive enumeration
    /// over all inputs and channel outputs (n ≤ 8). With earlier bits known
    /// (zero by symmetry) and later bits uniform, the MAP error of bit `i` is
    /// `Σ_y ½ min_b P(y | u_i = b)`.
    pub(crate) fn exact_bit_channels(n: usize, p: f64) -> Vec<f64> {
        let zero = BitBlock::zeros(n);
        let codewords: Vec<u64> = (0..1u64 << n)
            .map(|u| {
                let ub = BitBlock::from_words(vec![u], n);
                encode(&ub, &zero).unwrap().words()[0]
            })
            .collect();
        let lik = |y: u64, c: u64| {
            let d = (y ^ c).count_ones() as i32;
            p.powi(d) * (1.0 - p).powi(n as i32 - d)
        };
        (0..n)
            .map(|i| {
                let free = n - i - 1;
                let mut total = 0.0;
                for y in 0..1u64 << n {
                    let mut pb = [0.0f64; 2];
                    for (b, slot) in pb.iter_mut().enumerate() {
                        for rest in 0..1u64 << free {
                            let u = ((b as u64) << i) | (rest << (i + 1));
                            *slot += lik(y, codewords[u as usize]);
                        }
                        *slot /= (1u64 << free) as f64;
                    }
                    total += 0.5 * pb[0].min(pb[1]);
                }
                total
            })
            .collect()
    }

    #[test]
    fn trivial_lengths() {
        let s = construct_bsc(1, 0.07, 256).unwrap();
        assert_eq!(s.pe.len(), 1);
        assert!((s.pe[0] - 0.07).abs() < 1e-15);
        let s = construct_bsc(2, 0.02, 256).unwrap();
        assert!((s.pe[0] - 0.0392).abs() < 1e-12, "{}", s.pe[0]);
        // one flip leaves the plus channel undecided
        assert!((s.pe[1] - 0.02).abs() < 1e-12, "{}", s.pe[1]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(construct_bsc(8, 0.0, 256).is_err());
        assert!(construct_bsc(8, 0.5, 256).is_err());
        assert!(construct_bsc(12, 0.1, 256).is_err());
        assert!(construct_bsc(8, 0.1, 1).is_err());
    }

    #[test]
    fn bounds_bracket_exhaustive_oracle() {
        for &(n, p) in &[(4usize, 0.11), (8, 0.05), (8, 0.02)] {
            let exact = exact_bit_channels(n, p);
            let s = construct_bsc_bounds(n, p, 256).unwrap();
            let lower = s.pe_lower.as_ref().unwrap();
            for i in 0..n {
                assert!(s.pe[i] >= exact[i] - 1e-15, "n={n} i={i} {} < {}", s.pe[i], exact[i]);
                assert!(s.pe[i] - exact[i] <= 1e-3, "n={n} i={i} gap {}", s.pe[i] - exact[i]);
                assert!(lower[i] <= exact[i] + 1e-15, "n={n} i={i} lower {} > {}", lower[i], exact[i]);
            }
        }
    }

    #[test]
    fn degrading_dominates_upgrading() {
        let s = construct_bsc_bounds(1 << 10, 0.03, 64).unwrap();
        let lower = s.pe_lower.unwrap();
        for (i, (&u, &l)) in s.pe.iter().zip(&lower).enumerate() {
            assert!(u >= l - 1e-15, "position {i}: {u} < {l}");
            assert!((0.0..=0.5).contains(&u));
        }
    }

    #[test]
    fn select_frozen_extremes() {
        let s = construct_bsc(16, 0.001, 64).unwrap();
        let total: f64 = s.pe.iter().sum();
        assert!(total < 0.5);
        assert_eq!(select_frozen(&s, total * 1.000001).unwrap().k(), 16);
        assert_eq!(select_frozen(&s, 1e-300).unwrap().k(), 0);
        assert!(select_frozen(&s, 0.0).is_err());
        assert!(select_frozen(&s, f64::INFINITY).is_err());
        assert_eq!(select_frozen(&s, 2.0).unwrap().k(), 16);
        assert_eq!(select_frozen_rate(&s, 5).unwrap().k(), 5);
    }

    #[test]
    fn select_frozen_is_optimal_at_n8() {
        let exact = exact_bit_channels(8, 0.05);
        let stats = BitChannelStats {
            n: 8,
            qber: 0.05,
            fidelity: 0,
            pe: exact.clone(),
            pe_lower: None,
        };
        let v = select_frozen(&stats, 0.01).unwrap();
        // Exhaustive: largest subset with Σ pe ≤ 0.01.
        let mut best = 0;
        for mask in 0u32..256 {
            let sum: f64 = (0..8).filter(|i| mask >> i & 1 == 1).map(|i| exact[i]).sum();
            if sum <= 0.01 {
                best = best.max(mask.count_ones() as usize);
            }
        }
        assert_eq!(v.k(), best);
        assert!(union_bound(&stats, &v) <= 0.01);
        // and it is a minimum-sum subset of that size
        let mut sorted = exact.clone();
        sorted.sort_by(f64::total_cmp);
        let min_sum: f64 = sorted[..best].iter().sum();
        assert!((union_bound(&stats, &v) - min_sum).abs() < 1e-15);
    }

    #[test]
    fn failed_block_estimates() {
        let s = construct_bsc(256, 0.05, 64).unwrap();
        let none = FrozenVector::all_frozen(256);
        let (pu, r) = estimate_failed_blocks(&s, &none, 8, 1e-3).unwrap();
        assert!(pu.iter().all(|&p| p == 0.0));
        assert_eq!(r, 0);
        let v = select_frozen(&s, 0.01).unwrap();
        let (pu, r) = estimate_failed_blocks(&s, &v, 1, 1e-3).unwrap();
        assert!((pu[0] - union_bound(&s, &v)).abs() < 1e-15);
        assert!(r <= 1);
        assert!(estimate_failed_blocks(&s, &v, 3, 1e-3).is_err());
    }

    #[test]
    fn entry_file_round_trip() {
        let lib = build_library(64, &[0.05, 0.1], 0.01, 32).unwrap();
        let e = lib.get(0.05).unwrap();
        let bytes = write_entry(e);
        let text_end = bytes.iter().position(|&b| b == b'p').unwrap();
        let header = std::str::from_utf8(&bytes[..text_end]).unwrap();
        let lines: Vec<&str> = header.lines().collect();
        assert_eq!(lines[..4], ["n=64", "qber=0.05", "target_fer=0.01", &format!("k={}", e.frozen.k())]);
        // Hex oracle: bit j of the mask is bit 7 - j % 8 of byte j / 8.
        let hex = lines[4];
        assert_eq!(hex.len(), 16);
        for j in 0..64 {
            let byte = u8::from_str_radix(&hex[2 * (j / 8)..2 * (j / 8) + 2], 16).unwrap();
            assert_eq!(byte >> (7 - j % 8) & 1 == 1, e.frozen.is_info(j));
        }
        let back = parse_entry(&bytes).unwrap();
        assert_eq!(back.frozen, e.frozen);
        assert_eq!(back.stats.as_ref().unwrap().pe, e.stats.as_ref().unwrap().pe);
        let bare = LibraryEntry { stats: None, ..e.clone() };
        assert_eq!(parse_entry(&write_entry(&bare)).unwrap(), bare);

        let dir = tempfile::tempdir().unwrap();
        lib.save(dir.path()).unwrap();
        let loaded = FrozenLibrary::load(dir.path(), 64).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.get(0.1).unwrap().frozen, lib.get(0.1).unwrap().frozen);
        assert!(FrozenLibrary::load(dir.path(), 128).unwrap().is_empty());
    }

    #[test]
    fn malformed_entries_report_lines() {
        let e = build_library(16, &[0.05], 0.01, 32).unwrap().get(0.05).unwrap().clone();
        let good = String::from_utf8(write_entry(&LibraryEntry { stats: None, ..e })).unwrap();
        let line_of = |text: &str| match parse_entry(text.as_bytes()) {
            Err(Error::Format { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of(&good.replace("n=16", "n=15")), 1);
        assert_eq!(line_of(&good.replacen("qber", "qbr", 1)), 2);
        assert_eq!(line_of(&good.replacen("k=", "k=99", 1)), 4);
        let lines: Vec<&str> = good.lines().collect();
        assert_eq!(line_of(&format!("{}\n{}\n{}\n{}\nzz\n", lines[0], lines[1], lines[2], lines[3])), 5);
        assert_eq!(line_of(&good[..good.len() - 1]), 5);
    }

    #[test]
    fn library_deduplicates_and_orders() {
        let lib = build_library(256, &[0.03, 0.01, 0.03, 0.02], 0.01, 64).unwrap();
        assert_eq!(lib.len(), 3);
        let ks: Vec<usize> = lib.entries().map(|e| e.frozen.k()).collect();
        assert!(ks.windows(2).all(|w| w[0] >= w[1]), "{ks:?}");
        assert!(lib.get(0.02).is_some());
        assert!(lib.get(0.05).is_none());
        let single = build_library(256, &[0.04], 0.01, 64).unwrap();
        assert_eq!(single.len(), 1);
        assert!(build_library(256, &[], 0.01, 64).is_err());
        assert!(build_library(256, &[0.6], 0.01, 64).is_err());
    }
}
