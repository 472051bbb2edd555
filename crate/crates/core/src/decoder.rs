//! Block-checked successive cancellation list decoding.
//!
//! The decoder recovers `U` from `K_B ⊕ Z = U·G_n ⊕ e`. Paths are forked at
//! every information position and pruned back to the list size; at the end
//! of each sub-block the surviving paths are checked against that block's
//! CRC tag. A block is accepted from the lowest-metric passing path
//! (`σ_i = 0`) or marked failed (`σ_i = 1`). If some surviving path passes
//! every tag when decoding ends, it replaces `U` wholesale and `σ` is all
//! zeros.
//!
//! Soft values are natural-log LLRs in `f64`. Per-path state (LLR and
//! partial-sum layers, decided bits) is shared between forked paths and
//! copied only when a path writes to a shared layer.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::bits::BitBlock;
use crate::crc::{Crc, CrcSpec, TagVector};
use crate::error::{invalid, Result};
use crate::polar::{bit_reversal_permute_values, check_pow2, FrozenVector};

/// Path-metric update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    /// Min-sum check update; a decision against the LLR sign costs `|λ|`.
    #[default]
    Approx,
    /// Exact check update and `ln(1 + e^{-(1-2u)λ})` increments, so the
    /// metric is exactly `-ln Pr(u_0^i | y)`.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub u_prime: BitBlock,
    /// One bit per sub-block; set when the block failed its CRC.
    pub sigma: BitBlock,
}

impl DecodeOutcome {
    pub fn r(&self) -> usize {
        self.sigma.count_ones()
    }

    /// Failed sub-block indices in ascending order.
    pub fn failed_blocks(&self) -> Vec<usize> {
        (0..self.sigma.len()).filter(|&i| self.sigma.get(i)).collect()
    }
}

/// `llr[j] = (1 - 2 y_j) · ln((1 - p) / p)`.
pub fn channel_llr(received: &BitBlock, qber: f64) -> Result<Vec<f64>> {
    if !(qber > 0.0 && qber < 0.5) {
        return invalid(format!("qber {qber} outside (0, 0.5)"));
    }
    let mag = ((1.0 - qber) / qber).ln();
    Ok(received.iter().map(|b| if b { -mag } else { mag }).collect())
}

const SIGN: u64 = 1 << 63;

#[inline]
fn f_approx(a: f64, b: f64) -> f64 {
    let (x, y) = (a.abs(), b.abs());
    let mag = if x < y { x } else { y };
    f64::from_bits(mag.to_bits() | ((a.to_bits() ^ b.to_bits()) & SIGN))
}

#[inline]
fn f_exact(a: f64, b: f64) -> f64 {
    f_approx(a, b) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

#[inline]
fn g(a: f64, b: f64, left: u8) -> f64 {
    b + f64::from_bits(a.to_bits() ^ (u64::from(left) << 63))
}

/// Metric increment for deciding `bit` at a leaf with LLR `llr`.
#[inline]
pub fn metric_increment(llr: f64, bit: u8, mode: MetricMode) -> f64 {
    match mode {
        MetricMode::Approx => {
            if (llr < 0.0) != (bit == 1) {
                llr.abs()
            } else {
                0.0
            }
        }
        MetricMode::Exact => {
            let s = if bit == 0 { llr } else { -llr };
            // ln(1 + e^{-s}), stable for both signs
            if s > 0.0 {
                (-s).exp().ln_1p()
            } else {
                -s + s.exp().ln_1p()
            }
        }
    }
}

/// A decoding path as seen by the list-management primitives.
#[derive(Clone, Debug, PartialEq)]
pub struct ListPath {
    pub decisions: Vec<u8>,
    pub metric: f64,
    /// Creation index; lower wins metric ties.
    pub id: u64,
}

/// Extends every path by both values of information bit `i`. Each input
/// path must have decided bits `0..i`; `leaf_llrs[p]` is path `p`'s LLR at
/// bit `i`. The zero branches keep their ids and come first; the one
/// branches follow in list order with fresh ids starting at `*next_id`.
pub fn fork(
    paths: Vec<ListPath>,
    i: usize,
    leaf_llrs: &[f64],
    mode: MetricMode,
    next_id: &mut u64,
) -> Vec<ListPath> {
    assert_eq!(paths.len(), leaf_llrs.len());
    let mut ones = Vec::with_capacity(paths.len());
    let mut out = Vec::with_capacity(2 * paths.len());
    for (p, &llr) in paths.into_iter().zip(leaf_llrs) {
        assert_eq!(p.decisions.len(), i);
        let mut one = p.clone();
        one.decisions.push(1);
        one.metric += metric_increment(llr, 1, mode);
        one.id = *next_id;
        *next_id += 1;
        ones.push(one);
        let mut zero = p;
        zero.decisions.push(0);
        zero.metric += metric_increment(llr, 0, mode);
        out.push(zero);
    }
    out.extend(ones);
    out
}

/// Keeps the `l` paths of smallest metric (ties: lower id). Survivors keep
/// their relative order.
pub fn prune(paths: Vec<ListPath>, l: usize) -> Vec<ListPath> {
    if paths.len() <= l {
        return paths;
    }
    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.sort_by(|&a, &b| {
        paths[a]
            .metric
            .total_cmp(&paths[b].metric)
            .then(paths[a].id.cmp(&paths[b].id))
    });
    let mut keep = vec![false; paths.len()];
    for &k in &order[..l] {
        keep[k] = true;
    }
    paths
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// Metrics are non-negative, so their bit patterns order like the values and
/// `(metric, id)` packs into one integer key.
#[inline]
fn pack(key: (f64, u64)) -> u128 {
    debug_assert!(key.0 >= 0.0);
    (u128::from(key.0.to_bits()) << 64) | u128::from(key.1)
}

fn select_best_into(keys: &[(f64, u64)], l: usize, keep: &mut Vec<bool>, scratch: &mut Vec<u128>) {
    keep.clear();
    if keys.len() <= l {
        keep.resize(keys.len(), true);
        return;
    }
    scratch.clear();
    scratch.extend(keys.iter().map(|&k| pack(k)));
    let (_, &mut cutoff, _) = scratch.select_nth_unstable(l - 1);
    keep.extend(keys.iter().map(|&k| pack(k) <= cutoff));
}

/// Fixed-size slots with reference counts; a path owns one slot per level.
struct Pool<T> {
    data: Vec<T>,
    width: usize,
    refs: Vec<u32>,
    free: Vec<u32>,
}

impl<T: Copy + Default> Pool<T> {
    fn new(slots: usize, width: usize) -> Self {
        Pool {
            data: vec![T::default(); slots * width],
            width,
            refs: vec![0; slots],
            free: (0..slots as u32).rev().collect(),
        }
    }

    fn acquire(&mut self) -> u32 {
        let s = self.free.pop().expect("slot pool exhausted");
        self.refs[s as usize] = 1;
        s
    }

    fn share(&mut self, s: u32) {
        self.refs[s as usize] += 1;
    }

    fn release(&mut self, s: u32) {
        let r = &mut self.refs[s as usize];
        *r -= 1;
        if *r == 0 {
            self.free.push(s);
        }
    }

    /// Makes `*s` exclusive. The contents of a fresh slot are stale.
    fn unshare(&mut self, s: &mut u32) {
        if self.refs[*s as usize] > 1 {
            self.refs[*s as usize] -= 1;
            *s = self.acquire();
        }
    }

    #[inline]
    fn slot(&self, s: u32) -> &[T] {
        &self.data[s as usize * self.width..(s as usize + 1) * self.width]
    }

    #[inline]
    fn slot_mut(&mut self, s: u32) -> &mut [T] {
        &mut self.data[s as usize * self.width..(s as usize + 1) * self.width]
    }
}

/// Finished sub-blocks of a path, newest first.
struct Finished {
    bits: BitBlock,
    prev: Option<Rc<Finished>>,
}

struct Path {
    /// Row of the slot tables owned by this path.
    handle: u32,
    /// List position before the latest information bit, and its value.
    parent: u32,
    bit: u8,
    finished: Option<Rc<Finished>>,
    metric: f64,
    id: u64,
    all_pass: bool,
}

impl Path {
    fn blocks(&self) -> Vec<&BitBlock> {
        let mut out = Vec::new();
        let mut node = self.finished.as_deref();
        while let Some(f) = node {
            out.push(&f.bits);
            node = f.prev.as_deref();
        }
        out.reverse();
        out
    }
}

struct Scl<'a> {
    root: &'a [f64],
    levels: usize,
    mode: MetricMode,
    /// `llr[s]` slots hold the 2^s LLRs of the active node at level `s`.
    llr: Vec<Pool<f64>>,
    /// `left[s]` slots hold the code bits of the last finished left child at level `s`.
    left: Vec<Pool<u8>>,
    /// Per handle, the slot used at each level.
    llr_slot: Vec<u32>,
    left_slot: Vec<u32>,
    free_handles: Vec<u32>,
}

impl<'a> Scl<'a> {
    fn new(root: &'a [f64], levels: usize, mode: MetricMode, list: usize) -> Self {
        Scl {
            root,
            levels,
            mode,
            llr: (0..levels).map(|s| Pool::new(list, 1 << s)).collect(),
            left: (0..levels).map(|s| Pool::new(list, 1 << s)).collect(),
            llr_slot: vec![0; list * levels],
            left_slot: vec![0; list * levels],
            free_handles: (0..list as u32).rev().collect(),
        }
    }

    fn new_path(&mut self) -> Path {
        let h = self.free_handles.pop().expect("handle pool exhausted");
        let base = h as usize * self.levels;
        for s in 0..self.levels {
            self.llr_slot[base + s] = self.llr[s].acquire();
            self.left_slot[base + s] = self.left[s].acquire();
        }
        Path {
            handle: h,
            parent: 0,
            bit: 0,
            finished: None,
            metric: 0.0,
            id: 0,
            all_pass: true,
        }
    }

    fn fork(&mut self, p: &Path) -> Path {
        let h = self.free_handles.pop().expect("handle pool exhausted");
        let (src, dst) = (p.handle as usize * self.levels, h as usize * self.levels);
        for s in 0..self.levels {
            let a = self.llr_slot[src + s];
            let b = self.left_slot[src + s];
            self.llr[s].share(a);
            self.left[s].share(b);
            self.llr_slot[dst + s] = a;
            self.left_slot[dst + s] = b;
        }
        Path {
            handle: h,
            parent: p.parent,
            bit: p.bit,
            finished: p.finished.clone(),
            metric: p.metric,
            id: p.id,
            all_pass: p.all_pass,
        }
    }

    fn drop_path(&mut self, p: Path) {
        let base = p.handle as usize * self.levels;
        for s in 0..self.levels {
            self.llr[s].release(self.llr_slot[base + s]);
            self.left[s].release(self.left_slot[base + s]);
        }
        self.free_handles.push(p.handle);
    }

    /// Runs the LLR recursion down to leaf `i` and returns its LLR.
    fn descend(&mut self, path: &Path, i: usize) -> f64 {
        let levels = self.levels;
        if levels == 0 {
            return self.root[0];
        }
        let base = path.handle as usize * levels;
        let top = if i == 0 { levels - 1 } else { i.trailing_zeros() as usize };
        for s in (0..=top).rev() {
            let half = 1usize << s;
            self.llr[s].unshare(&mut self.llr_slot[base + s]);
            let (lower, upper) = self.llr.split_at_mut(s + 1);
            let parent: &[f64] = if s + 1 == levels { self.root } else { upper[0].slot(self.llr_slot[base + s + 1]) };
            let (pa, pb) = parent.split_at(half);
            let child = lower[s].slot_mut(self.llr_slot[base + s]);
            if s == top && i != 0 {
                let left = self.left[s].slot(self.left_slot[base + s]);
                for (((c, &a), &b), &x) in child.iter_mut().zip(pa).zip(pb).zip(left) {
                    *c = g(a, b, x);
                }
            } else {
                match self.mode {
                    MetricMode::Approx => {
                        for ((c, &a), &b) in child.iter_mut().zip(pa).zip(pb) {
                            *c = f_approx(a, b);
                        }
                    }
                    MetricMode::Exact => {
                        for ((c, &a), &b) in child.iter_mut().zip(pa).zip(pb) {
                            *c = f_exact(a, b);
                        }
                    }
                }
            }
        }
        self.llr[0].slot(self.llr_slot[base])[0]
    }

    /// Records decision `bit` at leaf `i` and propagates partial sums.
    ///
    /// With `t` trailing ones in `i`, the finished node sits at level `t`
    /// and is a left child (or the root). Its code bits end with the bits of
    /// each finished node below it: the last 2^r positions hold the level-`r`
    /// node, preceded by that node XOR the stored left sibling.
    fn commit(&mut self, path: &Path, i: usize, bit: u8) {
        let top = (!i).trailing_zeros() as usize;
        if top >= self.levels {
            return;
        }
        let base = path.handle as usize * self.levels;
        self.left[top].unshare(&mut self.left_slot[base + top]);
        let (lower, upper) = self.left.split_at_mut(top);
        let x = upper[0].slot_mut(self.left_slot[base + top]);
        let end = x.len();
        x[end - 1] = bit;
        for (r, pool) in lower.iter().enumerate() {
            let h = 1usize << r;
            let (dst, src) = x[end - 2 * h..].split_at_mut(h);
            let sibling = pool.slot(self.left_slot[base + r]);
            for ((o, &a), &b) in dst.iter_mut().zip(sibling).zip(src.iter()) {
                *o = a ^ b;
            }
        }
    }
}

/// Decoder parameters that do not change between sessions.
#[derive(Clone, Debug)]
pub struct BcSclDecoder {
    pub list_size: usize,
    pub sub_blocks: usize,
    pub mode: MetricMode,
    crc: Crc,
}

impl BcSclDecoder {
    pub fn new(list_size: usize, sub_blocks: usize, crc: CrcSpec, mode: MetricMode) -> Result<Self> {
        if list_size == 0 {
            return invalid("list size must be at least 1");
        }
        if sub_blocks == 0 {
            return invalid("sub-block count must be at least 1");
        }
        Ok(BcSclDecoder {
            list_size,
            sub_blocks,
            mode,
            crc: Crc::new(crc),
        })
    }

    /// Decodes from channel LLRs given in transmission order.
    pub fn decode_llr(&self, llr: &[f64], frozen: &FrozenVector, tags: &TagVector) -> Result<DecodeOutcome> {
        let n = llr.len();
        let levels = check_pow2(n)? as usize;
        let m = self.sub_blocks;
        if frozen.n() != n {
            return invalid(format!("frozen vector length {} differs from n = {n}", frozen.n()));
        }
        if !n.is_multiple_of(m) {
            return invalid(format!("{m} sub-blocks do not divide n = {n}"));
        }
        if tags.len() != m {
            return invalid(format!("{} tags for {m} sub-blocks", tags.len()));
        }
        if tags.width != self.crc.spec().width {
            return invalid("tag width differs from CRC width");
        }
        let sub = n / m;
        let l = self.list_size;
        // Undo B so the recursion runs on x = u·F^{⊗log n}.
        let root = bit_reversal_permute_values(llr)?;
        let mut scl = Scl::new(&root, levels, self.mode, l);
        let mut paths = vec![scl.new_path()];
        let mut next = Vec::with_capacity(l);
        let mut next_id: u64 = 1;
        let mut u = BitBlock::zeros(n);
        let mut sigma = BitBlock::zeros(m);
        let mut leaf = Vec::with_capacity(l);
        let mut keys = Vec::with_capacity(2 * l);
        let mut keep = Vec::with_capacity(2 * l);
        let mut packed = Vec::with_capacity(2 * l);
        let mut alive = Vec::with_capacity(l);
        // Per information bit of the current sub-block: its offset and, for
        // each list position afterwards, `parent << 1 | bit`.
        let mut trace_at: Vec<usize> = Vec::with_capacity(sub);
        let mut trace: Vec<u32> = Vec::with_capacity(sub * l);
        let mut trace_len: Vec<usize> = Vec::with_capacity(sub);

        for block in 0..m {
            trace_at.clear();
            trace.clear();
            trace_len.clear();
            for j in 0..sub {
                let i = block * sub + j;
                leaf.clear();
                for p in paths.iter() {
                    leaf.push(scl.descend(p, i));
                }
                if !frozen.is_info(i) {
                    for (p, &lam) in paths.iter_mut().zip(&leaf) {
                        p.metric += metric_increment(lam, 0, self.mode);
                        scl.commit(p, i, 0);
                    }
                    continue;
                }
                // Candidate (p, 0) keeps the id; (p, 1) is a new path.
                keys.clear();
                for (idx, (p, &lam)) in paths.iter().zip(&leaf).enumerate() {
                    keys.push((p.metric + metric_increment(lam, 0, self.mode), p.id));
                    keys.push((p.metric + metric_increment(lam, 1, self.mode), next_id + idx as u64));
                }
                select_best_into(&keys, l, &mut keep, &mut packed);
                // Release pruned paths first so forks never need more than `l` slots.
                for (idx, p) in paths.drain(..).enumerate() {
                    if keep[2 * idx] || keep[2 * idx + 1] {
                        alive.push((idx, p));
                    } else {
                        scl.drop_path(p);
                    }
                }
                for (idx, mut p) in alive.drain(..) {
                    let (m0, m1) = (keys[2 * idx].0, keys[2 * idx + 1].0);
                    p.parent = idx as u32;
                    let (k0, k1) = (keep[2 * idx], keep[2 * idx + 1]);
                    if k0 && k1 {
                        let mut q = scl.fork(&p);
                        q.metric = m1;
                        q.id = next_id + idx as u64;
                        q.bit = 1;
                        scl.commit(&q, i, 1);
                        next.push(q);
                    }
                    if k0 {
                        p.metric = m0;
                        p.bit = 0;
                    } else {
                        p.metric = m1;
                        p.id = next_id + idx as u64;
                        p.bit = 1;
                    }
                    scl.commit(&p, i, p.bit);
                    next.push(p);
                }
                next_id += (keys.len() / 2) as u64;
                next.sort_unstable_by_key(|p| p.id);
                std::mem::swap(&mut paths, &mut next);
                trace_at.push(j);
                trace_len.push(paths.len());
                trace.extend(paths.iter().map(|p| p.parent << 1 | u32::from(p.bit)));
            }

            // Sub-block boundary: recover each path's decisions from the trace
            // and check them against the block's tag.
            let mut best: Option<(f64, u64, usize)> = None;
            let mut end = trace.len();
            let mut starts = Vec::with_capacity(trace_len.len());
            for &len in trace_len.iter().rev() {
                end -= len;
                starts.push(end);
            }
            starts.reverse();
            for (idx, p) in paths.iter_mut().enumerate() {
                let mut bits = BitBlock::zeros(sub);
                let mut pos = idx;
                for t in (0..trace_at.len()).rev() {
                    let e = trace[starts[t] + pos];
                    if e & 1 == 1 {
                        bits.set(trace_at[t], true);
                    }
                    pos = (e >> 1) as usize;
                }
                let pass = self.crc.compute(&bits) == tags.tags[block];
                p.all_pass &= pass;
                if pass && best.is_none_or(|(bm, bid, _)| (p.metric, p.id) < (bm, bid)) {
                    best = Some((p.metric, p.id, idx));
                }
                p.finished = Some(Rc::new(Finished {
                    bits,
                    prev: p.finished.take(),
                }));
            }
            match best {
                Some((_, _, idx)) => {
                    let done = &paths[idx].finished.as_ref().expect("block just finished").bits;
                    u.copy_from(block * sub, done);
                }
                None => sigma.set(block, true),
            }
        }

        let full = paths
            .iter()
            .filter(|p| p.all_pass)
            .min_by(|a, b| a.metric.total_cmp(&b.metric).then(a.id.cmp(&b.id)));
        if let Some(p) = full {
            for (block, bits) in p.blocks().into_iter().enumerate() {
                u.copy_from(block * sub, bits);
            }
            sigma = BitBlock::zeros(m);
        }
        Ok(DecodeOutcome { u_prime: u, sigma })
    }

    /// Decodes `received = K_B ⊕ Z` under BSC(`qber`) soft inputs.
    pub fn decode(
        &self,
        received: &BitBlock,
        frozen: &FrozenVector,
        tags: &TagVector,
        qber: f64,
    ) -> Result<DecodeOutcome> {
        let llr = channel_llr(received, qber)?;
        self.decode_llr(&llr, frozen, tags)
    }
}

/// One-shot decode with explicit parameters.
#[allow(clippy::too_many_arguments)]
pub fn decode(
    received: &BitBlock,
    frozen: &FrozenVector,
    tags: &TagVector,
    list_size: usize,
    sub_blocks: usize,
    qber: f64,
    crc: &CrcSpec,
) -> Result<DecodeOutcome> {
    BcSclDecoder::new(list_size, sub_blocks, *crc, MetricMode::Approx)?.decode(received, frozen, tags, qber)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crc::crc_tags;
    use crate::polar::encode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frozen(n: usize, k: usize, rng: &mut impl Rng) -> FrozenVector {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let mut info = BitBlock::zeros(n);
        for &i in &idx[..k] {
            info.set(i, true);
        }
        FrozenVector::from_info_mask(info)
    }

    fn random_u(v: &FrozenVector, rng: &mut impl Rng) -> BitBlock {
        let mut u = BitBlock::zeros(v.n());
        for i in v.info_positions() {
            u.set(i, rng.gen());
        }
        u
    }

    /// Leaf LLR of bit `i` computed from scratch by the SC recursion on
    /// natural-order LLRs, given decided bits `u[..i]`.
    fn leaf_llr(root: &[f64], u: &[u8], i: usize, mode: MetricMode) -> f64 {
        fn rec(l: &[f64], u: &[u8], i: usize, mode: MetricMode) -> f64 {
            let n = l.len();
            if n == 1 {
                return l[0];
            }
            let h = n / 2;
            if i < h {
                let child: Vec<f64> = (0..h)
                    .map(|j| match mode {
                        MetricMode::Approx => f_approx(l[j], l[j + h]),
                        MetricMode::Exact => f_exact(l[j], l[j + h]),
                    })
                    .collect();
                rec(&child, &u[..u.len().min(h)], i, mode)
            } else {
                let left_u = BitBlock::from_bits(&u[..h]);
                let mut x = left_u.clone();
                crate::polar::polar_transform_in_place(&mut x);
                let child: Vec<f64> = (0..h).map(|j| g(l[j], l[j + h], x.get(j) as u8)).collect();
                rec(&child, &u[h..], i - h, mode)
            }
        }
        rec(root, &u[..i], i, mode)
    }

    /// Straightforward BC-SCL on `ListPath`s built from `fork` / `prune`,
    /// recomputing every leaf LLR from scratch.
    fn reference_decode(
        llr: &[f64],
        v: &FrozenVector,
        tags: &TagVector,
        l: usize,
        m: usize,
        crc: &Crc,
        mode: MetricMode,
    ) -> DecodeOutcome {
        let n = llr.len();
        let root = bit_reversal_permute_values(llr).unwrap();
        let sub = n / m;
        let mut paths = vec![ListPath { decisions: vec![], metric: 0.0, id: 0 }];
        let mut next_id = 1;
        let mut u = BitBlock::zeros(n);
        let mut sigma = BitBlock::zeros(m);
        let mut pass_all: Vec<(u64, bool)> = vec![(0, true)];
        for block in 0..m {
            for j in 0..sub {
                let i = block * sub + j;
                let leaves: Vec<f64> = paths.iter().map(|p| leaf_llr(&root, &p.decisions, i, mode)).collect();
                if !v.is_info(i) {
                    for (p, &lam) in paths.iter_mut().zip(&leaves) {
                        p.decisions.push(0);
                        p.metric += metric_increment(lam, 0, mode);
                    }
                } else {
                    let before: Vec<u64> = paths.iter().map(|p| p.id).collect();
                    paths = fork(paths, i, &leaves, mode, &mut next_id);
                    // new paths inherit their parent's pass flag
                    let k = before.len();
                    for idx in 0..k {
                        let flag = pass_all.iter().find(|e| e.0 == before[idx]).unwrap().1;
                        pass_all.push((paths[k + idx].id, flag));
                    }
                    paths = prune(paths, l);
                    paths.sort_by_key(|p| p.id);
                }
            }
            let mut best: Option<&ListPath> = None;
            for p in &paths {
                let bits = BitBlock::from_bits(&p.decisions[block * sub..(block + 1) * sub]);
                let pass = crc.compute(&bits) == tags.tags[block];
                let e = pass_all.iter_mut().find(|e| e.0 == p.id).unwrap();
                e.1 &= pass;
                if pass && best.is_none_or(|b| (p.metric, p.id) < (b.metric, b.id)) {
                    best = Some(p);
                }
            }
            match best {
                Some(p) => u.copy_from(block * sub, &BitBlock::from_bits(&p.decisions[block * sub..(block + 1) * sub])),
                None => sigma.set(block, true),
            }
        }
        let full = paths
            .iter()
            .filter(|p| pass_all.iter().find(|e| e.0 == p.id).unwrap().1)
            .min_by(|a, b| a.metric.total_cmp(&b.metric).then(a.id.cmp(&b.id)));
        if let Some(p) = full {
            u = BitBlock::from_bits(&p.decisions);
            sigma = BitBlock::zeros(m);
        }
        DecodeOutcome { u_prime: u, sigma }
    }

    fn bsc(n: usize, p: f64, rng: &mut impl Rng) -> BitBlock {
        BitBlock::from_bools((0..n).map(|_| rng.gen_bool(p)))
    }

    #[test]
    fn llr_values() {
        let l = channel_llr(&BitBlock::from_bits(&[0, 1]), 0.02).unwrap();
        assert!((l[0] - 49f64.ln()).abs() < 1e-12);
        assert!((l[0] - 3.8918).abs() < 1e-4);
        assert!((l[1] + 3.8918).abs() < 1e-4);
        let near = channel_llr(&BitBlock::from_bits(&[0]), 0.5 - 1e-9).unwrap();
        assert!(near[0].abs() < 1e-8);
        assert!(channel_llr(&BitBlock::zeros(2), 0.5).is_err());
        assert!(channel_llr(&BitBlock::zeros(2), 0.0).is_err());
    }

    #[test]
    fn exact_increment_matches_log_probability() {
        for &lam in &[-30.0f64, -2.5, -0.1, 0.0, 0.4, 7.0, 30.0] {
            let p0 = 1.0 / (1.0 + (-lam).exp());
            let p1 = 1.0 / (1.0 + lam.exp());
            let inc0 = metric_increment(lam, 0, MetricMode::Exact);
            let inc1 = metric_increment(lam, 1, MetricMode::Exact);
            assert!((inc0 + p0.ln()).abs() < 1e-9, "λ={lam}");
            assert!((inc1 + p1.ln()).abs() < 1e-9, "λ={lam}");
        }
    }

    #[test]
    fn fork_doubles_and_prune_keeps_best() {
        let mut next = 1;
        let one = vec![ListPath { decisions: vec![], metric: 0.0, id: 0 }];
        let two = fork(one, 0, &[2.0], MetricMode::Approx, &mut next);
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].metric, 0.0);
        assert_eq!(two[1].metric, 2.0);
        assert_eq!(two[1].decisions, vec![1]);

        let paths: Vec<ListPath> = (0..8)
            .map(|k| ListPath { decisions: vec![], metric: [5.0, 1.0, 7.0, 3.0, 0.5, 9.0, 2.0, 4.0][k], id: k as u64 })
            .collect();
        let doubled = fork(paths.clone(), 0, &[1.0; 8], MetricMode::Approx, &mut next);
        assert_eq!(doubled.len(), 16);
        assert_eq!(prune(paths.clone(), 8), paths);
        let kept = prune(paths.clone(), 4);
        let mut metrics: Vec<f64> = kept.iter().map(|p| p.metric).collect();
        metrics.sort_by(f64::total_cmp);
        assert_eq!(metrics, vec![0.5, 1.0, 2.0, 3.0]);
        let single = prune(paths, 1);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].metric, 0.5);
        // ties resolve to the older path
        let tied: Vec<ListPath> = (0..4).map(|k| ListPath { decisions: vec![], metric: 1.0, id: 10 - k }).collect();
        let kept = prune(tied, 2);
        assert_eq!(kept.iter().map(|p| p.id).collect::<Vec<_>>(), vec![8, 7]);
    }

    #[test]
    fn fork_branch_metrics_track_exact_recursion() {
        // n = 4: approximate increments against exact -ln Pr for both branches.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let llr: Vec<f64> = (0..4).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let root = bit_reversal_permute_values(&llr).unwrap();
            let lam_exact = leaf_llr(&root, &[], 0, MetricMode::Exact);
            let lam_approx = leaf_llr(&root, &[], 0, MetricMode::Approx);
            let likely = if lam_exact < 0.0 { 1 } else { 0 };
            assert!(metric_increment(lam_approx, likely, MetricMode::Approx) == 0.0 || lam_approx.signum() != lam_exact.signum());
            let exact_unlikely = metric_increment(lam_exact, 1 - likely, MetricMode::Exact);
            let approx_unlikely = metric_increment(lam_approx, 1 - likely, MetricMode::Approx);
            assert!((exact_unlikely - approx_unlikely).abs() <= 2.0 * std::f64::consts::LN_2 + 1e-9);
            assert!(metric_increment(lam_exact, likely, MetricMode::Exact) <= std::f64::consts::LN_2 + 1e-12);
        }
    }

    #[test]
    fn exact_metric_is_negative_log_probability() {
        // Full path metric in exact mode equals -ln P(u | y) with u uniform.
        let n = 8;
        let p = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = BitBlock::random(n, &mut rng);
        let llr = channel_llr(&y, p).unwrap();
        let root = bit_reversal_permute_values(&llr).unwrap();
        let zero = BitBlock::zeros(n);
        let lik = |u: u64| {
            let c = encode(&BitBlock::from_words(vec![u], n), &zero).unwrap();
            let d = c.hamming_distance(&y) as i32;
            p.powi(d) * (1.0 - p).powi(n as i32 - d)
        };
        let total: f64 = (0..1u64 << n).map(lik).sum();
        for u in [0u64, 5, 77, 255] {
            let bits = BitBlock::from_words(vec![u], n).to_bits();
            let mut metric = 0.0;
            for i in 0..n {
                metric += metric_increment(leaf_llr(&root, &bits, i, MetricMode::Exact), bits[i], MetricMode::Exact);
            }
            let expect = -(lik(u) / total).ln();
            assert!((metric - expect).abs() < 1e-9, "u={u}: {metric} vs {expect}");
        }
    }

    #[test]
    fn noiseless_decoding_recovers_u() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1 << 10;
        let v = random_frozen(n, 700, &mut rng);
        let spec = CrcSpec::crc32();
        let u = random_u(&v, &mut rng);
        let tags = crc_tags(&u, 4, &spec).unwrap();
        let received = encode(&u, &BitBlock::zeros(n)).unwrap();
        for l in [1usize, 4, 16] {
            let out = decode(&received, &v, &tags, l, 4, 0.02, &spec).unwrap();
            assert_eq!(out.u_prime, u);
            assert_eq!(out.r(), 0);
        }
    }

    #[test]
    fn matches_reference_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = CrcSpec::generic(8).unwrap();
        let crc = Crc::new(spec);
        for trial in 0..300 {
            let n = [16usize, 32, 64][trial % 3];
            let m = [1usize, 2, 4][(trial / 3) % 3];
            let l = [1usize, 2, 4, 8][(trial / 9) % 4];
            let mode = if trial % 2 == 0 { MetricMode::Approx } else { MetricMode::Exact };
            let k = rng.gen_range(0..=n);
            let v = random_frozen(n, k, &mut rng);
            let u = random_u(&v, &mut rng);
            let tags = crc.tags(&u, m).unwrap();
            let y = &encode(&u, &BitBlock::zeros(n)).unwrap() ^ &bsc(n, 0.08, &mut rng);
            let llr = channel_llr(&y, 0.08).unwrap();
            let dec = BcSclDecoder::new(l, m, spec, mode).unwrap();
            let fast = dec.decode_llr(&llr, &v, &tags).unwrap();
            let slow = reference_decode(&llr, &v, &tags, l, m, &crc, mode);
            if fast != slow { eprintln!("DBG u={:?} v={:?} tags={:?} fasttags={:?} slowtags={:?}", u, v.info_mask(), tags, crc.tags(&fast.u_prime, m).unwrap(), crc.tags(&slow.u_prime, m).unwrap()); }
            assert_eq!(fast, slow, "trial {trial}: n={n} m={m} l={l} k={k}");
        }
    }

    #[test]
    fn sigma_zero_implies_crc_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = CrcSpec::generic(6).unwrap();
        let crc = Crc::new(spec);
        let n = 256;
        let m = 8;
        for _ in 0..200 {
            let v = random_frozen(n, 150, &mut rng);
            let u = random_u(&v, &mut rng);
            let tags = crc.tags(&u, m).unwrap();
            let y = &encode(&u, &BitBlock::zeros(n)).unwrap() ^ &bsc(n, 0.06, &mut rng);
            let out = BcSclDecoder::new(4, m, spec, MetricMode::Approx).unwrap().decode(&y, &v, &tags, 0.06).unwrap();
            let got = crc.tags(&out.u_prime, m).unwrap();
            for b in 0..m {
                if !out.sigma.get(b) {
                    assert_eq!(got.tags[b], tags.tags[b]);
                }
            }
        }
    }

    #[test]
    fn random_tags_fail_every_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 1 << 10;
        let m = 8;
        let v = random_frozen(n, 600, &mut rng);
        let u = random_u(&v, &mut rng);
        let tags = TagVector { width: 32, tags: (0..m).map(|_| rng.gen::<u32>() as u64).collect() };
        let y = encode(&u, &BitBlock::zeros(n)).unwrap();
        let out = decode(&y, &v, &tags, 16, m, 0.02, &CrcSpec::crc32()).unwrap();
        assert_eq!(out.r(), m);
        assert_eq!(out.failed_blocks(), (0..m).collect::<Vec<_>>());
    }

    #[test]
    fn argument_errors() {
        let v = FrozenVector::all_frozen(16);
        let tags = crc_tags(&BitBlock::zeros(16), 2, &CrcSpec::crc32()).unwrap();
        let y = BitBlock::zeros(16);
        assert!(decode(&y, &v, &tags, 0, 2, 0.02, &CrcSpec::crc32()).is_err());
        assert!(decode(&y, &v, &tags, 4, 4, 0.02, &CrcSpec::crc32()).is_err());
        assert!(decode(&y, &v, &tags, 4, 3, 0.02, &CrcSpec::crc32()).is_err());
        assert!(decode(&BitBlock::zeros(8), &v, &tags, 4, 2, 0.02, &CrcSpec::crc32()).is_err());
        assert!(decode(&y, &v, &tags, 4, 2, 0.7, &CrcSpec::crc32()).is_err());
        let out = decode(&y, &v, &tags, 4, 2, 0.02, &CrcSpec::crc32()).unwrap();
        assert!(out.u_prime.is_zero());
        assert_eq!(out.r(), 0);
    }
}
