//! Sum-product decoding of an error pattern from its syndrome.

use super::{syndrome, ParityCheckMatrix};
use crate::bits::BitBlock;
use crate::error::{invalid, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;

/// Message magnitude cap.
const CLIP: f64 = 30.0;

/// Smallest magnitude fed to `phi`, keeping it finite.
const PHI_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyndromeDecode {
    pub corrected: BitBlock,
    pub converged: bool,
    pub iterations: usize,
}

/// `phi(x) = −ln tanh(x / 2)`, its own inverse on `x > 0`.
#[inline]
fn phi(x: f64) -> f64 {
    let x = x.clamp(PHI_FLOOR, CLIP);
    let t = (-x).exp();
    t.ln_1p() - (-(-x).exp_m1()).ln()
}

/// Message-passing order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// Checks update one after another against the latest beliefs.
    #[default]
    Layered,
    /// All checks update, then all variables.
    Flooding,
}

/// Moves `x` toward the block whose syndrome is `target`, with the default
/// schedule.
///
/// The residual `H·x ⊕ target` is the syndrome of the unknown difference
/// pattern, whose bits are i.i.d. with crossover `qber`; BP estimates that
/// pattern and `corrected = x ⊕ ê`. `converged` holds exactly when
/// `H·corrected = target`. A zero `qber` makes the decoder a hard syndrome
/// check.
pub fn decode_syndrome(
    h: &ParityCheckMatrix,
    x: &BitBlock,
    target: &BitBlock,
    qber: f64,
    max_iters: usize,
) -> Result<SyndromeDecode> {
    decode_syndrome_with(h, x, target, qber, max_iters, Schedule::default())
}

pub fn decode_syndrome_with(
    h: &ParityCheckMatrix,
    x: &BitBlock,
    target: &BitBlock,
    qber: f64,
    max_iters: usize,
    schedule: Schedule,
) -> Result<SyndromeDecode> {
    if target.len() != h.rows() {
        return invalid(format!("syndrome of {} bits for {} checks", target.len(), h.rows()));
    }
    if !(0.0..0.5).contains(&qber) {
        return invalid(format!("qber {qber} outside [0, 0.5)"));
    }
    let residual = &syndrome(h, x)? ^ target;
    if residual.is_zero() || qber == 0.0 {
        return Ok(SyndromeDecode {
            corrected: x.clone(),
            converged: residual.is_zero(),
            iterations: 0,
        });
    }
    let prior = ((1.0 - qber) / qber).ln().min(CLIP);
    let flip: Vec<bool> = residual.iter().collect();
    let (guess, converged, iterations) = match schedule {
        Schedule::Layered => layered(h, &flip, prior, max_iters),
        Schedule::Flooding => flooding(h, &flip, prior, max_iters),
    };
    Ok(SyndromeDecode {
        corrected: x ^ &BitBlock::from_bools(guess.iter().copied()),
        converged,
        iterations,
    })
}

fn satisfied(h: &ParityCheckMatrix, flip: &[bool], guess: &[bool]) -> bool {
    flip.iter().enumerate().all(|(c, &want)| {
        let lo = h.row_ptr[c] as usize;
        let hi = h.row_ptr[c + 1] as usize;
        h.row_idx[lo..hi].iter().fold(false, |acc, &v| acc ^ guess[v as usize]) == want
    })
}

/// Check-node rule: writes the extrinsic outputs for `incoming` into `out`.
#[inline]
fn check_update(negate: bool, incoming: &[f64], phis: &mut Vec<f64>, out: &mut [f64]) {
    phis.clear();
    let mut total = 0.0;
    let mut negative = negate;
    for &m in incoming {
        let p = phi(m.abs());
        phis.push(p);
        total += p;
        negative ^= m < 0.0;
    }
    for ((o, &m), &p) in out.iter_mut().zip(incoming).zip(phis.iter()) {
        let mag = phi(total - p);
        *o = if negative ^ (m < 0.0) { -mag } else { mag };
    }
}

fn layered(h: &ParityCheckMatrix, flip: &[bool], prior: f64, max_iters: usize) -> (Vec<bool>, bool, usize) {
    let mut post = vec![prior; h.cols()];
    // Check-to-variable messages in row order.
    let mut c2v = vec![0.0f64; h.edges()];
    let mut incoming: Vec<f64> = Vec::new();
    let mut outgoing: Vec<f64> = Vec::new();
    let mut phis: Vec<f64> = Vec::new();
    let mut guess = vec![false; h.cols()];
    for it in 1..=max_iters {
        for (c, &negate) in flip.iter().enumerate() {
            let lo = h.row_ptr[c] as usize;
            let hi = h.row_ptr[c + 1] as usize;
            let vars = &h.row_idx[lo..hi];
            incoming.clear();
            incoming.extend(
                vars.iter()
                    .zip(&c2v[lo..hi])
                    .map(|(&v, &m)| (post[v as usize] - m).clamp(-CLIP, CLIP)),
            );
            outgoing.resize(incoming.len(), 0.0);
            check_update(negate, &incoming, &mut phis, &mut outgoing);
            for (((&v, m), &inc), &out) in vars.iter().zip(&mut c2v[lo..hi]).zip(&incoming).zip(&outgoing) {
                post[v as usize] = inc + out;
                *m = out;
            }
        }
        for (g, &p) in guess.iter_mut().zip(&post) {
            *g = p < 0.0;
        }
        if satisfied(h, flip, &guess) {
            return (guess, true, it);
        }
    }
    (guess, false, max_iters)
}

fn flooding(h: &ParityCheckMatrix, flip: &[bool], prior: f64, max_iters: usize) -> (Vec<bool>, bool, usize) {
    // Messages in column (edge) order.
    let mut v2c = vec![prior; h.edges()];
    let mut c2v = vec![0.0f64; h.edges()];
    let mut incoming: Vec<f64> = Vec::new();
    let mut outgoing: Vec<f64> = Vec::new();
    let mut phis: Vec<f64> = Vec::new();
    let mut guess = vec![false; h.cols()];
    for it in 1..=max_iters {
        for (c, &negate) in flip.iter().enumerate() {
            let lo = h.row_ptr[c] as usize;
            let hi = h.row_ptr[c + 1] as usize;
            let edges = &h.row_edges[lo..hi];
            incoming.clear();
            incoming.extend(edges.iter().map(|&e| v2c[e as usize]));
            outgoing.resize(incoming.len(), 0.0);
            check_update(negate, &incoming, &mut phis, &mut outgoing);
            for (&e, &out) in edges.iter().zip(&outgoing) {
                c2v[e as usize] = out;
            }
        }
        for (j, g) in guess.iter_mut().enumerate() {
            let lo = h.col_ptr[j] as usize;
            let hi = h.col_ptr[j + 1] as usize;
            let belief = prior + c2v[lo..hi].iter().sum::<f64>();
            *g = belief < 0.0;
            for e in lo..hi {
                v2c[e] = (belief - c2v[e]).clamp(-CLIP, CLIP);
            }
        }
        if satisfied(h, flip, &guess) {
            return (guess, true, it);
        }
    }
    (guess, false, max_iters)
}
