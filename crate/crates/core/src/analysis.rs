//! Closed-form efficiency, yield and correctness evaluators.

use serde::Serialize;

use crate::error::{invalid, Result};

/// `H2(x)` in bits, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return invalid(format!("entropy argument {x} outside [0, 1]"));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Expected distillable fraction `(1 − eps)(1 − f·H2(qber))`.
pub fn yield_gamma(eps: f64, f: f64, qber: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return invalid(format!("failure probability {eps} outside [0, 1]"));
    }
    if f.is_nan() || f < 0.0 {
        return invalid(format!("efficiency {f} is negative"));
    }
    Ok((1.0 - eps) * (1.0 - f * binary_entropy(qber)?))
}

/// Parameters shared by the bound and efficiency evaluators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Forward-phase failure rate.
    pub eps_f: f64,
    /// Acknowledgment-phase failure rate.
    pub eps_a: f64,
    pub list_size: usize,
    pub crc_bits: u32,
    pub sub_blocks: usize,
    pub n: usize,
    /// Forward-phase efficiency.
    pub f_fwd: f64,
    /// Acknowledgment-code efficiency.
    pub f_ack: f64,
    pub qber: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("eps_f", self.eps_f), ("eps_a", self.eps_a)] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.list_size == 0 || self.sub_blocks == 0 || self.n == 0 {
            return invalid("list size, sub-block count and length must be positive");
        }
        if (self.list_size as f64).log2() > self.crc_bits as f64 {
            return invalid(format!(
                "a {}-bit check cannot separate a list of {}",
                self.crc_bits, self.list_size
            ));
        }
        if !(self.qber > 0.0 && self.qber < 0.5) {
            return invalid(format!("qber {} outside (0, 0.5)", self.qber));
        }
        Ok(())
    }

    fn overhead_per_block(&self) -> Result<f64> {
        Ok((self.crc_bits as f64 + 1.0) / (self.n as f64 * binary_entropy(self.qber)?))
    }
}

/// `ε_f·[1 − (1 − l/2^d)^m + ε_a]`, evaluated without cancellation.
pub fn epsilon_bound(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    let collide = b.list_size as f64 * (-(b.crc_bits as f64)).exp2();
    let miss = -(b.sub_blocks as f64 * (-collide).ln_1p()).exp_m1();
    Ok(b.eps_f * (miss + b.eps_a))
}

/// `f_fwd + m(d + 1)/(n·H2) + ε_f·f_ack·r/m`.
pub fn total_efficiency(b: &BoundInputs, r: usize) -> Result<f64> {
    b.validate()?;
    if r > b.sub_blocks {
        return invalid(format!("{r} failed blocks out of {}", b.sub_blocks));
    }
    let m = b.sub_blocks as f64;
    Ok(b.f_fwd + m * b.overhead_per_block()? + b.eps_f * b.f_ack * r as f64 / m)
}

/// Efficiency gained by splitting into `m` sub-blocks instead of one:
/// `−(m − 1)(d + 1)/(n·H2) + ε_f·f_ack·(m − r)/m`.
pub fn efficiency_yield(b: &BoundInputs, r: usize) -> Result<f64> {
    b.validate()?;
    if r > b.sub_blocks {
        return invalid(format!("{r} failed blocks out of {}", b.sub_blocks));
    }
    let m = b.sub_blocks as f64;
    Ok(-(m - 1.0) * b.overhead_per_block()? + b.eps_f * b.f_ack * (m - r as f64) / m)
}

/// Leaked bits per `n·H2(qber)`.
pub fn measured_efficiency(leaked_bits: u64, n: usize, qber: f64) -> Result<f64> {
    if n == 0 {
        return invalid("zero block length");
    }
    if !(qber > 0.0 && qber < 0.5) {
        return invalid(format!("qber {qber} outside (0, 0.5)"));
    }
    Ok(leaked_bits as f64 / (n as f64 * binary_entropy(qber)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonPoint {
    pub sub_blocks: usize,
    pub crc_bits: u32,
    pub epsilon: f64,
}

/// Correctness bound over `crc_bits` for each sub-block count.
pub fn epsilon_sweep(base: &BoundInputs, sub_blocks: &[usize], crc_bits: std::ops::RangeInclusive<u32>) -> Result<Vec<EpsilonPoint>> {
    let mut out = Vec::new();
    for &m in sub_blocks {
        for d in crc_bits.clone() {
            let b = BoundInputs {
                sub_blocks: m,
                crc_bits: d,
                ..*base
            };
            out.push(EpsilonPoint {
                sub_blocks: m,
                crc_bits: d,
                epsilon: epsilon_bound(&b)?,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YieldPoint {
    pub n: usize,
    pub eps_f: f64,
    pub efficiency_yield: f64,
}

/// Efficiency yield over block lengths for each forward failure rate.
pub fn yield_sweep(base: &BoundInputs, lengths: &[usize], eps_fs: &[f64], r: usize) -> Result<Vec<YieldPoint>> {
    let mut out = Vec::new();
    for &eps_f in eps_fs {
        for &n in lengths {
            let b = BoundInputs { n, eps_f, ..*base };
            out.push(YieldPoint {
                n,
                eps_f,
                efficiency_yield: efficiency_yield(&b, r)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn base() -> BoundInputs {
        BoundInputs {
            eps_f: 0.01,
            eps_a: 1e-6,
            list_size: 16,
            crc_bits: 32,
            sub_blocks: 32,
            n: 1 << 20,
            f_fwd: 1.10,
            f_ack: 1.2,
            qber: 0.02,
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_relative_eq!(binary_entropy(0.02).unwrap(), 0.141_440, epsilon = 1e-6);
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn yield_matches_reported_rows() {
        assert_relative_eq!(yield_gamma(0.0, 1.091, 0.01).unwrap(), 0.912, epsilon = 1e-3);
        // Reported yields use the overall correctness, which is negligible.
        assert_relative_eq!(yield_gamma(1e-8, 1.146, 0.02).unwrap(), 0.838, epsilon = 1e-3);
        let h2 = binary_entropy(0.02).unwrap();
        assert_relative_eq!(yield_gamma(0.005, 1.146, 0.02).unwrap(), 0.995 * (1.0 - 1.146 * h2), max_relative = 1e-14);
        assert_eq!(yield_gamma(1.0, 1.1, 0.05).unwrap(), 0.0);
        assert!(yield_gamma(1.1, 1.0, 0.05).is_err());
    }

    #[test]
    fn epsilon_bound_floor_at_wide_checks() {
        let b = BoundInputs { crc_bits: 36, ..base() };
        let eps = epsilon_bound(&b).unwrap();
        assert!((1.0e-8..1.1e-8).contains(&eps), "{eps}");
        let one = BoundInputs { sub_blocks: 1, crc_bits: 64, ..base() };
        assert_relative_eq!(epsilon_bound(&one).unwrap(), 0.01 * 1e-6, max_relative = 1e-6);
        let bad = BoundInputs { crc_bits: 3, ..base() };
        assert!(epsilon_bound(&bad).is_err());
    }

    #[test]
    fn efficiency_hand_arithmetic() {
        let b = BoundInputs { f_fwd: 1.10, f_ack: 1.2, eps_f: 0.01, ..base() };
        let h2 = -(0.02f64 * 0.02f64.log2() + 0.98f64 * 0.98f64.log2());
        let overhead = 32.0 * 33.0 / (1048576.0 * h2);
        let expect = 1.10 + overhead + 0.01 * 1.2 / 32.0;
        assert_relative_eq!(total_efficiency(&b, 1).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(total_efficiency(&b, 1).unwrap(), 1.10749, epsilon = 1e-5);
        assert!(total_efficiency(&b, 33).is_err());
    }

    #[test]
    fn single_block_matches_unsplit_formula() {
        let b = BoundInputs { sub_blocks: 1, ..base() };
        let h2 = binary_entropy(0.02).unwrap();
        let unsplit = b.f_fwd + 33.0 / (b.n as f64 * h2) + b.eps_f * b.f_ack;
        assert_relative_eq!(total_efficiency(&b, 1).unwrap(), unsplit, max_relative = 1e-14);
        assert_eq!(efficiency_yield(&b, 0).unwrap() - b.eps_f * b.f_ack, 0.0);
        assert_eq!(efficiency_yield(&b, 1).unwrap(), 0.0);
    }

    #[test]
    fn measured_efficiency_limits() {
        let n = 1 << 16;
        let h = binary_entropy(0.05).unwrap();
        let shannon = (n as f64 * h).round() as u64;
        assert_relative_eq!(measured_efficiency(shannon, n, 0.05).unwrap(), 1.0, epsilon = 1e-4);
        assert_eq!(measured_efficiency(0, n, 0.05).unwrap(), 0.0);
        assert!(measured_efficiency(10, n, 0.0).is_err());
    }

    #[test]
    fn sweeps_cover_grid() {
        let pts = epsilon_sweep(&base(), &[1, 8], 4..=40).unwrap();
        assert_eq!(pts.len(), 74);
        let ys = yield_sweep(&base(), &[1 << 20, 1 << 24], &[0.01, 0.1], 0).unwrap();
        assert_eq!(ys.len(), 4);
        assert!(ys[1].efficiency_yield > ys[0].efficiency_yield);
    }

    fn inputs() -> impl Strategy<Value = BoundInputs> {
        (0.0..1.0f64, 0.0..1.0f64, 0u32..7, 0u32..20, 1usize..200, 0.005..0.2f64).prop_map(
            |(eps_f, eps_a, log_l, extra_d, m, qber)| BoundInputs {
                eps_f,
                eps_a,
                list_size: 1 << log_l,
                crc_bits: log_l.max(1) + extra_d,
                sub_blocks: m,
                n: 1 << 20,
                f_fwd: 1.1,
                f_ack: 1.3,
                qber,
            },
        )
    }

    proptest! {
        #[test]
        fn epsilon_bound_is_monotone(b in inputs()) {
            let e = epsilon_bound(&b).unwrap();
            let more_m = BoundInputs { sub_blocks: b.sub_blocks + 1, ..b };
            prop_assert!(epsilon_bound(&more_m).unwrap() >= e);
            let more_l = BoundInputs { list_size: b.list_size * 2, crc_bits: b.crc_bits + 1, ..b };
            let wider = BoundInputs { crc_bits: b.crc_bits + 1, ..b };
            prop_assert!(epsilon_bound(&wider).unwrap() <= e);
            prop_assert!(epsilon_bound(&more_l).unwrap() >= epsilon_bound(&wider).unwrap());
            let more_f = BoundInputs { eps_f: (b.eps_f + 0.1).min(1.0), ..b };
            prop_assert!(epsilon_bound(&more_f).unwrap() >= e);
            let more_a = BoundInputs { eps_a: (b.eps_a + 0.1).min(1.0), ..b };
            prop_assert!(epsilon_bound(&more_a).unwrap() >= e);
        }

        #[test]
        fn yield_identity_at_zero_failure(f in 0.0..3.0f64, q in 0.001..0.499f64) {
            let g = yield_gamma(0.0, f, q).unwrap();
            prop_assert!((g + f * binary_entropy(q).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn split_gain_is_efficiency_difference(b in inputs(), r_frac in 0.0..1.0f64) {
            let r = (r_frac * b.sub_blocks as f64).floor() as usize;
            let single = BoundInputs { sub_blocks: 1, ..b };
            let gain = total_efficiency(&single, 1).unwrap() - total_efficiency(&b, r).unwrap();
            prop_assert!((gain - efficiency_yield(&b, r).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn yield_grows_with_length(b in inputs(), r_frac in 0.0..1.0f64) {
            let r = (r_frac * b.sub_blocks as f64).floor() as usize;
            let longer = BoundInputs { n: b.n * 2, ..b };
            prop_assert!(efficiency_yield(&longer, r).unwrap() >= efficiency_yield(&b, r).unwrap());
        }
    }
}
