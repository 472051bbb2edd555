//! Named LDPC codes tagged with the largest QBER each is trusted to correct.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_alist, peg, save_alist, ParityCheckMatrix, DEFAULT_PEG_DEPTH};
use crate::analysis::binary_entropy;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug)]
pub struct RegisteredCode {
    pub name: String,
    /// Largest QBER the code is designed to correct.
    pub threshold: f64,
    pub matrix: Arc<ParityCheckMatrix>,
}

impl RegisteredCode {
    /// Syndrome bits per sifted bit relative to `H2(qber)`.
    pub fn efficiency(&self, qber: f64) -> Result<f64> {
        let h = binary_entropy(qber)?;
        if h == 0.0 {
            return invalid("efficiency undefined at zero entropy");
        }
        Ok(self.matrix.rows() as f64 / self.matrix.cols() as f64 / h)
    }
}

#[derive(Clone, Debug, Default)]
pub struct CodeRegistry {
    codes: Vec<RegisteredCode>,
    /// A code qualifies for `qber` when `threshold ≥ qber + margin`.
    pub margin: f64,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    threshold: f64,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Index {
    margin: f64,
    codes: Vec<IndexEntry>,
}

const INDEX_FILE: &str = "registry.json";

/// Column degrees: a fifth at degree 6, the rest at degree 3. No degree-2
/// columns, since cycles among them are low-weight codewords.
fn column_profile(cols: usize) -> Vec<usize> {
    let n6 = (cols as f64 * 0.2).round() as usize;
    (0..cols).map(|j| if j < n6 { 6 } else { 3 }).collect()
}

/// Syndrome budget, relative to `H2(qber)`, at which the registry's codes of
/// length 2^15 converge reliably. Low QBERs need more slack because a block
/// holds fewer expected errors.
pub fn design_efficiency(qber: f64) -> f64 {
    1.35 + 0.003 / qber
}

impl CodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, code: RegisteredCode) {
        self.codes.push(code);
    }

    pub fn codes(&self) -> &[RegisteredCode] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// One PEG code of length `cols` per QBER, with `⌈efficiency·H2(q)·cols⌉`
    /// checks and threshold `q`. `efficiency` defaults to
    /// [`design_efficiency`].
    pub fn design(cols: usize, qbers: &[f64], efficiency: Option<f64>, seed: u64) -> Result<Self> {
        if let Some(e) = efficiency.filter(|&e| e < 1.0) {
            return invalid(format!("efficiency {e} below the Shannon limit"));
        }
        let built: Vec<Result<RegisteredCode>> = qbers
            .par_iter()
            .enumerate()
            .map(|(i, &q)| {
                let efficiency = efficiency.unwrap_or_else(|| design_efficiency(q));
                let rows = (efficiency * binary_entropy(q)? * cols as f64).ceil() as usize;
                let matrix = peg(rows, &column_profile(cols), DEFAULT_PEG_DEPTH, seed ^ i as u64)?;
                Ok(RegisteredCode {
                    name: format!("peg-{cols}-q{q:.3}"),
                    threshold: q,
                    matrix: Arc::new(matrix),
                })
            })
            .collect();
        let mut reg = CodeRegistry::new();
        for code in built {
            reg.push(code?);
        }
        Ok(reg)
    }

    /// Writes `registry.json` and one alist file per code into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut index = Index {
            margin: self.margin,
            codes: Vec::new(),
        };
        for code in &self.codes {
            let file = format!("{}.alist", code.name);
            save_alist(&code.matrix, dir.join(&file))?;
            index.codes.push(IndexEntry {
                name: code.name.clone(),
                threshold: code.threshold,
                file,
            });
        }
        std::fs::write(dir.join(INDEX_FILE), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index: Index = serde_json::from_str(&std::fs::read_to_string(dir.join(INDEX_FILE))?)?;
        let mut reg = CodeRegistry {
            codes: Vec::new(),
            margin: index.margin,
        };
        for e in index.codes {
            let matrix = load_alist(dir.join(&e.file))?;
            reg.push(RegisteredCode {
                name: e.name,
                threshold: e.threshold,
                matrix: Arc::new(matrix),
            });
        }
        Ok(reg)
    }
}

/// Slack when comparing thresholds, so grid QBERs computed in floating point
/// still match the code designed for them.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Highest-rate code whose threshold covers `qber` plus the margin.
pub fn select_code(qber: f64, registry: &CodeRegistry) -> Result<&RegisteredCode> {
    if registry.is_empty() {
        return invalid("empty LDPC registry");
    }
    registry
        .codes
        .iter()
        .filter(|c| c.threshold + THRESHOLD_SLACK >= qber + registry.margin)
        .max_by(|a, b| a.matrix.rate().total_cmp(&b.matrix.rate()))
        .ok_or(Error::NoCode { qber })
}
