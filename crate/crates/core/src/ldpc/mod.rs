//! Acknowledgment-phase LDPC codec: sparse parity-check matrices, syndromes,
//! belief-propagation syndrome decoding, PEG construction and a code registry.

mod alist;
mod bp;
mod peg;
mod registry;

pub use alist::{load_alist, parse_alist, save_alist, write_alist};
pub use bp::{decode_syndrome, decode_syndrome_with, Schedule, SyndromeDecode, DEFAULT_MAX_ITERS};
pub use peg::{peg, peg_regular, DEFAULT_PEG_DEPTH};
pub use registry::{design_efficiency, select_code, CodeRegistry, RegisteredCode};

use crate::bits::BitBlock;
use crate::error::{invalid, Result};

/// Sparse binary parity-check matrix with both column and row adjacency.
///
/// Edges are numbered in column-major order; `row_edges` maps each row's
/// entries back to those edge numbers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    row_ptr: Vec<u32>,
    row_idx: Vec<u32>,
    row_edges: Vec<u32>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from the check indices of every column.
    pub fn from_columns(rows: usize, columns: &[Vec<usize>]) -> Result<Self> {
        let cols = columns.len();
        if rows == 0 || rows >= cols {
            return invalid(format!("{rows} checks over {cols} variables leave no positive rate"));
        }
        if cols > u32::MAX as usize {
            return invalid("too many columns");
        }
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut col_idx = Vec::new();
        let mut row_deg = vec![0u32; rows];
        col_ptr.push(0);
        for (j, col) in columns.iter().enumerate() {
            if col.is_empty() {
                return invalid(format!("column {j} has no checks"));
            }
            let mut sorted = col.clone();
            sorted.sort_unstable();
            for w in sorted.windows(2) {
                if w[0] == w[1] {
                    return invalid(format!("duplicate edge ({}, {j})", w[0]));
                }
            }
            for &c in &sorted {
                if c >= rows {
                    return invalid(format!("check {c} in column {j} exceeds {rows} rows"));
                }
                row_deg[c] += 1;
                col_idx.push(c as u32);
            }
            col_ptr.push(col_idx.len() as u32);
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0u32);
        for &d in &row_deg {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut fill: Vec<u32> = row_ptr[..rows].to_vec();
        let mut row_idx = vec![0u32; col_idx.len()];
        let mut row_edges = vec![0u32; col_idx.len()];
        for j in 0..cols {
            for e in col_ptr[j]..col_ptr[j + 1] {
                let c = col_idx[e as usize] as usize;
                let slot = fill[c] as usize;
                row_idx[slot] = j as u32;
                row_edges[slot] = e;
                fill[c] += 1;
            }
        }
        Ok(ParityCheckMatrix {
            rows,
            cols,
            col_ptr,
            col_idx,
            row_ptr,
            row_idx,
            row_edges,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn edges(&self) -> usize {
        self.col_idx.len()
    }

    /// `1 − rows / cols`.
    pub fn rate(&self) -> f64 {
        1.0 - self.rows as f64 / self.cols as f64
    }

    /// Checks touching column `j`, ascending.
    pub fn column(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.col_idx[self.col_ptr[j] as usize..self.col_ptr[j + 1] as usize]
            .iter()
            .map(|&c| c as usize)
    }

    /// Variables touching row `c`, ascending.
    pub fn row(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_idx[self.row_ptr[c] as usize..self.row_ptr[c + 1] as usize]
            .iter()
            .map(|&v| v as usize)
    }

    pub fn column_degree(&self, j: usize) -> usize {
        (self.col_ptr[j + 1] - self.col_ptr[j]) as usize
    }

    pub fn row_degree(&self, c: usize) -> usize {
        (self.row_ptr[c + 1] - self.row_ptr[c]) as usize
    }

    /// Length of the shortest cycle in the Tanner graph, if any.
    pub fn girth(&self) -> Option<usize> {
        let n_nodes = self.cols + self.rows;
        let mut best: Option<usize> = None;
        let mut dist = vec![u32::MAX; n_nodes];
        let mut parent = vec![u32::MAX; n_nodes];
        let mut queue = Vec::new();
        for start in 0..self.cols {
            queue.clear();
            dist.fill(u32::MAX);
            dist[start] = 0;
            queue.push(start);
            let mut head = 0;
            while head < queue.len() {
                let node = queue[head];
                head += 1;
                if let Some(b) = best {
                    if 2 * dist[node] as usize + 1 >= b {
                        break;
                    }
                }
                let neighbours: Vec<usize> = if node < self.cols {
                    self.column(node).map(|c| c + self.cols).collect()
                } else {
                    self.row(node - self.cols).collect()
                };
                for next in neighbours {
                    if next as u32 == parent[node] {
                        continue;
                    }
                    if dist[next] == u32::MAX {
                        dist[next] = dist[node] + 1;
                        parent[next] = node as u32;
                        queue.push(next);
                    } else {
                        let cycle = (dist[node] + dist[next] + 1) as usize;
                        best = Some(best.map_or(cycle, |b| b.min(cycle)));
                    }
                }
            }
        }
        best
    }
}

/// `H·block` over GF(2).
pub fn syndrome(h: &ParityCheckMatrix, block: &BitBlock) -> Result<BitBlock> {
    if block.len() != h.cols {
        return invalid(format!("block of {} bits for a code of length {}", block.len(), h.cols));
    }
    let mut s = BitBlock::zeros(h.rows);
    for j in 0..h.cols {
        if block.get(j) {
            for c in h.column(j) {
                s.flip(c);
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Columns are the binary expansions of 1..=7, least significant bit in
    /// row 0.
    pub(crate) fn hamming() -> ParityCheckMatrix {
        let cols: Vec<Vec<usize>> = (1..=7usize)
            .map(|j| (0..3).filter(|&b| j >> b & 1 == 1).collect())
            .collect();
        ParityCheckMatrix::from_columns(3, &cols).unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(ParityCheckMatrix::from_columns(2, &[vec![0], vec![0, 0], vec![1]]).is_err());
        assert!(ParityCheckMatrix::from_columns(2, &[vec![0], vec![], vec![1]]).is_err());
        assert!(ParityCheckMatrix::from_columns(2, &[vec![0], vec![2], vec![1]]).is_err());
        assert!(ParityCheckMatrix::from_columns(2, &[vec![0], vec![1]]).is_err());
        let h = hamming();
        assert_eq!((h.rows(), h.cols(), h.edges()), (3, 7, 12));
        assert_eq!(h.row(2).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert!((h.rate() - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn unit_vectors_read_out_columns() {
        let h = hamming();
        for j in 0..7 {
            let mut x = BitBlock::zeros(7);
            x.set(j, true);
            let s = syndrome(&h, &x).unwrap();
            let expect: Vec<bool> = (0..3).map(|b| (j + 1) >> b & 1 == 1).collect();
            assert_eq!(s.iter().collect::<Vec<_>>(), expect, "column {j}");
        }
        assert!(syndrome(&h, &BitBlock::zeros(7)).unwrap().is_zero());
        assert!(syndrome(&h, &BitBlock::zeros(8)).is_err());
    }

    #[test]
    fn hamming_girth_is_four() {
        assert_eq!(hamming().girth(), Some(4));
        let tree = ParityCheckMatrix::from_columns(1, &[vec![0], vec![0]]).unwrap();
        assert_eq!(tree.girth(), None);
    }

    proptest! {
        #[test]
        fn syndrome_is_linear(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = peg_regular(96, 40, 3, seed).unwrap();
            let x = BitBlock::random(96, &mut rng);
            let y = BitBlock::random(96, &mut rng);
            let lhs = syndrome(&h, &(&x ^ &y)).unwrap();
            let rhs = &syndrome(&h, &x).unwrap() ^ &syndrome(&h, &y).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
