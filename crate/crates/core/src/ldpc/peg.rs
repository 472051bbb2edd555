//! Progressive edge-growth construction.
//!
//! Each new edge of a variable goes to a lowest-degree check that is not
//! reachable from that variable within the explored depth, which keeps short
//! cycles out of the Tanner graph. Exploration stops early once it covers
//! every check or stops growing; `max_depth` bounds it for large codes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ParityCheckMatrix;
use crate::error::{invalid, Result};

/// Check levels explored per edge. Exploring `d` levels keeps every cycle
/// closed by a new edge at least `2d + 2` long while some check lies beyond.
pub const DEFAULT_PEG_DEPTH: usize = 3;

/// Checks bucketed by current degree, with O(1) moves between buckets.
struct DegreeBuckets {
    buckets: Vec<Vec<u32>>,
    slot: Vec<u32>,
    degree: Vec<u32>,
}

impl DegreeBuckets {
    fn new(rows: usize) -> Self {
        DegreeBuckets {
            buckets: vec![(0..rows as u32).collect()],
            slot: (0..rows as u32).collect(),
            degree: vec![0; rows],
        }
    }

    fn bump(&mut self, c: usize) {
        let d = self.degree[c] as usize;
        let s = self.slot[c] as usize;
        let bucket = &mut self.buckets[d];
        bucket.swap_remove(s);
        if let Some(&moved) = bucket.get(s) {
            self.slot[moved as usize] = s as u32;
        }
        if self.buckets.len() == d + 1 {
            self.buckets.push(Vec::new());
        }
        self.slot[c] = self.buckets[d + 1].len() as u32;
        self.buckets[d + 1].push(c as u32);
        self.degree[c] += 1;
    }

    /// A lowest-degree check rejected by `taken`, scanning each bucket from a
    /// random offset.
    fn pick_free(&self, taken: impl Fn(usize) -> bool, rng: &mut ChaCha8Rng) -> Option<usize> {
        for bucket in &self.buckets {
            if bucket.is_empty() {
                continue;
            }
            let start = rng.gen_range(0..bucket.len());
            for k in 0..bucket.len() {
                let c = bucket[(start + k) % bucket.len()] as usize;
                if !taken(c) {
                    return Some(c);
                }
            }
        }
        None
    }
}

/// PEG over `rows` checks with the given per-column degrees.
pub fn peg(rows: usize, col_degrees: &[usize], max_depth: usize, seed: u64) -> Result<ParityCheckMatrix> {
    let cols = col_degrees.len();
    if rows == 0 || rows >= cols {
        return invalid(format!("{rows} checks over {cols} variables leave no positive rate"));
    }
    if let Some(&d) = col_degrees.iter().find(|&&d| d == 0 || d > rows) {
        return invalid(format!("column degree {d} not in [1, {rows}]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by_key(|&j| col_degrees[j]);

    let mut var_checks: Vec<Vec<u32>> = vec![Vec::new(); cols];
    let mut check_vars: Vec<Vec<u32>> = vec![Vec::new(); rows];
    let mut buckets = DegreeBuckets::new(rows);
    // Stamps mark membership in the current exploration without clearing.
    let mut check_seen = vec![0u32; rows];
    let mut var_seen = vec![0u32; cols];
    let mut stamp = 0u32;
    let mut frontier: Vec<u32> = Vec::new();
    let mut next_frontier: Vec<u32> = Vec::new();
    let mut level: Vec<u32> = Vec::new();

    for &v in &order {
        for k in 0..col_degrees[v] {
            let chosen = if k == 0 {
                buckets.pick_free(|_| false, &mut rng)
            } else {
                stamp += 1;
                var_seen[v] = stamp;
                frontier.clear();
                frontier.push(v as u32);
                let mut reached = 0usize;
                let mut last_level: Option<Vec<u32>> = None;
                for _ in 0..max_depth.max(1) {
                    level.clear();
                    for &u in &frontier {
                        for &c in &var_checks[u as usize] {
                            if check_seen[c as usize] != stamp {
                                check_seen[c as usize] = stamp;
                                level.push(c);
                            }
                        }
                    }
                    if level.is_empty() {
                        break;
                    }
                    reached += level.len();
                    if reached == rows {
                        last_level = Some(level.clone());
                        break;
                    }
                    next_frontier.clear();
                    for &c in &level {
                        for &u in &check_vars[c as usize] {
                            if var_seen[u as usize] != stamp {
                                var_seen[u as usize] = stamp;
                                next_frontier.push(u);
                            }
                        }
                    }
                    std::mem::swap(&mut frontier, &mut next_frontier);
                }
                match last_level {
                    Some(farthest) => {
                        let own: Vec<u32> = var_checks[v].clone();
                        farthest
                            .iter()
                            .copied()
                            .filter(|c| !own.contains(c))
                            .min_by_key(|&c| (buckets.degree[c as usize], c))
                            .map(|c| c as usize)
                    }
                    None => buckets.pick_free(|c| check_seen[c] == stamp, &mut rng),
                }
            };
            let c = match chosen {
                Some(c) => c,
                None => return invalid(format!("no check available for column {v}")),
            };
            var_checks[v].push(c as u32);
            check_vars[c].push(v as u32);
            buckets.bump(c);
        }
    }
    let columns: Vec<Vec<usize>> = var_checks
        .into_iter()
        .map(|cs| cs.into_iter().map(|c| c as usize).collect())
        .collect();
    ParityCheckMatrix::from_columns(rows, &columns)
}

/// Column-regular PEG code at the default depth.
pub fn peg_regular(cols: usize, rows: usize, col_degree: usize, seed: u64) -> Result<ParityCheckMatrix> {
    peg(rows, &vec![col_degree; cols], DEFAULT_PEG_DEPTH, seed)
}
