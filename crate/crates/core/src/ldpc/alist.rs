//! The alist sparse-matrix text format.
//!
//! ```text
//! cols rows
//! max_col_degree max_row_degree
//! <cols column degrees>
//! <rows row degrees>
//! <one line per column: 1-based check indices, zero padded>
//! <one line per row: 1-based variable indices, zero padded>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::ParityCheckMatrix;
use crate::error::{Error, Result};

fn format_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        line,
        msg: msg.into(),
    })
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line as integers, with its 1-based line number.
    fn next_ints(&mut self, what: &str) -> Result<(usize, Vec<usize>)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let mut out = Vec::new();
            for tok in raw.split_whitespace() {
                match tok.parse::<usize>() {
                    Ok(v) => out.push(v),
                    Err(_) => return format_err(i + 1, format!("`{tok}` is not an integer")),
                }
            }
            return Ok((i + 1, out));
        }
        format_err(self.last + 1, format!("unexpected end of file, expected {what}"))
    }
}

fn expect_len(line: usize, v: &[usize], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return format_err(line, format!("expected {n} {what}, found {}", v.len()));
    }
    Ok(())
}

pub fn parse_alist(text: &str) -> Result<ParityCheckMatrix> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, dims) = lines.next_ints("dimensions")?;
    expect_len(ln, &dims, 2, "dimensions")?;
    let (cols, rows) = (dims[0], dims[1]);
    if cols == 0 || rows == 0 {
        return format_err(ln, "zero dimension");
    }
    let (ln, maxes) = lines.next_ints("maximum degrees")?;
    expect_len(ln, &maxes, 2, "maximum degrees")?;
    let (ln_cd, col_deg) = lines.next_ints("column degrees")?;
    expect_len(ln_cd, &col_deg, cols, "column degrees")?;
    let (ln_rd, row_deg) = lines.next_ints("row degrees")?;
    expect_len(ln_rd, &row_deg, rows, "row degrees")?;
    if col_deg.iter().max() != Some(&maxes[0]) || row_deg.iter().max() != Some(&maxes[1]) {
        return format_err(ln, "maximum degrees disagree with the degree lists");
    }

    let mut columns = Vec::with_capacity(cols);
    for (j, &deg) in col_deg.iter().enumerate() {
        let (ln, list) = lines.next_ints("column list")?;
        let entries: Vec<usize> = list.iter().copied().filter(|&v| v != 0).collect();
        if entries.len() != deg {
            return format_err(ln, format!("column {} lists {} checks, degree says {deg}", j + 1, entries.len()));
        }
        let mut col = Vec::with_capacity(deg);
        for v in entries {
            if v > rows {
                return format_err(ln, format!("check {v} exceeds {rows} rows"));
            }
            if col.contains(&(v - 1)) {
                return format_err(ln, format!("duplicate edge to check {v}"));
            }
            col.push(v - 1);
        }
        columns.push(col);
    }

    let mut from_rows: Vec<Vec<usize>> = vec![Vec::new(); cols];
    for (c, &deg) in row_deg.iter().enumerate() {
        let (ln, list) = lines.next_ints("row list")?;
        let entries: Vec<usize> = list.iter().copied().filter(|&v| v != 0).collect();
        if entries.len() != deg {
            return format_err(ln, format!("row {} lists {} variables, degree says {deg}", c + 1, entries.len()));
        }
        for v in entries {
            if v > cols {
                return format_err(ln, format!("variable {v} exceeds {cols} columns"));
            }
            from_rows[v - 1].push(c);
        }
    }
    for (j, (a, b)) in columns.iter().zip(from_rows.iter_mut()).enumerate() {
        let mut a = a.clone();
        a.sort_unstable();
        b.sort_unstable();
        if a != *b {
            return format_err(lines.last, format!("row lists disagree with column {}", j + 1));
        }
    }
    ParityCheckMatrix::from_columns(rows, &columns).or_else(|e| format_err(lines.last, e.to_string()))
}

pub fn write_alist(h: &ParityCheckMatrix) -> String {
    let col_deg: Vec<usize> = (0..h.cols()).map(|j| h.column_degree(j)).collect();
    let row_deg: Vec<usize> = (0..h.rows()).map(|c| h.row_degree(c)).collect();
    let max_c = col_deg.iter().copied().max().unwrap_or(0);
    let max_r = row_deg.iter().copied().max().unwrap_or(0);
    let mut out = String::new();
    let join = |v: &mut dyn Iterator<Item = usize>| -> String {
        v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    };
    let _ = writeln!(out, "{} {}", h.cols(), h.rows());
    let _ = writeln!(out, "{max_c} {max_r}");
    let _ = writeln!(out, "{}", join(&mut col_deg.iter().copied()));
    let _ = writeln!(out, "{}", join(&mut row_deg.iter().copied()));
    for j in 0..h.cols() {
        let pad = max_c - col_deg[j];
        let _ = writeln!(
            out,
            "{}",
            join(&mut h.column(j).map(|c| c + 1).chain(std::iter::repeat_n(0, pad)))
        );
    }
    for c in 0..h.rows() {
        let pad = max_r - row_deg[c];
        let _ = writeln!(
            out,
            "{}",
            join(&mut h.row(c).map(|v| v + 1).chain(std::iter::repeat_n(0, pad)))
        );
    }
    out
}

pub fn load_alist(path: impl AsRef<Path>) -> Result<ParityCheckMatrix> {
    parse_alist(&std::fs::read_to_string(path)?)
}

pub fn save_alist(h: &ParityCheckMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_alist(h))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldpc::peg_regular;
    use crate::ldpc::tests::hamming;

    const HAMMING: &str = "7 3\n3 4\n1 1 2 1 2 2 3\n4 4 4\n\
        1 0 0\n2 0 0\n1 2 0\n3 0 0\n1 3 0\n2 3 0\n1 2 3\n\
        1 3 5 7\n2 3 6 7\n4 5 6 7\n";

    fn line_of(e: Error) -> usize {
        match e {
            Error::Format { line, .. } => line,
            other => panic!("expected a format error, got {other}"),
        }
    }

    #[test]
    fn hamming_text_round_trips() {
        let h = parse_alist(HAMMING).unwrap();
        assert_eq!(h, hamming());
        assert_eq!(write_alist(&h), HAMMING);
    }

    #[test]
    fn peg_matrix_round_trips() {
        let h = peg_regular(500, 200, 3, 11).unwrap();
        assert_eq!(parse_alist(&write_alist(&h)).unwrap(), h);
    }

    #[test]
    fn rejects_malformed_input() {
        assert_eq!(line_of(parse_alist("").unwrap_err()), 1);
        let dup = HAMMING.replace("1 2 3\n1 3 5 7", "1 1 3\n1 3 5 7");
        assert_eq!(line_of(parse_alist(&dup).unwrap_err()), 11);
        let bad_tok = HAMMING.replace("4 4 4", "4 x 4");
        assert_eq!(line_of(parse_alist(&bad_tok).unwrap_err()), 4);
        let short = HAMMING.replace("1 1 2 1 2 2 3", "1 1 2 1 2 2");
        assert_eq!(line_of(parse_alist(&short).unwrap_err()), 3);
        let mismatch = HAMMING.replace("4 5 6 7", "4 5 6 1");
        assert!(matches!(parse_alist(&mismatch), Err(Error::Format { .. })));
        let truncated: String = HAMMING.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_alist(&truncated), Err(Error::Format { .. })));
    }
}
