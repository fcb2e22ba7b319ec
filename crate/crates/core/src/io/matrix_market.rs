//! Matrix Market text format, real-valued matrices only.
//!
//! Coordinate and array layouts are read with general, symmetric and
//! skew-symmetric storage; symmetric files store one triangle, which is
//! mirrored on read. Integer fields are accepted and widened; pattern and
//! complex fields are rejected since the solvers need real values.

use std::fs;
use std::path::Path;

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: &str) -> Result<(Layout, Symmetry)> {
    let toks: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(perr(1, format!("malformed header `{line}`")));
    }
    let layout = match toks[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        f => return Err(perr(1, format!("unknown format `{f}`"))),
    };
    match toks[3].as_str() {
        "real" | "double" | "integer" => {}
        "complex" => return Err(perr(1, "complex matrices are not supported")),
        "pattern" => return Err(perr(1, "pattern matrices carry no values and are not supported")),
        f => return Err(perr(1, format!("unknown field `{f}`"))),
    }
    let sym = match toks[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        "hermitian" => return Err(perr(1, "hermitian matrices are not supported")),
        s => return Err(perr(1, format!("unknown symmetry `{s}`"))),
    };
    Ok((layout, sym))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("invalid {what} `{tok}`")))
}

/// Parses a Matrix Market document.
pub fn parse_matrix_market(text: &str) -> Result<SparseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let (layout, sym) = parse_header(header)?;
    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (sline, size) = body.next().ok_or_else(|| perr(2, "missing size line"))?;
    let mut it = size.split_whitespace();
    let nrows: usize = parse_num(it.next(), sline, "row count")?;
    let ncols: usize = parse_num(it.next(), sline, "column count")?;
    if sym != Symmetry::General && nrows != ncols {
        return Err(perr(sline, "symmetric storage requires a square matrix"));
    }

    let mut t = Vec::new();
    let push = |i: usize, j: usize, v: f64, t: &mut Vec<(usize, usize, f64)>| {
        t.push((i, j, v));
        if i != j {
            match sym {
                Symmetry::General => {}
                Symmetry::Symmetric => t.push((j, i, v)),
                Symmetry::Skew => t.push((j, i, -v)),
            }
        }
    };

    match layout {
        Layout::Coordinate => {
            let nnz: usize = parse_num(it.next(), sline, "entry count")?;
            if it.next().is_some() {
                return Err(perr(sline, "size line has extra fields"));
            }
            let mut seen = 0;
            for (ln, l) in body {
                let mut f = l.split_whitespace();
                let i: usize = parse_num(f.next(), ln, "row index")?;
                let j: usize = parse_num(f.next(), ln, "column index")?;
                let v: f64 = parse_num(f.next(), ln, "value")?;
                if f.next().is_some() {
                    return Err(perr(ln, "entry has extra fields"));
                }
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(perr(ln, format!("index ({i}, {j}) out of bounds")));
                }
                if sym != Symmetry::General && j > i {
                    return Err(perr(ln, "symmetric storage expects the lower triangle"));
                }
                if sym == Symmetry::Skew && i == j {
                    return Err(perr(ln, "skew-symmetric matrices have a zero diagonal"));
                }
                push(i - 1, j - 1, v, &mut t);
                seen += 1;
            }
            if seen != nnz {
                return Err(perr(sline, format!("expected {nnz} entries, found {seen}")));
            }
        }
        Layout::Array => {
            if it.next().is_some() {
                return Err(perr(sline, "size line has extra fields"));
            }
            // column-major; symmetric storage lists the lower triangle only
            let mut coords = Vec::new();
            for j in 0..ncols {
                let start = match sym {
                    Symmetry::General => 0,
                    Symmetry::Symmetric => j,
                    Symmetry::Skew => j + 1,
                };
                for i in start..nrows {
                    coords.push((i, j));
                }
            }
            let mut k = 0;
            for (ln, l) in body {
                for tok in l.split_whitespace() {
                    let v: f64 = parse_num(Some(tok), ln, "value")?;
                    let &(i, j) = coords
                        .get(k)
                        .ok_or_else(|| perr(ln, "too many values"))?;
                    if v != 0.0 {
                        push(i, j, v, &mut t);
                    }
                    k += 1;
                }
            }
            if k != coords.len() {
                return Err(perr(sline, format!("expected {} values, found {k}", coords.len())));
            }
        }
    }
    SparseMatrix::from_triplets(nrows, ncols, &t)
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

/// Coordinate/general document with values in shortest round-trip form.
pub fn format_matrix_market(a: &SparseMatrix) -> String {
    use crate::linop::Operator;
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    s.push_str(&format!("{} {} {}\n", a.nrows(), a.ncols(), a.nnz()));
    for (i, j, v) in a.triplets() {
        s.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
    }
    s
}

pub fn write_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_matrix_market(a))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::Operator;

    #[test]
    fn identity_coordinate() {
        let a = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1\n2 2 1.0\n",
        )
        .unwrap();
        assert_eq!(a.triplets(), vec![(0, 0, 1.0), (1, 1, 1.0)]);
    }

    #[test]
    fn symmetric_mirrors_off_diagonal() {
        let a = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n3 3 1\n3 1 2.5\n")
            .unwrap();
        assert_eq!(a.triplets(), vec![(0, 2, 2.5), (2, 0, 2.5)]);
    }

    #[test]
    fn skew_symmetric_negates() {
        let a = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 4\n",
        )
        .unwrap();
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 1), -4.0);
    }

    #[test]
    fn integer_field_and_array_layout() {
        let a = parse_matrix_market("%%MatrixMarket matrix array integer general\n2 2\n1\n3\n2\n4\n").unwrap();
        assert_eq!(a.apply(&[1.0, 0.0]), vec![1.0, 3.0]);
        assert_eq!(a.apply(&[0.0, 1.0]), vec![2.0, 4.0]);

        let s = parse_matrix_market("%%MatrixMarket matrix array real symmetric\n2 2\n1\n5\n2\n").unwrap();
        assert_eq!(s.get(0, 1), 5.0);
        assert_eq!(s.get(1, 0), 5.0);
        assert_eq!(s.get(1, 1), 2.0);
    }

    #[test]
    fn rejects_pattern_complex_and_garbage() {
        let pattern = parse_matrix_market("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n");
        assert!(matches!(pattern, Err(Error::Parse { line: 1, .. })));
        let complex = parse_matrix_market("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n");
        assert!(complex.unwrap_err().to_string().contains("complex"));
        assert!(parse_matrix_market("%%MatrixMarket vector coordinate real general\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2\n").is_err());
        let oob = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n");
        assert!(matches!(oob, Err(Error::Parse { line: 3, .. })));
        let short = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n");
        assert!(short.is_err());
    }

    #[test]
    fn duplicates_summed_on_read() {
        let a = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1\n1 1 2\n").unwrap();
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn writer_round_trip() {
        let a = SparseMatrix::from_triplets(3, 2, &[(0, 1, 0.1), (2, 0, -1e-300), (1, 1, 7.0)]).unwrap();
        let text = format_matrix_market(&a);
        let b = parse_matrix_market(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(format_matrix_market(&b), text);
    }
}
