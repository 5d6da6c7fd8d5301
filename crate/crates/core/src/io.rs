//! Text formats: the `dims:` tensor file, plain CSV matrices, and JSON
//! helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const HEADER: &str = "dims:";

/// Header line `dims: d1 ... dK`, then one value per line in row-major order.
pub fn format_tensor(t: &Tensor) -> String {
    let mut out = String::from(HEADER);
    for d in t.dims() {
        let _ = write!(out, " {d}");
    }
    out.push('\n');
    for v in t.values() {
        let _ = writeln!(out, "{v:?}");
    }
    out
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, column, format!("expected a number, found {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, column, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

/// 1-based column of `tok` inside `line`, which must be a sub-slice of it.
fn column_of(line: &str, tok: &str) -> usize {
    tok.as_ptr() as usize - line.as_ptr() as usize + 1
}

pub fn parse_tensor(text: &str) -> Result<Tensor> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty input"))?;
    let rest = header
        .trim_start()
        .strip_prefix(HEADER)
        .ok_or_else(|| parse_err(1, 1, format!("expected header starting with {HEADER:?}")))?;
    let mut dims = Vec::new();
    for tok in rest.split_whitespace() {
        let col = column_of(header, tok);
        let d: usize = tok
            .parse()
            .map_err(|_| parse_err(1, col, format!("axis length {tok:?} is not a positive integer")))?;
        if d == 0 {
            return Err(parse_err(1, col, "axis length must be positive"));
        }
        dims.push(d);
    }
    if dims.is_empty() {
        return Err(parse_err(1, HEADER.len() + 1, "no axis lengths given"));
    }
    let expected: usize = dims.iter().product();
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 1;
    for (idx, line) in lines {
        let lineno = idx + 1;
        last_line = lineno;
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        if values.len() == expected {
            return Err(parse_err(lineno, column_of(line, tok), format!("more than {expected} values")));
        }
        values.push(parse_f64(tok, lineno, column_of(line, tok))?);
    }
    if values.len() != expected {
        return Err(parse_err(
            last_line + 1,
            1,
            format!("expected {expected} values for dims {dims:?}, found {}", values.len()),
        ));
    }
    Tensor::new(dims, values)
}

/// Comma-separated rows; blank lines are skipped.
pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let t = tok.trim();
                let col = if t.is_empty() { column_of(line, tok) } else { column_of(line, t) };
                parse_f64(t, idx + 1, col)
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    idx + 1,
                    1,
                    format!("row has {} fields, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, 1, "empty matrix"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

pub fn format_csv_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Tensor file, or a CSV matrix read as a 2-axis tensor.
pub fn parse_tensor_or_matrix(text: &str) -> Result<Tensor> {
    if text.trim_start().starts_with(HEADER) {
        parse_tensor(text)
    } else {
        Ok(Tensor::from_matrix(&parse_csv_matrix(text)?))
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    parse_tensor_or_matrix(&fs::read_to_string(path)?)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    Ok(fs::write(path, format_tensor(t))?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tensor_round_trip_text() {
        let t = Tensor::new(vec![2, 2], vec![0.1, -2.0, 1e-300, 3.5]).unwrap();
        let s = format_tensor(&t);
        assert_eq!(s, "dims: 2 2\n0.1\n-2.0\n1e-300\n3.5\n");
        assert_eq!(parse_tensor(&s).unwrap(), t);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let e = parse_tensor("dims: 2 x\n1\n2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, column: 9, .. }), "{e}");
        let e = parse_tensor("dims: 2\n1\n  abc\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, column: 3, .. }), "{e}");
        let e = parse_tensor("dims: 3\n1\n2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 4, .. }), "{e}");
        let e = parse_tensor("shape 3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, column: 1, .. }));
        assert!(parse_tensor("dims: 1\n1\n2\n").is_err());
        assert!(parse_tensor("dims: 1\nNaN\n").is_err());
        assert!(parse_tensor("").is_err());
    }

    #[test]
    fn csv_matrices() {
        let m = parse_csv_matrix("1, 2,3\n\n4,5,6\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert_eq!(parse_csv_matrix(&format_csv_matrix(&m)).unwrap(), m);
        let e = parse_csv_matrix("1,2\n3,q\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, column: 3, .. }), "{e}");
        assert!(parse_csv_matrix("1,2\n3\n").is_err());
        let t = parse_tensor_or_matrix("1,2\n3,4\n").unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        assert_eq!(t.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn any_tensor_round_trips(dims in prop::collection::vec(1usize..4, 1..4), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n: usize = dims.iter().product();
            let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-1e6..1e6)).collect();
            let t = Tensor::new(dims, vals).unwrap();
            prop_assert_eq!(parse_tensor(&format_tensor(&t)).unwrap(), t);
        }
    }
}
