//! Dense matrix text format: a `rows cols` line, then row-major values
//! separated by arbitrary whitespace. Vectors are `n × 1` matrices.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{PlirlsError, Result};
use crate::scalar::Real;

pub fn parse_matrix<T: Real>(text: &str) -> Result<Array2<T>> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        let tok = tokens
            .next()
            .ok_or_else(|| PlirlsError::Parse(format!("missing {what} in matrix header")))?;
        tok.parse()
            .map_err(|_| PlirlsError::Parse(format!("bad {what} `{tok}` in matrix header")))
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let values = tokens
        .map(|tok| {
            tok.parse::<f64>()
                .map(T::lit)
                .map_err(|_| PlirlsError::Parse(format!("bad matrix entry `{tok}`")))
        })
        .collect::<Result<Vec<T>>>()?;
    if values.len() != rows * cols {
        return Err(PlirlsError::Parse(format!(
            "expected {} entries for a {rows}x{cols} matrix, found {}",
            rows * cols,
            values.len()
        )));
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| PlirlsError::Parse(e.to_string()))
}

/// Accepts `n × 1` and `1 × n` matrices.
pub fn parse_vector<T: Real>(text: &str) -> Result<Array1<T>> {
    let m = parse_matrix::<T>(text)?;
    match m.dim() {
        (_, 1) | (1, _) => Ok(m.iter().copied().collect()),
        (r, c) => Err(PlirlsError::Parse(format!("expected a vector, found a {r}x{c} matrix"))),
    }
}

/// Shortest round-trip formatting, so that reading back is exact.
pub fn format_matrix<T: Real>(m: &Array2<T>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn format_vector<T: Real>(v: &Array1<T>) -> String {
    let mut out = format!("{} 1\n", v.len());
    for x in v {
        let _ = writeln!(out, "{x}");
    }
    out
}

pub fn load_matrix<T: Real>(path: impl AsRef<Path>) -> Result<Array2<T>> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

pub fn load_vector<T: Real>(path: impl AsRef<Path>) -> Result<Array1<T>> {
    parse_vector(&std::fs::read_to_string(path)?)
}

pub fn save_matrix<T: Real>(m: &Array2<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}

pub fn save_vector<T: Real>(v: &Array1<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_vector(v))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn parses_header_and_values() {
        let m: Array2<f64> = parse_matrix("2 3\n1 2 3\n4 5\t6\n").unwrap();
        assert_eq!(m, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let v: Array1<f64> = parse_vector("1 3\n1 2 3").unwrap();
        assert_eq!(v, array![1.0, 2.0, 3.0]);
        assert!(parse_matrix::<f64>("2 2\n1 2 3").is_err());
        assert!(parse_matrix::<f64>("2 x\n").is_err());
        assert!(parse_vector::<f64>("2 2\n1 2 3 4").is_err());
        assert_eq!(parse_matrix::<f64>("0 0\n").unwrap().len(), 0);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(values in proptest::collection::vec(-1e6f64..1e6, 1..30), cols in 1usize..5) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let m = Array2::from_shape_vec((rows, cols), values[..rows * cols].to_vec()).unwrap();
            prop_assert_eq!(parse_matrix::<f64>(&format_matrix(&m)).unwrap(), m);
            let v: Array1<f64> = values.iter().copied().collect();
            prop_assert_eq!(parse_vector::<f64>(&format_vector(&v)).unwrap(), v);
        }
    }
}
