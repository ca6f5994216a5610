//! Dense CSV matrix files: one row per line, comma-separated.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, IntMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Binary01,
    Real,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Matrix {
    Binary(BinaryMatrix),
    Real(DMatrix<f64>),
}

pub fn read_matrix(path: impl AsRef<Path>, kind: MatrixKind) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    match kind {
        MatrixKind::Binary01 => parse_binary_csv(&text).map(Matrix::Binary),
        MatrixKind::Real => parse_real_csv(&text).map(Matrix::Real),
    }
}

pub fn write_matrix(path: impl AsRef<Path>, matrix: &Matrix) -> Result<()> {
    match matrix {
        Matrix::Binary(z) => write_binary_csv(path, z),
        Matrix::Real(x) => write_real_csv(path, x),
    }
}

fn parse_rows<T>(text: &str, mut parse: impl FnMut(&str) -> Option<T>, what: &str) -> Result<(usize, usize, Vec<T>)> {
    let lines: Vec<&str> = text.strip_suffix('\n').unwrap_or(text).split('\n').collect();
    let mut cols = None;
    let mut data = Vec::new();
    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            return Err(Error::Parse { line: line_no, message: "empty row".into() });
        }
        let mut count = 0;
        for token in line.split(',') {
            let token = token.trim();
            let value = parse(token).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("token {token:?} is not a valid {what}"),
            })?;
            data.push(value);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("ragged row: {count} fields, expected {c}"),
                })
            }
            _ => {}
        }
    }
    Ok((lines.len(), cols.unwrap_or(0), data))
}

pub fn parse_binary_csv(text: &str) -> Result<BinaryMatrix> {
    let parse = |t: &str| match t {
        "0" => Some(0u8),
        "1" => Some(1u8),
        _ => None,
    };
    let (rows, cols, data) = parse_rows(text, parse, "binary entry (0 or 1)")?;
    BinaryMatrix::new(rows, cols, data)
}

pub fn parse_real_csv(text: &str) -> Result<DMatrix<f64>> {
    let parse = |t: &str| t.parse::<f64>().ok().filter(|v| v.is_finite());
    let (rows, cols, data) = parse_rows(text, parse, "finite real number")?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn parse_int_csv(text: &str) -> Result<IntMatrix> {
    let (rows, cols, data) = parse_rows(text, |t| t.parse::<i64>().ok(), "integer")?;
    IntMatrix::new(rows, cols, data)
}

pub fn format_binary_csv(z: &BinaryMatrix) -> String {
    let mut out = String::with_capacity(z.rows() * z.cols() * 2);
    for n in 0..z.rows() {
        for (k, v) in z.row(n).iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push(if *v == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Reals are written in the shortest form that parses back to the same bits.
pub fn format_real_csv(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols()).map(|j| format!("{:?}", x[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn format_int_csv(m: &IntMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| m.get(i, j).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_binary_csv(path: impl AsRef<Path>) -> Result<BinaryMatrix> {
    parse_binary_csv(&fs::read_to_string(path)?)
}

pub fn read_real_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_real_csv(&fs::read_to_string(path)?)
}

pub fn read_int_csv(path: impl AsRef<Path>) -> Result<IntMatrix> {
    parse_int_csv(&fs::read_to_string(path)?)
}

pub fn write_binary_csv(path: impl AsRef<Path>, z: &BinaryMatrix) -> Result<()> {
    Ok(fs::write(path, format_binary_csv(z))?)
}

pub fn write_real_csv(path: impl AsRef<Path>, x: &DMatrix<f64>) -> Result<()> {
    Ok(fs::write(path, format_real_csv(x))?)
}

pub fn write_int_csv(path: impl AsRef<Path>, m: &IntMatrix) -> Result<()> {
    Ok(fs::write(path, format_int_csv(m))?)
}
