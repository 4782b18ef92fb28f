//! Dense row-major integer matrices and their delimited text form.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("line {line}: expected {expected} values, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse {value:?} as an integer")]
    Parse { line: usize, value: String },
    #[error("matrix text is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }
}

impl<T: Copy> Matrix<T> {
    /// Builds a matrix from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

impl<T: Copy + Display> Matrix<T> {
    /// One line per row, values separated by commas.
    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

impl<T: Copy + FromStr> Matrix<T> {
    pub fn from_delimited(text: &str) -> Result<Self, MatrixError> {
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut count = 0;
            for field in line.split(',') {
                let field = field.trim();
                let v = field.parse::<T>().map_err(|_| MatrixError::Parse {
                    line: idx + 1,
                    value: field.to_string(),
                })?;
                data.push(v);
                count += 1;
            }
            match cols {
                None => cols = Some(count),
                Some(expected) if expected != count => {
                    return Err(MatrixError::Ragged {
                        line: idx + 1,
                        expected,
                        found: count,
                    })
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols.ok_or(MatrixError::Empty)?;
        Ok(Self { rows, cols, data })
    }
}

/// Reference product `a · b` with 32-bit wrapping accumulation, computed by the textbook triple loop.
pub fn reference_matmul(a: &Matrix<i8>, b: &Matrix<i8>) -> Matrix<i32> {
    assert_eq!(a.cols(), b.rows(), "inner dimensions differ");
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc: i32 = 0;
            for k in 0..a.cols() {
                acc = acc.wrapping_add(a.get(i, k) as i32 * b.get(k, j) as i32);
            }
            out.set(i, j, acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delimited_round_trip() {
        let m = Matrix::from_vec(2, 3, vec![1i32, -2, 3, 40000, 0, -7]);
        let text = m.to_delimited();
        assert_eq!(text, "1,-2,3\n40000,0,-7\n");
        assert_eq!(Matrix::<i32>::from_delimited(&text).unwrap(), m);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = Matrix::<i8>::from_delimited("1,2\n3\n").unwrap_err();
        assert_eq!(
            err,
            MatrixError::Ragged {
                line: 2,
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn out_of_range_i8_is_a_parse_error() {
        assert!(matches!(
            Matrix::<i8>::from_delimited("1,200\n"),
            Err(MatrixError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn reference_product_small() {
        let a = Matrix::from_vec(2, 2, vec![1i8, 2, 3, 4]);
        let b = Matrix::from_vec(2, 2, vec![5i8, 6, 7, 8]);
        let c = reference_matmul(&a, &b);
        assert_eq!(c.as_slice(), &[19, 22, 43, 50]);
    }
}
