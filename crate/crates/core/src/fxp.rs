//! Exact integer-semantics fixed-point scalars and matrices.
//!
//! Every value carries a declared bitwidth and signedness. Arithmetic grows
//! the width (add: `max + 1`, mul: `sum`) and results are range-checked, so an
//! overflow surfaces as an error instead of wrapping.

use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Widest value representable in the `i128` backing store.
pub const MAX_WIDTH: u32 = 127;

/// Smallest value of a `width`-bit integer.
pub fn min_value(width: u32, signed: bool) -> i128 {
    if signed {
        -(1i128 << (width - 1))
    } else {
        0
    }
}

/// Largest value of a `width`-bit integer.
pub fn max_value(width: u32, signed: bool) -> i128 {
    if signed {
        (1i128 << (width - 1)) - 1
    } else {
        (1i128 << width) - 1
    }
}

pub fn fits(value: i128, width: u32, signed: bool) -> bool {
    (1..=MAX_WIDTH).contains(&width) && value >= min_value(width, signed) && value <= max_value(width, signed)
}

/// Minimum number of bits needed to hold `value` in the given signedness.
pub fn bits_required(value: i128, signed: bool) -> u32 {
    if signed {
        // two's complement: magnitude bits of v (or !v for negatives) plus sign
        let v = if value < 0 { !value } else { value };
        128 - v.leading_zeros() + 1
    } else {
        (128 - value.leading_zeros()).max(1)
    }
}

/// `ceil(log2(n))`, with `ceil_log2(1) == 0`.
pub fn ceil_log2(n: usize) -> u32 {
    assert!(n > 0, "ceil_log2 of zero");
    usize::BITS - (n - 1).leading_zeros()
}

fn check_width(width: u32) -> Result<()> {
    if (1..=MAX_WIDTH).contains(&width) {
        Ok(())
    } else {
        Err(Error::InvalidWidth(width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxpScalar {
    value: i128,
    width: u32,
    signed: bool,
}

#[allow(clippy::should_implement_trait)]
impl FxpScalar {
    pub fn new(value: i128, width: u32, signed: bool) -> Result<Self> {
        check_width(width)?;
        if !fits(value, width, signed) {
            return Err(Error::OutOfRange { value, width, signed });
        }
        Ok(Self { value, width, signed })
    }

    pub fn signed(value: i128, width: u32) -> Result<Self> {
        Self::new(value, width, true)
    }

    pub fn unsigned(value: i128, width: u32) -> Result<Self> {
        Self::new(value, width, false)
    }

    pub fn zero(width: u32, signed: bool) -> Result<Self> {
        Self::new(0, width, signed)
    }

    pub fn value(&self) -> i128 {
        self.value
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// Result width is `max(a, b) + 1`.
    pub fn add(self, rhs: Self) -> Result<Self> {
        if self.signed != rhs.signed {
            return Err(Error::SignednessMismatch);
        }
        let width = self.width.max(rhs.width) + 1;
        Self::new(self.value + rhs.value, width, self.signed)
    }

    /// Same width rule as [`FxpScalar::add`]; only defined for signed operands.
    pub fn sub(self, rhs: Self) -> Result<Self> {
        if self.signed != rhs.signed {
            return Err(Error::SignednessMismatch);
        }
        if !self.signed {
            return Err(Error::UnsignedSubtraction);
        }
        let width = self.width.max(rhs.width) + 1;
        Self::new(self.value - rhs.value, width, true)
    }

    /// Result width is `a + b`.
    pub fn mul(self, rhs: Self) -> Result<Self> {
        if self.signed != rhs.signed {
            return Err(Error::SignednessMismatch);
        }
        Self::new(self.value * rhs.value, self.width + rhs.width, self.signed)
    }

    /// Re-declare at a wider (or equal) width without changing the value.
    pub fn widen(self, width: u32) -> Result<Self> {
        if width < self.width {
            return Err(Error::InvalidWidth(width));
        }
        Self::new(self.value, width, self.signed)
    }

    /// Unsigned `w`-bit values become signed `w+1`-bit values; signed values are unchanged.
    pub fn to_signed(self) -> Result<Self> {
        if self.signed {
            Ok(self)
        } else {
            Self::new(self.value, self.width + 1, true)
        }
    }
}

impl fmt::Display for FxpScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}{}", self.value, self.width, if self.signed { "s" } else { "u" })
    }
}

/// Dense row-major matrix with a uniform element width and signedness.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    width: u32,
    signed: bool,
    data: Vec<i128>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, width: u32, signed: bool, data: Vec<i128>) -> Result<Self> {
        check_width(width)?;
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} elements supplied for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(&value) = data.iter().find(|&&v| !fits(v, width, signed)) {
            return Err(Error::OutOfRange { value, width, signed });
        }
        Ok(Self { rows, cols, width, signed, data })
    }

    pub fn zeros(rows: usize, cols: usize, width: u32, signed: bool) -> Result<Self> {
        Self::new(rows, cols, width, signed, vec![0; rows * cols])
    }

    pub fn identity(n: usize, width: u32, signed: bool) -> Result<Self> {
        Self::from_fn(n, n, width, signed, |i, j| i128::from(i == j))
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        width: u32,
        signed: bool,
        mut f: impl FnMut(usize, usize) -> i128,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, width, signed, data)
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows<R: AsRef<[i128]>>(rows: &[R], width: u32, signed: bool) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, width, signed, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn values(&self) -> &[i128] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> i128 {
        self.data[i * self.cols + j]
    }

    pub fn scalar(&self, i: usize, j: usize) -> FxpScalar {
        FxpScalar { value: self.get(i, j), width: self.width, signed: self.signed }
    }

    pub fn row(&self, i: usize) -> &[i128] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<i128> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Matrix { rows: self.cols, cols: self.rows, width: self.width, signed: self.signed, data }
    }

    /// Copy of the `rows x cols` block whose top-left corner is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Matrix> {
        if r0 + rows > self.rows || c0 + cols > self.cols {
            return Err(Error::Dimension(format!(
                "block {rows}x{cols} at ({r0},{c0}) exceeds {}x{}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in r0..r0 + rows {
            data.extend_from_slice(&self.data[i * self.cols + c0..i * self.cols + c0 + cols]);
        }
        Ok(Matrix { rows, cols, width: self.width, signed: self.signed, data })
    }

    /// Zero-extend to `rows x cols` (both at least the current size).
    pub fn padded(&self, rows: usize, cols: usize) -> Result<Matrix> {
        if rows < self.rows || cols < self.cols {
            return Err(Error::Dimension("padding cannot shrink a matrix".into()));
        }
        let mut data = vec![0; rows * cols];
        for i in 0..self.rows {
            data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
        }
        Ok(Matrix { rows, cols, width: self.width, signed: self.signed, data })
    }

    /// Same values re-declared at `width`; fails if any value does not fit.
    pub fn with_width(&self, width: u32) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, width, self.signed, self.data.clone())
    }

    /// Promote unsigned `w`-bit data to signed `w+1`-bit data.
    pub fn to_signed(&self) -> Matrix {
        if self.signed {
            return self.clone();
        }
        Matrix { width: self.width + 1, signed: true, ..self.clone() }
    }

    /// Matrix CSV: a metadata record `rows,cols,width,signed` followed by one
    /// record per matrix row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).has_headers(false).from_writer(out);
        w.write_record([
            self.rows.to_string(),
            self.cols.to_string(),
            self.width.to_string(),
            self.signed.to_string(),
        ])?;
        for i in 0..self.rows {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Matrix> {
        let mut rdr =
            csv::ReaderBuilder::new().flexible(true).has_headers(false).trim(csv::Trim::All).from_reader(input);
        let mut records = rdr.records();
        let header = records.next().ok_or_else(|| Error::Parse("missing rows,cols,width,signed record".into()))??;
        if header.len() != 4 {
            return Err(Error::Parse(format!("expected 4 metadata fields, found {}", header.len())));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let rows = parse_usize(&header[0])?;
        let cols = parse_usize(&header[1])?;
        let width = header[2].parse::<u32>().map_err(|e| Error::Parse(e.to_string()))?;
        let signed = match &header[3] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(Error::Parse(format!("bad signed flag {other:?}"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for rec in records {
            let rec = rec?;
            if rec.len() != cols {
                return Err(Error::Parse(format!("row has {} values, expected {cols}", rec.len())));
            }
            for field in rec.iter() {
                data.push(field.parse::<i128>().map_err(|e| Error::Parse(format!("{field:?}: {e}")))?);
            }
        }
        Matrix::new(rows, cols, width, signed, data)
    }
}
