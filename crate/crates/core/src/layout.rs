//! Interleaved sub-block memory layout.
//!
//! A tile split into `4^r` lowest-level sub-blocks is stored so that address
//! `i` holds row `i` of every A sub-block (or column `i` of every B
//! sub-block). Reading one address per cycle therefore feeds one row/column of
//! all sub-blocks to the MXU at once. Element order inside an address is whole
//! tile rows (A, C) or whole tile columns (B) concatenated, so quadrant
//! membership is pure index arithmetic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::{FxpScalar, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
    C,
}

/// Address-ordered vectors feeding (or leaving) an MXU, one per cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedStream {
    side: Side,
    r: u32,
    tile_rows: usize,
    tile_cols: usize,
    width: u32,
    signed: bool,
    addresses: Vec<Vec<i128>>,
}

/// The four quadrant portions of one packed address vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadrantSlices<T = FxpScalar> {
    pub q11: Vec<T>,
    pub q12: Vec<T>,
    pub q21: Vec<T>,
    pub q22: Vec<T>,
}

impl<T> QuadrantSlices<T> {
    pub fn new(q11: Vec<T>, q12: Vec<T>, q21: Vec<T>, q22: Vec<T>) -> Result<Self> {
        let n = q11.len();
        if q12.len() != n || q21.len() != n || q22.len() != n {
            return Err(Error::Stream("quadrant slices differ in length".into()));
        }
        Ok(Self { q11, q12, q21, q22 })
    }

    pub fn len(&self) -> usize {
        self.q11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q11.is_empty()
    }
}

fn check_tile(rows: usize, cols: usize, r: u32) -> Result<()> {
    let step = 1usize << r;
    if !rows.is_multiple_of(step) {
        return Err(Error::Divisibility { dim: "tile rows", value: rows, r });
    }
    if !cols.is_multiple_of(step) {
        return Err(Error::Divisibility { dim: "tile cols", value: cols, r });
    }
    Ok(())
}

/// Row-interleaved layout shared by the A and C sides.
fn pack_rows(tile: &Matrix, r: u32, side: Side) -> Result<PackedStream> {
    check_tile(tile.rows(), tile.cols(), r)?;
    let m = tile.rows() >> r;
    let addresses =
        (0..m).map(|i| (0..1usize << r).flat_map(|s| tile.row(i + s * m).iter().copied()).collect()).collect();
    Ok(PackedStream {
        side,
        r,
        tile_rows: tile.rows(),
        tile_cols: tile.cols(),
        width: tile.width(),
        signed: tile.is_signed(),
        addresses,
    })
}

/// Address `i` = rows `i, i+m, ..., i+(2^r-1)m` concatenated, `m = rows / 2^r`.
pub fn pack_a(tile: &Matrix, r: u32) -> Result<PackedStream> {
    pack_rows(tile, r, Side::A)
}

/// C tiles share the A layout so a product can be chained as a later A input.
pub fn pack_c(tile: &Matrix, r: u32) -> Result<PackedStream> {
    pack_rows(tile, r, Side::C)
}

/// Address `j` = columns `j, j+n', ...` concatenated, `n' = cols / 2^r`.
pub fn pack_b(tile: &Matrix, r: u32) -> Result<PackedStream> {
    check_tile(tile.rows(), tile.cols(), r)?;
    let n = tile.cols() >> r;
    let addresses = (0..n).map(|j| (0..1usize << r).flat_map(|s| tile.col(j + s * n)).collect()).collect();
    Ok(PackedStream {
        side: Side::B,
        r,
        tile_rows: tile.rows(),
        tile_cols: tile.cols(),
        width: tile.width(),
        signed: tile.is_signed(),
        addresses,
    })
}

/// Reassemble a row-interleaved (C- or A-side) stream into its tile.
pub fn unpack_c(stream: &PackedStream) -> Result<Matrix> {
    if stream.side == Side::B {
        return Err(Error::Stream("cannot unpack a B-side stream as a C tile".into()));
    }
    let (rows, cols, r) = (stream.tile_rows, stream.tile_cols, stream.r);
    check_tile(rows, cols, r)?;
    let m = rows >> r;
    if stream.addresses.len() != m {
        return Err(Error::Stream(format!("expected {m} addresses, found {}", stream.addresses.len())));
    }
    let vec_len = cols << r;
    let mut data = vec![0; rows * cols];
    for (i, addr) in stream.addresses.iter().enumerate() {
        if addr.len() != vec_len {
            return Err(Error::Stream(format!("address {i} holds {} elements, expected {vec_len}", addr.len())));
        }
        for (s, line) in addr.chunks(cols).enumerate() {
            let row = i + s * m;
            data[row * cols..(row + 1) * cols].copy_from_slice(line);
        }
    }
    Matrix::new(rows, cols, stream.width, stream.signed, data)
}

/// Split a vector of `lines` equal lines into `[line half][position half]` groups.
pub(crate) fn split_lines<T: Clone>(vec: &[T], lines: usize, line_len: usize) -> [[Vec<T>; 2]; 2] {
    debug_assert_eq!(vec.len(), lines * line_len);
    let (hl, hp) = (lines / 2, line_len / 2);
    let part = |lh: usize, ph: usize| -> Vec<T> {
        (lh * hl..(lh + 1) * hl)
            .flat_map(|s| vec[s * line_len + ph * hp..s * line_len + (ph + 1) * hp].iter().cloned())
            .collect()
    };
    [[part(0, 0), part(0, 1)], [part(1, 0), part(1, 1)]]
}

/// Inverse of [`split_lines`].
pub(crate) fn merge_lines<T: Clone>(groups: [[&[T]; 2]; 2], lines: usize, line_len: usize) -> Vec<T> {
    let (hl, hp) = (lines / 2, line_len / 2);
    let mut out = Vec::with_capacity(lines * line_len);
    for s in 0..lines {
        let (lh, local) = (s / hl, s % hl);
        for g in &groups[lh] {
            out.extend_from_slice(&g[local * hp..(local + 1) * hp]);
        }
    }
    out
}

fn quadrant_geometry(r: u32, tile_dims: (usize, usize), side: Side) -> Result<(usize, usize)> {
    if r == 0 {
        return Err(Error::Config("quadrant split needs at least one recursion level".into()));
    }
    let (rows, cols) = tile_dims;
    check_tile(rows, cols, r)?;
    let line_len = match side {
        Side::A | Side::C => cols,
        Side::B => rows,
    };
    Ok((1usize << r, line_len))
}

/// Split one packed address vector into the parts belonging to each tile quadrant.
/// Each slice is itself the packed address of that quadrant at depth `r - 1`.
pub fn split_quadrants<T: Clone>(
    vec: &[T],
    r: u32,
    tile_dims: (usize, usize),
    side: Side,
) -> Result<QuadrantSlices<T>> {
    let (lines, line_len) = quadrant_geometry(r, tile_dims, side)?;
    if vec.len() != lines * line_len {
        return Err(Error::Stream(format!(
            "address vector holds {} elements, expected {}",
            vec.len(),
            lines * line_len
        )));
    }
    let [[g00, g01], [g10, g11]] = split_lines(vec, lines, line_len);
    Ok(match side {
        Side::A | Side::C => QuadrantSlices { q11: g00, q12: g01, q21: g10, q22: g11 },
        // columns are lines on the B side, so the line half selects the block column
        Side::B => QuadrantSlices { q11: g00, q12: g10, q21: g01, q22: g11 },
    })
}

/// Inverse of [`split_quadrants`].
pub fn merge_quadrants<T: Clone>(
    q: &QuadrantSlices<T>,
    r: u32,
    tile_dims: (usize, usize),
    side: Side,
) -> Result<Vec<T>> {
    let (lines, line_len) = quadrant_geometry(r, tile_dims, side)?;
    if q.len() * 4 != lines * line_len {
        return Err(Error::Stream("quadrant slices do not match the tile".into()));
    }
    let groups = match side {
        Side::A | Side::C => [[&q.q11[..], &q.q12[..]], [&q.q21[..], &q.q22[..]]],
        Side::B => [[&q.q11[..], &q.q21[..]], [&q.q12[..], &q.q22[..]]],
    };
    Ok(merge_lines(groups, lines, line_len))
}

impl PackedStream {
    /// Build a stream from raw address vectors, validating its shape.
    #[allow(clippy::too_many_arguments)]
    pub fn from_addresses(
        side: Side,
        r: u32,
        tile_dims: (usize, usize),
        width: u32,
        signed: bool,
        addresses: Vec<Vec<i128>>,
    ) -> Result<Self> {
        let (tile_rows, tile_cols) = tile_dims;
        check_tile(tile_rows, tile_cols, r)?;
        let (count, len) = match side {
            Side::A | Side::C => (tile_rows >> r, tile_cols << r),
            Side::B => (tile_cols >> r, tile_rows << r),
        };
        if addresses.len() != count || addresses.iter().any(|a| a.len() != len) {
            return Err(Error::Stream(format!(
                "{side:?}-side {tile_rows}x{tile_cols} tile at r={r} needs {count} addresses of {len} elements"
            )));
        }
        Ok(Self { side, r, tile_rows, tile_cols, width, signed, addresses })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn tile_dims(&self) -> (usize, usize) {
        (self.tile_rows, self.tile_cols)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    pub fn vec_len(&self) -> usize {
        self.addresses.first().map_or(0, Vec::len)
    }

    pub fn address(&self, i: usize) -> &[i128] {
        &self.addresses[i]
    }

    pub fn addresses(&self) -> &[Vec<i128>] {
        &self.addresses
    }

    /// Relabel the side without moving data (A and C share a layout).
    pub fn as_side(&self, side: Side) -> Result<PackedStream> {
        if (self.side == Side::B) != (side == Side::B) {
            return Err(Error::Stream("B-side layout is transposed; cannot relabel".into()));
        }
        Ok(PackedStream { side, ..self.clone() })
    }

    /// Debug dump: one address per line, comma separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for addr in &self.addresses {
            let line: Vec<String> = addr.iter().map(i128::to_string).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counting(n: usize) -> Matrix {
        Matrix::from_fn(n, n, 16, true, |i, j| (n * i + j) as i128).unwrap()
    }

    #[test]
    fn pack_a_worked_example() {
        let s = pack_a(&counting(4), 1).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.address(0), &[0, 1, 2, 3, 8, 9, 10, 11]);
        assert_eq!(s.address(1), &[4, 5, 6, 7, 12, 13, 14, 15]);
    }

    #[test]
    fn pack_a_identity_at_r0() {
        let t = counting(4);
        let s = pack_a(&t, 0).unwrap();
        for i in 0..4 {
            assert_eq!(s.address(i), t.row(i));
        }
    }

    #[test]
    fn pack_a_r2() {
        let t = counting(8);
        let s = pack_a(&t, 2).unwrap();
        assert_eq!(s.len(), 2);
        let expect: Vec<i128> = [0, 2, 4, 6].iter().flat_map(|&r| t.row(r).to_vec()).collect();
        assert_eq!(s.address(0), &expect[..]);
        assert_eq!(s.vec_len(), 32);
    }

    #[test]
    fn pack_b_examples() {
        let t = counting(4);
        let s = pack_b(&t, 1).unwrap();
        assert_eq!(s.address(0), &[0, 4, 8, 12, 2, 6, 10, 14]);
        let s0 = pack_b(&t, 0).unwrap();
        assert_eq!(s0.address(3), &t.col(3)[..]);
        let via_t = pack_a(&t.transpose(), 1).unwrap();
        assert_eq!(s.addresses(), via_t.addresses());
    }

    #[test]
    fn unpack_inverts_worked_example() {
        let t = counting(4);
        assert_eq!(unpack_c(&pack_a(&t, 1).unwrap()).unwrap(), t);
        assert_eq!(unpack_c(&pack_c(&t, 0).unwrap()).unwrap(), t);
        assert!(unpack_c(&pack_b(&t, 1).unwrap()).is_err());
    }

    #[test]
    fn malformed_streams_rejected() {
        assert!(PackedStream::from_addresses(Side::C, 1, (4, 4), 8, true, vec![vec![0; 8]; 3]).is_err());
        assert!(PackedStream::from_addresses(Side::C, 1, (4, 4), 8, true, vec![vec![0; 7]; 2]).is_err());
        assert!(pack_a(&Matrix::zeros(6, 4, 4, true).unwrap(), 2).is_err());
    }

    #[test]
    fn split_worked_example() {
        let s = pack_a(&counting(4), 1).unwrap();
        let q = split_quadrants(s.address(0), 1, (4, 4), Side::A).unwrap();
        assert_eq!(q, QuadrantSlices::new(vec![0, 1], vec![2, 3], vec![8, 9], vec![10, 11]).unwrap());
        let z = split_quadrants(&[0i128; 8], 1, (4, 4), Side::A).unwrap();
        assert!(z.q11.iter().chain(&z.q22).all(|&v| v == 0));
        assert_eq!(merge_quadrants(&q, 1, (4, 4), Side::A).unwrap(), s.address(0));
        assert!(split_quadrants(&[0i128; 6], 1, (4, 4), Side::A).is_err());
    }

    #[test]
    fn csv_dump() {
        let s = pack_a(&counting(2), 1).unwrap();
        assert_eq!(s.to_csv(), "0,1,2,3\n");
    }

    fn tile_and_r() -> impl Strategy<Value = (Matrix, u32)> {
        (0u32..=3, 1usize..=3, 1usize..=3).prop_flat_map(|(r, hr, hc)| {
            let (rows, cols) = (hr << r, hc << r);
            proptest::collection::vec(-100i128..100, rows * cols)
                .prop_map(move |data| (Matrix::new(rows, cols, 8, true, data).unwrap(), r))
        })
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip((t, r) in tile_and_r()) {
            prop_assert_eq!(unpack_c(&pack_a(&t, r).unwrap()).unwrap(), t.clone());
            prop_assert_eq!(unpack_c(&pack_c(&t, r).unwrap()).unwrap(), t);
        }

        #[test]
        fn addresses_hold_one_line_of_every_sub_block((t, r) in tile_and_r()) {
            let (m, k) = (t.rows() >> r, t.cols() >> r);
            let sa = pack_a(&t, r).unwrap();
            let sb = pack_b(&t, r).unwrap();
            let (n, kb) = (t.cols() >> r, t.rows() >> r);
            for bi in 0..1usize << r {
                for bj in 0..1usize << r {
                    let a_blk = t.block(bi * m, bj * k, m, k).unwrap();
                    let b_blk = t.block(bi * kb, bj * n, kb, n).unwrap();
                    for i in 0..m {
                        // sub-block (bi, bj) starts at line bi, offset bj*k of address i
                        let start = bi * t.cols() + bj * k;
                        prop_assert_eq!(&sa.address(i)[start..start + k], a_blk.row(i));
                    }
                    for j in 0..n {
                        let start = bj * t.rows() + bi * kb;
                        prop_assert_eq!(&sb.address(j)[start..start + kb], &b_blk.col(j)[..]);
                    }
                }
            }
        }

        #[test]
        fn quadrants_repack_consistently((t, r) in tile_and_r()) {
            prop_assume!(r >= 1);
            let (h, w) = (t.rows() / 2, t.cols() / 2);
            for side in [Side::A, Side::B] {
                let full = if side == Side::A { pack_a(&t, r) } else { pack_b(&t, r) }.unwrap();
                let quads = [
                    t.block(0, 0, h, w).unwrap(),
                    t.block(0, w, h, w).unwrap(),
                    t.block(h, 0, h, w).unwrap(),
                    t.block(h, w, h, w).unwrap(),
                ];
                let sub: Vec<PackedStream> = quads
                    .iter()
                    .map(|q| if side == Side::A { pack_a(q, r - 1) } else { pack_b(q, r - 1) }.unwrap())
                    .collect();
                for (i, addr) in full.addresses().iter().enumerate() {
                    let q = split_quadrants(addr, r, (t.rows(), t.cols()), side).unwrap();
                    prop_assert_eq!(&q.q11[..], sub[0].address(i));
                    prop_assert_eq!(&q.q12[..], sub[1].address(i));
                    prop_assert_eq!(&q.q21[..], sub[2].address(i));
                    prop_assert_eq!(&q.q22[..], sub[3].address(i));
                    prop_assert_eq!(&merge_quadrants(&q, r, (t.rows(), t.cols()), side).unwrap(), addr);
                }
            }
        }
    }
}
