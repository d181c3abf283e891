//! Golden reference algorithms: naive, blocked, and Strassen matrix
//! multiplication with operation instrumentation, plus closed-form one-level
//! operation counts.
//!
//! These are the oracles the simulator is checked against, so they share no
//! code with the datapath model in [`crate::mxu`].

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fxp::{ceil_log2, Matrix};

/// Scalar multiplication and addition counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OpCount {
    pub mults: u64,
    pub adds: u64,
    pub total: u64,
}

impl OpCount {
    pub fn new(mults: u64, adds: u64) -> Self {
        Self { mults, adds, total: mults + adds }
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        *self = OpCount::new(self.mults + rhs.mults, self.adds + rhs.adds);
    }
}

/// Output width of an exact `a * b` product: `wa + wb + ceil(log2(k))`.
pub fn product_width(a: &Matrix, b: &Matrix) -> u32 {
    a.width() + b.width() + ceil_log2(a.cols())
}

fn check_operands(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.is_signed() != b.is_signed() {
        return Err(Error::SignednessMismatch);
    }
    Ok(())
}

fn check_divisible(a: &Matrix, b: &Matrix, r: u32) -> Result<()> {
    let step = 1usize << r;
    for (dim, value) in [("m", a.rows()), ("k", a.cols()), ("n", b.cols())] {
        if value % step != 0 {
            return Err(Error::Divisibility { dim, value, r });
        }
    }
    Ok(())
}

/// Unchecked dense integer block used inside the recursive algorithms.
#[derive(Clone)]
struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<i128>,
}

impl Grid {
    fn of(m: &Matrix) -> Self {
        Grid { rows: m.rows(), cols: m.cols(), data: m.values().to_vec() }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Grid { rows, cols, data: vec![0; rows * cols] }
    }

    fn at(&self, i: usize, j: usize) -> i128 {
        self.data[i * self.cols + j]
    }

    /// Quadrant `(qi, qj)` of a grid with even dimensions.
    fn quadrant(&self, qi: usize, qj: usize) -> Grid {
        let (h, w) = (self.rows / 2, self.cols / 2);
        let mut out = Grid::zeros(h, w);
        for i in 0..h {
            let src = (qi * h + i) * self.cols + qj * w;
            out.data[i * w..(i + 1) * w].copy_from_slice(&self.data[src..src + w]);
        }
        out
    }

    fn from_quadrants(q: [[Grid; 2]; 2]) -> Grid {
        let (h, w) = (q[0][0].rows, q[0][0].cols);
        let mut out = Grid::zeros(2 * h, 2 * w);
        for (qi, row) in q.iter().enumerate() {
            for (qj, blk) in row.iter().enumerate() {
                for i in 0..h {
                    let dst = (qi * h + i) * out.cols + qj * w;
                    out.data[dst..dst + w].copy_from_slice(&blk.data[i * w..(i + 1) * w]);
                }
            }
        }
        out
    }

    fn add(&self, other: &Grid, ops: &mut OpCount) -> Grid {
        ops.adds += self.data.len() as u64;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| x + y).collect();
        Grid { rows: self.rows, cols: self.cols, data }
    }

    fn sub(&self, other: &Grid, ops: &mut OpCount) -> Grid {
        ops.adds += self.data.len() as u64;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| x - y).collect();
        Grid { rows: self.rows, cols: self.cols, data }
    }

    fn naive(&self, other: &Grid, ops: &mut OpCount) -> Grid {
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Grid::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = self.at(i, 0) * other.at(0, j);
                for kk in 1..k {
                    acc += self.at(i, kk) * other.at(kk, j);
                }
                out.data[i * n + j] = acc;
            }
        }
        ops.mults += (m * k * n) as u64;
        ops.adds += (m * n * (k - 1)) as u64;
        out
    }

    fn blocked(&self, other: &Grid, r: u32, ops: &mut OpCount) -> Grid {
        if r == 0 {
            return self.naive(other, ops);
        }
        let a = |i, j| self.quadrant(i, j);
        let b = |i, j| other.quadrant(i, j);
        let mut prod = |x: Grid, y: Grid| x.blocked(&y, r - 1, ops);
        let p = [
            [prod(a(0, 0), b(0, 0)), prod(a(0, 1), b(1, 0))],
            [prod(a(0, 0), b(0, 1)), prod(a(0, 1), b(1, 1))],
            [prod(a(1, 0), b(0, 0)), prod(a(1, 1), b(1, 0))],
            [prod(a(1, 0), b(0, 1)), prod(a(1, 1), b(1, 1))],
        ];
        let c11 = p[0][0].add(&p[0][1], ops);
        let c12 = p[1][0].add(&p[1][1], ops);
        let c21 = p[2][0].add(&p[2][1], ops);
        let c22 = p[3][0].add(&p[3][1], ops);
        Grid::from_quadrants([[c11, c12], [c21, c22]])
    }

    fn strassen(&self, other: &Grid, r: u32, ops: &mut OpCount) -> Grid {
        if r == 0 {
            return self.naive(other, ops);
        }
        let (a11, a12, a21, a22) = (self.quadrant(0, 0), self.quadrant(0, 1), self.quadrant(1, 0), self.quadrant(1, 1));
        let (b11, b12, b21, b22) =
            (other.quadrant(0, 0), other.quadrant(0, 1), other.quadrant(1, 0), other.quadrant(1, 1));

        let t1 = a11.add(&a22, ops);
        let t2 = a21.add(&a22, ops);
        let t5 = a11.add(&a12, ops);
        let t6 = a21.sub(&a11, ops);
        let t7 = a12.sub(&a22, ops);

        let s1 = b11.add(&b22, ops);
        let s3 = b12.sub(&b22, ops);
        let s4 = b21.sub(&b11, ops);
        let s6 = b11.add(&b12, ops);
        let s7 = b21.add(&b22, ops);

        let q1 = t1.strassen(&s1, r - 1, ops);
        let q2 = t2.strassen(&b11, r - 1, ops);
        let q3 = a11.strassen(&s3, r - 1, ops);
        let q4 = a22.strassen(&s4, r - 1, ops);
        let q5 = t5.strassen(&b22, r - 1, ops);
        let q6 = t6.strassen(&s6, r - 1, ops);
        let q7 = t7.strassen(&s7, r - 1, ops);

        let c11 = q1.add(&q4, ops).sub(&q5, ops).add(&q7, ops);
        let c12 = q3.add(&q5, ops);
        let c21 = q2.add(&q4, ops);
        let c22 = q1.sub(&q2, ops).add(&q3, ops).add(&q6, ops);
        Grid::from_quadrants([[c11, c12], [c21, c22]])
    }

    fn into_matrix(self, width: u32, signed: bool) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, width, signed, self.data)
    }
}

/// `c[i][j] = sum_k a[i][k] * b[k][j]`, exact.
pub fn matmul_naive(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    matmul_naive_counted(a, b).map(|(c, _)| c)
}

pub fn matmul_naive_counted(a: &Matrix, b: &Matrix) -> Result<(Matrix, OpCount)> {
    check_operands(a, b)?;
    let mut ops = OpCount::default();
    let c = Grid::of(a).naive(&Grid::of(b), &mut ops);
    let c = c.into_matrix(product_width(a, b), a.is_signed())?;
    ops.total = ops.mults + ops.adds;
    Ok((c, ops))
}

/// Conventional 2x2 blocked multiplication unrolled `r` levels.
pub fn matmul_blocked(a: &Matrix, b: &Matrix, r: u32) -> Result<Matrix> {
    check_operands(a, b)?;
    check_divisible(a, b, r)?;
    let mut ops = OpCount::default();
    let c = Grid::of(a).blocked(&Grid::of(b), r, &mut ops);
    c.into_matrix(product_width(a, b), a.is_signed())
}

pub fn matmul_strassen(a: &Matrix, b: &Matrix, r: u32) -> Result<Matrix> {
    matmul_strassen_counted(a, b, r).map(|(c, _)| c)
}

/// Strassen multiplication with `r` recursion levels over naive leaf products.
/// The returned counts are instrumented, not computed from a formula.
pub fn matmul_strassen_counted(a: &Matrix, b: &Matrix, r: u32) -> Result<(Matrix, OpCount)> {
    check_operands(a, b)?;
    check_divisible(a, b, r)?;
    let mut ops = OpCount::default();
    let c = Grid::of(a).strassen(&Grid::of(b), r, &mut ops);
    ops.total = ops.mults + ops.adds;
    Ok((c.into_matrix(product_width(a, b), a.is_signed())?, ops))
}

/// Conventional `n x n` product: `n^3` multiplications and `n^2 (n - 1)` additions.
pub fn ops_conventional(n: u64) -> Result<OpCount> {
    if n == 0 {
        return Err(Error::Dimension("n must be positive".into()));
    }
    Ok(OpCount::new(n * n * n, n * n * (n - 1)))
}

fn ops_one_level(n: u64, block_adds: u64) -> Result<OpCount> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Dimension(format!("one-level recursion needs even n, got {n}")));
    }
    let h = n / 2;
    Ok(OpCount::new(7 * h * h * h, 7 * h * h * (h - 1) + block_adds * h * h))
}

/// One Strassen level over naive `n/2` block products: `7n^3/8` multiplications,
/// `7 n^2 (n/2 - 1) / 4 + 18 (n/2)^2` additions.
pub fn ops_strassen_1(n: u64) -> Result<OpCount> {
    ops_one_level(n, 18)
}

/// Winograd variant: 15 block additions per level instead of 18.
pub fn ops_winograd_1(n: u64) -> Result<OpCount> {
    ops_one_level(n, 15)
}

fn total_exact(n: u64, block_adds: i128) -> Ratio<i128> {
    let n = Ratio::from_integer(n as i128);
    let half = n / 2;
    let seven = Ratio::from_integer(7);
    seven * n * n * n / 8 + seven * n * n * (half - 1) / 4 + Ratio::from_integer(block_adds) * half * half
}

/// Total one-level Strassen operations evaluated over the rationals (defined for odd `n`).
pub fn ops_strassen_1_total_exact(n: u64) -> Ratio<i128> {
    total_exact(n, 18)
}

pub fn ops_winograd_1_total_exact(n: u64) -> Ratio<i128> {
    total_exact(n, 15)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[i128; 2]; 2]) -> Matrix {
        Matrix::from_rows(rows, 8, true).unwrap()
    }

    #[test]
    fn naive_examples() {
        let a = m(&[[1, 2], [3, 4]]);
        assert_eq!(matmul_naive(&a, &a).unwrap().values(), &[7, 10, 15, 22]);
        let i = Matrix::identity(2, 8, true).unwrap();
        assert_eq!(matmul_naive(&i, &a).unwrap().values(), a.values());
        assert_eq!(matmul_naive(&i, &a).unwrap().width(), 8 + 8 + 1);
        let z = Matrix::zeros(2, 2, 8, true).unwrap();
        assert!(matmul_naive(&a, &z).unwrap().values().iter().all(|&v| v == 0));
    }

    #[test]
    fn dimension_mismatch() {
        let a = Matrix::zeros(2, 3, 4, true).unwrap();
        assert!(matches!(matmul_naive(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn blocked_and_strassen_small() {
        let a = m(&[[1, 2], [3, 4]]);
        assert_eq!(matmul_blocked(&a, &a, 0).unwrap(), matmul_naive(&a, &a).unwrap());
        assert_eq!(matmul_blocked(&a, &a, 1).unwrap().values(), &[7, 10, 15, 22]);
        assert_eq!(matmul_strassen(&a, &a, 1).unwrap().values(), &[7, 10, 15, 22]);
    }

    #[test]
    fn divisibility_is_enforced() {
        let a = Matrix::zeros(6, 6, 4, true).unwrap();
        assert!(matmul_strassen(&a, &a, 1).is_ok());
        assert!(matches!(matmul_strassen(&a, &a, 2), Err(Error::Divisibility { .. })));
        assert!(matches!(matmul_blocked(&a, &a, 2), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn unsigned_inputs_through_strassen() {
        let a = Matrix::from_rows(&[[255, 0], [1, 255]], 8, false).unwrap();
        let c = matmul_strassen(&a, &a, 1).unwrap();
        assert_eq!(c, matmul_naive(&a, &a).unwrap());
        assert!(!c.is_signed());
    }

    #[test]
    fn op_count_formulas() {
        assert_eq!(ops_conventional(1).unwrap(), OpCount::new(1, 0));
        assert_eq!(ops_conventional(16).unwrap(), OpCount::new(4096, 3840));
        assert_eq!(ops_conventional(15).unwrap().total, 6525);
        assert_eq!(ops_strassen_1(16).unwrap(), OpCount::new(3584, 3136 + 1152));
        assert_eq!(ops_strassen_1(16).unwrap().total, 7872);
        assert_eq!(ops_strassen_1(14).unwrap().total, 5341);
        assert_eq!(ops_conventional(14).unwrap().total, 5292);
        assert_eq!(ops_winograd_1(12).unwrap().total, 3312);
        assert_eq!(ops_conventional(12).unwrap().total, 3312);
        assert_eq!(ops_winograd_1(16).unwrap().total, 7680);
        assert!(ops_winograd_1(16).unwrap().total < ops_strassen_1(16).unwrap().total);
        assert!(ops_winograd_1(14).unwrap().total < ops_conventional(14).unwrap().total);
        assert!(ops_strassen_1(15).is_err());
        assert!(ops_winograd_1(7).is_err());
        assert!(ops_conventional(0).is_err());
    }

    #[test]
    fn fractional_equality_points() {
        assert_eq!(ops_strassen_1_total_exact(15), Ratio::from_integer(6525));
        assert_eq!(ops_winograd_1_total_exact(12), Ratio::from_integer(3312));
        for n in (2..64).step_by(2) {
            assert_eq!(ops_strassen_1_total_exact(n), Ratio::from_integer(ops_strassen_1(n).unwrap().total as i128));
        }
    }

    #[test]
    fn instrumented_counts_match_closed_forms() {
        // instrumentation is the brute-force oracle for the one-level formulas
        for n in (2..=20usize).step_by(2) {
            let a = Matrix::from_fn(n, n, 6, true, |i, j| ((i * 7 + j * 3) % 13) as i128 - 6).unwrap();
            let (c, ops) = matmul_strassen_counted(&a, &a, 1).unwrap();
            assert_eq!(c, matmul_naive(&a, &a).unwrap());
            assert_eq!(ops, ops_strassen_1(n as u64).unwrap(), "n = {n}");
            let (_, conv) = matmul_naive_counted(&a, &a).unwrap();
            assert_eq!(conv, ops_conventional(n as u64).unwrap());
        }
    }
}
