//! Strassen addition vectors: the A-side (T terms) and B-side (S terms) input
//! banks and the Q-side output bank.
//!
//! The formulas are written once over [`Lane`] so the simulator's fast integer
//! buses and the width-tracking [`FxpScalar`] API share them.

use crate::error::{Error, Result};
use crate::fxp::FxpScalar;
use crate::layout::QuadrantSlices;

pub(crate) trait Lane: Copy {
    fn plus(self, rhs: Self) -> Result<Self>;
    fn minus(self, rhs: Self) -> Result<Self>;
}

impl Lane for i64 {
    #[inline]
    fn plus(self, rhs: Self) -> Result<Self> {
        Ok(self + rhs)
    }

    #[inline]
    fn minus(self, rhs: Self) -> Result<Self> {
        Ok(self - rhs)
    }
}

impl Lane for FxpScalar {
    fn plus(self, rhs: Self) -> Result<Self> {
        self.add(rhs)
    }

    fn minus(self, rhs: Self) -> Result<Self> {
        self.sub(rhs)
    }
}

/// `[a11, a12, a21, a22] -> [T1..T7]`. T3 and T4 are pass-throughs.
#[inline]
pub(crate) fn t_terms<L: Lane>([a11, a12, a21, a22]: [L; 4]) -> Result<[L; 7]> {
    Ok([a11.plus(a22)?, a21.plus(a22)?, a11, a22, a11.plus(a12)?, a21.minus(a11)?, a12.minus(a22)?])
}

/// `[b11, b12, b21, b22] -> [S1..S7]`. S2 and S5 are pass-throughs.
#[inline]
pub(crate) fn s_terms<L: Lane>([b11, b12, b21, b22]: [L; 4]) -> Result<[L; 7]> {
    Ok([b11.plus(b22)?, b11, b12.minus(b22)?, b21.minus(b11)?, b22, b11.plus(b12)?, b21.plus(b22)?])
}

/// `[Q1..Q7] -> [C11, C12, C21, C22]` using eight two-input adders.
#[inline]
pub(crate) fn c_terms<L: Lane>(q: [L; 7], fault: bool) -> Result<[L; 4]> {
    let [q1, q2, q3, q4, q5, q6, q7] = q;
    let c11_tail = if fault { q7.plus(q5)? } else { q7.minus(q5)? };
    Ok([q1.plus(q4)?.plus(c11_tail)?, q3.plus(q5)?, q2.plus(q4)?, q1.minus(q2)?.plus(q3.plus(q6)?)?])
}

/// Sum/difference outputs per input bank; the remaining two outputs are pass-throughs.
pub const INPUT_BANK_ADDERS: usize = 5;
/// Adder vectors in the output bank (3 + 1 + 1 + 3).
pub const OUTPUT_BANK_ADDERS: usize = 8;

fn quadrant_lanes(slices: &QuadrantSlices) -> Result<Vec<[FxpScalar; 4]>> {
    if [slices.q12.len(), slices.q21.len(), slices.q22.len()].iter().any(|&n| n != slices.q11.len()) {
        return Err(Error::Dimension("quadrant slices differ in length".into()));
    }
    let lanes =
        (0..slices.len()).map(|e| [slices.q11[e], slices.q12[e], slices.q21[e], slices.q22[e]]).collect::<Vec<_>>();
    for lane in &lanes {
        if lane.iter().any(|s| !s.is_signed()) {
            return Err(Error::UnsignedSubtraction);
        }
    }
    Ok(lanes)
}

/// Widen every output to the widest one, matching the register widths of the bank.
fn promote<const N: usize>(outs: Vec<[FxpScalar; N]>) -> Result<[Vec<FxpScalar>; N]> {
    let width = outs.iter().flatten().map(FxpScalar::width).max().unwrap_or(1);
    let mut cols: [Vec<FxpScalar>; N] = std::array::from_fn(|_| Vec::with_capacity(outs.len()));
    for lane in outs {
        for (c, v) in cols.iter_mut().zip(lane) {
            c.push(v.widen(width)?);
        }
    }
    Ok(cols)
}

fn input_width(slices: &QuadrantSlices) -> u32 {
    [&slices.q11, &slices.q12, &slices.q21, &slices.q22]
        .iter()
        .flat_map(|v| v.iter().map(FxpScalar::width))
        .max()
        .unwrap_or(1)
}

/// A-side addition vectors: seven T vectors, each one bit wider than the input.
pub fn a_addition_bank(slices: &QuadrantSlices) -> Result<[Vec<FxpScalar>; 7]> {
    let w = input_width(slices);
    let lanes = quadrant_lanes(slices)?
        .into_iter()
        .map(|l| t_terms(l.map(|s| s.widen(w).expect("widening to max width"))))
        .collect::<Result<Vec<_>>>()?;
    promote(lanes)
}

/// B-side addition vectors: seven S vectors, each one bit wider than the input.
pub fn b_addition_bank(slices: &QuadrantSlices) -> Result<[Vec<FxpScalar>; 7]> {
    let w = input_width(slices);
    let lanes = quadrant_lanes(slices)?
        .into_iter()
        .map(|l| s_terms(l.map(|s| s.widen(w).expect("widening to max width"))))
        .collect::<Result<Vec<_>>>()?;
    promote(lanes)
}

/// Q-side addition vectors: `C11, C12, C21, C22`, two bits wider than the Q inputs.
pub fn q_addition_bank(q: &[Vec<FxpScalar>; 7]) -> Result<[Vec<FxpScalar>; 4]> {
    let n = q[0].len();
    if q.iter().any(|v| v.len() != n) {
        return Err(Error::Dimension("Q vectors differ in length".into()));
    }
    let w = q.iter().flatten().map(FxpScalar::width).max().unwrap_or(1);
    let lanes = (0..n)
        .map(|e| {
            let lane: [FxpScalar; 7] = std::array::from_fn(|i| q[i][e]);
            if lane.iter().any(|s| !s.is_signed()) {
                return Err(Error::UnsignedSubtraction);
            }
            c_terms(lane.map(|s| s.widen(w).expect("widening to max width")), false)
        })
        .collect::<Result<Vec<_>>>()?;
    promote(lanes)
}
