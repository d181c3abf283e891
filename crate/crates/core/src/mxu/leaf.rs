//! MM_0 leaf: an `X x Y` weight-stationary systolic array.
//!
//! PE `(j, k)` (row `j < Y`, column `k < X`) holds `b[k][j]` in one of two
//! buffers. A values enter the top of column `k` and move down one row per
//! cycle; partial sums move right one column per cycle and leave row `j` as
//! element `j` of the output vector. Each A element carries the buffer select
//! it was issued with, so a B tile swap follows the wavefront through the array.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AElem {
    pub value: i64,
    pub sel: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BElem {
    pub value: i64,
    pub sel: u8,
    /// Output column of the leaf tile, i.e. the PE row this element is latched into.
    pub col: u32,
}

/// Signed range of a datapath port.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PortRange {
    pub width: u32,
    min: i64,
    max: i64,
}

impl PortRange {
    pub fn signed(width: u32) -> Self {
        assert!((1..=63).contains(&width), "port width {width} outside i64 datapath");
        Self { width, min: -(1i64 << (width - 1)), max: (1i64 << (width - 1)) - 1 }
    }

    #[inline]
    pub fn check(&self, value: i64, port: impl FnOnce() -> String) -> Result<()> {
        if value < self.min || value > self.max {
            return Err(Error::WidthOverflow { port: port(), value: value as i128, width: self.width });
        }
        Ok(())
    }
}

pub(crate) struct LeafArray {
    pub id: usize,
    x: usize,
    y: usize,
    b: [Vec<i64>; 2],
    a_reg: Vec<Option<AElem>>,
    psum: Vec<Option<i64>>,
    input: PortRange,
    acc: PortRange,
    pub activations: u64,
    pub observed_input: (i64, i64),
}

impl LeafArray {
    pub fn new(id: usize, x: usize, y: usize, input_width: u32, acc_width: u32) -> Self {
        let n = x * y;
        Self {
            id,
            x,
            y,
            b: [vec![0; n], vec![0; n]],
            a_reg: vec![None; n],
            psum: vec![None; n],
            input: PortRange::signed(input_width),
            acc: PortRange::signed(acc_width),
            activations: 0,
            observed_input: (0, 0),
        }
    }

    pub fn acc_width(&self) -> u32 {
        self.acc.width
    }

    #[inline]
    fn observe(&mut self, v: i64) {
        self.observed_input.0 = self.observed_input.0.min(v);
        self.observed_input.1 = self.observed_input.1.max(v);
    }

    /// One clock. `out[j]` receives the partial sum leaving row `j` this cycle.
    pub fn step(&mut self, a: &[Option<AElem>], b: &[Option<BElem>], out: &mut [Option<i64>]) -> Result<()> {
        let (x, y) = (self.x, self.y);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.psum[j * x + x - 1];
        }

        for ae in a.iter().flatten() {
            let id = self.id;
            self.input.check(ae.value, || format!("leaf{id}.a_in"))?;
            self.observe(ae.value);
        }

        // reverse order so every PE still sees its neighbours' previous-cycle registers
        for j in (0..y).rev() {
            for k in (0..x).rev() {
                let idx = j * x + k;
                let a_in = if j == 0 { a[k] } else { self.a_reg[idx - x] };
                self.psum[idx] = match a_in {
                    Some(ae) => {
                        let prev = if k == 0 {
                            0
                        } else {
                            self.psum[idx - 1].ok_or_else(|| {
                                Error::Stream(format!("leaf{} PE({j},{k}): A arrived without a partial sum", self.id))
                            })?
                        };
                        let sum = prev + ae.value * self.b[ae.sel as usize][idx];
                        let id = self.id;
                        self.acc.check(sum, || format!("leaf{id}.pe({j},{k}).acc"))?;
                        self.activations += 1;
                        Some(sum)
                    }
                    None => None,
                };
                self.a_reg[idx] = a_in;
            }
        }

        for (k, be) in b.iter().enumerate() {
            if let Some(be) = *be {
                let id = self.id;
                self.input.check(be.value, || format!("leaf{id}.b_in"))?;
                self.observe(be.value);
                let j = be.col as usize;
                if j >= y {
                    return Err(Error::Stream(format!("leaf{id}: B column {j} outside {y} PE rows")));
                }
                self.b[be.sel as usize][j * x + k] = be.value;
            }
        }
        Ok(())
    }
}
