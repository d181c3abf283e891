//! Recursive composition of leaves into SMM_r / MM_r multisystolic arrays.

use std::collections::VecDeque;

use super::banks::{c_terms, s_terms, t_terms, INPUT_BANK_ADDERS, OUTPUT_BANK_ADDERS};
use super::leaf::{AElem, BElem, LeafArray, PortRange};
use super::{Family, MxuConfig};
use crate::error::{Error, Result};
use crate::fxp::ceil_log2;
use crate::layout::split_lines;

pub(crate) enum Node {
    Leaf(LeafArray),
    Composite(Box<Composite>),
}

/// One recursion level: the quadrant split, the input stage, `7` or `8`
/// children, and the output addition vectors.
pub(crate) struct Composite {
    family: Family,
    name: String,
    children: Vec<Node>,
    /// `quad_a[q][e]` is the parent bus index of element `e` of A quadrant `q` (q11, q12, q21, q22).
    quad_a: [Vec<usize>; 4],
    quad_b: [Vec<usize>; 4],
    quad_c: [Vec<usize>; 4],
    child_a: Vec<Vec<Option<AElem>>>,
    child_b: Vec<Vec<Option<BElem>>>,
    child_out: Vec<Vec<Option<i64>>>,
    out_pipe: VecDeque<Vec<Option<i64>>>,
    child_in: PortRange,
    out_range: PortRange,
    fault: bool,
}

/// Static description gathered by walking a built tree.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct TreeCounts {
    pub leaves: usize,
    pub multipliers: usize,
    pub adders: usize,
    pub a_addition_vectors: usize,
    pub b_addition_vectors: usize,
    pub q_addition_vectors: usize,
    pub pipeline_registers: usize,
}

fn quadrant_index(n: usize, lines: usize, line_len: usize, transposed: bool) -> [Vec<usize>; 4] {
    let idx: Vec<usize> = (0..n).collect();
    let [[g00, g01], [g10, g11]] = split_lines(&idx, lines, line_len);
    if transposed {
        [g00, g10, g01, g11]
    } else {
        [g00, g01, g10, g11]
    }
}

/// Gather four quadrant lanes; all present or all absent.
#[inline]
fn gather<T: Copy>(bus: &[Option<T>], quad: &[Vec<usize>; 4], e: usize, who: &str) -> Result<Option<[T; 4]>> {
    let lanes = [bus[quad[0][e]], bus[quad[1][e]], bus[quad[2][e]], bus[quad[3][e]]];
    match lanes {
        [Some(a), Some(b), Some(c), Some(d)] => Ok(Some([a, b, c, d])),
        [None, None, None, None] => Ok(None),
        _ => Err(Error::Stream(format!("{who}: quadrant lanes out of alignment"))),
    }
}

impl Node {
    /// Build the subtree with `level` recursion levels below it, fed with `width`-bit operands.
    pub fn build(cfg: &MxuConfig, level: u32, width: u32, next_leaf: &mut usize, fault: bool) -> Node {
        if level == 0 {
            let id = *next_leaf;
            *next_leaf += 1;
            let acc = 2 * width + ceil_log2(cfg.leaf_x);
            return Node::Leaf(LeafArray::new(id, cfg.leaf_x, cfg.leaf_y, width, acc));
        }
        let (x, y) = (cfg.leaf_x, cfg.leaf_y);
        let lines = 1usize << level;
        let in_len = (lines * lines) * x;
        let out_len = (lines * lines) * y;
        let child_width = match cfg.family {
            Family::Smm => width + 1,
            Family::Mm => width,
        };
        let n_children = match cfg.family {
            Family::Smm => 7,
            Family::Mm => 8,
        };
        let children: Vec<Node> =
            (0..n_children).map(|_| Node::build(cfg, level - 1, child_width, next_leaf, false)).collect();
        let child_out_width = children[0].output_width();
        let out_width = match cfg.family {
            Family::Smm => child_out_width + 2,
            Family::Mm => child_out_width + 1,
        };
        let pipe_depth = 1 + usize::from(cfg.q_add_pipeline);
        let name = match cfg.family {
            Family::Smm => format!("smm{level}"),
            Family::Mm => format!("mm{level}"),
        };
        Node::Composite(Box::new(Composite {
            family: cfg.family,
            name,
            children,
            quad_a: quadrant_index(in_len, lines, lines * x, false),
            quad_b: quadrant_index(in_len, lines, lines * x, true),
            quad_c: quadrant_index(out_len, lines, lines * y, false),
            child_a: vec![vec![None; in_len / 4]; n_children],
            child_b: vec![vec![None; in_len / 4]; n_children],
            child_out: vec![vec![None; out_len / 4]; n_children],
            out_pipe: (0..pipe_depth).map(|_| vec![None; out_len]).collect(),
            child_in: PortRange::signed(child_width),
            out_range: PortRange::signed(out_width),
            fault,
        }))
    }

    pub fn output_width(&self) -> u32 {
        match self {
            Node::Leaf(l) => l.acc_width(),
            Node::Composite(c) => c.out_range.width,
        }
    }

    pub fn step(&mut self, a: &[Option<AElem>], b: &[Option<BElem>], out: &mut [Option<i64>]) -> Result<()> {
        match self {
            Node::Leaf(leaf) => leaf.step(a, b, out),
            Node::Composite(c) => c.step(a, b, out),
        }
    }

    pub fn for_each_leaf(&self, f: &mut impl FnMut(&LeafArray)) {
        match self {
            Node::Leaf(l) => f(l),
            Node::Composite(c) => c.children.iter().for_each(|ch| ch.for_each_leaf(f)),
        }
    }

    pub fn counts(&self, x: usize, y: usize) -> TreeCounts {
        match self {
            Node::Leaf(_) => TreeCounts { leaves: 1, multipliers: x * y, ..Default::default() },
            Node::Composite(c) => {
                let mut t = TreeCounts::default();
                for ch in &c.children {
                    let s = ch.counts(x, y);
                    t.leaves += s.leaves;
                    t.multipliers += s.multipliers;
                    t.adders += s.adders;
                    t.a_addition_vectors += s.a_addition_vectors;
                    t.b_addition_vectors += s.b_addition_vectors;
                    t.q_addition_vectors += s.q_addition_vectors;
                    t.pipeline_registers += s.pipeline_registers;
                }
                let (a_len, b_len, c_len) = (c.child_a[0].len(), c.child_b[0].len(), c.child_out[0].len());
                match c.family {
                    Family::Smm => {
                        t.a_addition_vectors += INPUT_BANK_ADDERS;
                        t.b_addition_vectors += INPUT_BANK_ADDERS;
                        t.q_addition_vectors += OUTPUT_BANK_ADDERS;
                        t.adders += INPUT_BANK_ADDERS * a_len + INPUT_BANK_ADDERS * b_len + OUTPUT_BANK_ADDERS * c_len;
                    }
                    Family::Mm => {
                        t.q_addition_vectors += 4;
                        t.adders += 4 * c_len;
                    }
                }
                t.pipeline_registers += (c.out_pipe.len() - 1) * c.out_pipe[0].len();
                t
            }
        }
    }
}

impl Composite {
    fn step(&mut self, a: &[Option<AElem>], b: &[Option<BElem>], out: &mut [Option<i64>]) -> Result<()> {
        let front = self.out_pipe.pop_front().expect("output pipeline is never empty");
        out.copy_from_slice(&front);
        let mut next = front;

        match self.family {
            Family::Smm => {
                // children consume last cycle's registered T/S terms
                for ((child, ca), (cb, co)) in
                    self.children.iter_mut().zip(&self.child_a).zip(self.child_b.iter().zip(self.child_out.iter_mut()))
                {
                    child.step(ca, cb, co)?;
                }
                self.combine_q(&mut next)?;
                self.input_stage(a, b)?;
            }
            Family::Mm => {
                // the blocked form has no input arithmetic; quadrants are wired straight through
                self.distribute(a, b)?;
                for ((child, ca), (cb, co)) in
                    self.children.iter_mut().zip(&self.child_a).zip(self.child_b.iter().zip(self.child_out.iter_mut()))
                {
                    child.step(ca, cb, co)?;
                }
                self.combine_blocked(&mut next)?;
            }
        }
        self.out_pipe.push_back(next);
        Ok(())
    }

    fn input_stage(&mut self, a: &[Option<AElem>], b: &[Option<BElem>]) -> Result<()> {
        let n = self.child_a[0].len();
        for e in 0..n {
            match gather(a, &self.quad_a, e, &self.name)? {
                Some(q) => {
                    let sel = q[0].sel;
                    let t = t_terms(q.map(|l| l.value))?;
                    for (c, &v) in t.iter().enumerate() {
                        self.child_in.check(v, || format!("{}.T{}", self.name, c + 1))?;
                        self.child_a[c][e] = Some(AElem { value: v, sel });
                    }
                }
                None => self.child_a.iter_mut().for_each(|ca| ca[e] = None),
            }
            match gather(b, &self.quad_b, e, &self.name)? {
                Some(q) => {
                    let (sel, col) = (q[0].sel, q[0].col);
                    let s = s_terms(q.map(|l| l.value))?;
                    for (c, &v) in s.iter().enumerate() {
                        self.child_in.check(v, || format!("{}.S{}", self.name, c + 1))?;
                        self.child_b[c][e] = Some(BElem { value: v, sel, col });
                    }
                }
                None => self.child_b.iter_mut().for_each(|cb| cb[e] = None),
            }
        }
        Ok(())
    }

    fn combine_q(&mut self, next: &mut [Option<i64>]) -> Result<()> {
        let n = self.child_out[0].len();
        for e in 0..n {
            let lanes: [Option<i64>; 7] = std::array::from_fn(|c| self.child_out[c][e]);
            let c = if lanes.iter().all(Option::is_some) {
                let q = lanes.map(|v| v.unwrap());
                Some(c_terms(q, self.fault)?)
            } else if lanes.iter().all(Option::is_none) {
                None
            } else {
                return Err(Error::Stream(format!("{}: Q lanes out of alignment", self.name)));
            };
            for (quad, idx) in self.quad_c.iter().enumerate() {
                next[idx[e]] = match c {
                    Some(vals) => {
                        self.out_range.check(vals[quad], || format!("{}.C{}", self.name, quad_name(quad)))?;
                        Some(vals[quad])
                    }
                    None => None,
                };
            }
        }
        Ok(())
    }

    /// Child `(i, j, kk)` at index `4i + 2j + kk` multiplies `A_{i,kk}` by `B_{kk,j}`.
    fn distribute(&mut self, a: &[Option<AElem>], b: &[Option<BElem>]) -> Result<()> {
        for c in 0..8 {
            let (i, j, kk) = (c >> 2, (c >> 1) & 1, c & 1);
            let qa = &self.quad_a[2 * i + kk];
            let qb = &self.quad_b[2 * kk + j];
            for (e, (&ia, &ib)) in qa.iter().zip(qb).enumerate() {
                self.child_a[c][e] = a[ia];
                self.child_b[c][e] = b[ib];
            }
        }
        Ok(())
    }

    fn combine_blocked(&mut self, next: &mut [Option<i64>]) -> Result<()> {
        for (quad, idx) in self.quad_c.iter().enumerate() {
            let (p0, p1) = (&self.child_out[2 * quad], &self.child_out[2 * quad + 1]);
            for (e, &dst) in idx.iter().enumerate() {
                next[dst] = match (p0[e], p1[e]) {
                    (Some(x), Some(y)) => {
                        let v = x + y;
                        self.out_range.check(v, || format!("{}.C{}", self.name, quad_name(quad)))?;
                        Some(v)
                    }
                    (None, None) => None,
                    _ => return Err(Error::Stream(format!("{}: block products out of alignment", self.name))),
                };
            }
        }
        Ok(())
    }
}

fn quad_name(q: usize) -> &'static str {
    ["11", "12", "21", "22"][q]
}
