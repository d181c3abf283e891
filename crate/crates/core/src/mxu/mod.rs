//! Cycle-level simulation of MM_0 leaves and their recursive composition into
//! SMM_r (Strassen) and MM_r (blocked) multisystolic arrays.
//!
//! The top-level [`Mxu`] owns the triangular skew buffers on the A, B and C
//! buses, the B-tile loader with its double buffer, and the recursive tree of
//! addition-vector stages and leaves. Values travel as `i64` with every port
//! range-checked against the width the architecture allocates for it.

pub mod banks;
mod leaf;
mod node;
pub mod skew;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use banks::{a_addition_bank, b_addition_bank, q_addition_bank, INPUT_BANK_ADDERS, OUTPUT_BANK_ADDERS};
pub use skew::SkewBuffer;

use crate::error::{Error, Result};
use crate::fxp::{ceil_log2, fits, Matrix};
use crate::layout::{pack_b, PackedStream, Side};
use leaf::{AElem, BElem};
use node::Node;

/// Widest port the `i64` datapath can carry.
pub const MAX_DATAPATH_WIDTH: u32 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mm,
    Smm,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Mm => "mm",
            Family::Smm => "smm",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mm" => Ok(Family::Mm),
            "smm" => Ok(Family::Smm),
            other => Err(Error::Config(format!("unknown architecture family '{other}' (expected mm or smm)"))),
        }
    }
}

fn default_signed() -> bool {
    true
}

/// Architecture descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MxuConfig {
    pub family: Family,
    pub r: u32,
    /// Width of the a/b vectors entering each leaf.
    pub leaf_x: usize,
    /// Width of the c vectors leaving each leaf.
    pub leaf_y: usize,
    pub input_width: u32,
    #[serde(default = "default_signed")]
    pub signed: bool,
    #[serde(default)]
    pub q_add_pipeline: bool,
    /// Test hook: the root Q bank adds Q5 instead of subtracting it.
    #[serde(skip)]
    pub inject_q_fault: bool,
}

impl MxuConfig {
    pub fn new(family: Family, r: u32, leaf_x: usize, leaf_y: usize, input_width: u32) -> Self {
        Self { family, r, leaf_x, leaf_y, input_width, signed: true, q_add_pipeline: false, inject_q_fault: false }
    }

    pub fn smm(r: u32, leaf_x: usize, leaf_y: usize, input_width: u32) -> Self {
        Self::new(Family::Smm, r, leaf_x, leaf_y, input_width)
    }

    pub fn mm(r: u32, leaf_x: usize, leaf_y: usize, input_width: u32) -> Self {
        Self::new(Family::Mm, r, leaf_x, leaf_y, input_width)
    }

    pub fn with_signed(mut self, signed: bool) -> Self {
        self.signed = signed;
        self
    }

    pub fn with_q_add_pipeline(mut self, on: bool) -> Self {
        self.q_add_pipeline = on;
        self
    }

    /// Short label such as `SMM_2 6x6`.
    pub fn label(&self) -> String {
        let fam = match self.family {
            Family::Mm => "MM",
            Family::Smm => "SMM",
        };
        format!("{fam}_{} {}x{}", self.r, self.leaf_x, self.leaf_y)
    }

    /// Signed width of the operands entering the MXU (unsigned inputs gain a sign bit).
    pub fn datapath_width(&self) -> u32 {
        self.input_width + u32::from(!self.signed)
    }

    /// Width of every leaf multiplier input.
    pub fn leaf_input_width(&self) -> u32 {
        match self.family {
            Family::Smm => self.datapath_width() + self.r,
            Family::Mm => self.datapath_width(),
        }
    }

    pub fn accumulator_width(&self) -> u32 {
        2 * self.leaf_input_width() + ceil_log2(self.leaf_x)
    }

    pub fn output_width(&self) -> u32 {
        let per_level = match self.family {
            Family::Smm => 2,
            Family::Mm => 1,
        };
        self.accumulator_width() + per_level * self.r
    }

    /// `(tile_m, tile_k, tile_n)` of one MXU pass. `tile_m` is the square
    /// full-utilization choice; the MXU itself accepts any multiple of `2^r`.
    pub fn tile_dims(&self) -> (usize, usize, usize) {
        let s = 1usize << self.r;
        (s * self.leaf_y, s * self.leaf_x, s * self.leaf_y)
    }

    pub fn leaf_count(&self) -> usize {
        match self.family {
            Family::Smm => 7usize.pow(self.r),
            Family::Mm => 8usize.pow(self.r),
        }
    }

    pub fn multiplier_count(&self) -> usize {
        self.leaf_count() * self.leaf_x * self.leaf_y
    }

    /// Elements per packed A/B address.
    pub fn a_vec_len(&self) -> usize {
        (1usize << (2 * self.r)) * self.leaf_x
    }

    /// Elements per packed C address.
    pub fn c_vec_len(&self) -> usize {
        (1usize << (2 * self.r)) * self.leaf_y
    }

    /// Clock cycles from an A address entering to its C address leaving.
    pub fn pipeline_latency(&self) -> usize {
        let per_level = match self.family {
            Family::Smm => 2,
            Family::Mm => 1,
        } + usize::from(self.q_add_pipeline);
        self.leaf_x + self.leaf_y - 1 + self.r as usize * per_level
    }

    pub fn validate(&self) -> Result<()> {
        if self.leaf_x == 0 || self.leaf_y == 0 {
            return Err(Error::Config("leaf dimensions must be positive".into()));
        }
        if self.input_width == 0 {
            return Err(Error::Config("input width must be positive".into()));
        }
        if self.r > 6 {
            return Err(Error::Config(format!("recursion depth {} is beyond the supported 0..=6", self.r)));
        }
        if self.inject_q_fault && (self.family != Family::Smm || self.r == 0) {
            return Err(Error::Config("Q-bank fault injection needs an SMM configuration with r >= 1".into()));
        }
        let out = self.output_width();
        if out > MAX_DATAPATH_WIDTH {
            return Err(Error::Config(format!(
                "{} needs {out}-bit output ports; the simulator datapath carries at most {MAX_DATAPATH_WIDTH}",
                self.label()
            )));
        }
        Ok(())
    }
}

/// Static structure of a built MXU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MxuStructure {
    pub leaves: usize,
    pub multipliers: usize,
    /// Elementwise adders in the addition vectors, one per vector element.
    pub adders: usize,
    pub a_addition_vectors: usize,
    pub b_addition_vectors: usize,
    pub q_addition_vectors: usize,
    pub pipeline_registers: usize,
    pub leaf_input_width: u32,
    pub accumulator_width: u32,
    pub output_width: u32,
    pub latency: usize,
}

/// Per-run accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycles_total: u64,
    /// Cycle index at which the first C address left the MXU.
    pub fill_latency: u64,
    pub mult_activations: u64,
    pub useful_conventional_mults: u64,
    pub a_vectors_in: u64,
    pub c_vectors_out: u64,
    pub b_vectors_in: u64,
}

impl CycleReport {
    /// Cycles after the first output appeared.
    pub fn steady_cycles(&self) -> u64 {
        self.cycles_total.saturating_sub(self.fill_latency)
    }
}

struct Loader {
    data: Vec<Vec<i64>>,
    next: usize,
    sel: u8,
}

#[derive(Debug, Clone, Copy)]
struct Staged {
    sel: u8,
    start: u64,
}

/// Outcome of [`Mxu::run_tiles`].
#[derive(Debug, Clone)]
pub struct TileRun {
    pub c: Vec<PackedStream>,
    pub report: CycleReport,
    /// Cycle index at which the last C address of each tile left the MXU.
    pub tile_completion_cycles: Vec<u64>,
}

pub struct Mxu {
    cfg: MxuConfig,
    root: Node,
    a_skew: SkewBuffer<AElem>,
    b_skew: SkewBuffer<BElem>,
    c_skew: SkewBuffer<i64>,
    a_bus: Vec<Option<AElem>>,
    b_bus: Vec<Option<BElem>>,
    raw_c: Vec<Option<i64>>,
    c_bus: Vec<Option<i64>>,
    active_sel: u8,
    loader: Option<Loader>,
    staged: Option<Staged>,
    cycle: u64,
    first_out: Option<u64>,
    a_in: u64,
    b_in: u64,
    c_out: u64,
    useful: u64,
    trace: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Mxu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mxu").field("cfg", &self.cfg).field("cycle", &self.cycle).finish_non_exhaustive()
    }
}

pub fn build_mxu(cfg: &MxuConfig) -> Result<Mxu> {
    Mxu::new(cfg)
}

impl Mxu {
    pub fn new(cfg: &MxuConfig) -> Result<Self> {
        cfg.validate()?;
        let mut next_leaf = 0;
        let root = Node::build(cfg, cfg.r, cfg.datapath_width(), &mut next_leaf, cfg.inject_q_fault);
        let (x, y) = (cfg.leaf_x, cfg.leaf_y);
        let (in_len, out_len) = (cfg.a_vec_len(), cfg.c_vec_len());
        Ok(Self {
            cfg: cfg.clone(),
            root,
            a_skew: SkewBuffer::new((0..in_len).map(|p| p % x)),
            b_skew: SkewBuffer::new((0..in_len).map(|p| p % x)),
            c_skew: SkewBuffer::new((0..out_len).map(|p| y - 1 - p % y)),
            a_bus: vec![None; in_len],
            b_bus: vec![None; in_len],
            raw_c: vec![None; out_len],
            c_bus: vec![None; out_len],
            active_sel: 0,
            loader: None,
            staged: None,
            cycle: 0,
            first_out: None,
            a_in: 0,
            b_in: 0,
            c_out: 0,
            useful: 0,
            trace: None,
        })
    }

    pub fn config(&self) -> &MxuConfig {
        &self.cfg
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn structure(&self) -> MxuStructure {
        let t = self.root.counts(self.cfg.leaf_x, self.cfg.leaf_y);
        MxuStructure {
            leaves: t.leaves,
            multipliers: t.multipliers,
            adders: t.adders,
            a_addition_vectors: t.a_addition_vectors,
            b_addition_vectors: t.b_addition_vectors,
            q_addition_vectors: t.q_addition_vectors,
            pipeline_registers: t.pipeline_registers,
            leaf_input_width: self.cfg.leaf_input_width(),
            accumulator_width: self.cfg.accumulator_width(),
            output_width: self.root.output_width(),
            latency: self.cfg.pipeline_latency(),
        }
    }

    /// Write a per-cycle CSV trace (`cycle,unit,port,value`) to `out`.
    pub fn set_trace(&mut self, mut out: Box<dyn Write + Send>) -> Result<()> {
        writeln!(out, "cycle,unit,port,value")?;
        self.trace = Some(out);
        Ok(())
    }

    fn trace_row(&mut self, unit: &str, port: &str, values: impl IntoIterator<Item = i64>) -> Result<()> {
        if let Some(out) = self.trace.as_mut() {
            let joined: Vec<String> = values.into_iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{unit},{port},{}", self.cycle, joined.join(";"))?;
        }
        Ok(())
    }

    fn check_input(&self, v: i128) -> Result<i64> {
        if !fits(v, self.cfg.input_width, self.cfg.signed) {
            return Err(Error::OutOfRange { value: v, width: self.cfg.input_width, signed: self.cfg.signed });
        }
        Ok(v as i64)
    }

    /// Start streaming a packed B tile into the shadow buffer, one address per cycle.
    pub fn load_b(&mut self, stream: &PackedStream) -> Result<()> {
        let (_, k, n) = self.cfg.tile_dims();
        if stream.side() != Side::B || stream.r() != self.cfg.r || stream.tile_dims() != (k, n) {
            return Err(Error::Stream(format!(
                "{} expects a B-side {k}x{n} tile packed at r={}, got {:?}-side {:?} at r={}",
                self.cfg.label(),
                self.cfg.r,
                stream.side(),
                stream.tile_dims(),
                stream.r()
            )));
        }
        if self.loader.is_some() || self.staged.is_some() {
            return Err(Error::Stream("shadow B buffer is still busy".into()));
        }
        let data = stream
            .addresses()
            .iter()
            .map(|addr| addr.iter().map(|&v| self.check_input(v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let sel = 1 - self.active_sel;
        self.loader = Some(Loader { data, next: 0, sel });
        self.staged = Some(Staged { sel, start: self.cycle });
        self.trace_row("mxu", "b_load", [i64::from(1 - self.active_sel)])
    }

    /// Load an unpacked `2^r X x 2^r Y` B tile (an `X x Y` tile for MM_0).
    pub fn load_b_tile(&mut self, tile: &Matrix) -> Result<()> {
        let (_, k, n) = self.cfg.tile_dims();
        if (tile.rows(), tile.cols()) != (k, n) {
            return Err(Error::Dimension(format!(
                "B tile is {}x{}, {} needs {k}x{n}",
                tile.rows(),
                tile.cols(),
                self.cfg.label()
            )));
        }
        self.load_b(&pack_b(tile, self.cfg.r)?)
    }

    /// True once a loaded shadow tile may become active.
    pub fn can_swap(&self) -> bool {
        self.staged.is_some_and(|s| s.start < self.cycle)
    }

    /// Whether a new B load may start this cycle.
    pub fn can_load(&self) -> bool {
        self.loader.is_none() && self.staged.is_none()
    }

    /// Make the shadow tile active for every A address issued from now on.
    pub fn swap_b(&mut self) -> Result<()> {
        match self.staged {
            Some(s) if s.start < self.cycle => {
                self.active_sel = s.sel;
                self.staged = None;
                self.trace_row("mxu", "b_swap", [i64::from(s.sel)])
            }
            Some(_) => Err(Error::Stream("B tile swap in the same cycle its load started".into())),
            None => Err(Error::Stream("no B tile staged for swap".into())),
        }
    }

    /// Advance one clock. `a` is one packed A address; the return value is the
    /// C address leaving the MXU this cycle, if any.
    pub fn step(&mut self, a: Option<&[i128]>) -> Result<Option<Vec<i128>>> {
        let in_len = self.a_bus.len();
        let mut a_in: Vec<Option<AElem>> = vec![None; in_len];
        if let Some(addr) = a {
            if addr.len() != in_len {
                return Err(Error::Stream(format!("A address has {} elements, expected {in_len}", addr.len())));
            }
            for (slot, &v) in a_in.iter_mut().zip(addr) {
                *slot = Some(AElem { value: self.check_input(v)?, sel: self.active_sel });
            }
            self.a_in += 1;
            if self.trace.is_some() {
                let vals: Vec<i64> = addr.iter().map(|&v| v as i64).collect();
                self.trace_row("mxu", "a_in", vals)?;
            }
        }

        let mut b_in: Vec<Option<BElem>> = vec![None; in_len];
        let mut b_done = false;
        if let Some(ld) = self.loader.as_mut() {
            let sel = ld.sel;
            let j = ld.next;
            for (slot, &v) in b_in.iter_mut().zip(&ld.data[j]) {
                *slot = Some(BElem { value: v, sel, col: j as u32 });
            }
            ld.next += 1;
            b_done = ld.next == ld.data.len();
            self.b_in += 1;
            if self.trace.is_some() {
                let vals = ld.data[j].clone();
                self.trace_row("mxu", &format!("b_in[{j}]"), vals)?;
            }
        }
        if b_done {
            self.loader = None;
        }

        self.a_skew.shift(&a_in, &mut self.a_bus);
        self.b_skew.shift(&b_in, &mut self.b_bus);
        self.root.step(&self.a_bus, &self.b_bus, &mut self.raw_c)?;
        self.c_skew.shift(&self.raw_c, &mut self.c_bus);

        let out = if self.c_bus.iter().all(Option::is_some) {
            let vals: Vec<i128> = self.c_bus.iter().map(|v| i128::from(v.unwrap())).collect();
            self.c_out += 1;
            self.first_out.get_or_insert(self.cycle);
            if self.trace.is_some() {
                let v64: Vec<i64> = self.c_bus.iter().map(|v| v.unwrap()).collect();
                self.trace_row("mxu", "c_out", v64)?;
            }
            Some(vals)
        } else if self.c_bus.iter().all(Option::is_none) {
            None
        } else {
            return Err(Error::Stream(format!("C lanes out of alignment at cycle {}", self.cycle)));
        };
        self.cycle += 1;
        Ok(out)
    }

    /// Step `n` cycles with no A input, returning any C addresses that leave.
    pub fn idle(&mut self, n: usize) -> Result<Vec<Vec<i128>>> {
        let mut outs = Vec::new();
        for _ in 0..n {
            if let Some(c) = self.step(None)? {
                outs.push(c);
            }
        }
        Ok(outs)
    }

    /// Step until every issued A address has produced its C address.
    pub fn drain(&mut self) -> Result<Vec<Vec<i128>>> {
        let mut outs = Vec::new();
        while self.c_out < self.a_in || self.loader.is_some() {
            if let Some(c) = self.step(None)? {
                outs.push(c);
            }
        }
        Ok(outs)
    }

    pub fn in_flight(&self) -> u64 {
        self.a_in - self.c_out
    }

    pub fn mult_activations(&self) -> u64 {
        let mut n = 0;
        self.root.for_each_leaf(&mut |l| n += l.activations);
        n
    }

    /// Smallest and largest value seen on any leaf multiplier input.
    pub fn leaf_input_range(&self) -> (i64, i64) {
        let mut range = (0, 0);
        self.root.for_each_leaf(&mut |l| {
            range.0 = range.0.min(l.observed_input.0);
            range.1 = range.1.max(l.observed_input.1);
        });
        range
    }

    /// Credit conventional multiplications to the report (tile runs do this automatically).
    pub fn add_useful_mults(&mut self, n: u64) {
        self.useful += n;
    }

    pub fn report(&self) -> CycleReport {
        CycleReport {
            cycles_total: self.cycle,
            fill_latency: self.first_out.unwrap_or(0),
            mult_activations: self.mult_activations(),
            useful_conventional_mults: self.useful,
            a_vectors_in: self.a_in,
            c_vectors_out: self.c_out,
            b_vectors_in: self.b_in,
        }
    }

    fn check_a_stream(&self, a: &PackedStream) -> Result<()> {
        let (_, k, _) = self.cfg.tile_dims();
        if a.side() != Side::A || a.r() != self.cfg.r || a.tile_dims().1 != k {
            return Err(Error::Stream(format!(
                "{} expects an A-side tile with {k} columns packed at r={}, got {:?}-side {:?} at r={}",
                self.cfg.label(),
                self.cfg.r,
                a.side(),
                a.tile_dims(),
                a.r()
            )));
        }
        if a.is_empty() {
            return Err(Error::Stream("empty A stream".into()));
        }
        Ok(())
    }

    /// Multiply a sequence of tile pairs back to back, preloading each B tile
    /// into the shadow buffer while the previous tile streams.
    pub fn run_tiles(&mut self, tiles: &[(PackedStream, PackedStream)]) -> Result<TileRun> {
        for (a, _) in tiles {
            self.check_a_stream(a)?;
        }
        let (_, k, n) = self.cfg.tile_dims();
        let mut next_load = 0;
        let mut current: Option<(usize, usize)> = None; // (tile, next address)
        let mut next_tile = 0;
        let mut owner: std::collections::VecDeque<usize> = Default::default();
        let mut outputs: Vec<Vec<Vec<i128>>> = vec![Vec::new(); tiles.len()];
        let mut done_at = vec![0u64; tiles.len()];

        while next_tile < tiles.len() || current.is_some() || self.in_flight() > 0 || self.loader.is_some() {
            // swap first so the freed shadow buffer can start loading this same cycle
            if current.is_none() && next_tile < tiles.len() && self.can_swap() {
                self.swap_b()?;
                let (a, _) = &tiles[next_tile];
                self.useful += (a.tile_dims().0 * k * n) as u64;
                current = Some((next_tile, 0));
                next_tile += 1;
            }
            if next_load < tiles.len() && self.can_load() {
                self.load_b(&tiles[next_load].1)?;
                next_load += 1;
            }
            let issue = current.map(|(t, i)| (t, i, tiles[t].0.address(i)));
            let cycle = self.cycle;
            let out = self.step(issue.map(|(_, _, addr)| addr))?;
            if let Some((t, i, _)) = issue {
                owner.push_back(t);
                current = (i + 1 < tiles[t].0.len()).then_some((t, i + 1));
            }
            if let Some(c) = out {
                let t = owner.pop_front().ok_or_else(|| Error::Stream("C address without an issued A".into()))?;
                outputs[t].push(c);
                done_at[t] = cycle;
            }
        }

        let width = self.root.output_width();
        let c = tiles
            .iter()
            .zip(outputs)
            .map(|((a, _), addrs)| {
                PackedStream::from_addresses(Side::C, self.cfg.r, (a.tile_dims().0, n), width, true, addrs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TileRun { c, report: self.report(), tile_completion_cycles: done_at })
    }

    /// One tile product on this MXU.
    pub fn run_tile(&mut self, a: &PackedStream, b: &PackedStream) -> Result<(PackedStream, CycleReport)> {
        let mut run = self.run_tiles(&[(a.clone(), b.clone())])?;
        Ok((run.c.remove(0), run.report))
    }
}

/// Build a fresh MXU and multiply one tile pair on it.
pub fn mxu_run_tile(cfg: &MxuConfig, a: &PackedStream, b: &PackedStream) -> Result<(PackedStream, CycleReport)> {
    Mxu::new(cfg)?.run_tile(a, b)
}
