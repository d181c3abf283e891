//! Arbitrary-size matrix multiplication on a configured MXU.
//!
//! Operands are zero-padded to whole tiles, tile products are streamed back to
//! back through one MXU instance (B tiles preloaded in the shadow buffer), and
//! partial products are summed outside the MXU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::{ceil_log2, fits, Matrix};
use crate::layout::{pack_a, pack_b, unpack_c, PackedStream};
use crate::mxu::{CycleReport, Mxu, MxuConfig};
use crate::reference::product_width;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub tile_m: usize,
    pub tile_k: usize,
    pub tile_n: usize,
    /// Tile counts along M, K and N.
    pub grid: (usize, usize, usize),
    pub pad_m: usize,
    pub pad_k: usize,
    pub pad_n: usize,
}

impl TilePlan {
    pub fn tile_count(&self) -> usize {
        self.grid.0 * self.grid.1 * self.grid.2
    }

    pub fn padded_dims(&self) -> (usize, usize, usize) {
        (self.grid.0 * self.tile_m, self.grid.1 * self.tile_k, self.grid.2 * self.tile_n)
    }
}

pub fn plan_tiles(m: usize, k: usize, n: usize, cfg: &MxuConfig) -> TilePlan {
    let (tile_m, tile_k, tile_n) = cfg.tile_dims();
    let (gm, gk, gn) = (m.div_ceil(tile_m), k.div_ceil(tile_k), n.div_ceil(tile_n));
    TilePlan {
        tile_m,
        tile_k,
        tile_n,
        grid: (gm, gk, gn),
        pad_m: gm * tile_m - m,
        pad_k: gk * tile_k - k,
        pad_n: gn * tile_n - n,
    }
}

/// Width of the accumulators that sum tile products across K.
pub fn outside_accumulator_width(cfg: &MxuConfig, k_total: usize) -> u32 {
    2 * (cfg.datapath_width() + cfg.r) + ceil_log2(k_total)
}

/// `a x b` on a fresh MXU built from `cfg`.
pub fn run_gemm(a: &Matrix, b: &Matrix, cfg: &MxuConfig) -> Result<(Matrix, CycleReport)> {
    let mut mxu = Mxu::new(cfg)?;
    run_gemm_on(&mut mxu, a, b)
}

/// `a x b` on an existing MXU (useful with a trace attached).
pub fn run_gemm_on(mxu: &mut Mxu, a: &Matrix, b: &Matrix) -> Result<(Matrix, CycleReport)> {
    let cfg = mxu.config().clone();
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    if m == 0 || k == 0 || n == 0 {
        return Err(Error::Dimension("empty operand".into()));
    }
    let plan = plan_tiles(m, k, n, &cfg);
    let (pm, pk, pn) = plan.padded_dims();
    let (ap, bp) = (a.padded(pm, pk)?, b.padded(pk, pn)?);
    let (gm, gk, gn) = plan.grid;

    let a_tiles: Vec<Vec<PackedStream>> = (0..gm)
        .map(|mi| {
            (0..gk)
                .map(|ki| pack_a(&ap.block(mi * plan.tile_m, ki * plan.tile_k, plan.tile_m, plan.tile_k)?, cfg.r))
                .collect()
        })
        .collect::<Result<_>>()?;
    let b_tiles: Vec<Vec<PackedStream>> = (0..gk)
        .map(|ki| {
            (0..gn)
                .map(|ni| pack_b(&bp.block(ki * plan.tile_k, ni * plan.tile_n, plan.tile_k, plan.tile_n)?, cfg.r))
                .collect()
        })
        .collect::<Result<_>>()?;

    // M outer, N middle, K inner
    let mut order = Vec::with_capacity(plan.tile_count());
    let mut pairs = Vec::with_capacity(plan.tile_count());
    for (mi, a_row) in a_tiles.iter().enumerate() {
        for ni in 0..gn {
            for (a_tile, b_row) in a_row.iter().zip(&b_tiles) {
                order.push((mi, ni));
                pairs.push((a_tile.clone(), b_row[ni].clone()));
            }
        }
    }
    let before = mxu.report();
    let run = mxu.run_tiles(&pairs)?;

    let acc_width = outside_accumulator_width(&cfg, k);
    let mut acc = vec![0i128; pm * pn];
    for ((mi, ni), c) in order.into_iter().zip(&run.c) {
        let tile = unpack_c(c)?;
        for i in 0..plan.tile_m {
            let row = &mut acc[(mi * plan.tile_m + i) * pn + ni * plan.tile_n..][..plan.tile_n];
            for (dst, &v) in row.iter_mut().zip(tile.row(i)) {
                *dst += v;
                if !fits(*dst, acc_width, true) {
                    return Err(Error::WidthOverflow {
                        port: "gemm.accumulator".into(),
                        value: *dst,
                        width: acc_width,
                    });
                }
            }
        }
    }

    let width = product_width(a, b);
    let data: Vec<i128> = (0..m).flat_map(|i| acc[i * pn..i * pn + n].iter().copied()).collect();
    let c = Matrix::new(m, n, width, a.is_signed(), data)?;

    let after = run.report;
    let report = CycleReport {
        cycles_total: after.cycles_total - before.cycles_total,
        fill_latency: after.fill_latency.saturating_sub(before.cycles_total),
        mult_activations: after.mult_activations - before.mult_activations,
        useful_conventional_mults: (m * k * n) as u64,
        a_vectors_in: after.a_vectors_in - before.a_vectors_in,
        c_vectors_out: after.c_vectors_out - before.c_vectors_out,
        b_vectors_in: after.b_vectors_in - before.b_vectors_in,
    };
    Ok((c, report))
}
