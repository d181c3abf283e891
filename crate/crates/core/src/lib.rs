//! Bit-exact cycle-level simulator and analytical resource model for Strassen
//! multisystolic arrays (SMM_r) and the conventional MM_0 / MM_r baselines.
//!
//! ```
//! use smm_core::{run_gemm, matmul_naive, random_matrix, MxuConfig};
//!
//! let cfg = MxuConfig::smm(2, 6, 6, 8);
//! let a = random_matrix(30, 20, 8, true, 1);
//! let b = random_matrix(20, 10, 8, true, 2);
//! let (c, report) = run_gemm(&a, &b, &cfg).unwrap();
//! assert_eq!(c, matmul_naive(&a, &b).unwrap());
//! assert!(report.cycles_total > 0);
//! ```

pub mod error;
pub mod fxp;
pub mod gemm;
pub mod layout;
pub mod metrics;
pub mod mxu;
pub mod reference;
pub mod rng;

pub use error::{Error, Result};
pub use fxp::{FxpScalar, Matrix};
pub use gemm::{plan_tiles, run_gemm, TilePlan};
pub use layout::{
    merge_quadrants, pack_a, pack_b, pack_c, split_quadrants, unpack_c, PackedStream, QuadrantSlices, Side,
};
pub use metrics::{resource_report, utilization_sweep, ResourceReport, SweepRow};
pub use mxu::{build_mxu, mxu_run_tile, CycleReport, Family, Mxu, MxuConfig, MxuStructure, TileRun};
pub use reference::{matmul_blocked, matmul_naive, matmul_strassen, OpCount};
pub use rng::{random_matrix, MatrixSource};
