//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use smm_core::gemm::run_gemm_on;
use smm_core::layout::{pack_a, pack_b, unpack_c};
use smm_core::metrics::{
    dsp_estimate, mce_measured, mce_roof, min_matrix_size, mse_roof, mult_input_width, multiplier_count,
    throughput_roof, utilization_sweep,
};
use smm_core::reference::{
    matmul_naive, matmul_strassen_counted, ops_conventional, ops_strassen_1, ops_strassen_1_total_exact,
    ops_winograd_1_total_exact,
};
use smm_core::{Error, Matrix, MatrixSource, Mxu, MxuConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Shared state between the oracle suite and the bitwidth checks.
#[derive(Default)]
struct SuiteStats {
    overflow_errors: usize,
    smm2_w8_leaf_range: (i64, i64),
    smm2_w8_runs: usize,
}

/// (exact, overflow errors, non-multiple shapes, trials, leaf input range)
type CfgTally = (usize, usize, usize, usize, (i64, i64));

fn oracle_suite(stats: &mut SuiteStats) -> Outcome {
    let cfgs = [
        MxuConfig::mm(0, 4, 4, 8),
        MxuConfig::mm(1, 2, 2, 8),
        MxuConfig::smm(1, 2, 2, 8),
        MxuConfig::smm(2, 2, 2, 8),
        MxuConfig::smm(1, 16, 16, 8),
        MxuConfig::smm(2, 6, 6, 8),
    ];
    let start = Instant::now();
    let per_cfg: Vec<CfgTally> = cfgs
        .par_iter()
        .enumerate()
        .map(|(ci, cfg)| {
            let (h, w) = min_matrix_size(cfg);
            let mut dims = ChaCha8Rng::seed_from_u64(1000 + ci as u64);
            let (mut exact, mut overflow, mut non_multiple) = (0, 0, 0);
            let mut range = (0i64, 0i64);
            for trial in 0..100u64 {
                let m = dims.gen_range(1..=2 * h);
                let k = dims.gen_range(1..=2 * w);
                let n = dims.gen_range(1..=2 * h);
                if m % h != 0 || k % w != 0 || n % h != 0 {
                    non_multiple += 1;
                }
                let mut src = MatrixSource::new(trial * 7919 + ci as u64);
                let a = src.matrix(m, k, cfg.input_width, cfg.signed);
                let b = src.matrix(k, n, cfg.input_width, cfg.signed);
                let mut mxu = Mxu::new(cfg).expect("valid config");
                match run_gemm_on(&mut mxu, &a, &b) {
                    Ok((c, _)) if c == matmul_naive(&a, &b).unwrap() => exact += 1,
                    Ok(_) => {}
                    Err(Error::WidthOverflow { .. }) => overflow += 1,
                    Err(e) => panic!("{}: {e}", cfg.label()),
                }
                let (lo, hi) = mxu.leaf_input_range();
                range = (range.0.min(lo), range.1.max(hi));
            }
            (exact, overflow, non_multiple, 100, range)
        })
        .collect();

    let mut total = 0;
    let mut exact = 0;
    let mut non_multiple = 0;
    for ((e, o, nm, t, range), cfg) in per_cfg.iter().zip(&cfgs) {
        exact += e;
        total += t;
        non_multiple += nm;
        stats.overflow_errors += o;
        if cfg.family == smm_core::Family::Smm && cfg.r == 2 && cfg.input_width == 8 {
            stats.smm2_w8_leaf_range =
                (stats.smm2_w8_leaf_range.0.min(range.0), stats.smm2_w8_leaf_range.1.max(range.1));
            stats.smm2_w8_runs += t;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        exact == total && secs < 120.0,
        format!("{exact}/{total} GEMMs exact over 6 configs ({non_multiple} with non-multiple dims), {secs:.1}s"),
    )
}

fn table_one_resources() -> Outcome {
    let rows = [
        (MxuConfig::mm(0, 48, 48, 16), 2304, 1152, (48, 48)),
        (MxuConfig::mm(1, 16, 16, 16), 2048, 1024, (32, 32)),
        (MxuConfig::smm(1, 16, 16, 16), 1792, 896, (32, 32)),
        (MxuConfig::mm(2, 6, 6, 16), 2304, 1152, (24, 24)),
        (MxuConfig::smm(2, 6, 6, 16), 1764, 882, (24, 24)),
    ];
    let mut bad = Vec::new();
    for (cfg, mults, dsps, min) in &rows {
        let got =
            (multiplier_count(cfg), dsp_estimate(multiplier_count(cfg), mult_input_width(cfg)), min_matrix_size(cfg));
        let structural = Mxu::new(cfg).unwrap().structure().multipliers;
        if got != (*mults, *dsps, *min) || structural != *mults {
            bad.push(format!("{}: got {got:?}, simulator {structural}", cfg.label()));
        }
    }
    let detail = if bad.is_empty() { "5/5 configs match (multipliers, DSPs, min size)".into() } else { bad.join("; ") };
    outcome(bad.is_empty(), detail)
}

fn throughput_roofs() -> Outcome {
    let rows = [
        (MxuConfig::mm(0, 48, 48, 16), 399.0, 1839.0),
        (MxuConfig::mm(1, 16, 16, 16), 398.0, 1630.0),
        (MxuConfig::smm(1, 16, 16, 16), 380.0, 1556.0),
        (MxuConfig::mm(2, 6, 6, 16), 388.0, 1788.0),
        (MxuConfig::smm(2, 6, 6, 16), 291.0, 1341.0),
        (MxuConfig::smm(2, 6, 6, 16).with_q_add_pipeline(true), 361.0, 1663.0),
    ];
    let got: Vec<f64> = rows.iter().map(|(cfg, f, _)| throughput_roof(cfg, *f).unwrap()).collect();
    let pass = rows.iter().zip(&got).all(|((_, _, want), g)| (g - want).abs() <= 1.0);
    let list: Vec<String> = got.iter().map(|g| format!("{g:.1}")).collect();
    outcome(pass, format!("GOPS = [{}]", list.join(", ")))
}

fn mce_long_runs() -> Outcome {
    let cfgs = [
        MxuConfig::smm(1, 16, 16, 8),
        MxuConfig::smm(2, 6, 6, 8),
        MxuConfig::mm(0, 48, 48, 8),
        MxuConfig::mm(1, 16, 16, 8),
        MxuConfig::mm(2, 6, 6, 8),
    ];
    const TILES: usize = 1000;
    const DISTINCT: usize = 16;
    let results: Vec<(String, f64, f64, bool)> = cfgs
        .par_iter()
        .map(|cfg| {
            let (m, k, n) = cfg.tile_dims();
            let mut src = MatrixSource::new(42);
            let pool: Vec<(Matrix, Matrix)> =
                (0..DISTINCT).map(|_| (src.matrix(m, k, 8, true), src.matrix(k, n, 8, true))).collect();
            let packed: Vec<_> = (0..TILES)
                .map(|t| {
                    let (a, b) = &pool[t % DISTINCT];
                    (pack_a(a, cfg.r).unwrap(), pack_b(b, cfg.r).unwrap())
                })
                .collect();
            let run = Mxu::new(cfg).unwrap().run_tiles(&packed).unwrap();
            let correct = run.c.iter().enumerate().all(|(t, c)| {
                let (a, b) = &pool[t % DISTINCT];
                unpack_c(c).unwrap() == matmul_naive(a, b).unwrap().with_width(c.width()).unwrap()
            });
            let mce = mce_measured(&run.report, cfg).unwrap();
            (cfg.label(), mce, mce_roof(cfg), correct)
        })
        .collect();
    let pass = results.iter().all(|(_, mce, roof, ok)| *ok && *mce >= 0.99 * roof && *mce <= *roof);
    let list: Vec<String> = results.iter().map(|(l, mce, roof, _)| format!("{l} {mce:.4}/{roof:.4}")).collect();
    outcome(pass, format!("{TILES} tiles each: {}", list.join(", ")))
}

fn tile_rate() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (cfg, per_tile, ratio) in [(MxuConfig::smm(2, 6, 6, 8), 6u64, 4.0), (MxuConfig::mm(0, 48, 48, 8), 48, 1.0)] {
        let (m, k, n) = cfg.tile_dims();
        let mut src = MatrixSource::new(5);
        let packed: Vec<_> = (0..20)
            .map(|_| {
                (pack_a(&src.matrix(m, k, 8, true), cfg.r).unwrap(), pack_b(&src.matrix(k, n, 8, true), cfg.r).unwrap())
            })
            .collect();
        let run = Mxu::new(&cfg).unwrap().run_tiles(&packed).unwrap();
        let gaps: Vec<u64> = run.tile_completion_cycles.windows(2).map(|w| w[1] - w[0]).collect();
        let steady = gaps.iter().all(|&g| g == per_tile);
        let measured = m as f64 / per_tile as f64;
        pass &= steady && measured == ratio && mse_roof(&cfg) == ratio;
        parts.push(format!(
            "{} one {m}x{n} tile every {:?} cycles (size/cycles = {measured})",
            cfg.label(),
            gaps.iter().copied().max().unwrap_or(0)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn op_crossovers() -> Outcome {
    let conv = |n: u64| Ratio::from_integer(ops_conventional(n).unwrap().total as i128);
    let strassen_even =
        (2..64).step_by(2).find(|&n| ops_strassen_1(n).unwrap().total < ops_conventional(n).unwrap().total);
    let strassen_any = (1..64).find(|&n| ops_strassen_1_total_exact(n) < conv(n));
    let winograd_any = (1..64).find(|&n| ops_winograd_1_total_exact(n) < conv(n));
    let eq15 = ops_strassen_1_total_exact(15) == conv(15);
    let eq12 = ops_winograd_1_total_exact(12) == conv(12);

    let mut counts_ok = true;
    for n in [16usize, 24, 32] {
        for r in [1u32, 2] {
            let a = MatrixSource::new(n as u64).matrix(n, n, 8, true);
            let (c, ops) = matmul_strassen_counted(&a, &a, r).unwrap();
            counts_ok &= ops.mults == 7u64.pow(r) * ((n >> r) as u64).pow(3) && c == matmul_naive(&a, &a).unwrap();
        }
    }
    let pass =
        strassen_even == Some(16) && strassen_any == Some(16) && winograd_any == Some(13) && eq15 && eq12 && counts_ok;
    outcome(
        pass,
        format!(
            "strassen first even n {strassen_even:?}, equality at 15: {eq15}; winograd threshold {winograd_any:?}, equality at 12: {eq12}; instrumented mults = 7^r(n/2^r)^3: {counts_ok}"
        ),
    )
}

fn bitwidth_contract(stats: &SuiteStats) -> Outcome {
    let cfg = MxuConfig::smm(2, 6, 6, 8);
    let declared = Mxu::new(&cfg).unwrap().structure().leaf_input_width;
    let (lo, hi) = stats.smm2_w8_leaf_range;
    let fits_10 = lo >= -512 && hi <= 511;

    // all-minimum operands drive the deepest T/S term to -512, which needs all 10 bits
    let (m, k, n) = cfg.tile_dims();
    let a = Matrix::from_fn(m, k, 8, true, |_, _| -128).unwrap();
    let b = Matrix::from_fn(k, n, 8, true, |_, _| -128).unwrap();
    let mut mxu = Mxu::new(&cfg).unwrap();
    let extreme = run_gemm_on(&mut mxu, &a, &b);
    let extreme_ok = matches!(&extreme, Ok((c, _)) if *c == matmul_naive(&a, &b).unwrap());
    let (elo, _) = mxu.leaf_input_range();

    let mults = multiplier_count(&cfg);
    let packs = dsp_estimate(mults, declared) == mults.div_ceil(2);
    let pass = declared == 10 && fits_10 && elo == -512 && extreme_ok && stats.overflow_errors == 0 && packs;
    outcome(
        pass,
        format!(
            "declared leaf input {declared} bits; observed [{lo}, {hi}] over {} suite runs, extreme run reaches {elo}; overflow assertions = {}; {} DSPs for {mults} mults",
            stats.smm2_w8_runs,
            stats.overflow_errors,
            dsp_estimate(mults, declared)
        ),
    )
}

fn utilization_curve() -> Outcome {
    let ns: Vec<usize> = (8..=96).step_by(8).collect();
    let smm = utilization_sweep(&MxuConfig::smm(2, 6, 6, 8), &ns, 1).unwrap();
    let mm = utilization_sweep(&MxuConfig::mm(0, 48, 48, 8), &ns, 1).unwrap();
    let at = |rows: &[smm_core::SweepRow], n: usize| rows.iter().find(|r| r.n == n).unwrap().mce;
    let smm24 = at(&smm, 24);
    let mm24 = at(&mm, 24);
    let mm_first = mm.iter().find(|r| r.mce >= 0.99).map(|r| r.n);
    let pass = smm24 >= 1.25 && mm24 <= 0.25 && mm_first == Some(48);
    outcome(
        pass,
        format!("SMM_2 6x6 MCE(24) = {smm24:.4}; MM_0 48x48 MCE(24) = {mm24:.4}, first >= 0.99 at n = {mm_first:?}"),
    )
}

fn main() -> ExitCode {
    let mut stats = SuiteStats::default();
    let results = [
        ("oracle equivalence", oracle_suite(&mut stats)),
        ("resource regression", table_one_resources()),
        ("throughput roofs", throughput_roofs()),
        ("MCE roof", mce_long_runs()),
        ("tile rate / MSE", tile_rate()),
        ("op-count crossovers", op_crossovers()),
        ("bitwidth contract", bitwidth_contract(&stats)),
        ("utilization curve", utilization_curve()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
