//! Analytical resource and efficiency model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::run_gemm;
use crate::mxu::{CycleReport, Family, MxuConfig};
use crate::rng::MatrixSource;

/// DSP blocks on the reference device; each packs two multipliers up to 18 bits.
pub const DEVICE_DSP_BLOCKS: usize = 1518;
pub const MAX_PACKED_WIDTH: u32 = 18;

pub fn multiplier_count(cfg: &MxuConfig) -> usize {
    cfg.multiplier_count()
}

/// Width of each leaf multiplier input.
pub fn mult_input_width(cfg: &MxuConfig) -> u32 {
    cfg.leaf_input_width()
}

fn mults_per_dsp(width: u32) -> usize {
    if width <= MAX_PACKED_WIDTH {
        2
    } else {
        1
    }
}

pub fn dsp_estimate(mult_count: usize, mult_input_width: u32) -> usize {
    mult_count.div_ceil(mults_per_dsp(mult_input_width))
}

/// Multipliers that would not fit in the device's DSP blocks.
pub fn soft_logic_multipliers(mult_count: usize, mult_input_width: u32) -> usize {
    mult_count.saturating_sub(DEVICE_DSP_BLOCKS * mults_per_dsp(mult_input_width))
}

/// Conventional-equivalent multiply-accumulate slots per cycle.
pub fn conventional_slots(cfg: &MxuConfig) -> usize {
    8usize.pow(cfg.r) * cfg.leaf_x * cfg.leaf_y
}

/// GOPS at `freq_mhz`, counting a multiply and an add per conventional slot.
pub fn throughput_roof(cfg: &MxuConfig, freq_mhz: f64) -> Result<f64> {
    if !(freq_mhz > 0.0 && freq_mhz.is_finite()) {
        return Err(Error::Config(format!("frequency must be positive, got {freq_mhz}")));
    }
    Ok(2.0 * conventional_slots(cfg) as f64 * freq_mhz / 1000.0)
}

pub fn mce_measured(report: &CycleReport, cfg: &MxuConfig) -> Result<f64> {
    mce_over(report.useful_conventional_mults, cfg, report.cycles_total)
}

/// MCE over the cycles after the first output, i.e. with the pipeline fill excluded.
pub fn mce_steady(report: &CycleReport, cfg: &MxuConfig) -> Result<f64> {
    mce_over(report.useful_conventional_mults, cfg, report.steady_cycles())
}

fn mce_over(useful: u64, cfg: &MxuConfig, cycles: u64) -> Result<f64> {
    if cycles == 0 {
        return Err(Error::Config("MCE needs at least one cycle".into()));
    }
    Ok(useful as f64 / (multiplier_count(cfg) as f64 * cycles as f64))
}

pub fn mce_roof(cfg: &MxuConfig) -> f64 {
    match cfg.family {
        Family::Smm => (8.0f64 / 7.0).powi(cfg.r as i32),
        Family::Mm => 1.0,
    }
}

pub fn mse_roof(cfg: &MxuConfig) -> f64 {
    f64::from(1u32 << cfg.r)
}

/// `(h, w)` of the smallest operand tile multiplied at full utilization.
pub fn min_matrix_size(cfg: &MxuConfig) -> (usize, usize) {
    ((1 << cfg.r) * cfg.leaf_y, (1 << cfg.r) * cfg.leaf_x)
}

/// Elementwise adders in all addition vectors, one per vector element.
pub fn adder_count(cfg: &MxuConfig) -> usize {
    level_sum(cfg, |l| {
        let (a, c) = (4usize.pow(l - 1) * cfg.leaf_x, 4usize.pow(l - 1) * cfg.leaf_y);
        match cfg.family {
            Family::Smm => 5 * a + 5 * a + 8 * c,
            Family::Mm => 4 * c,
        }
    })
}

/// Adder count when each level's vectors are only twice as wide as the level below.
pub fn adder_count_halving_rule(cfg: &MxuConfig) -> usize {
    level_sum(cfg, |l| {
        let (a, c) = (2usize.pow(l - 1) * cfg.leaf_x, 2usize.pow(l - 1) * cfg.leaf_y);
        match cfg.family {
            Family::Smm => 5 * a + 5 * a + 8 * c,
            Family::Mm => 4 * c,
        }
    })
}

fn level_sum(cfg: &MxuConfig, per_node: impl Fn(u32) -> usize) -> usize {
    let fan = match cfg.family {
        Family::Smm => 7usize,
        Family::Mm => 8,
    };
    (1..=cfg.r).map(|l| fan.pow(cfg.r - l) * per_node(l)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub multipliers: usize,
    pub adders: usize,
    pub adders_halving_rule: usize,
    pub dsp_estimate: usize,
    pub soft_logic_multipliers: usize,
    pub mult_input_width: u32,
    pub min_matrix_h: usize,
    pub min_matrix_w: usize,
    pub mce_roof: f64,
    pub mse_roof: f64,
    /// Roof at the user-supplied frequency.
    pub throughput_roof_gops: Option<f64>,
}

const CSV_FIELDS: [&str; 11] = [
    "multipliers",
    "adders",
    "adders_halving_rule",
    "dsp_estimate",
    "soft_logic_multipliers",
    "mult_input_width",
    "min_matrix_h",
    "min_matrix_w",
    "mce_roof",
    "mse_roof",
    "throughput_roof_gops",
];

impl ResourceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Header line plus one value line.
    pub fn to_csv(&self) -> String {
        let values = [
            self.multipliers.to_string(),
            self.adders.to_string(),
            self.adders_halving_rule.to_string(),
            self.dsp_estimate.to_string(),
            self.soft_logic_multipliers.to_string(),
            self.mult_input_width.to_string(),
            self.min_matrix_h.to_string(),
            self.min_matrix_w.to_string(),
            format!("{:.4}", self.mce_roof),
            format!("{}", self.mse_roof),
            self.throughput_roof_gops.map_or(String::new(), |g| format!("{g:.1}")),
        ];
        format!("{}\n{}\n", CSV_FIELDS.join(","), values.join(","))
    }
}

pub fn resource_report(cfg: &MxuConfig, freq_mhz: Option<f64>) -> Result<ResourceReport> {
    cfg.validate()?;
    let mults = multiplier_count(cfg);
    let width = mult_input_width(cfg);
    let (h, w) = min_matrix_size(cfg);
    Ok(ResourceReport {
        multipliers: mults,
        adders: adder_count(cfg),
        adders_halving_rule: adder_count_halving_rule(cfg),
        dsp_estimate: dsp_estimate(mults, width),
        soft_logic_multipliers: soft_logic_multipliers(mults, width),
        mult_input_width: width,
        min_matrix_h: h,
        min_matrix_w: w,
        mce_roof: mce_roof(cfg),
        mse_roof: mse_roof(cfg),
        throughput_roof_gops: freq_mhz.map(|f| throughput_roof(cfg, f)).transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    /// Cycles after the pipeline fill.
    pub cycles: u64,
    pub mult_activations: u64,
    pub useful_mults: u64,
    pub mce: f64,
    /// `mce / mce_roof`.
    pub utilization: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "n,cycles,mult_activations,useful_mults,mce,utilization";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.4}",
            self.n, self.cycles, self.mult_activations, self.useful_mults, self.mce, self.utilization
        )
    }
}

/// Operands for sweep point `n` come from a stream seeded with `seed + n`.
pub fn sweep_point(cfg: &MxuConfig, n: usize, seed: u64) -> Result<SweepRow> {
    if n == 0 {
        return Err(Error::Dimension("sweep sizes must be positive".into()));
    }
    let mut src = MatrixSource::new(seed.wrapping_add(n as u64));
    let a = src.matrix(n, n, cfg.input_width, cfg.signed);
    let b = src.matrix(n, n, cfg.input_width, cfg.signed);
    let (_, report) = run_gemm(&a, &b, cfg)?;
    let mce = mce_steady(&report, cfg)?;
    Ok(SweepRow {
        n,
        cycles: report.steady_cycles(),
        mult_activations: report.mult_activations,
        useful_mults: report.useful_conventional_mults,
        mce,
        utilization: mce / mce_roof(cfg),
    })
}

/// Steady-state MCE of random `n x n` GEMMs; points run in parallel, rows keep input order.
pub fn utilization_sweep(cfg: &MxuConfig, n_values: &[usize], seed: u64) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    n_values.par_iter().map(|&n| sweep_point(cfg, n, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn multiplier_counts() {
        assert_eq!(multiplier_count(&MxuConfig::smm(1, 16, 16, 16)), 1792);
        assert_eq!(multiplier_count(&MxuConfig::smm(2, 6, 6, 16)), 1764);
        assert_eq!(multiplier_count(&MxuConfig::mm(0, 48, 48, 16)), 2304);
    }

    #[test]
    fn dsp_examples() {
        assert_eq!(dsp_estimate(1792, 17), 896);
        assert_eq!(dsp_estimate(2304, 16), 1152);
        assert_eq!(dsp_estimate(2, 19), 2);
        assert_eq!(soft_logic_multipliers(3136, 16), 100);
        assert_eq!(soft_logic_multipliers(2304, 16), 0);
    }

    #[test]
    fn throughput_examples() {
        let g = |cfg: MxuConfig, f: f64| throughput_roof(&cfg, f).unwrap().round();
        assert_eq!(g(MxuConfig::mm(0, 48, 48, 16), 399.0), 1839.0);
        assert_eq!(g(MxuConfig::smm(1, 16, 16, 16), 380.0), 1556.0);
        assert_eq!(g(MxuConfig::smm(2, 6, 6, 16), 291.0), 1341.0);
        assert!(throughput_roof(&MxuConfig::mm(0, 2, 2, 8), 0.0).is_err());
        assert_eq!(
            throughput_roof(&MxuConfig::mm(2, 6, 6, 8), 300.0).unwrap(),
            throughput_roof(&MxuConfig::mm(0, 48, 48, 8), 300.0).unwrap()
        );
    }

    #[test]
    fn roofs_and_min_sizes() {
        assert!(close(mce_roof(&MxuConfig::smm(1, 2, 2, 8)), 8.0 / 7.0, 1e-12));
        assert!(close(mce_roof(&MxuConfig::smm(2, 2, 2, 8)), 64.0 / 49.0, 1e-12));
        assert_eq!(mce_roof(&MxuConfig::mm(2, 2, 2, 8)), 1.0);
        assert_eq!(mse_roof(&MxuConfig::smm(2, 6, 6, 8)), 4.0);
        assert_eq!(mse_roof(&MxuConfig::mm(1, 2, 2, 8)), 2.0);
        assert_eq!(mse_roof(&MxuConfig::mm(0, 48, 48, 8)), 1.0);
        assert_eq!(min_matrix_size(&MxuConfig::smm(2, 6, 6, 8)), (24, 24));
        assert_eq!(min_matrix_size(&MxuConfig::smm(1, 16, 16, 8)), (32, 32));
        assert_eq!(min_matrix_size(&MxuConfig::mm(0, 48, 48, 8)), (48, 48));
    }

    #[test]
    fn adder_examples() {
        assert_eq!(adder_count(&MxuConfig::smm(1, 16, 16, 16)), 288);
        assert_eq!(adder_count(&MxuConfig::smm(2, 6, 6, 16)), 1188);
        assert_eq!(adder_count(&MxuConfig::mm(0, 48, 48, 16)), 0);
        // both rules coincide at one level
        assert_eq!(adder_count_halving_rule(&MxuConfig::smm(1, 16, 16, 16)), 288);
        assert_eq!(adder_count_halving_rule(&MxuConfig::smm(2, 6, 6, 16)), 18 * 12 + 7 * 18 * 6);
    }

    #[test]
    fn mce_drops_with_idle_cycles() {
        let cfg = MxuConfig::mm(0, 2, 2, 8);
        let rep = CycleReport { cycles_total: 10, useful_conventional_mults: 32, ..Default::default() };
        let longer = CycleReport { cycles_total: 11, ..rep };
        assert!(mce_measured(&longer, &cfg).unwrap() < mce_measured(&rep, &cfg).unwrap());
        assert!(mce_measured(&CycleReport::default(), &cfg).is_err());
    }

    #[test]
    fn report_serialization_field_names() {
        let rep = resource_report(&MxuConfig::mm(2, 6, 6, 16), Some(388.0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        for f in [
            "multipliers",
            "adders",
            "dsp_estimate",
            "mult_input_width",
            "min_matrix_h",
            "min_matrix_w",
            "mce_roof",
            "mse_roof",
            "throughput_roof_gops",
        ] {
            assert!(v.get(f).is_some(), "missing {f}");
        }
        assert_eq!(v["throughput_roof_gops"].as_f64().unwrap().round(), 1788.0);
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), lines.next().unwrap().split(',').count());
    }

    #[test]
    fn sweep_keeps_order_and_is_deterministic() {
        let cfg = MxuConfig::smm(1, 2, 2, 6);
        let ns = [8, 4, 6];
        let rows = utilization_sweep(&cfg, &ns, 3).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), ns);
        assert_eq!(rows, utilization_sweep(&cfg, &ns, 3).unwrap());
        assert!(rows.iter().all(|r| r.mce <= mce_roof(&cfg) + 1e-12));
    }
}
