mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use smm_core::gemm::run_gemm_on;
use smm_core::metrics::{mce_measured, mce_steady, resource_report, utilization_sweep, SweepRow};
use smm_core::reference::{ops_conventional, ops_strassen_1, ops_winograd_1};
use smm_core::{matmul_naive, CycleReport, Error, Matrix, MatrixSource, Mxu, MxuConfig};

use config::{parse_range, Overrides, RunConfig};

/// Invalid flags, config or ranges (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

enum Failure {
    Usage(String),
    Verification(String),
    Runtime(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "smm", version, about = "Strassen multisystolic array simulator and resource model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ArchArgs {
    /// Architecture family: mm or smm.
    #[arg(long)]
    arch: Option<String>,
    /// Recursion depth.
    #[arg(long)]
    r: Option<u32>,
    /// Leaf systolic array size, XxY.
    #[arg(long)]
    leaf: Option<String>,
    /// Input bitwidth.
    #[arg(long)]
    width: Option<u32>,
    /// Signed inputs (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    signed: Option<bool>,
    /// Extra register stage in each Q addition vector.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    q_add_pipeline: Option<bool>,
    /// Clock frequency for throughput roofs.
    #[arg(long)]
    freq_mhz: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// JSON file with any RunConfig keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ArchArgs {
    fn resolve(&self) -> Result<RunConfig, UsageError> {
        let flags = Overrides {
            arch: self.arch.clone(),
            r: self.r,
            leaf: self.leaf.clone(),
            width: self.width,
            signed: self.signed,
            q_add_pipeline: self.q_add_pipeline,
            freq_mhz: self.freq_mhz,
            seed: self.seed,
            trials: self.trials,
        };
        RunConfig::load(self.config.as_deref(), &flags)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare random GEMMs on the simulator against the naive oracle.
    Verify {
        #[command(flatten)]
        arch: ArchArgs,
        /// Per-cycle CSV trace of the first trial.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_q_fault: bool,
    },
    /// Run one GEMM and print its cycle report as JSON.
    Simulate {
        #[command(flatten)]
        arch: ArchArgs,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        /// Read A from a matrix CSV instead of drawing it at random.
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        /// Write C as a matrix CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_q_fault: bool,
    },
    /// Steady-state MCE of random n x n GEMMs as CSV.
    Sweep {
        #[command(flatten)]
        arch: ArchArgs,
        /// start:stop:step, stop inclusive.
        #[arg(long, default_value = "8:96:8")]
        n_range: String,
    },
    /// Analytical resource report.
    Resources {
        #[command(flatten)]
        arch: ArchArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Operation counts of one-level algorithms.
    Opcount {
        n: u64,
        #[arg(value_enum)]
        form: Form,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Conventional,
    Strassen,
    Winograd,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(cli.command, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command, out: &mut impl Write) -> Result<(), Failure> {
    match cmd {
        Command::Verify { arch, trace, inject_q_fault } => verify(&arch, trace, inject_q_fault, out),
        Command::Simulate { arch, m, k, n, a, b, out: c_out, trace, inject_q_fault } => {
            simulate(&arch, (m, k, n), (a, b, c_out), trace, inject_q_fault, out)
        }
        Command::Sweep { arch, n_range } => {
            let rc = arch.resolve()?;
            let cfg = rc.mxu_config()?;
            let ns = parse_range(&n_range)?;
            let rows = utilization_sweep(&cfg, &ns, rc.seed)?;
            writeln!(out, "{}", SweepRow::CSV_HEADER)?;
            for row in rows {
                writeln!(out, "{}", row.to_csv())?;
            }
            Ok(())
        }
        Command::Resources { arch, format } => {
            let rc = arch.resolve()?;
            let cfg = rc.mxu_config()?;
            let report = resource_report(&cfg, rc.freq_mhz).map_err(|e| Failure::Usage(e.to_string()))?;
            if report.soft_logic_multipliers > 0 {
                eprintln!(
                    "warning: {} multipliers exceed the device DSP capacity and would use soft logic",
                    report.soft_logic_multipliers
                );
            }
            match format {
                Format::Json => writeln!(out, "{}", report.to_json())?,
                Format::Csv => write!(out, "{}", report.to_csv())?,
            }
            Ok(())
        }
        Command::Opcount { n, form } => {
            let (name, ops) = match form {
                Form::Conventional => ("conventional", ops_conventional(n)),
                Form::Strassen => ("strassen", ops_strassen_1(n)),
                Form::Winograd => ("winograd", ops_winograd_1(n)),
            };
            let ops = ops.map_err(|e| Failure::Usage(e.to_string()))?;
            writeln!(out, "n,form,mults,adds,total")?;
            writeln!(out, "{n},{name},{},{},{}", ops.mults, ops.adds, ops.total)?;
            Ok(())
        }
    }
}

fn build(cfg: &MxuConfig, trace: Option<&PathBuf>) -> Result<Mxu, Failure> {
    let mut mxu = Mxu::new(cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(path) = trace {
        let file = File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        mxu.set_trace(Box::new(BufWriter::new(file)))?;
    }
    Ok(mxu)
}

fn with_fault(mut cfg: MxuConfig, fault: bool) -> Result<MxuConfig, Failure> {
    cfg.inject_q_fault = fault;
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn first_mismatch(got: &Matrix, want: &Matrix) -> Option<(usize, usize, i128, i128)> {
    (0..want.rows())
        .flat_map(|i| (0..want.cols()).map(move |j| (i, j)))
        .find(|&(i, j)| got.get(i, j) != want.get(i, j))
        .map(|(i, j)| (i, j, got.get(i, j), want.get(i, j)))
}

fn verify(arch: &ArchArgs, trace: Option<PathBuf>, fault: bool, out: &mut impl Write) -> Result<(), Failure> {
    let rc = arch.resolve()?;
    let cfg = with_fault(rc.mxu_config()?, fault)?;
    let (tm, tk, tn) = cfg.tile_dims();
    let mut src = MatrixSource::new(rc.seed);
    let mut exact = 0;
    let mut failures = Vec::new();
    for t in 0..rc.trials {
        // sizes up to twice the tile, drawn from the same stream as the data
        let dims = src.matrix(1, 3, 16, false);
        let pick = |v: i128, lim: usize| 1 + (v as usize) % (2 * lim);
        let (m, k, n) = (pick(dims.get(0, 0), tm), pick(dims.get(0, 1), tk), pick(dims.get(0, 2), tn));
        let a = src.matrix(m, k, rc.width, rc.signed);
        let b = src.matrix(k, n, rc.width, rc.signed);
        let mut mxu = build(&cfg, if t == 0 { trace.as_ref() } else { None })?;
        let want = matmul_naive(&a, &b)?;
        match run_gemm_on(&mut mxu, &a, &b) {
            Ok((c, _)) => match first_mismatch(&c, &want) {
                None => exact += 1,
                Some((i, j, g, w)) => failures
                    .push(format!("trial {t} ({m}x{k}x{n}): first mismatch at C[{i}][{j}]: got {g}, expected {w}")),
            },
            Err(e) => failures.push(format!("trial {t} ({m}x{k}x{n}): {e}")),
        }
    }
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    writeln!(out, "{status} {}: {exact}/{} exact", cfg.label(), rc.trials)?;
    if failures.is_empty() {
        Ok(())
    } else {
        for f in &failures {
            writeln!(out, "  {f}")?;
        }
        Err(Failure::Verification(format!("verification failed: {} of {} trials", failures.len(), rc.trials)))
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    config: String,
    m: usize,
    k: usize,
    n: usize,
    exact: bool,
    report: CycleReport,
    mce_measured: f64,
    mce_steady: f64,
}

fn read_matrix(path: &PathBuf) -> Result<Matrix, Failure> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Matrix::read_csv(f).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn simulate(
    arch: &ArchArgs,
    dims: (Option<usize>, Option<usize>, Option<usize>),
    files: (Option<PathBuf>, Option<PathBuf>, Option<PathBuf>),
    trace: Option<PathBuf>,
    fault: bool,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let rc = arch.resolve()?;
    let cfg = with_fault(rc.mxu_config()?, fault)?;
    let (tm, tk, tn) = cfg.tile_dims();
    let (m, k, n) = (dims.0.unwrap_or(tm), dims.1.unwrap_or(tk), dims.2.unwrap_or(tn));
    let mut src = MatrixSource::new(rc.seed);
    let a = match &files.0 {
        Some(p) => read_matrix(p)?,
        None => src.matrix(m, k, rc.width, rc.signed),
    };
    let b = match &files.1 {
        Some(p) => read_matrix(p)?,
        None => src.matrix(a.cols(), n, rc.width, rc.signed),
    };
    let mut mxu = build(&cfg, trace.as_ref())?;
    let (c, report) = run_gemm_on(&mut mxu, &a, &b).map_err(|e| match e {
        Error::Dimension(_) | Error::OutOfRange { .. } => Failure::Usage(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    })?;
    drop(mxu);
    if let Some(p) = &files.2 {
        let f = File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
        c.write_csv(BufWriter::new(f))?;
    }
    let summary = SimulateSummary {
        config: cfg.label(),
        m: a.rows(),
        k: a.cols(),
        n: b.cols(),
        exact: c == matmul_naive(&a, &b)?,
        report,
        mce_measured: mce_measured(&report, &cfg)?,
        mce_steady: mce_steady(&report, &cfg)?,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    if summary.exact {
        Ok(())
    } else {
        Err(Failure::Verification("simulated product differs from the naive oracle".into()))
    }
}
