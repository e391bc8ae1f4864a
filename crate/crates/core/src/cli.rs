//! Command-line front end. `main` only forwards to [`run_from_args`].

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::{bench_layer, BenchRow, BATCH_SIZES, RUNS};
use crate::conv::{ConvSpec, Padding, PaddingMode};
use crate::error::{Error, Result};
use crate::orthoconv::io::{read_kernel, write_kernel};
use crate::suite::{
    item_rng, run_grid, run_suite, BuiltLayer, Entry, Layer, LayerSpec, Outcome, SuiteSpec,
};
use crate::tensor::Tensor4;
use crate::verify::{
    fft_circular_spectrum, gram_bound, operator_power_iteration, toeplitz_svd_spectrum,
    SpectrumMethod, SpectrumReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "OKRN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "orthokit",
    version,
    about = "Build and certify orthogonal and 1-Lipschitz convolutions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PaddingArg {
    Zero,
    Circular,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every layer of a suite; exit 1 on any violation or rejection.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        /// Also run the full configuration sweep.
        #[arg(long)]
        grid: bool,
        /// Tolerance for every check.
        #[arg(long)]
        tol: Option<f64>,
        /// Where to write the JSON report (defaults to the suite's `output`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Singular values of a kernel stored in the OKRN format.
    Spectrum {
        #[arg(long)]
        kernel: PathBuf,
        /// toeplitz, fft, gram or power (comma separated for several).
        #[arg(long, value_delimiter = ',', default_value = "toeplitz", value_parser = parse_method)]
        method: Vec<SpectrumMethod>,
        /// Print every singular value.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        dilation: Option<usize>,
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long, value_enum)]
        padding: Option<PaddingArg>,
        #[arg(long)]
        transposed: bool,
        /// Spatial input size (square).
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 200)]
        power_iters: usize,
        #[arg(long, default_value_t = 6)]
        gram_iters: usize,
        /// Print the reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Construction and forward timings of the suite's AOC and SOC layers.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build layer `layer` of a suite and write its kernel (plus config sidecar).
    Export {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> std::result::Result<SpectrumMethod, String> {
    match s.parse::<SpectrumMethod>() {
        Ok(SpectrumMethod::Jacobian) => Err("jacobian needs a map, not a kernel file".into()),
        Ok(m) => Ok(m),
        Err(e) => Err(e.to_string()),
    }
}

pub fn load_suite(path: &Path) -> Result<SuiteSpec> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            // fails only if a pool already exists, which then stays as it is
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    init_threads();
    let res = match cli.command {
        Command::Verify {
            spec,
            grid,
            tol,
            report,
        } => cmd_verify(&spec, grid, tol, report.as_deref()),
        Command::Spectrum {
            kernel,
            method,
            all,
            stride,
            dilation,
            groups,
            padding,
            transposed,
            size,
            power_iters,
            gram_iters,
            json,
        } => {
            let flags = ConvFlags {
                stride,
                dilation,
                groups,
                padding,
                transposed,
            };
            cmd_spectrum(
                &kernel,
                &method,
                all,
                &flags,
                size,
                power_iters,
                gram_iters,
                json,
            )
        }
        Command::Bench { spec, report } => cmd_bench(&spec, report.as_deref()),
        Command::Export { spec, layer, out } => cmd_export(&spec, layer, &out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn entry_line(e: &Entry) -> String {
    let status = if e.passed() { "PASS" } else { "FAIL" };
    let round = if e.round > 0 {
        format!(" round {}", e.round)
    } else {
        String::new()
    };
    match &e.outcome {
        Outcome::Checked { report } => format!(
            "{status} {}{round} {:?} sigma_max={:.12} sigma_min={:.12} verdict={:?}",
            e.layer, report.method, report.sigma_max, report.sigma_min, report.verdict
        ),
        Outcome::Rejected { rejection } => format!(
            "{status} {}{round} rejected ({:?}): {}",
            e.layer, rejection.code, rejection.reason
        ),
        Outcome::Skipped { reason } => format!("SKIP {}{round}: {reason}", e.layer),
        Outcome::Failed { error } => format!("{status} {}{round} error: {error}", e.layer),
    }
}

pub fn cmd_verify(path: &Path, grid: bool, tol: Option<f64>, report: Option<&Path>) -> Result<i32> {
    let suite = load_suite(path)?;
    if let Some(t) = tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParam(format!("tolerance {t}")));
        }
    }
    let mut entries = run_suite(&suite, tol);
    if grid {
        entries.extend(run_grid(suite.seed, suite.input_shape, tol));
    }
    for e in &entries {
        println!("{}", entry_line(e));
    }
    let failed = entries.iter().filter(|e| !e.passed()).count();
    println!("{} checks, {} failed", entries.len(), failed);
    let out = report
        .map(Path::to_path_buf)
        .or_else(|| suite.output.as_ref().map(PathBuf::from));
    if let Some(out) = out {
        let text =
            serde_json::to_string_pretty(&entries).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&out, text + "\n")?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAIL })
}

/// Convolution flags of `spectrum`; unset fields come from the kernel's
/// sidecar config, or default to a stride-1 circular "same" convolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConvFlags {
    pub stride: Option<usize>,
    pub dilation: Option<usize>,
    pub groups: Option<usize>,
    pub padding: Option<PaddingArg>,
    pub transposed: bool,
}

pub fn kernel_spec(
    k: &Tensor4,
    sidecar: Option<&crate::orthoconv::ConvLayerConfig>,
    flags: &ConvFlags,
) -> ConvSpec {
    let mut cfg = sidecar.copied().unwrap_or_else(|| {
        let mut c = crate::orthoconv::ConvLayerConfig::new(k.c_in(), k.c_out(), k.kh());
        c.padding_mode = PaddingMode::Circular;
        c
    });
    if let Some(s) = flags.stride {
        cfg.stride = s;
    }
    if let Some(d) = flags.dilation {
        cfg.dilation = d;
    }
    if let Some(g) = flags.groups {
        cfg.groups = g;
    }
    if let Some(p) = flags.padding {
        cfg.padding_mode = match p {
            PaddingArg::Zero => PaddingMode::Zero,
            PaddingArg::Circular => PaddingMode::Circular,
        };
    }
    cfg.transposed |= flags.transposed;
    if sidecar.is_some() {
        return cfg.conv_spec(k.kh(), k.kw());
    }
    // no layer config: keep the size over the stride on both sides
    let base = ConvSpec::default()
        .with_stride(cfg.stride)
        .with_dilation(cfg.dilation)
        .with_groups(cfg.groups)
        .with_mode(cfg.padding_mode)
        .with_transposed(cfg.transposed);
    let (eh, ew) = base.extent(k.kh(), k.kw());
    base.with_padding(Padding::split(
        eh.saturating_sub(cfg.stride),
        ew.saturating_sub(cfg.stride),
    ))
}

pub fn kernel_input_shape(k: &Tensor4, spec: &ConvSpec, size: usize) -> [usize; 3] {
    let c = if spec.transposed {
        k.c_out()
    } else {
        k.c_in() * spec.groups
    };
    [c, size, size]
}

pub fn spectrum_report(
    k: &Tensor4,
    spec: &ConvSpec,
    in_shape: [usize; 3],
    method: SpectrumMethod,
    power_iters: usize,
    gram_iters: usize,
) -> Result<SpectrumReport> {
    match method {
        SpectrumMethod::ToeplitzSvd => toeplitz_svd_spectrum(k, spec, in_shape),
        SpectrumMethod::FftCircular => fft_circular_spectrum(k, spec, (in_shape[1], in_shape[2])),
        SpectrumMethod::GramBound => gram_bound(k, spec, gram_iters),
        SpectrumMethod::PowerIter => operator_power_iteration(k, spec, in_shape, power_iters),
        SpectrumMethod::Jacobian => Err(Error::InvalidParam(
            "jacobian needs a map, not a kernel".into(),
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_spectrum(
    path: &Path,
    methods: &[SpectrumMethod],
    all: bool,
    flags: &ConvFlags,
    size: usize,
    power_iters: usize,
    gram_iters: usize,
    json: bool,
) -> Result<i32> {
    let (k, cfg) = read_kernel(path)?;
    let spec = kernel_spec(&k, cfg.as_ref(), flags);
    let in_shape = kernel_input_shape(&k, &spec, size);
    let mut reports = Vec::new();
    for &m in methods {
        let mut r = spectrum_report(&k, &spec, in_shape, m, power_iters, gram_iters)?;
        if !all {
            r.all_values = None;
        }
        reports.push(r);
    }
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&reports).map_err(|e| Error::Format(e.to_string()))?
        );
        return Ok(EXIT_OK);
    }
    for r in &reports {
        println!(
            "{:?} sigma_max={:.12} sigma_min={:.12}",
            r.method, r.sigma_max, r.sigma_min
        );
        if let Some(v) = &r.all_values {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:.12}")).collect();
            println!("  values: {}", vals.join(" "));
        }
    }
    Ok(EXIT_OK)
}

fn cmd_bench(path: &Path, report: Option<&Path>) -> Result<i32> {
    let suite = load_suite(path)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut rows: Vec<BenchRow> = Vec::new();
    for (i, l) in suite.layers.iter().enumerate() {
        if !matches!(l, LayerSpec::Aoc { .. } | LayerSpec::Soc { .. }) {
            eprintln!(
                "skipping layers[{i}]:{}: bench covers aoc and soc layers",
                l.name()
            );
            continue;
        }
        let label = format!("layers[{i}]:{}", l.name());
        rows.extend(pool.install(|| {
            bench_layer(
                &label,
                l,
                suite.seed,
                i as u64,
                suite.input_shape,
                &BATCH_SIZES,
                RUNS,
            )
        })?);
    }
    println!(
        "{:<20} {:>5} {:>14} {:>14} {:>14} {:>8} {:>14}",
        "layer", "batch", "construct_s", "forward_s", "plain_s", "ratio", "implicit_s"
    );
    for r in &rows {
        let imp = r
            .implicit_secs
            .map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<20} {:>5} {:>14.6e} {:>14.6e} {:>14.6e} {:>8.3} {:>14}",
            r.layer, r.batch, r.construct_secs, r.forward_secs, r.plain_secs, r.ratio, imp
        );
    }
    if let Some(out) = report {
        let text = serde_json::to_string_pretty(&rows).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(out, text + "\n")?;
    }
    Ok(EXIT_OK)
}

fn cmd_export(path: &Path, index: usize, out: &Path) -> Result<i32> {
    let suite = load_suite(path)?;
    let Some(spec) = suite.layers.get(index) else {
        return Err(Error::InvalidParam(format!(
            "suite has {} layers, no layer {index}",
            suite.layers.len()
        )));
    };
    let cfg = match spec {
        LayerSpec::Aoc { config, .. }
        | LayerSpec::Soc { config, .. }
        | LayerSpec::Aol { config } => *config,
        _ => {
            return Err(Error::InvalidParam(
                "only aoc, soc and aol layers have a single kernel".into(),
            ))
        }
    };
    let mut rng = item_rng(suite.seed, index as u64);
    let layer = Layer::random(spec, &mut rng)?;
    let BuiltLayer::Linear { kernel, .. } = layer.build(suite.input_shape)? else {
        unreachable!()
    };
    write_kernel(out, &kernel, Some(&cfg))?;
    println!("wrote {} {:?}", out.display(), kernel.shape());
    Ok(EXIT_OK)
}
