//! `bpdp`: command-line access to the framed-rectangle chain, the lattice
//! simulator, the special functions and the asymptotic fits.
//!
//! Results are printed as JSON run records (or CSV for `scan` and
//! `functions`). Flags override `BPDP_*` environment variables, which
//! override the defaults.

mod record;
mod verify;

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bpdp::chain::{compute_pi_with, default_threshold, ChainParams, Convention, DpOptions};
use bpdp::fitting::{
    fit_first_order, fit_first_order_fixed_alpha, fit_four_param, fit_second_order, fit_second_order_fixed_beta,
    fit_third_order, Figure, PiDataset,
};
use bpdp::lattice_sim::{exact_event_prob, mc_estimate, Event, Rectangle};
use bpdp::matrix_analysis::{
    characteristic_polynomial, closed_form_entry, closed_form_entry_exact, matrix_power_entry,
    eigenvalue_shift_ratio, perturbed_characteristic_closed_form, perturbed_matrix, perturbed_scaled_eigenvalues, perturbed_spectral_radius,
    unperturbed_scaled_eigenvalues,
};
use bpdp::special_functions::{constants, f, g, h, h2};
use bpdp::{Error, ModelParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use record::{big, fmt17, num, nums, pairs, RunRecord};

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_RESOURCE: u8 = 3;

#[derive(Parser)]
#[command(name = "bpdp", version, about = "Exact metastability scale of local Froebose bootstrap percolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute log Pi(p) with the level-order dynamic program.
    Pi(PiArgs),
    /// Compute log Pi for a range of p = 2^-k and stream CSV rows.
    Scan(ScanArgs),
    /// Run property suites; exit status 2 if any property fails.
    Verify(VerifyArgs),
    /// Print the integral constants.
    Constants,
    /// Emit plot-ready columns of the kernels or of transformed Pi data.
    Functions(FunctionsArgs),
    /// Fit the asymptotic expansion to (log2_inv_p, log_pi) data.
    Fit(FitArgs),
    /// Monte Carlo estimate of a rectangle event on the lattice.
    Simulate(SimulateArgs),
    /// Cycle-matrix powers and the spectrum of the perturbed matrix.
    Matrix(MatrixArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    Exact,
    AtLeast,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Exact => Convention::HitExactly,
            ConventionArg::AtLeast => Convention::HitAtLeast,
        }
    }
}

#[derive(Args, Clone)]
struct DpArgs {
    /// Which semi-perimeters count as reaching the threshold.
    #[arg(long, value_enum, env = "BPDP_CONVENTION", default_value = "exact")]
    convention: ConventionArg,
    #[arg(long, env = "BPDP_THREADS", default_value_t = 1)]
    threads: usize,
    /// Drop states whose log-probability falls below this value.
    #[arg(long)]
    prune_threshold: Option<f64>,
    /// Memory cap of the dynamic program in bytes.
    #[arg(long, env = "BPDP_MEMORY_CAP")]
    memory_cap: Option<u64>,
}

impl DpArgs {
    fn options(&self) -> DpOptions {
        let mut opts = DpOptions { threads: self.threads.max(1), prune_below: self.prune_threshold, ..DpOptions::default() };
        if let Some(cap) = self.memory_cap {
            opts.memory_cap_bytes = cap;
        }
        opts
    }

    fn record(&self, rec: &mut RunRecord) {
        rec.param("convention", Convention::from(self.convention).label());
        rec.param("threads", self.threads);
        rec.param("prune_threshold", self.prune_threshold.map_or(Value::Null, num));
    }
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("prob").required(true))]
struct PiArgs {
    #[arg(long, group = "prob")]
    p: Option<f64>,
    /// k with p = 2^-k.
    #[arg(long, group = "prob")]
    log2_inv_p: Option<u32>,
    /// Threshold semi-perimeter L; defaults to ceil(2 log(1/p) / p).
    #[arg(long)]
    threshold: Option<u32>,
    #[command(flatten)]
    dp: DpArgs,
    /// Append a CSV row to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Inclusive range `a..b` of k = log2(1/p).
    #[arg(long, value_parser = parse_k_range)]
    log2_inv_p_range: (u32, u32),
    #[command(flatten)]
    dp: DpArgs,
    /// Write rows to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Keep completed rows already in the output file and compute the rest.
    #[arg(long, requires = "output")]
    resume: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: verify::Suite,
    #[arg(long, env = "BPDP_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FigureArg {
    /// Columns z, f, g, h, h2 over the grid.
    Kernels,
    /// x = log(1/p), y = p log Pi.
    PLogPi,
    Loglog,
    Linear,
    SecondOrderLog,
    SecondOrderLinear,
    ThirdOrderLog,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Spacing {
    Log,
    Linear,
}

#[derive(Args)]
struct FunctionsArgs {
    #[arg(long, value_enum, default_value = "kernels")]
    figure: FigureArg,
    /// Range `lo..hi` of z for the kernel columns.
    #[arg(long, value_parser = parse_f64_range, default_value = "1e-6..60")]
    grid: (f64, f64),
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, value_enum, default_value = "log")]
    spacing: Spacing,
    /// CSV of (log2_inv_p, log_pi) for the data figures; defaults to the
    /// built-in table.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV of (log2_inv_p, log_pi); defaults to the built-in table.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Event name: O, I, IF, Iloc, IFloc, C, CF, G-, G|, T-east, T-north,
    /// T-west, T-south.
    #[arg(long)]
    event: String,
    #[arg(long)]
    width: i64,
    #[arg(long)]
    height: i64,
    /// Inner rectangle `a,b,c,d` for the crossing events.
    #[arg(long, value_parser = parse_rect)]
    inner: Option<Rectangle>,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, env = "BPDP_SEED", default_value_t = 0)]
    seed: u64,
    /// Also compute the exact probability by enumeration (small regions only).
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long, default_value_t = 0.01)]
    p: f64,
    #[arg(long, default_value_t = 25)]
    k_max: u32,
}

fn parse_k_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a = a.trim().parse().map_err(|e| format!("bad start: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("bad end: {e}"))?;
    Ok((a, b))
}

fn parse_f64_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once("..").ok_or("expected lo..hi")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err("need 0 < lo < hi < inf".into());
    }
    Ok((a, b))
}

fn parse_rect(s: &str) -> Result<Rectangle, String> {
    let v: Vec<i64> = s.split(',').map(|x| x.trim().parse::<i64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let [a, b, c, d] = v[..] else { return Err("expected a,b,c,d".into()) };
    Rectangle::new(a, b, c, d).map_err(|e| e.to_string())
}

enum CliError {
    Usage(String),
    Lib(Error),
    Verify(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ResourceCap { .. } | Error::TooLarge { .. } => EXIT_RESOURCE,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Pi(a) => cmd_pi(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Constants => cmd_constants(),
        Command::Functions(a) => cmd_functions(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Matrix(a) => cmd_matrix(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(CliError::Verify(n)) => {
            eprintln!("{n} propert{} failed", if n == 1 { "y" } else { "ies" });
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn chain_params(model: ModelParams, threshold: Option<u32>, dp: &DpArgs) -> ChainParams {
    ChainParams {
        model,
        threshold: threshold.unwrap_or_else(|| default_threshold(&model)),
        convention: dp.convention.into(),
    }
}

fn cmd_pi(a: PiArgs) -> CliResult<()> {
    let started = Instant::now();
    let model = match (a.p, a.log2_inv_p) {
        (Some(p), _) => ModelParams::new(p)?,
        (None, Some(k)) => ModelParams::from_log2_inv_p(k)?,
        (None, None) => unreachable!("clap requires one of --p and --log2-inv-p"),
    };
    let params = chain_params(model, a.threshold, &a.dp);
    let result = compute_pi_with(&params, &a.dp.options())?;

    let mut rec = RunRecord::new("pi");
    rec.param("p", num(model.p()));
    if let Some(k) = a.log2_inv_p {
        rec.param("log2_inv_p", k);
    }
    rec.param("threshold", params.threshold);
    a.dp.record(&mut rec);
    rec.output("log_pi", num(result.log_pi)).output("log_hit_prob", num(result.log_hit_prob.ln()));

    if let Some(path) = &a.csv {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let mut w = csv::Writer::from_writer(OpenOptions::new().create(true).append(true).open(path)?);
        if fresh {
            w.write_record(["p", "threshold", "convention", "log_pi"])?;
        }
        w.write_record([fmt17(model.p()), params.threshold.to_string(), params.convention.label().into(), fmt17(result.log_pi)])?;
        w.flush()?;
    }
    rec.finish(started).print();
    Ok(())
}

const SCAN_HEADER: [&str; 6] = ["log2_inv_p", "log_pi", "p", "threshold", "convention", "error"];

/// `k` values already completed in an earlier scan's output.
fn completed_rows(path: &Path) -> CliResult<BTreeSet<u32>> {
    let mut done = BTreeSet::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    for row in reader.records() {
        let row = row?;
        if let (Some(k), Some(v)) = (row.get(0), row.get(1)) {
            if let (Ok(k), Ok(v)) = (k.parse::<u32>(), v.parse::<f64>()) {
                if v.is_finite() {
                    done.insert(k);
                }
            }
        }
    }
    Ok(done)
}

fn cmd_scan(a: ScanArgs) -> CliResult<()> {
    let (lo, hi) = a.log2_inv_p_range;
    let done = match (&a.output, a.resume) {
        (Some(path), true) => completed_rows(path)?,
        _ => BTreeSet::new(),
    };
    let (sink, header): (Box<dyn Write>, bool) = match &a.output {
        Some(path) if a.resume => {
            let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
            (Box::new(OpenOptions::new().create(true).append(true).open(path)?), fresh)
        }
        Some(path) => (Box::new(std::fs::File::create(path)?), true),
        None => (Box::new(std::io::stdout()), true),
    };
    let mut w = csv::Writer::from_writer(sink);
    if header {
        w.write_record(SCAN_HEADER)?;
        w.flush()?;
    }
    let opts = a.dp.options();
    let mut worst: Option<u8> = None;
    for k in lo..=hi {
        if done.contains(&k) {
            continue;
        }
        let row = ModelParams::from_log2_inv_p(k).and_then(|model| {
            let params = chain_params(model, None, &a.dp);
            compute_pi_with(&params, &opts).map(|r| (params, r))
        });
        match row {
            Ok((params, r)) => w.write_record([
                k.to_string(),
                fmt17(r.log_pi),
                fmt17(params.model.p()),
                params.threshold.to_string(),
                params.convention.label().into(),
                String::new(),
            ])?,
            Err(e) => {
                let code = exit_code(&e);
                worst = Some(worst.map_or(code, |c| c.max(code)));
                let p = (-(k as f64)).exp2();
                w.write_record([
                    k.to_string(),
                    String::new(),
                    fmt17(p),
                    String::new(),
                    Convention::from(a.dp.convention).label().into(),
                    e.to_string(),
                ])?
            }
        }
        w.flush()?;
    }
    match worst {
        None => Ok(()),
        Some(code) => {
            eprintln!("some rows failed; see the error column");
            std::process::exit(code.into())
        }
    }
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    let checks = verify::run(a.suite, a.seed)?;
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(CliError::Verify(failed));
    }
    Ok(())
}

fn cmd_constants() -> CliResult<()> {
    let started = Instant::now();
    let c = constants()?;
    let mut rec = RunRecord::new("constants");
    rec.output("lambda1_f", num(c.lambda1_f))
        .output("lambda1", num(c.lambda1))
        .output("lambda2_f", num(c.lambda2_f))
        .output("lambda2_2n", num(c.lambda2_2n));
    rec.finish(started).print();
    Ok(())
}

fn load_dataset(input: &Option<PathBuf>) -> CliResult<PiDataset> {
    Ok(match input {
        Some(path) => PiDataset::from_csv(&std::fs::read_to_string(path)?)?,
        None => PiDataset::table3(),
    })
}

fn figure_of(arg: FigureArg) -> Option<Figure> {
    Some(match arg {
        FigureArg::Loglog => Figure::LogLog,
        FigureArg::Linear => Figure::Linear,
        FigureArg::SecondOrderLog => Figure::SecondOrderLog,
        FigureArg::SecondOrderLinear => Figure::SecondOrderLinear,
        FigureArg::ThirdOrderLog => Figure::ThirdOrderLog,
        FigureArg::Kernels | FigureArg::PLogPi => return None,
    })
}

fn p_log_pi(data: &PiDataset) -> Vec<(f64, f64)> {
    data.rows()
        .iter()
        .map(|&(k, lp)| (k as f64 * std::f64::consts::LN_2, (-(k as f64)).exp2() * lp))
        .collect()
}

fn cmd_functions(a: FunctionsArgs) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    match a.figure {
        FigureArg::Kernels => {
            if a.points < 2 {
                return Err(CliError::Usage("--points must be at least 2".into()));
            }
            let (lo, hi) = a.grid;
            w.write_record(["z", "f", "g", "h", "h2"])?;
            for i in 0..a.points {
                let t = i as f64 / (a.points - 1) as f64;
                let z = match a.spacing {
                    _ if i == 0 => lo,
                    _ if i + 1 == a.points => hi,
                    Spacing::Log => (lo.ln() + t * (hi.ln() - lo.ln())).exp(),
                    Spacing::Linear => lo + t * (hi - lo),
                };
                w.write_record([z, f(z)?, g(z)?, h(z)?, h2(z)?].map(fmt17))?;
            }
        }
        other => {
            let data = load_dataset(&a.input)?;
            let points = match figure_of(other) {
                Some(fig) => fig.transform(&data)?,
                None => p_log_pi(&data),
            };
            w.write_record(["x", "y"])?;
            for (x, y) in points {
                w.write_record([fmt17(x), fmt17(y)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn fit_entry<T>(r: bpdp::Result<T>, ok: impl FnOnce(T) -> Value) -> Value {
    match r {
        Ok(v) => ok(v),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let started = Instant::now();
    let data = load_dataset(&a.input)?;
    let mut rec = RunRecord::new("fit");
    rec.param("input", a.input.as_ref().map_or("builtin:table3".to_string(), |p| p.display().to_string()));
    rec.param("rows", data.len());
    rec.output("first_order", fit_entry(fit_first_order(&data), |v| json!({"alpha": num(v.alpha), "lambda1": num(v.lambda1)})));
    rec.output("first_order_fixed_alpha", fit_entry(fit_first_order_fixed_alpha(&data), |v| json!({"lambda1": num(v)})));
    rec.output("second_order", fit_entry(fit_second_order(&data), |v| json!({"beta": num(v.beta), "lambda2": num(v.lambda2)})));
    rec.output("second_order_fixed_beta", fit_entry(fit_second_order_fixed_beta(&data), |v| json!({"lambda2": num(v)})));
    rec.output("third_order", fit_entry(fit_third_order(&data), |v| json!({"exponent": num(v)})));
    rec.output(
        "four_param",
        fit_entry(fit_four_param(&data), |v| {
            json!({
                "alpha": num(v.alpha),
                "lambda1": num(v.lambda1),
                "beta": num(v.beta),
                "lambda2": num(v.lambda2),
                "max_rel_residual": num(v.max_rel_residual),
            })
        }),
    );
    let mut figures = Map::new();
    figures.insert("p_log_pi".into(), pairs(&p_log_pi(&data)));
    for fig in Figure::ALL {
        figures.insert(fig.label().into(), fit_entry(fig.transform(&data), |pts| pairs(&pts)));
    }
    rec.output("figures", Value::Object(figures));
    rec.finish(started).print();
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let event = Event::parse(&a.event, a.inner).ok_or_else(|| {
        CliError::Usage(format!("unknown event {:?} (crossings need --inner a,b,c,d)", a.event))
    })?;
    let region = Rectangle::with_dims(a.width, a.height)?;
    let model = ModelParams::new(a.p)?;
    let est = mc_estimate(&event, &region, &model, a.samples, a.seed)?;
    let mut rec = RunRecord::new("simulate");
    rec.seed = Some(a.seed);
    rec.param("event", event.label())
        .param("region", region.to_string())
        .param("inner", a.inner.map_or(Value::Null, |r| r.to_string().into()))
        .param("p", num(a.p))
        .param("samples", a.samples)
        .param("rng", bpdp::RNG_ALGORITHM);
    rec.output("hits", est.hits).output("p_hat", num(est.p_hat)).output("std_err", num(est.std_err));
    if a.exact {
        rec.output("exact", num(exact_event_prob(&event, &region, &model)?));
    }
    rec.finish(started).print();
    Ok(())
}

fn cmd_matrix(a: MatrixArgs) -> CliResult<()> {
    let started = Instant::now();
    let m = perturbed_matrix(a.p)?;
    let scaled = m.scale(1.0 / a.p.sqrt());
    let powers: Vec<Value> = (0..=a.k_max)
        .map(|k| {
            json!({
                "k": k,
                "matrix_power": big(matrix_power_entry(k)),
                "closed_form_exact": big(closed_form_entry_exact(k) as u128),
                "closed_form": num(closed_form_entry(k)),
            })
        })
        .collect();
    let mut rec = RunRecord::new("matrix");
    rec.param("p", num(a.p)).param("k_max", a.k_max);
    rec.output("power_entries", Value::Array(powers))
        .output("characteristic_polynomial", nums(&characteristic_polynomial(&scaled)))
        .output("characteristic_polynomial_closed_form", nums(&perturbed_characteristic_closed_form(a.p)))
        .output("scaled_eigenvalues", nums(&perturbed_scaled_eigenvalues(a.p)?))
        .output("unperturbed_scaled_eigenvalues", nums(&unperturbed_scaled_eigenvalues()))
        .output("eigenvalue_shift_ratio", num(eigenvalue_shift_ratio(a.p)?))
        .output("spectral_radius", num(perturbed_spectral_radius(a.p)?));
    rec.finish(started).print();
    Ok(())
}
