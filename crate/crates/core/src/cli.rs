//! Command-line front end: model construction, scans, searches, preparation,
//! baselines, and CSV emission with reproducibility manifests.

use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::artifacts::{emit_csv, sha256_file, Csv, OutputRecord, RunManifest, ARTIFACT_VERSION};
use crate::baselines::{
    adiabatic_evolve, compare_methods, precondition_then_rodeo, qpe_filter, AdiabaticConfig,
    CompareConfig, QpeConfig,
};
use crate::error::Error;
use crate::hamiltonians::{
    build_anderson_from, build_heisenberg, build_product_state, build_staggered_field,
    load_hamiltonian, realize_disorder, AndersonParams, Disorder, HeisenbergParams,
};
use crate::rodeo::{self, RodeoConfig, TimeAccounting};
use crate::scan::{
    detect_peaks, hierarchical_search, scan_evolution_time, scan_spectral, PeakPreference,
    ScanConfig, SearchConfig,
};
use crate::seeding;
use crate::spectral::{
    eigendecompose, project_to_eigenbasis, weights_of, ComplexVector, HermitianOperator,
};

const MAX_SPIN_SITES: usize = 12;
const MAX_LATTICE_SITES: usize = 4096;
const MAX_CLI_PHASE_BITS: u32 = 16;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "rodeo",
    version,
    about = "Spectral filtering laboratory: exact engines, energy scans, eigenstate preparation, and baselines",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact spectrum of the model with per-eigenvalue initial-state weights
    SpectrumExact(SpectrumExactArgs),
    /// Averaged success probability over an energy grid
    Scan(ScanArgs),
    /// Scan plus peak detection
    Peaks(PeaksArgs),
    /// Hierarchical energy search: shrinking windows, lengthening times
    Search(SearchArgs),
    /// Post-selected eigenstate preparation with per-cycle residual trace
    Prepare(PrepareArgs),
    /// Ramp evolution from the staggered-field Hamiltonian to the model
    Adiabatic(AdiabaticArgs),
    /// Phase-estimation outcome distribution for the model and initial state
    Qpe(QpeArgs),
    /// Error versus total evolution time across methods
    Compare(CompareArgs),
    /// Adiabatic preconditioning followed by post-selected filter cycles
    Precondition(PreconditionArgs),
    /// Check a manifest's digests; optionally re-run and compare
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    Heisenberg,
    Anderson,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AccountingArg {
    SumAbs,
    NTimesTrms,
}

impl From<AccountingArg> for TimeAccounting {
    fn from(a: AccountingArg) -> Self {
        match a {
            AccountingArg::SumAbs => TimeAccounting::SumAbs,
            AccountingArg::NTimesTrms => TimeAccounting::NTimesTrms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PreferArg {
    Lowest,
    Strongest,
}

fn parse_positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid number '{s}'"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {s}"))
    }
}

fn parse_nonnegative_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid number '{s}'"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be nonnegative and finite, got {s}"))
    }
}

fn parse_shrink(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid number '{s}'"))?;
    if v > 1.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("shrink factor must exceed 1, got {s}"))
    }
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    /// Model family
    #[arg(long, value_enum, default_value = "heisenberg")]
    model: ModelKind,
    /// Spin-chain or lattice sites (default: 10 spins / 100 lattice sites)
    #[arg(long)]
    sites: Option<usize>,
    /// Heisenberg exchange coupling
    #[arg(long = "J", default_value_t = 1.0, allow_negative_numbers = true)]
    j: f64,
    /// Heisenberg transverse field strength
    #[arg(long = "h", default_value_t = 3.0, allow_negative_numbers = true)]
    h: f64,
    /// Gaussian on-site disorder strength (Anderson)
    #[arg(long, value_parser = parse_nonnegative_f64, default_value_t = 0.5)]
    disorder_rms: f64,
    /// Seed for the disorder realization (Anderson)
    #[arg(long, default_value_t = 0)]
    disorder_seed: u64,
    /// Constant on-site energy instead of random disorder (Anderson)
    #[arg(long, conflicts_with = "disorder_rms", allow_negative_numbers = true)]
    disorder_const: Option<f64>,
    /// JSON operator file (model = file)
    #[arg(long)]
    hamiltonian_file: Option<PathBuf>,
    /// Initial state: a bit string, `site:<k>`, or `kmin`
    #[arg(long)]
    init: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct OutputArgs {
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = hardware parallelism)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Data file (CSV)
    #[arg(long)]
    out: PathBuf,
    /// Manifest file (default: data file with .manifest.json extension)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl OutputArgs {
    fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.out.with_extension("manifest.json"))
    }
}

#[derive(Args, Debug, Serialize)]
struct SpectrumExactArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct GridArgs {
    /// Grid lower edge
    #[arg(long, allow_negative_numbers = true)]
    emin: f64,
    /// Grid upper edge
    #[arg(long, allow_negative_numbers = true)]
    emax: f64,
    /// Grid points
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=1_000_000))]
    points: u32,
}

#[derive(Args, Debug, Serialize)]
struct ScanArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Filter cycles per measurement
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=10_000), default_value_t = 9)]
    cycles: u32,
    /// RMS of the Gaussian evolution times
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 1.0)]
    trms: f64,
    /// Schedule draws averaged per grid point
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=1_000_000), default_value_t = 20)]
    averages: u32,
    /// How evolution time is accounted in the manifest
    #[arg(long, value_enum, default_value = "sum-abs")]
    time_accounting: AccountingArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct PeaksArgs {
    #[command(flatten)]
    scan: ScanArgs,
    /// Peak significance threshold in standard errors
    #[arg(long, value_parser = parse_nonnegative_f64, default_value_t = 5.0)]
    peak_z: f64,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial window lower edge
    #[arg(long, allow_negative_numbers = true)]
    emin: f64,
    /// Initial window upper edge
    #[arg(long, allow_negative_numbers = true)]
    emax: f64,
    /// Window shrink factor per scan (t_rms grows by the same factor)
    #[arg(long = "shrink-K", value_parser = parse_shrink, default_value_t = 4.0)]
    shrink_k: f64,
    /// Target energy resolution
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 1e-3)]
    epsilon: f64,
    /// Filter cycles per measurement
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=10_000), default_value_t = 9)]
    cycles: u32,
    /// Grid points per scan
    #[arg(long, value_parser = clap::value_parser!(u32).range(3..=100_000), default_value_t = 16)]
    points: u32,
    /// Initial RMS evolution time
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 1.0)]
    trms: f64,
    /// Schedule draws averaged per grid point
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=1_000_000), default_value_t = 64)]
    averages: u32,
    /// Peak significance threshold in standard errors
    #[arg(long, value_parser = parse_nonnegative_f64, default_value_t = 5.0)]
    peak_z: f64,
    /// Minimum peak height a followed peak must reach
    #[arg(long, value_parser = parse_nonnegative_f64, default_value_t = 0.01)]
    min_weight: f64,
    /// Scan budget
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=1_000), default_value_t = 20)]
    max_scans: u32,
    /// Which peak each round follows
    #[arg(long, value_enum, default_value = "lowest")]
    prefer: PreferArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct PrepareArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Filter cycles
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=10_000), default_value_t = 20)]
    cycles: u32,
    /// RMS of the Gaussian evolution times
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 3.0)]
    trms: f64,
    /// Starting filter energy
    #[arg(long, allow_negative_numbers = true)]
    filter_energy: f64,
    /// Re-center the filter on the success-probability peak each cycle
    #[arg(long)]
    recenter: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct AdiabaticArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Ramp durations (comma separated)
    #[arg(long, value_delimiter = ',', value_parser = parse_positive_f64, required = true)]
    total_time: Vec<f64>,
    /// Starting step count for the doubling refinement
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=1_000_000), default_value_t = 16)]
    steps: u32,
    /// Convergence tolerance on the final-state fidelity change
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct QpeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Ancilla bits
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=MAX_CLI_PHASE_BITS as i64), default_value_t = 6)]
    phase_bits: u32,
    /// Evolution time per controlled-power unit
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 1.0)]
    base_time: f64,
    /// Window lower edge (default: min eigenvalue − 1)
    #[arg(long, allow_negative_numbers = true)]
    emin: Option<f64>,
    /// Window upper edge (default: max eigenvalue + 1)
    #[arg(long, allow_negative_numbers = true)]
    emax: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target eigenvalue the filter locks onto
    #[arg(long, allow_negative_numbers = true)]
    filter_energy: f64,
    /// Time budgets (comma separated)
    #[arg(long, value_delimiter = ',', value_parser = parse_positive_f64, required = true)]
    total_time: Vec<f64>,
    /// Stochastic-filter seeds per budget
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=100_000), default_value_t = 25)]
    averages: u32,
    /// Phase-estimation time per controlled-power unit
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 1.0)]
    base_time: f64,
    /// Starting step count for ramp refinement
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=1_000_000), default_value_t = 16)]
    steps: u32,
    /// Ramp convergence tolerance
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 1e-6)]
    tol: f64,
    /// How evolution time is accounted
    #[arg(long, value_enum, default_value = "sum-abs")]
    time_accounting: AccountingArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct PreconditionArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Preconditioning ramp durations (comma separated, 0 = none)
    #[arg(long = "t-ae", value_delimiter = ',', value_parser = parse_nonnegative_f64, required = true)]
    t_ae: Vec<f64>,
    /// Filter cycle counts (comma separated)
    #[arg(long, value_delimiter = ',', default_value = "0,3,6,9")]
    cycles: Vec<u32>,
    /// RMS of the Gaussian evolution times
    #[arg(long, value_parser = parse_positive_f64, default_value_t = 5.0)]
    trms: f64,
    /// Schedule replicas averaged per row
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=100_000), default_value_t = 100)]
    averages: u32,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// Manifest to check
    #[arg(long)]
    manifest: PathBuf,
    /// Re-run the recorded command and compare data digests
    #[arg(long)]
    rerun: bool,
}

/// Entry point used by the binary and by in-process tests. Returns the
/// process exit code: 0 success, 1 runtime error, 2 usage error.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, &args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli, argv: &[String]) -> CliResult<()> {
    match cli.command {
        Command::SpectrumExact(a) => emit(argv, "spectrum-exact", &a.output, &a, cmd_spectrum),
        Command::Scan(a) => emit(argv, "scan", &a.output, &a, cmd_scan),
        Command::Peaks(a) => emit(argv, "peaks", &a.scan.output, &a, cmd_peaks),
        Command::Search(a) => emit(argv, "search", &a.output, &a, cmd_search),
        Command::Prepare(a) => emit(argv, "prepare", &a.output, &a, cmd_prepare),
        Command::Adiabatic(a) => emit(argv, "adiabatic", &a.output, &a, cmd_adiabatic),
        Command::Qpe(a) => emit(argv, "qpe", &a.output, &a, cmd_qpe),
        Command::Compare(a) => emit(argv, "compare", &a.output, &a, cmd_compare),
        Command::Precondition(a) => emit(argv, "precondition", &a.output, &a, cmd_precondition),
        Command::Verify(a) => cmd_verify(&a),
    }
}

/// Run a data-producing handler inside the requested thread pool, then write
/// the CSV and its manifest.
fn emit<A: Serialize>(
    argv: &[String],
    subcommand: &str,
    output: &OutputArgs,
    args: &A,
    handler: impl FnOnce(&A) -> CliResult<(Csv, Map<String, Value>)> + Send,
) -> CliResult<()>
where
    A: Sync,
{
    let started = Instant::now();
    let (csv, extra) = if output.threads == 0 {
        handler(args)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(output.threads)
            .build()
            .map_err(|e| usage(format!("cannot build a {}-thread pool: {e}", output.threads)))?;
        pool.install(|| handler(args))?
    };
    let digest = emit_csv(&csv, &output.out)?;
    let bytes = std::fs::metadata(&output.out).map_err(Error::Io)?.len();
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.into(),
        command_line: argv.to_vec(),
        subcommand: subcommand.into(),
        resolved_config: serde_json::to_value(args).map_err(Error::Json)?,
        master_seed: output.seed,
        duration_seconds: started.elapsed().as_secs_f64(),
        outputs: vec![OutputRecord {
            path: output.out.display().to_string(),
            sha256: digest,
            bytes,
        }],
        extra,
    };
    let manifest_path = output.manifest_path();
    manifest.write(&manifest_path)?;
    println!(
        "wrote {} ({} rows) and {}",
        output.out.display(),
        csv.rows().len(),
        manifest_path.display()
    );
    Ok(())
}

/// A fully constructed model: operator, initial state, and metadata.
struct ResolvedModel {
    h: HermitianOperator,
    init: ComplexVector,
    description: Value,
    extra: Map<String, Value>,
    spin_sites: Option<usize>,
}

fn resolve_model(m: &ModelArgs) -> CliResult<ResolvedModel> {
    match m.model {
        ModelKind::Heisenberg => {
            let sites = m.sites.unwrap_or(10);
            if !(2..=MAX_SPIN_SITES).contains(&sites) {
                return Err(usage(format!(
                    "spin chains support 2..={MAX_SPIN_SITES} sites, got {sites}"
                )));
            }
            let params = HeisenbergParams {
                sites,
                j: m.j,
                h: m.h,
                periodic: true,
            };
            let h = build_heisenberg(&params).map_err(CliError::Runtime)?;
            let init_spec = m.init.clone().unwrap_or_else(|| default_bits(sites));
            let init = parse_init(&init_spec, &h, m, None)?;
            Ok(ResolvedModel {
                h,
                init,
                description: json!({
                    "model": "heisenberg", "sites": sites, "J": m.j, "h": m.h,
                    "periodic": true, "init": init_spec,
                }),
                extra: Map::new(),
                spin_sites: Some(sites),
            })
        }
        ModelKind::Anderson => {
            let sites = m.sites.unwrap_or(100);
            if !(2..=MAX_LATTICE_SITES).contains(&sites) {
                return Err(usage(format!(
                    "lattices support 2..={MAX_LATTICE_SITES} sites, got {sites}"
                )));
            }
            let disorder = match m.disorder_const {
                Some(c) => Disorder::Explicit(vec![c; sites]),
                None => Disorder::Gaussian {
                    rms: m.disorder_rms,
                    seed: m.disorder_seed,
                },
            };
            let params = AndersonParams { sites, disorder };
            let c = realize_disorder(&params).map_err(CliError::Runtime)?;
            let h = build_anderson_from(&c).map_err(CliError::Runtime)?;
            let init_spec = m.init.clone().unwrap_or_else(|| "kmin".into());
            let init = parse_init(&init_spec, &h, m, Some(&c))?;
            let mean = c.iter().sum::<f64>() / sites as f64;
            let rms = (c.iter().map(|x| x * x).sum::<f64>() / sites as f64).sqrt();
            let mut extra = Map::new();
            extra.insert("disorder_sample_mean".into(), json!(mean));
            extra.insert("disorder_sample_rms".into(), json!(rms));
            Ok(ResolvedModel {
                h,
                init,
                description: json!({
                    "model": "anderson", "sites": sites,
                    "disorder": params.disorder, "init": init_spec,
                }),
                extra,
                spin_sites: None,
            })
        }
        ModelKind::File => {
            let path = m
                .hamiltonian_file
                .as_ref()
                .ok_or_else(|| usage("--model file requires --hamiltonian-file"))?;
            let h = load_hamiltonian(path).map_err(CliError::Runtime)?;
            let init_spec = m.init.clone().unwrap_or_else(|| "site:0".into());
            let init = parse_init(&init_spec, &h, m, None)?;
            Ok(ResolvedModel {
                description: json!({
                    "model": "file", "path": path.display().to_string(),
                    "dim": h.dim(), "init": init_spec,
                }),
                init,
                h,
                extra: Map::new(),
                spin_sites: None,
            })
        }
    }
}

fn default_bits(sites: usize) -> String {
    (0..sites).map(|i| if i % 2 == 0 { '0' } else { '1' }).collect()
}

fn parse_init(
    spec: &str,
    h: &HermitianOperator,
    m: &ModelArgs,
    disorder: Option<&[f64]>,
) -> CliResult<ComplexVector> {
    if spec == "kmin" {
        let c = disorder.ok_or_else(|| usage("--init kmin requires --model anderson"))?;
        let k = c
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .expect("nonempty lattice");
        return ComplexVector::basis(h.dim(), k).map_err(CliError::Runtime);
    }
    if let Some(rest) = spec.strip_prefix("site:") {
        let k: usize = rest
            .parse()
            .map_err(|_| usage(format!("invalid site index '{rest}' in --init")))?;
        if k >= h.dim() {
            return Err(usage(format!(
                "--init site:{k} is out of range for dimension {}",
                h.dim()
            )));
        }
        return ComplexVector::basis(h.dim(), k).map_err(CliError::Runtime);
    }
    if !spec.is_empty() && spec.chars().all(|ch| ch == '0' || ch == '1') {
        if 1usize
            .checked_shl(spec.len() as u32)
            .map(|d| d != h.dim())
            .unwrap_or(true)
        {
            return Err(usage(format!(
                "--init bit string of length {} does not address dimension {}",
                spec.len(),
                h.dim()
            )));
        }
        if let Some(sites) = m.sites {
            if sites != spec.len() {
                return Err(usage(format!(
                    "--init bit string has {} sites but --sites is {sites}",
                    spec.len()
                )));
            }
        }
        return build_product_state(spec).map_err(CliError::Runtime);
    }
    Err(usage(format!(
        "cannot parse --init '{spec}': expected a bit string, site:<k>, or kmin"
    )))
}

/// The staggered-field ramp origin; defined for spin-chain models only.
fn ramp_origin(model: &ResolvedModel) -> CliResult<HermitianOperator> {
    let sites = model.spin_sites.ok_or_else(|| {
        usage("this subcommand interpolates from the staggered-field Hamiltonian and needs --model heisenberg")
    })?;
    build_staggered_field(sites).map_err(CliError::Runtime)
}

fn f(x: f64) -> String {
    crate::artifacts::fmt_f64(x)
}

fn cmd_spectrum(a: &SpectrumExactArgs) -> CliResult<(Csv, Map<String, Value>)> {
    let model = resolve_model(&a.model)?;
    let eig = eigendecompose(&model.h)?;
    let state = project_to_eigenbasis(&model.init, &eig)?;
    let mut csv = Csv::new("energy,weight");
    for j in 0..eig.dim() {
        csv.push(&[
            f(eig.energies()[j]),
            f(state.amplitudes()[j].norm_sqr()),
        ]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    Ok((csv, extra))
}

fn scan_config(a: &ScanArgs) -> ScanConfig {
    ScanConfig {
        e_min: a.grid.emin,
        e_max: a.grid.emax,
        points: a.grid.points as usize,
        cycles: a.cycles as usize,
        t_rms: a.trms,
        averages: a.averages as usize,
        seed: a.output.seed,
    }
}

fn cmd_scan(a: &ScanArgs) -> CliResult<(Csv, Map<String, Value>)> {
    if !(a.grid.emin < a.grid.emax) {
        return Err(usage(format!(
            "--emin must be below --emax, got [{}, {}]",
            a.grid.emin, a.grid.emax
        )));
    }
    let model = resolve_model(&a.model)?;
    let eig = eigendecompose(&model.h)?;
    let state = project_to_eigenbasis(&model.init, &eig)?;
    let weights = weights_of(&state, &eig)?;
    let cfg = scan_config(a);
    let result = scan_spectral(&weights, &cfg)?;
    let mut csv = Csv::new("energy,mean_success,stderr");
    for i in 0..result.energies().len() {
        csv.push(&[
            f(result.energies()[i]),
            f(result.mean_success()[i]),
            f(result.stderr()[i]),
        ]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    extra.insert(
        "total_evolution_time".into(),
        json!(scan_evolution_time(&cfg, a.time_accounting.into())),
    );
    Ok((csv, extra))
}

fn cmd_peaks(a: &PeaksArgs) -> CliResult<(Csv, Map<String, Value>)> {
    if !(a.scan.grid.emin < a.scan.grid.emax) {
        return Err(usage(format!(
            "--emin must be below --emax, got [{}, {}]",
            a.scan.grid.emin, a.scan.grid.emax
        )));
    }
    let model = resolve_model(&a.scan.model)?;
    let eig = eigendecompose(&model.h)?;
    let state = project_to_eigenbasis(&model.init, &eig)?;
    let weights = weights_of(&state, &eig)?;
    let result = scan_spectral(&weights, &scan_config(&a.scan))?;
    let peaks = detect_peaks(&result, a.peak_z);
    let mut csv = Csv::new("location,height,grid_index");
    for p in &peaks.peaks {
        csv.push(&[f(p.location), f(p.height), p.grid_index.to_string()]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    extra.insert("background_level".into(), json!(peaks.background_level));
    Ok((csv, extra))
}

fn cmd_search(a: &SearchArgs) -> CliResult<(Csv, Map<String, Value>)> {
    if !(a.emin < a.emax) {
        return Err(usage(format!(
            "--emin must be below --emax, got [{}, {}]",
            a.emin, a.emax
        )));
    }
    let model = resolve_model(&a.model)?;
    let eig = eigendecompose(&model.h)?;
    let state = project_to_eigenbasis(&model.init, &eig)?;
    let weights = weights_of(&state, &eig)?;
    let cfg = SearchConfig {
        shrink_factor: a.shrink_k,
        epsilon: a.epsilon,
        cycles: a.cycles as usize,
        points: a.points as usize,
        t_rms: a.trms,
        max_scans: a.max_scans as usize,
        averages: a.averages as usize,
        seed: a.output.seed,
        peak_z: a.peak_z,
        min_weight: a.min_weight,
        peak_preference: match a.prefer {
            PreferArg::Lowest => PeakPreference::LowestAboveThreshold,
            PreferArg::Strongest => PeakPreference::Strongest,
        },
    };
    let outcome = hierarchical_search(&weights, a.emin, a.emax, &cfg)?;
    let mut csv = Csv::new("scan_index,window_min,window_max,trms,peak_location");
    for r in &outcome.history {
        csv.push(&[
            r.scan_index.to_string(),
            f(r.window_min),
            f(r.window_max),
            f(r.t_rms),
            f(r.peak_location),
        ]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    extra.insert("estimate".into(), json!(outcome.estimate));
    extra.insert("scans".into(), json!(outcome.history.len()));
    extra.insert(
        "total_evolution_time".into(),
        json!(outcome.total_evolution_time()),
    );
    Ok((csv, extra))
}

fn cmd_prepare(a: &PrepareArgs) -> CliResult<(Csv, Map<String, Value>)> {
    let model = resolve_model(&a.model)?;
    let eig = eigendecompose(&model.h)?;
    let state = project_to_eigenbasis(&model.init, &eig)?;
    let cfg = RodeoConfig {
        cycles: a.cycles as usize,
        t_rms: a.trms,
        filter_energy: a.filter_energy,
        seed: a.output.seed,
        recenter: a.recenter,
    };
    let (_, report) = rodeo::prepare_eigenstate(&state, &eig, a.filter_energy, &cfg, a.output.seed)?;
    let mut csv = Csv::new("cycle,filter_energy,delta,survival_probability");
    for step in &report.per_cycle_trace {
        csv.push(&[
            step.cycle.to_string(),
            f(step.filter_energy),
            f(step.delta),
            f(step.survival_probability),
        ]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    extra.insert(
        "target_energy".into(),
        json!(eig.energies()[report.target_index]),
    );
    extra.insert("final_delta".into(), json!(report.delta));
    extra.insert("final_overlap".into(), json!(report.overlap));
    Ok((csv, extra))
}

/// Lowest occupied level of the initial state: the preparation target for
/// ramp-based subcommands.
fn ramp_target(
    model: &ResolvedModel,
    eig: &crate::spectral::EigenDecomposition,
) -> CliResult<Vec<usize>> {
    let state = project_to_eigenbasis(&model.init, eig)?;
    let occupied = weights_of(&state, eig)?
        .merged()
        .occupied(rodeo::OCCUPANCY_FLOOR);
    let (target_e, _) = *occupied
        .first()
        .ok_or_else(|| CliError::Runtime(Error::InvalidArgument(
            "initial state has no occupied level".into(),
        )))?;
    let tol = 1e-9 * target_e.abs().max(1.0);
    Ok((0..eig.dim())
        .filter(|&j| (eig.energies()[j] - target_e).abs() <= tol)
        .collect())
}

fn cmd_adiabatic(a: &AdiabaticArgs) -> CliResult<(Csv, Map<String, Value>)> {
    let model = resolve_model(&a.model)?;
    let h_i = ramp_origin(&model)?;
    let eig = eigendecompose(&model.h)?;
    let level = ramp_target(&model, &eig)?;
    let mut csv = Csv::new("total_time,steps,overlap");
    for &total_time in &a.total_time {
        let cfg = AdiabaticConfig {
            total_time,
            steps: a.steps as usize,
            convergence_tol: a.tol,
        };
        let (evolved, steps) = adiabatic_evolve(&model.init, &h_i, &model.h, &cfg)?;
        let state = project_to_eigenbasis(&evolved, &eig)?;
        csv.push(&[f(total_time), steps.to_string(), f(state.weight_of(&level))]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    extra.insert("target_energy".into(), json!(eig.energies()[level[0]]));
    Ok((csv, extra))
}

fn cmd_qpe(a: &QpeArgs) -> CliResult<(Csv, Map<String, Value>)> {
    let model = resolve_model(&a.model)?;
    let eig = eigendecompose(&model.h)?;
    let state = project_to_eigenbasis(&model.init, &eig)?;
    let default_window = QpeConfig::window_for(&eig);
    let cfg = QpeConfig {
        phase_bits: a.phase_bits,
        base_time: a.base_time,
        energy_window: (
            a.emin.unwrap_or(default_window.0),
            a.emax.unwrap_or(default_window.1),
        ),
    };
    if !(cfg.energy_window.0 < cfg.energy_window.1) {
        return Err(usage(format!(
            "--emin must be below --emax, got [{}, {}]",
            cfg.energy_window.0, cfg.energy_window.1
        )));
    }
    let mut csv = Csv::new("outcome,probability");
    let mut sink = seeding::rng_from(0);
    for m in 0..cfg.outcomes() {
        let (_, _, p) = qpe_filter(&state, &eig, &cfg, Some(m), &mut sink)
            .or_else(|e| match e {
                // Outcomes of vanishing probability still belong in the table.
                Error::Underflow { probability } => {
                    Ok((state.clone(), m, probability.max(0.0)))
                }
                other => Err(other),
            })?;
        csv.push(&[m.to_string(), f(p)]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    extra.insert("total_evolution_time".into(), json!(cfg.total_time()));
    extra.insert("energy_window".into(), json!(cfg.energy_window));
    Ok((csv, extra))
}

fn cmd_compare(a: &CompareArgs) -> CliResult<(Csv, Map<String, Value>)> {
    let model = resolve_model(&a.model)?;
    let h_i = ramp_origin(&model)?;
    let cfg = CompareConfig {
        seeds: a.averages as usize,
        master_seed: a.output.seed,
        qpe_base_time: a.base_time,
        adiabatic_tol: a.tol,
        adiabatic_steps: a.steps as usize,
        time_accounting: a.time_accounting.into(),
    };
    let rows = compare_methods(
        &model.init,
        &h_i,
        &model.h,
        a.filter_energy,
        &a.total_time,
        &cfg,
    )?;
    let mut csv = Csv::new("method,total_time,log10_delta,seed");
    for row in &rows {
        csv.push(&[
            row.method.as_str().to_string(),
            f(row.total_time),
            f(row.log_delta),
            row.seed.map(|s| s.to_string()).unwrap_or_default(),
        ]);
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    extra.insert("rodeo_t_rms".into(), json!(1.0));
    Ok((csv, extra))
}

fn cmd_precondition(a: &PreconditionArgs) -> CliResult<(Csv, Map<String, Value>)> {
    let model = resolve_model(&a.model)?;
    let h_i = ramp_origin(&model)?;
    let cycle_counts: Vec<usize> = a.cycles.iter().map(|&n| n as usize).collect();
    let mut csv = Csv::new("t_ae,cycles,mean_overlap,stderr");
    for &t_ae in &a.t_ae {
        let rows = precondition_then_rodeo(
            &model.init,
            &h_i,
            &model.h,
            t_ae,
            a.trms,
            &cycle_counts,
            a.averages as usize,
            a.output.seed,
        )?;
        for row in &rows {
            csv.push(&[
                f(row.t_ae),
                row.cycles.to_string(),
                f(row.mean_overlap),
                f(row.stderr),
            ]);
        }
    }
    let mut extra = model.extra;
    extra.insert("model".into(), model.description);
    Ok((csv, extra))
}

/// Swap the value of `--flag` (or `--flag=…`) in an argv copy, appending the
/// pair when absent.
fn override_flag(argv: &mut Vec<String>, flag: &str, value: String) {
    let prefix = format!("{flag}=");
    for i in 0..argv.len() {
        if argv[i] == flag {
            if i + 1 < argv.len() {
                argv[i + 1] = value;
            } else {
                argv.push(value);
            }
            return;
        }
        if argv[i].starts_with(&prefix) {
            argv[i] = format!("{flag}={value}");
            return;
        }
    }
    argv.push(flag.into());
    argv.push(value);
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let manifest = RunManifest::read(&a.manifest)?;
    if manifest.artifact_version != ARTIFACT_VERSION {
        return Err(CliError::Runtime(Error::Format(format!(
            "manifest artifact version {} is not supported (expected {ARTIFACT_VERSION})",
            manifest.artifact_version
        ))));
    }
    manifest.check_digests(&a.manifest)?;
    if a.rerun {
        if manifest.subcommand == "verify" || manifest.command_line.len() < 2 {
            return Err(CliError::Runtime(Error::Format(
                "manifest does not record a re-runnable command".into(),
            )));
        }
        let dir = tempfile::Builder::new()
            .prefix("rodeo-verify")
            .tempdir()
            .map_err(Error::Io)?;
        let data_path = dir.path().join("rerun.csv");
        let manifest_path = dir.path().join("rerun.manifest.json");
        let mut argv = manifest.command_line.clone();
        override_flag(&mut argv, "--out", data_path.display().to_string());
        override_flag(&mut argv, "--manifest", manifest_path.display().to_string());
        let code = run_cli(argv);
        if code != 0 {
            return Err(CliError::Runtime(Error::Format(format!(
                "recorded command re-run exited with code {code}"
            ))));
        }
        let (digest, _) = sha256_file(&data_path)?;
        let recorded = &manifest.outputs[0];
        if digest != recorded.sha256 {
            return Err(CliError::Runtime(Error::DigestMismatch {
                path: recorded.path.clone(),
                expected: recorded.sha256.clone(),
                found: digest,
            }));
        }
        println!(
            "verified {}: digests match and the re-run reproduced the data byte for byte",
            a.manifest.display()
        );
    } else {
        println!("verified {}: digests match", a.manifest.display());
    }
    Ok(())
}
