//! Command-line front end. Every run that writes to `--out` also writes a
//! JSON manifest next to it, which `replay` can re-execute and compare.

mod commands;
pub mod manifest;
pub mod parse;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::circle::CircleError;
use crate::dyadic::{BinningMode, DyadicError};
use crate::energy::{EnergyError, DEFAULT_MEM_BUDGET};
use crate::kernels::KernelError;
use crate::selberg::SelbergError;
use crate::sequences::{RealSeq, SeqError, SequenceSpec};
use crate::variance::{AlphaSampler, VarianceError};

use manifest::{compare_outputs, sha256_file, OutputFile, RunManifest, MANIFEST_VERSION};
use parse::{parse_mode, parse_seq};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_BAD_ARGS: i32 = 2;
pub const EXIT_GUARD: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("guard exceeded: {0}")]
    Guard(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::BadArgs(_) => EXIT_BAD_ARGS,
            RunError::Guard(_) => EXIT_GUARD,
            RunError::Check(_) | RunError::Io(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<SeqError> for RunError {
    fn from(e: SeqError) -> Self {
        match e {
            SeqError::Io(_) => RunError::Io(e.to_string()),
            _ => RunError::BadArgs(e.to_string()),
        }
    }
}

impl From<CircleError> for RunError {
    fn from(e: CircleError) -> Self {
        match e {
            CircleError::GuardExceeded { .. } => RunError::Guard(e.to_string()),
            _ => RunError::BadArgs(e.to_string()),
        }
    }
}

impl From<EnergyError> for RunError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::GuardExceeded { .. } | EnergyError::MemoryBudgetExceeded { .. } => RunError::Guard(e.to_string()),
            EnergyError::BadGamma(_) | EnergyError::BadBand { .. } => RunError::BadArgs(e.to_string()),
            EnergyError::Degenerate(_) => RunError::Check(e.to_string()),
            EnergyError::Io(_) => RunError::Io(e.to_string()),
        }
    }
}

impl From<DyadicError> for RunError {
    fn from(e: DyadicError) -> Self {
        match e {
            DyadicError::GuardExceeded(_) => RunError::Guard(e.to_string()),
            DyadicError::QuadratureDivergence { .. } | DyadicError::OutOfBand(_) => RunError::Check(e.to_string()),
            DyadicError::TooShort(_) | DyadicError::BadParams(_) => RunError::BadArgs(e.to_string()),
        }
    }
}

impl From<SelbergError> for RunError {
    fn from(e: SelbergError) -> Self {
        match e {
            SelbergError::IntervalTooWide(_) | SelbergError::BadParams(_) => RunError::BadArgs(e.to_string()),
            SelbergError::NotReal(_) | SelbergError::SelfCheckFailed(..) => RunError::Check(e.to_string()),
        }
    }
}

impl From<VarianceError> for RunError {
    fn from(e: VarianceError) -> Self {
        match e {
            VarianceError::TailTooFat { .. } => RunError::Guard(e.to_string()),
            VarianceError::NotCentered => RunError::Check(e.to_string()),
            VarianceError::BadParams(_) => RunError::BadArgs(e.to_string()),
            VarianceError::Circle(c) => c.into(),
            VarianceError::Seq(s) => s.into(),
        }
    }
}

impl From<KernelError> for RunError {
    fn from(e: KernelError) -> Self {
        RunError::BadArgs(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "paircorr", version, about = "Pair correlation and additive energy experiments for dilated real sequences")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalOpts {
    /// Worker threads (0 = one per core); never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Master seed for all random substreams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Primary output file; without it results go to stdout and no
    /// manifest is written unless --manifest is given.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Manifest path (default: next to --out).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Bytes allowed for the in-memory difference multiset before spilling.
    #[arg(long = "mem-budget", global = true, default_value_t = DEFAULT_MEM_BUDGET)]
    pub mem_budget: u64,
    /// Directory for spill files.
    #[arg(long = "tmp-dir", global = true)]
    pub tmp_dir: Option<PathBuf>,
    /// Accept sequences with gaps below one in the non-exploratory commands.
    #[arg(long = "allow-slow-growth", global = true)]
    pub allow_slow_growth: bool,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// R2(s) for sampled dilations.
    Paircorr(PaircorrArgs),
    /// Tolerance additive energy at one N.
    Energy(EnergyArgs),
    /// Energy over a range of tolerances, with a log-log fit in gamma.
    EnergyScan(EnergyScanArgs),
    /// Energy over a range of N, with a log-log fit in N.
    Scaling(ScalingArgs),
    /// Dyadic solution counts, brute force against the sorted recount.
    DyadicCount(DyadicCountArgs),
    /// Geometric binning diagnostics: quadrature identity, capture, domination.
    BinningDiag(BinningDiagArgs),
    /// Construction contracts of the extremal trigonometric polynomials.
    SelbergCheck(SelbergArgs),
    /// Expectation of the smoothed pair count over dilations.
    Expectation(ExpectationArgs),
    /// Monte Carlo variance of the centered smoothed pair count.
    Variance(VarianceArgs),
    /// R2 convergence experiment over N, for a preset or a sequence.
    Converge(ConvergeArgs),
    /// Runs the invariant suites.
    Verify(VerifyArgs),
    /// Re-executes a manifest and compares its outputs.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Paircorr(_) => "paircorr",
            Command::Energy(_) => "energy",
            Command::EnergyScan(_) => "energy-scan",
            Command::Scaling(_) => "scaling",
            Command::DyadicCount(_) => "dyadic-count",
            Command::BinningDiag(_) => "binning-diag",
            Command::SelbergCheck(_) => "selberg-check",
            Command::Expectation(_) => "expectation",
            Command::Variance(_) => "variance",
            Command::Converge(_) => "converge",
            Command::Verify(_) => "verify",
            Command::Replay(_) => "replay",
        }
    }

    fn spec(&self) -> Option<SequenceSpec> {
        match self {
            Command::Paircorr(a) => Some(a.seq.clone()),
            Command::Energy(a) => Some(a.seq.clone()),
            Command::EnergyScan(a) => Some(a.seq.clone()),
            Command::Scaling(a) => Some(a.seq.clone()),
            Command::DyadicCount(a) => Some(a.seq.clone()),
            Command::BinningDiag(a) => Some(a.seq.clone()),
            Command::Expectation(a) => Some(a.seq.clone()),
            Command::Variance(a) => Some(a.seq.clone()),
            Command::Converge(a) => a.resolve().ok().map(|(s, _)| s),
            Command::SelbergCheck(_) | Command::Verify(_) | Command::Replay(_) => None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PaircorrArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long = "alpha-sampler", default_value = "uniform:1:2")]
    pub alpha_sampler: AlphaSampler,
    #[arg(long, default_value_t = 1)]
    pub alphas: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub s: Vec<f64>,
    /// Direct O(N^2) count instead of the sorted count.
    #[arg(long)]
    pub brute: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnergyArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub gamma: Vec<f64>,
    /// Direct O(N^4) count.
    #[arg(long)]
    pub brute: bool,
    /// Fail instead of spilling when the difference multiset exceeds --mem-budget.
    #[arg(long = "no-chunking")]
    pub no_chunking: bool,
    /// Force the spill path with blocks of about this many bytes.
    #[arg(long = "chunk-bytes")]
    pub chunk_bytes: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnergyScanArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.125,0.0625,0.03125,0.015625")]
    pub gamma: Vec<f64>,
    #[arg(long = "no-chunking")]
    pub no_chunking: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScalingArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N", value_delimiter = ',', default_value = "250,500,1000,2000,4000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long = "no-chunking")]
    pub no_chunking: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DyadicCountArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub u: Vec<u32>,
    /// Restrict to the band of a binning mode (case1:EPS, case2:BETA, thm2:BETA:EPS).
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<BinningMode>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BinningDiagArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub u: u32,
    #[arg(long, value_parser = parse_mode)]
    pub mode: BinningMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignArg {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelbergArgs {
    #[arg(long = "K", value_delimiter = ',', default_value = "10,100,1000")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,3")]
    pub s: Vec<f64>,
    #[arg(long = "N", value_delimiter = ',', default_value = "10,100")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "plus,minus")]
    pub sign: Vec<SignArg>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExpectationArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N", value_delimiter = ',', default_value = "100,200,400")]
    pub n: Vec<usize>,
    /// Degree factor: K = r N.
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long = "quad-nodes", default_value_t = 256)]
    pub quad_nodes: usize,
    #[arg(long, default_value_t = crate::variance::QUAD_WINDOW)]
    pub window: f64,
    /// Fail with exit 3 if the error budget exceeds this.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VarianceArgs {
    #[arg(long, value_parser = parse_seq)]
    pub seq: SequenceSpec,
    #[arg(long = "N", value_delimiter = ',', default_value = "250,2000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergeArgs {
    /// thm3:THETA, open-problem:1[:THETA], open-problem:2 or open-problem:3.
    #[arg(long, conflicts_with = "seq", required_unless_present = "seq")]
    pub preset: Option<String>,
    #[arg(long, value_parser = parse_seq)]
    pub seq: Option<SequenceSpec>,
    #[arg(long = "N", value_delimiter = ',', default_value = "1000,2000,4000,8000")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub s: Vec<f64>,
    #[arg(long = "alpha-sampler", default_value = "uniform:1:2")]
    pub alpha_sampler: AlphaSampler,
    #[arg(long, default_value_t = 10)]
    pub alphas: usize,
}

impl ConvergeArgs {
    /// The sequence and whether the run is exploratory.
    fn resolve(&self) -> Result<(SequenceSpec, bool), RunError> {
        match (&self.preset, &self.seq) {
            (Some(p), _) => {
                let preset = parse::parse_preset(p).map_err(RunError::BadArgs)?;
                Ok((preset.spec(), preset.is_exploratory()))
            }
            (None, Some(s)) => Ok((s.clone(), false)),
            (None, None) => Err(RunError::BadArgs("converge needs --preset or --seq".into())),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// all, sequences, circle, kernels, selberg, energy, dyadic or variance.
    #[arg(long, default_value = "all")]
    pub suite: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// Manifest to re-execute.
    pub manifest_file: PathBuf,
    /// Where replayed outputs go (default: a fresh temporary directory).
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

/// Per-run state shared by the command implementations.
pub struct Ctx {
    pub global: GlobalOpts,
    pub outputs: Vec<PathBuf>,
    pub summary: Map<String, Value>,
}

impl Ctx {
    fn new(global: GlobalOpts) -> Self {
        Ctx { global, outputs: Vec::new(), summary: Map::new() }
    }

    /// Refuses sequences with gaps below one unless explicitly allowed.
    fn gate(&mut self, seq: &RealSeq) -> Result<(), RunError> {
        if seq.is_slow_growth() {
            if !self.global.allow_slow_growth {
                return Err(RunError::BadArgs(format!(
                    "{} has min gap {} < 1 at N = {}; pass --allow-slow-growth for an exploratory run",
                    seq.spec(),
                    seq.min_gap().unwrap_or(f64::NAN),
                    seq.len()
                )));
            }
            self.note("slow_growth", true);
        }
        Ok(())
    }

    fn note<T: Serialize>(&mut self, key: &str, v: T) {
        self.summary.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    /// `--out` with its stem extended by `suffix`, e.g. `r.csv` -> `r.summary.csv`.
    fn sibling(&self, suffix: &str) -> Option<PathBuf> {
        let out = self.global.out.as_ref()?;
        let stem = out.file_stem()?.to_string_lossy().into_owned();
        let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
        Some(out.with_file_name(format!("{stem}.{suffix}{ext}")))
    }

    fn create(&mut self, path: &Path) -> Result<fs::File, RunError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let f = fs::File::create(path)?;
        self.outputs.push(path.to_path_buf());
        Ok(f)
    }

    /// Writes CSV rows to `path`, or to stdout when `path` is `None`.
    fn write_csv<T: Serialize>(&mut self, path: Option<PathBuf>, rows: &[T]) -> Result<(), RunError> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(std::io::BufWriter::new(self.create(&p)?)),
            None => Box::new(std::io::stdout().lock()),
        };
        let mut w = csv::Writer::from_writer(sink);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: Option<PathBuf>, value: &T) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        match path {
            Some(p) => {
                let mut f = self.create(&p)?;
                f.write_all(text.as_bytes())?;
            }
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn manifest_path(global: &GlobalOpts) -> Option<PathBuf> {
    if let Some(m) = &global.manifest {
        return Some(m.clone());
    }
    global.out.as_ref().map(|o| o.with_extension("manifest.json"))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs one parsed command inside a pool of the requested size and writes
/// the manifest. Returns the manifest (written or not).
pub fn execute(cli: &Cli, argv: &[String]) -> Result<RunManifest, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| RunError::BadArgs(format!("cannot build worker pool: {e}")))?;
    let started = now();
    let mut ctx = Ctx::new(cli.global.clone());
    let result = pool.install(|| commands::dispatch(&cli.command, &mut ctx));
    let finished = now();

    let params = match serde_json::to_value(&cli.command)? {
        Value::Object(m) => m.into_iter().collect(),
        _ => Default::default(),
    };
    let mut outputs = Vec::new();
    for p in &ctx.outputs {
        let path = fs::canonicalize(p).unwrap_or_else(|_| p.clone());
        outputs.push(OutputFile { sha256: sha256_file(&path)?, path });
    }
    let mut summary = ctx.summary;
    if let Err(e) = &result {
        summary.insert("error".into(), Value::String(e.to_string()));
    }
    let manifest = RunManifest {
        manifest_v: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        argv: argv.to_vec(),
        spec: cli.command.spec(),
        params,
        seed: cli.global.seed,
        threads: pool.current_num_threads(),
        started,
        finished,
        outputs,
        summary: Value::Object(summary),
    };
    if !matches!(cli.command, Command::Replay(_)) {
        if let Some(mp) = manifest_path(&cli.global) {
            if let Some(dir) = mp.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            manifest.write(&mp)?;
        }
    }
    result.map(|_| manifest)
}

fn resolve_recorded(path: &Path, manifest_dir: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    match path.file_name() {
        Some(name) => manifest_dir.join(name),
        None => path.to_path_buf(),
    }
}

/// Re-executes the manifest's command at the current thread count and
/// compares every output with the recorded one.
pub fn replay(args: &ReplayArgs, global: &GlobalOpts) -> Result<Vec<manifest::Comparison>, RunError> {
    let m = RunManifest::read(&args.manifest_file).map_err(RunError::BadArgs)?;
    let mut full = vec!["paircorr".to_string()];
    full.extend(m.argv.iter().cloned());
    let mut cli = Cli::try_parse_from(&full).map_err(|e| RunError::BadArgs(format!("recorded argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(RunError::BadArgs("cannot replay a replay".into()));
    }
    let tmp;
    let dir = match &args.out_dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            d.clone()
        }
        None => {
            tmp = tempfile::Builder::new().prefix("paircorr-replay").tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    cli.global.threads = global.threads;
    if let Some(o) = &cli.global.out {
        cli.global.out = Some(dir.join(o.file_name().unwrap_or_default()));
    }
    cli.global.manifest = Some(dir.join("replay.manifest.json"));
    let fresh = execute(&cli, &m.argv)?;
    if fresh.outputs.len() != m.outputs.len() {
        return Err(RunError::Check(format!(
            "replay wrote {} outputs, manifest records {}",
            fresh.outputs.len(),
            m.outputs.len()
        )));
    }
    let mdir = args.manifest_file.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    for (old, new) in m.outputs.iter().zip(&fresh.outputs) {
        let recorded = resolve_recorded(&old.path, &mdir);
        out.push(compare_outputs(&recorded, &new.path).map_err(RunError::Io)?);
    }
    Ok(out)
}

/// Parses `argv` (including the program name), runs, and returns the exit
/// code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_ARGS } else { EXIT_OK };
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match &cli.command {
        Command::Replay(r) => replay(r, &cli.global).and_then(|cmp| {
            let mut bad = 0;
            for c in &cmp {
                let status = if c.ok() { "match" } else { "MISMATCH" };
                eprintln!(
                    "{status} {} ({} integer, {} float fields, max float rel {:e}, identical bytes: {})",
                    c.recorded.display(),
                    c.integer_fields,
                    c.float_fields,
                    c.max_float_rel,
                    c.identical_bytes
                );
                for m in c.mismatches.iter().take(10) {
                    eprintln!("  {m}");
                }
                bad += usize::from(!c.ok());
            }
            if bad > 0 {
                Err(RunError::Check(format!("{bad} output(s) differ from the manifest")))
            } else {
                Ok(())
            }
        }),
        _ => execute(&cli, &args).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("paircorr: {e}");
            e.exit_code()
        }
    }
}
