//! Command-line front end: simulate chains, tabulate run curves and funnels,
//! and fit memory parameters to study tables or run curves.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible fit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use markov_memory::chain::MarkovParams;
use markov_memory::error::{Error, Result};
use markov_memory::estimate::{
    fit_curves_mle, fit_runs_simulated, fit_scatter, PqBounds, RunFitConfig, ScatterFit,
};
use markov_memory::funnel::{
    coverage, sample_curve, z_for_level, CurveGrid, FunnelSpec, DEFAULT_Z,
};
use markov_memory::io::{
    curve_table, format_number, funnel_table, parse_curve, parse_sequence, parse_studies,
    sequence_text, studies_table, write_atomic, AnalysisReport, InputDigest, RunCurves,
    StudyRecord, SEED_ENV,
};
use markov_memory::runs::{average_and_normalize, extract_runs, memoryfree_curve, pooled_curve};
use markov_memory::simulate::{
    generate, generate_member, log_uniform_sizes, BinarySequence, State,
};

#[derive(Parser, Debug)]
#[command(
    name = "markov-memory",
    version,
    about = "Two-state Markov memory: simulation, run curves, funnels and fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate binary sequences as 0/1 text.
    Simulate(SimulateArgs),
    /// Generate a study table of independent sequences with log-uniform sizes.
    Ensemble(EnsembleArgs),
    /// Normalized run-length curves per state.
    Runs(RunsArgs),
    /// Sample funnel confidence curves as (n, lower, upper).
    Funnel(FunnelArgs),
    /// Fit (pinf, nu) and (p, q) to a study table.
    FitScatter(FitScatterArgs),
    /// Fit (p11, p22) to 'on' and 'off' run curves.
    FitRuns(FitRunsArgs),
    /// Scatter fit plus coverage and funnel samples in one report.
    Analyze(FitScatterArgs),
}

#[derive(Args, Debug)]
struct ChainArgs {
    /// Self-transition probability of state A.
    #[arg(long)]
    p: f64,
    /// Self-transition probability of state B.
    #[arg(long)]
    q: f64,
    /// Probability that the first state is A (default: stationary frequency).
    #[arg(long)]
    p1: Option<f64>,
}

impl ChainArgs {
    fn params(&self) -> Result<MarkovParams> {
        let stationary = MarkovParams::stationary(self.p, self.q)?;
        match self.p1 {
            Some(p1) => stationary.with_p1(p1),
            None => Ok(stationary),
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Number of sequences; member i is written to `<out>.<i>` when more than one.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output file (stdout, one sequence per line, when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnsembleArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 20)]
    n_min: u64,
    #[arg(long, default_value_t = 10_000)]
    n_max: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Value for the `group` column.
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunsArgs {
    /// Sequence files; curves are averaged over them.
    #[arg(long, num_args = 1.., conflicts_with_all = ["p", "q", "p1"])]
    input: Vec<PathBuf>,
    /// Two-symbol alphabet for the input files, A first (e.g. `on,off`).
    #[arg(long, value_delimiter = ',', requires = "input")]
    alphabet: Option<Vec<String>>,
    #[arg(long, requires = "q")]
    p: Option<f64>,
    #[arg(long, requires = "p")]
    q: Option<f64>,
    #[arg(long, requires = "p")]
    p1: Option<f64>,
    /// Sequence length when simulating.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Number of simulated sequences to average.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Also emit pooled curves and the memory-free reference curve.
    #[arg(long)]
    reference: bool,
    /// Write the state-A ('on') curve as an m,frequency table.
    #[arg(long)]
    a_out: Option<PathBuf>,
    /// Write the state-B ('off') curve as an m,frequency table.
    #[arg(long)]
    b_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FunnelArgs {
    #[arg(long)]
    pinf: f64,
    #[arg(long)]
    nu: f64,
    #[arg(long, conflicts_with = "level")]
    z: Option<f64>,
    /// Confidence level, converted to z through the normal quantile.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    n_min: f64,
    #[arg(long, default_value_t = 1e5)]
    n_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitScatterArgs {
    #[arg(long)]
    studies: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Only use studies whose `group` equals this value.
    #[arg(long)]
    group: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    min_p: Option<f64>,
    #[arg(long)]
    min_q: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    n_min: f64,
    #[arg(long, default_value_t = 1e5)]
    n_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitRunsArgs {
    /// m,frequency table of state-1 ('on') runs.
    #[arg(long)]
    on: PathBuf,
    /// m,frequency table of state-2 ('off') runs.
    #[arg(long)]
    off: PathBuf,
    /// Coarse grid step over (0, 1).
    #[arg(long, default_value_t = 0.05)]
    grid: f64,
    /// Step of the refinement grid around the coarse optimum.
    #[arg(long, default_value_t = 0.01)]
    refine: f64,
    /// Run-curve bins at or below this frequency are ignored.
    #[arg(long, default_value_t = 1e-4)]
    floor: f64,
    /// Sequence length assumed by the run model.
    #[arg(long, default_value_t = 10_000)]
    length: usize,
    /// Simulated sequences for a Monte Carlo check of the optimum (0 = off).
    #[arg(long, default_value_t = 0)]
    confirm_seeds: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|_| Error::Data {
        line: None,
        message: format!("{}: not UTF-8 text", path.display()),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_context(path: &Path, e: Error) -> Error {
    match e {
        Error::Data { line, message } => Error::Data {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let params = args.chain.params()?;
    if args.count == 0 {
        return Err(Error::InvalidArgument("--count must be at least 1".into()));
    }
    if args.count == 1 {
        return emit(
            args.out.as_deref(),
            &sequence_text(&generate(&params, args.n, args.seed)?),
        );
    }
    let seqs = (0..args.count)
        .map(|i| generate_member(&params, args.n, args.seed, i))
        .collect::<Result<Vec<_>>>()?;
    match args.out {
        Some(base) => {
            for (i, s) in seqs.iter().enumerate() {
                let mut name = base.clone().into_os_string();
                name.push(format!(".{i}"));
                write_atomic(Path::new(&name), sequence_text(s).as_bytes())?;
            }
            Ok(())
        }
        None => emit(None, &seqs.iter().map(sequence_text).collect::<String>()),
    }
}

fn ensemble(args: EnsembleArgs) -> Result<()> {
    let params = args.chain.params()?;
    if args.count == 0 {
        return Err(Error::InvalidArgument("--count must be at least 1".into()));
    }
    let sizes = log_uniform_sizes(args.count, args.n_min, args.n_max, args.seed)?;
    let records: Vec<StudyRecord> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let seq = generate_member(&params, n as usize, args.seed, i)?;
            Ok(StudyRecord {
                study_id: format!("s{}", i + 1),
                n,
                successes: Some(seq.count(State::A) as u64),
                p_bar: seq.frequency_a(),
                group: args.group.clone(),
            })
        })
        .collect::<Result<_>>()?;
    emit(args.out.as_deref(), &studies_table(&records))
}

fn runs(args: RunsArgs) -> Result<()> {
    let seqs: Vec<BinarySequence> = if !args.input.is_empty() {
        let alphabet = match args.alphabet.as_deref() {
            None => None,
            Some([a, b]) => Some((a.as_str(), b.as_str())),
            Some(_) => {
                return Err(Error::InvalidArgument(
                    "--alphabet takes exactly two symbols".into(),
                ))
            }
        };
        args.input
            .iter()
            .map(|path| {
                parse_sequence(&read_text(path)?, alphabet).map_err(|e| with_context(path, e))
            })
            .collect::<Result<_>>()?
    } else {
        let (Some(p), Some(q)) = (args.p, args.q) else {
            return Err(Error::InvalidArgument(
                "give either --input or --p and --q".into(),
            ));
        };
        let chain = ChainArgs { p, q, p1: args.p1 };
        let params = chain.params()?;
        if args.seeds == 0 {
            return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
        }
        (0..args.seeds)
            .map(|i| generate_member(&params, args.n, args.seed, i))
            .collect::<Result<_>>()?
    };
    let (a_hists, b_hists): (Vec<_>, Vec<_>) = seqs.iter().map(extract_runs).unzip();

    let mut table = String::from("state,m,frequency\n");
    let mut curves = Vec::new();
    for (label, hists, out) in [("A", &a_hists, &args.a_out), ("B", &b_hists, &args.b_out)] {
        match average_and_normalize(hists) {
            Ok(curve) => {
                for (m, f) in &curve.freqs {
                    table.push_str(&format!("{label},{m},{}\n", format_number(*f)));
                }
                if let Some(path) = out {
                    write_atomic(path, curve_table(&curve).as_bytes())?;
                }
                curves.push(curve);
            }
            Err(Error::EmptyInput(_)) if out.is_none() => {}
            Err(e) => return Err(e),
        }
    }
    if args.reference {
        let pooled = pooled_curve(&a_hists, &b_hists)?;
        for (m, f) in &pooled {
            table.push_str(&format!("pooled,{m},{}\n", format_number(*f)));
        }
        let p_bar = seqs.iter().map(BinarySequence::frequency_a).sum::<f64>() / seqs.len() as f64;
        let n = seqs.iter().map(BinarySequence::len).min().unwrap_or(0);
        let max_m = pooled
            .keys()
            .next_back()
            .copied()
            .unwrap_or(1)
            .min(n.saturating_sub(2));
        match memoryfree_curve(n, p_bar, max_m) {
            Ok(reference) => {
                for (m, f) in &reference {
                    table.push_str(&format!("memoryfree,{m},{}\n", format_number(*f)));
                }
            }
            Err(e) => eprintln!("no memory-free reference: {e}"),
        }
    }
    emit(args.out.as_deref(), &table)
}

fn funnel(args: FunnelArgs) -> Result<()> {
    let z = match (args.z, args.level) {
        (Some(z), _) => z,
        (None, Some(level)) => z_for_level(level)?,
        (None, None) => DEFAULT_Z,
    };
    let spec = FunnelSpec::new(args.pinf, args.nu, z)?;
    let samples = sample_curve(
        &spec,
        CurveGrid {
            n_min: args.n_min,
            n_max: args.n_max,
            points: args.points,
        },
    )?;
    emit(args.out.as_deref(), &funnel_table(&samples))
}

fn scatter_fit(
    args: &FitScatterArgs,
    command: &str,
) -> Result<(AnalysisReport, ScatterFit, markov_memory::ScatterDataset)> {
    if !args.delimiter.is_ascii() {
        return Err(Error::InvalidArgument(
            "--delimiter must be an ASCII character".into(),
        ));
    }
    let bytes = read_file(&args.studies)?;
    let (_, dataset) = parse_studies(bytes.as_slice(), args.delimiter as u8)
        .map_err(|e| with_context(&args.studies, e))?;
    let dataset = match &args.group {
        Some(g) => dataset.filter_label(g).map_err(|_| Error::Data {
            line: None,
            message: format!("no studies in group `{g}`"),
        })?,
        None => dataset,
    };
    let bounds = match (args.min_p, args.min_q) {
        (None, None) => None,
        (p, q) => Some(PqBounds {
            min_p: p.unwrap_or(0.0),
            min_q: q.unwrap_or(0.0),
        }),
    };
    let fit = fit_scatter(&dataset, args.level, bounds)?;
    let mut report = AnalysisReport::new(command);
    report
        .inputs
        .push(InputDigest::of(args.studies.display().to_string(), &bytes));
    report.scatter_fit = Some(fit.clone());
    Ok((report, fit, dataset))
}

fn fit_scatter_cmd(args: FitScatterArgs) -> Result<()> {
    let (report, _, _) = scatter_fit(&args, "fit-scatter")?;
    emit(args.out.as_deref(), &report.to_json()?)
}

fn analyze(args: FitScatterArgs) -> Result<()> {
    let (mut report, fit, dataset) = scatter_fit(&args, "analyze")?;
    let z = z_for_level(args.level)?;
    report.memoryless_coverage = Some(coverage(&dataset, &FunnelSpec::new(fit.pinf_hat, 1.0, z)?));
    report.funnel = sample_curve(
        &FunnelSpec::new(fit.pinf_hat, fit.nu_hat, z)?,
        CurveGrid {
            n_min: args.n_min,
            n_max: args.n_max,
            points: args.points,
        },
    )?;
    emit(args.out.as_deref(), &report.to_json()?)
}

fn fit_runs(args: FitRunsArgs) -> Result<()> {
    let on_bytes = read_text(&args.on)?;
    let off_bytes = read_text(&args.off)?;
    let on = parse_curve(&on_bytes, State::A).map_err(|e| with_context(&args.on, e))?;
    let off = parse_curve(&off_bytes, State::B).map_err(|e| with_context(&args.off, e))?;
    let config = RunFitConfig {
        grid_step: args.grid,
        refine_step: args.refine,
        floor: args.floor,
        sequence_length: args.length,
        confirm_seeds: args.confirm_seeds,
        seed: args.seed,
    };
    let fit = fit_runs_simulated(&on, &off, &config)?;
    let mut report = AnalysisReport::new("fit-runs");
    report.seed = (args.confirm_seeds > 0).then_some(args.seed);
    report.inputs.push(InputDigest::of(
        args.on.display().to_string(),
        on_bytes.as_bytes(),
    ));
    report.inputs.push(InputDigest::of(
        args.off.display().to_string(),
        off_bytes.as_bytes(),
    ));
    report.run_fit = Some(fit);
    report.mle_fit = fit_curves_mle(&on, &off).ok();
    report.run_fit_config = Some(config);
    report.run_curves = Some(RunCurves { on, off });
    emit(args.out.as_deref(), &report.to_json()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Runs(a) => runs(a),
        Command::Funnel(a) => funnel(a),
        Command::FitScatter(a) => fit_scatter_cmd(a),
        Command::FitRuns(a) => fit_runs(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
