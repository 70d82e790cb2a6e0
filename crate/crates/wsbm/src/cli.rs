//! Command-line front end: the analysis pipeline plus the `generate` and
//! `benchmark` subcommands. Progress lines go to standard error; result data
//! goes to the requested files or standard output.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand};

use crate::em::FitConfig;
use crate::error::{Error, Result};
use crate::generator::{sample_network, ParamsFile};
use crate::io::{fmt_g17, parse_spm, write_output, write_spm, OutputFormat};
use crate::models::ModelSpec;
use crate::selection::{benchmark, sweep, QPolicy, Smoothing};

#[derive(Parser)]
#[command(
    name = "wsbm",
    version,
    about = "Cluster weighted networks with stochastic block models via variational EM",
    args_conflicts_with_subcommands = true,
    subcommand_negates_reqs = true,
    group(ArgGroup::new("qpolicy").required(true).args(["qmax", "qauto"]))
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Input network in .spm form
    #[arg(long, required = true, value_name = "PATH")]
    input: Option<PathBuf>,

    /// Treat the graph as undirected
    #[arg(long)]
    symmetric: bool,

    /// Edge model: bernoulli, BH, BI, poisson, PRMH, PRMI, gaussian, GRMH, GRMI
    #[arg(long, required = true, value_name = "NAME")]
    model: Option<String>,

    /// Largest number of groups to fit
    #[arg(long = "Qmax", value_name = "INT")]
    qmax: Option<usize>,

    /// Let the program extend the number of groups automatically
    #[arg(long = "Qauto")]
    qauto: bool,

    /// Reinitialization mode: none, minimal or exhaustive
    #[arg(long, default_value = "none", value_name = "MODE")]
    smoothing: String,

    /// Result file (standard output when omitted)
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Result syntax: text, R, matlab or octave
    #[arg(long = "output-format", default_value = "text", value_name = "FMT")]
    output_format: String,

    /// Seed for every randomized step
    #[arg(long, default_value_t = 0, value_name = "INT")]
    seed: u64,

    /// Worker threads (defaults to the hardware concurrency)
    #[arg(long, value_name = "INT")]
    threads: Option<usize>,

    /// Declare a node count larger than the largest index in the file
    #[arg(long = "n-override", value_name = "INT")]
    n_override: Option<usize>,

    /// Also write a Q,pseudo_likelihood,icl table for plotting
    #[arg(long = "icl-csv", value_name = "PATH")]
    icl_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic network from a model and write it in .spm form
    Generate {
        /// Edge model name
        #[arg(long, value_name = "NAME")]
        model: String,
        /// JSON parameter file: alpha, connectivity, sigma2, beta/beta_ql, covariates
        #[arg(long, value_name = "PATH")]
        params: PathBuf,
        /// Number of nodes
        #[arg(long, value_name = "INT")]
        n: usize,
        #[arg(long, default_value_t = 0, value_name = "INT")]
        seed: u64,
        /// Sample an asymmetric (directed) network
        #[arg(long)]
        directed: bool,
        /// Output .spm path (standard output when omitted)
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
        /// Also write the planted node/group table
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
    /// Time single-threaded sweeps across sizes and fit a scaling exponent
    Benchmark {
        /// Node counts, ascending, comma-separated
        #[arg(long, value_delimiter = ',', value_name = "N1,N2,...")]
        sizes: Vec<usize>,
        /// Edge model name
        #[arg(long, value_name = "NAME")]
        model: String,
        /// Sweep extent used in each timed run
        #[arg(long, default_value_t = 4, value_name = "INT")]
        qmax: usize,
        #[arg(long, default_value_t = 0, value_name = "INT")]
        seed: u64,
        /// CSV destination (standard output when omitted)
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

/// Runs the CLI: 0 on success, 1 on runtime failures, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Some(Command::Generate { model, params, n, seed, directed, output, truth }) => {
            generate(model, params, n, seed, directed, output, truth)
        }
        Some(Command::Benchmark { sizes, model, qmax, seed, output }) => {
            run_benchmark(sizes, model, qmax, seed, output)
        }
        None => analyze(cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn open_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn analyze(cli: Cli) -> Result<()> {
    let spec = ModelSpec::from_cli_name(cli.model.as_deref().expect("required"))?;
    let smoothing: Smoothing = cli.smoothing.parse()?;
    let format: OutputFormat = cli.output_format.parse()?;
    let input = cli.input.expect("required");

    let file = File::open(&input)?;
    let mut network = parse_spm(BufReader::new(file), cli.symmetric)?;
    if let Some(n) = cli.n_override {
        if network.p() > 0 {
            return Err(Error::InvalidParameters(
                "--n-override cannot be used with covariates: the format already \
                 pins every dyad"
                    .into(),
            ));
        }
        if n < network.n {
            return Err(Error::InvalidParameters(format!(
                "--n-override {n} is below the largest node index {}",
                network.n
            )));
        }
        network.n = n;
    }
    eprintln!(
        "read {}: {} nodes, {} stored dyads, {} covariate(s)",
        input.display(),
        network.n,
        network.weights.len(),
        network.p()
    );

    let policy = match (cli.qmax, cli.qauto) {
        (Some(q), false) => QPolicy::Max(q),
        (None, true) => QPolicy::Auto,
        _ => unreachable!("clap enforces the group"),
    };
    let threads = cli.threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameters(format!("thread pool: {e}")))?;

    let config = FitConfig::with_seed(cli.seed);
    let result = pool.install(|| sweep(&network, &spec, policy, smoothing, &config))?;
    eprintln!(
        "explored Q = 1..{}, selected Q = {} (ICL {})",
        result.per_q.len(),
        result.selected_q,
        result.best().icl
    );

    let mut out = open_sink(&cli.output)?;
    write_output(&result, format, &mut out)?;
    out.flush()?;

    if let Some(csv_path) = cli.icl_csv {
        let mut csv = BufWriter::new(File::create(csv_path)?);
        writeln!(csv, "Q,pseudo_likelihood,icl")?;
        for f in &result.per_q {
            writeln!(csv, "{},{},{}", f.q, fmt_g17(f.objective), fmt_g17(f.icl))?;
        }
        csv.flush()?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate(
    model: String,
    params_path: PathBuf,
    n: usize,
    seed: u64,
    directed: bool,
    output: Option<PathBuf>,
    truth: Option<PathBuf>,
) -> Result<()> {
    let spec = ModelSpec::from_cli_name(&model)?;
    let params_file: ParamsFile = serde_json::from_reader(BufReader::new(File::open(&params_path)?))?;
    let params = params_file.to_parameters()?;
    let sampler = params_file.sampler()?;

    let (network, plant) = sample_network(&spec, &params, n, sampler.as_ref(), directed, seed)?;
    eprintln!(
        "sampled {} nodes, {} stored dyads from {}",
        n,
        network.weights.len(),
        spec
    );

    let mut out = open_sink(&output)?;
    write_spm(&network, &mut out)?;
    out.flush()?;

    if let Some(truth_path) = truth {
        let mut t = BufWriter::new(File::create(truth_path)?);
        for (i, &g) in plant.labels.iter().enumerate() {
            writeln!(t, "{} {}", i + 1, g + 1)?;
        }
        t.flush()?;
    }
    Ok(())
}

fn run_benchmark(
    sizes: Vec<usize>,
    model: String,
    qmax: usize,
    seed: u64,
    output: Option<PathBuf>,
) -> Result<()> {
    let spec = ModelSpec::from_cli_name(&model)?;
    let config = FitConfig::with_seed(seed);
    let report = benchmark(&sizes, &spec, &config, qmax)?;

    let mut out = open_sink(&output)?;
    writeln!(out, "t,n,g,p,model")?;
    for r in &report.records {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_g17(r.t_seconds),
            r.n,
            r.groups_found,
            r.p,
            r.model
        )?;
    }
    out.flush()?;
    eprintln!("{}", report.summary());
    Ok(())
}
