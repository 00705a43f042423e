use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use exchmine_core::report::{read_json, write_json, write_tsv};
use exchmine_core::session::{load_session_file, save_session_file, select_by_p_delta, select_top_significant};
use exchmine_core::significance::test_patterns;
use exchmine_core::*;

const EXIT_INTERNAL: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, msg: msg.into() }
    }

    fn internal(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_INTERNAL, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() && !matches!(e, Error::Io(_)) { EXIT_INPUT } else { EXIT_INTERNAL };
        Failure { code, msg: e.to_string() }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "exchmine", version, about = "Significance testing of patterns in 0-1 data by swap randomization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine frequent itemsets into an itemset file with frequencies
    Mine(MineArgs),
    /// Test patterns against randomized datasets
    Test(TestArgs),
    /// Iteratively constrain the most significant itemset and retest
    Iterate(IterateArgs),
    /// Split rows at random into a mining half and a testing half
    Split(SplitArgs),
    /// Cluster rows with k-means
    Cluster(ClusterArgs),
    /// Cross-tabulate significance in two JSON reports
    Contingency(ContingencyArgs),
    /// Choose constraints from reports: top significant or largest p-value increase
    Select(SelectArgs),
    /// Serve the HTTP API over a session file
    Serve(ServeArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Dataset file
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Dense)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dense,
    Transactions,
}

impl From<Format> for DatasetFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Dense => DatasetFormat::Dense,
            Format::Transactions => DatasetFormat::Transactions,
        }
    }
}

#[derive(Args)]
struct ChainArgs {
    /// Number of randomized datasets
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Swap attempts per chain, or `auto`
    #[arg(long, default_value = "auto")]
    swaps: SwapAttempts,
    /// Random seed; drawn from the system and printed when omitted
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    min_support: usize,
    #[arg(long, default_value_t = 3)]
    max_size: usize,
    /// Output itemset file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Margins,
    ClusterMargins,
    ItemsetSoft,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    Support,
    ClusteringError,
    Count,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Greater,
    Less,
    TwoSided,
}

impl From<TailArg> for Tail {
    fn from(t: TailArg) -> Self {
        match t {
            TailArg::Greater => Tail::Greater,
            TailArg::Less => Tail::Less,
            TailArg::TwoSided => Tail::TwoSided,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Margins)]
    model: ModelArg,
    /// Constraint itemsets for itemset-soft; targets default to their frequencies in the input
    #[arg(long)]
    itemsets: Option<PathBuf>,
    /// Clustering file for cluster-margins
    #[arg(long)]
    clustering: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    w: f64,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Benjamini-Hochberg adjustment (default)
    #[arg(long, overrides_with = "no_fdr")]
    fdr: bool,
    #[arg(long, overrides_with = "fdr")]
    no_fdr: bool,
    /// Tail of the test; defaults to the statistic's natural tail
    #[arg(long, value_enum)]
    tail: Option<TailArg>,
    #[arg(long, value_enum, default_value_t = StatArg::Support)]
    stat: StatArg,
    /// Itemsets to test with --stat support; mined with --min-support when omitted
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long, default_value_t = 3)]
    max_size: usize,
    /// Clusters for --stat clustering-error
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Write the TSV report here and the JSON report next to it; TSV goes to stdout when omitted
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct IterateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Candidate itemsets; mined with --min-support when omitted
    #[arg(long)]
    itemsets: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    min_support: usize,
    #[arg(long, default_value_t = 3)]
    max_size: usize,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 4.0)]
    w: f64,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, overrides_with = "no_fdr")]
    fdr: bool,
    #[arg(long, overrides_with = "fdr")]
    no_fdr: bool,
    /// Session file, created or resumed
    #[arg(long)]
    session: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mining: PathBuf,
    #[arg(long)]
    testing: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ContingencyArgs {
    /// JSON report for the rows of the table
    a: PathBuf,
    /// JSON report for the columns of the table
    b: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// JSON report
    #[arg(long)]
    report: PathBuf,
    /// Second JSON report; selects by p-value increase from --report to this one
    #[arg(long)]
    against: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    bind: IpAddr,
    /// Directory of UI files served at /
    #[arg(long = "static", value_name = "DIR")]
    static_dir: Option<PathBuf>,
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn load(input: &InputArgs) -> CliResult<BinaryDataset> {
    Ok(load_dataset(open(&input.input)?, input.format.into())?)
}

/// Runs `f` against the file at `path`, or stdout when `path` is `None`.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> CliResult {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush().map_err(|e| Failure::internal(e.to_string()))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            match f(&mut lock).and_then(|()| lock.flush().map_err(Error::from)) {
                Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn fdr(fdr: bool, no_fdr: bool) -> bool {
    fdr || !no_fdr
}

fn mine(a: MineArgs) -> CliResult {
    let d = load(&a.input)?;
    let fam = mine_frequent(&d, a.min_support, a.max_size)?;
    with_output(a.out.as_deref(), |w| write_itemsets(&fam, &d, w))
}

fn constraint_family(path: &Path, d: &BinaryDataset) -> CliResult<ItemsetFamily> {
    let fam = load_itemsets(open(path)?, d)?;
    if fam.target_freqs().is_some() {
        return Ok(fam);
    }
    Ok(ItemsetFamily::with_targets_from(fam.itemsets().iter().cloned(), d)?)
}

fn test(a: TestArgs) -> CliResult {
    let d = load(&a.input)?;
    let model = match a.model {
        ModelArg::Margins => NullModel::Margins,
        ModelArg::ClusterMargins => {
            let path = a.clustering.as_ref().ok_or_else(|| Failure::input("cluster-margins needs --clustering"))?;
            NullModel::ClusterMargins { clustering: load_clustering(open(path)?, &d)? }
        }
        ModelArg::ItemsetSoft => {
            let path = a.itemsets.as_ref().ok_or_else(|| Failure::input("itemset-soft needs --itemsets"))?;
            NullModel::ItemsetMarginsSoft { family: constraint_family(path, &d)?, w: a.w }
        }
    };
    let stats: Vec<TestStatistic> = match a.stat {
        StatArg::Support => {
            let fam = match (&a.patterns, a.min_support) {
                (Some(p), _) => load_itemsets(open(p)?, &d)?,
                (None, Some(s)) => mine_frequent(&d, s, a.max_size)?,
                (None, None) => return Err(Failure::input("--stat support needs --patterns or --min-support")),
            };
            fam.itemsets().iter().cloned().map(TestStatistic::support).collect()
        }
        StatArg::ClusteringError => vec![TestStatistic::clustering_error(a.k, a.restarts)],
        StatArg::Count => {
            let s = a.min_support.ok_or_else(|| Failure::input("--stat count needs --min-support"))?;
            vec![TestStatistic::frequent_count(s, a.max_size)]
        }
    };
    let stats: Vec<TestStatistic> = match a.tail {
        Some(t) => stats.into_iter().map(|s| s.with_tail(t.into())).collect(),
        None => stats,
    };
    let seed = resolve_seed(a.chain.seed);
    let cfg = ChainConfig::new(a.chain.swaps, seed, a.chain.samples);
    let opts = TestOptions { alpha: a.alpha, adjust: fdr(a.fdr, a.no_fdr) };
    let report = test_patterns(&d, &stats, &model, &cfg, opts)?;
    if a.chain.swaps == SwapAttempts::Auto {
        eprintln!("swap attempts: {}", report.swap_attempts);
    }
    match &a.report {
        Some(path) => {
            with_output(Some(path), |w| write_tsv(&report, w))?;
            with_output(Some(&path.with_extension("json")), |w| write_json(&report, w))?;
            eprintln!("{} of {} patterns significant", report.significant_count(), report.patterns.len());
            Ok(())
        }
        None => with_output(None, |w| write_tsv(&report, w)),
    }
}

fn iterate(a: IterateArgs) -> CliResult {
    let d = load(&a.input)?;
    let mut state = if a.session.exists() {
        let s = load_session_file(&a.session)?;
        if s.dataset_ref.sha256 != session::dataset_hash(&d) {
            return Err(Failure::input("session was created from a different dataset"));
        }
        s
    } else {
        let mined = match &a.itemsets {
            Some(p) => load_itemsets(open(p)?, &d)?,
            None => mine_frequent(&d, a.min_support, a.max_size)?,
        };
        let config = SessionConfig {
            samples: a.chain.samples,
            swap_attempts: a.chain.swaps,
            seed: resolve_seed(a.chain.seed),
            alpha: a.alpha,
            w: a.w,
            adjust: fdr(a.fdr, a.no_fdr),
        };
        let path = a.input.input.to_string_lossy().into_owned();
        SessionState::new(d, Some(path), a.input.format.into(), mined, config)?
    };
    let d = state.dataset.clone();
    println!("iteration\tswap_attempts\tsignificant\tchosen");
    let before = state.history.len();
    let result = state.iterate_many(a.iterations, |r| {
        let chosen = r.chosen_constraint.as_ref().map(|x| x.label(&d)).unwrap_or_default();
        println!("{}\t{}\t{}\t{chosen}", r.iteration, r.report.swap_attempts, r.significant_count);
    });
    save_session_file(&state, &a.session)?;
    let done = result?;
    let expected = if before == 0 { a.iterations + 1 } else { a.iterations };
    if done < expected {
        eprintln!("no candidates left after {} records", state.history.len());
    }
    Ok(())
}

fn split(a: SplitArgs) -> CliResult {
    let d = load(&a.input)?;
    let seed = resolve_seed(a.seed);
    let (mining, testing) = holdout_split(&d, seed)?;
    let format = a.input.format.into();
    with_output(Some(&a.mining), |w| write_dataset(&mining, format, w))?;
    with_output(Some(&a.testing), |w| write_dataset(&testing, format, w))?;
    eprintln!("{} mining rows, {} testing rows", mining.n_rows(), testing.n_rows());
    Ok(())
}

fn cluster(a: ClusterArgs) -> CliResult {
    let d = load(&a.input)?;
    let seed = resolve_seed(a.seed);
    let c = kmeans(&d, a.k, a.restarts, seed)?;
    eprintln!("clustering error: {}", clustering_error(&d, &c));
    with_output(a.out.as_deref(), |w| write_clustering(&c, &d, w))
}

fn read_report(path: &Path) -> CliResult<SignificanceReport> {
    Ok(read_json(io::BufReader::new(open(path)?))?)
}

fn contingency_cmd(a: ContingencyArgs) -> CliResult {
    let t = contingency(&read_report(&a.a)?, &read_report(&a.b)?)?;
    print!("{t}");
    Ok(())
}

fn select(a: SelectArgs) -> CliResult {
    let d = load(&a.input)?;
    let first = read_report(&a.report)?;
    let fam = match &a.against {
        Some(b) => select_by_p_delta(&first, &read_report(b)?, a.n, &d)?,
        None => select_top_significant(&first, a.n, &d)?,
    };
    with_output(a.out.as_deref(), |w| write_itemsets(&fam, &d, w))
}

fn serve(a: ServeArgs) -> CliResult {
    if !a.session.is_file() {
        return Err(Failure::input(format!("{}: no such session file", a.session.display())));
    }
    let state = exchmine_service::AppState::open(&a.session)?;
    let addr = SocketAddr::new(a.bind, a.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::internal(e.to_string()))?;
    eprintln!("serving {} on http://{addr}", a.session.display());
    rt.block_on(exchmine_service::serve(state, addr, a.static_dir)).map_err(|e| Failure::internal(e.to_string()))
}

fn configure_threads() -> CliResult {
    if let Ok(v) = std::env::var("EXCHMINE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::input(format!("EXCHMINE_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::internal(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.command {
        Command::Mine(a) => mine(a),
        Command::Test(a) => test(a),
        Command::Iterate(a) => iterate(a),
        Command::Split(a) => split(a),
        Command::Cluster(a) => cluster(a),
        Command::Contingency(a) => contingency_cmd(a),
        Command::Select(a) => select(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
