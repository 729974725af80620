//! `omq-rewriter`: UCQ rewritings of EL ontology-mediated queries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use omq_core::emit::{emit_datalog_with, emit_sql, RelSchema};
use omq_core::engine::{rewrite_report, Budget, Diagnostics, Exhaustion, Options, RewriteOutcome, Strategy};
use omq_core::io::{parse_abox, parse_cq, parse_signature, parse_tbox, parse_ucq, serialize_ucq};
use omq_core::oracle::{check_rewriting, Verdict, DEFAULT_MAX_INDIVIDUALS};
use omq_core::reasoner::certain_answer;
use omq_core::structure::classify;
use omq_core::{ConjQuery, Omq, Signature, Symbol, TBox, UnionQuery};

const EXIT_INPUT: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_COUNTEREXAMPLE: u8 = 3;

#[derive(Parser)]
#[command(name = "omq-rewriter", version, about = "UCQ rewritings of EL ontology-mediated queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a rewriting.
    Rewrite(RewriteArgs),
    /// Print the class of a query.
    Classify {
        #[arg(long)]
        query: PathBuf,
    },
    /// Decide whether a tuple is a certain answer over an ABox.
    Check {
        #[arg(long)]
        tbox: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        abox: PathBuf,
        /// Comma-separated individuals, one per answer variable.
        #[arg(long, default_value = "")]
        tuple: String,
    },
    /// Check a given UCQ against certain answers on all small ABoxes.
    Verify {
        #[arg(long)]
        tbox: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        sigma: Option<PathBuf>,
        /// The candidate rewriting.
        #[arg(long)]
        ucq: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_INDIVIDUALS)]
        verify_max_individuals: usize,
    },
    /// Rewrite every case below a directory and print a timing table.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 100_000)]
    budget_queries: usize,
    #[arg(long, default_value_t = 30)]
    budget_depth: usize,
    #[arg(long, default_value_t = 300.0)]
    budget_seconds: f64,
    /// Drop disjuncts contained in others before output.
    #[arg(long)]
    prune_subsumed: bool,
}

#[derive(Args)]
struct RewriteArgs {
    #[arg(long)]
    tbox: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Signature file; Σ_full when absent.
    #[arg(long)]
    sigma: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, value_enum, default_value_t = EmitArg::Ucq)]
    emit: EmitArg,
    /// Check the rewriting against certain answers on all small ABoxes.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_INDIVIDUALS)]
    verify_max_individuals: usize,
    /// Print run statistics to stderr.
    #[arg(long)]
    stats: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    dir: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    Direct,
    Reduction,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitArg {
    Ucq,
    Datalog,
    Sql,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<omq_core::Error> for Failure {
    fn from(e: omq_core::Error) -> Self {
        Failure::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rewrite(args) => cmd_rewrite(&args),
        Command::Classify { query } => cmd_classify(&query),
        Command::Check { tbox, query, abox, tuple } => cmd_check(&tbox, &query, &abox, &tuple),
        Command::Verify { tbox, query, sigma, ucq, verify_max_individuals } => {
            cmd_verify(&tbox, &query, sigma.as_deref(), &ucq, verify_max_individuals)
        }
        Command::Bench(args) => cmd_bench(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_tbox(path: &Path) -> Result<TBox, Failure> {
    parse_tbox(&read(path)?).map_err(|e| Failure::input(e.in_file(path.display().to_string()).to_string()))
}

fn load_query(path: &Path) -> Result<ConjQuery, Failure> {
    parse_cq(&read(path)?).map_err(|e| Failure::input(e.in_file(path.display().to_string()).to_string()))
}

fn load_sigma(path: Option<&Path>) -> Result<Signature, Failure> {
    match path {
        None => Ok(Signature::full()),
        Some(p) => parse_signature(&read(p)?).map_err(|e| Failure::input(e.in_file(p.display().to_string()).to_string())),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

impl BudgetArgs {
    fn budget(&self) -> Result<Budget, Failure> {
        let b = Budget { max_queries: self.budget_queries, max_depth: self.budget_depth, max_seconds: self.budget_seconds };
        b.validate()?;
        Ok(b)
    }

    fn strategy(&self) -> Strategy {
        match self.strategy {
            StrategyArg::Auto => Strategy::Auto,
            StrategyArg::Direct => Strategy::Direct,
            StrategyArg::Reduction => Strategy::Reduction,
        }
    }

    fn options(&self) -> Options {
        Options { prune_subsumed: self.prune_subsumed, ..Options::default() }
    }
}

fn cmd_rewrite(args: &RewriteArgs) -> Result<u8, Failure> {
    let tbox = load_tbox(&args.tbox)?;
    let query = load_query(&args.query)?;
    let sigma = load_sigma(args.sigma.as_deref())?;
    let budget = args.budget.budget()?;
    let omq = Omq::new(tbox, sigma, query)?;
    let started = Instant::now();
    let report = rewrite_report(&omq, &budget, args.budget.strategy(), &args.budget.options())?;
    let rewrite_time = started.elapsed();
    if args.stats {
        let frontier = match &report.outcome {
            RewriteOutcome::Rewriting(_) => 0,
            RewriteOutcome::BudgetExhausted(d) => d.frontier_size,
        };
        eprintln!("class: {}", classify(&omq.query));
        eprintln!("route: {}", report.route.name());
        eprintln!("members: {}", report.members);
        eprintln!("frontier: {frontier}");
        eprintln!("rewrite: {:.3} s", rewrite_time.as_secs_f64());
    }
    let u = match &report.outcome {
        RewriteOutcome::Rewriting(u) => u,
        RewriteOutcome::BudgetExhausted(d) => {
            write_out(args.out.as_deref(), &render_diagnostics(d))?;
            return Ok(EXIT_BUDGET);
        }
    };
    if args.verify {
        let started = Instant::now();
        verify(&omq, u, args.verify_max_individuals)?;
        if args.stats {
            eprintln!("verify: {:.3} s", started.elapsed().as_secs_f64());
        }
    }
    write_out(args.out.as_deref(), &render(u, &omq, args.emit))?;
    Ok(0)
}

fn verify(omq: &Omq, u: &UnionQuery, max_individuals: usize) -> Result<(), Failure> {
    match check_rewriting(omq, u, max_individuals)? {
        Verdict::Ok { .. } => Ok(()),
        Verdict::Counterexample { abox, tuple, expected } => {
            let names: Vec<&str> = tuple.iter().map(Symbol::as_str).collect();
            Err(Failure {
                code: EXIT_COUNTEREXAMPLE,
                message: format!(
                    "counterexample: certain answer ({}) is {expected}, the rewriting says {} on\n{abox}",
                    names.join(","),
                    !expected
                ),
            })
        }
    }
}

fn cmd_verify(tbox: &Path, query: &Path, sigma: Option<&Path>, ucq: &Path, n: usize) -> Result<u8, Failure> {
    let omq = Omq::new(load_tbox(tbox)?, load_sigma(sigma)?, load_query(query)?)?;
    let u = parse_ucq(&read(ucq)?).map_err(|e| Failure::input(e.in_file(ucq.display().to_string()).to_string()))?;
    verify(&omq, &u, n)?;
    println!("ok");
    Ok(0)
}

fn render(u: &UnionQuery, omq: &Omq, emit: EmitArg) -> String {
    let sigma = omq.finite_sigma();
    match emit {
        EmitArg::Ucq => {
            let mut s = serialize_ucq(u);
            if !s.ends_with('\n') {
                s.push('\n');
            }
            s
        }
        EmitArg::Datalog => emit_datalog_with(u, "Q", &sigma),
        EmitArg::Sql => emit_sql(u, &RelSchema::from_signature(&sigma).union(&RelSchema::for_ucq(u))),
    }
}

fn render_diagnostics(d: &Diagnostics) -> String {
    let reason = match d.reason {
        Exhaustion::Queries => "query limit",
        Exhaustion::Depth => "depth limit",
        Exhaustion::Time => "time limit",
    };
    let mut s = String::new();
    let _ = writeln!(s, "budget exhausted: {reason}");
    let _ = writeln!(s, "members: {}", d.members);
    let _ = writeln!(s, "frontier: {}", d.frontier_size);
    let _ = writeln!(s, "depth: {}", d.max_depth);
    if let Some(q) = &d.largest {
        let _ = writeln!(s, "largest: {q}");
    }
    for q in &d.sigma_hits {
        let _ = writeln!(s, "sigma hit: {q}");
    }
    if let Some(c) = &d.chain {
        let path: Vec<&str> = c.path.iter().map(Symbol::as_str).collect();
        let _ = writeln!(s, "chain: {}", path.join("."));
        let _ = writeln!(s, "  earlier: {}", c.earlier);
        let _ = writeln!(s, "  later: {}", c.later);
    }
    s
}

fn cmd_classify(query: &Path) -> Result<u8, Failure> {
    let q = load_query(query)?;
    println!("{}", classify(&q));
    Ok(0)
}

fn cmd_check(tbox: &Path, query: &Path, abox: &Path, tuple: &str) -> Result<u8, Failure> {
    let t = load_tbox(tbox)?;
    let q = load_query(query)?;
    let a = parse_abox(&read(abox)?).map_err(|e| Failure::input(e.in_file(abox.display().to_string()).to_string()))?;
    let tuple: Vec<Symbol> =
        tuple.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Symbol::new).collect();
    println!("{}", certain_answer(&a, &t, &q, &tuple)?);
    Ok(0)
}

struct BenchRow {
    ontology: String,
    times: Vec<f64>,
    aborted: usize,
    failed: usize,
}

fn cmd_bench(args: &BenchArgs) -> Result<u8, Failure> {
    let budget = args.budget.budget()?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .map_err(|e| Failure::input(format!("{}: {e}", args.dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("tbox.txt").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::input(format!("{}: no case directories with a tbox.txt", args.dir.display())));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        let tbox = load_tbox(&dir.join("tbox.txt"))?;
        let sigma_path = dir.join("sigma.txt");
        let sigma = load_sigma(sigma_path.is_file().then_some(sigma_path.as_path()))?;
        let mut queries: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cq"))
            .collect();
        queries.sort();
        let mut row = BenchRow {
            ontology: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            times: Vec::new(),
            aborted: 0,
            failed: 0,
        };
        for qp in queries {
            let omq = Omq::new(tbox.clone(), sigma.clone(), load_query(&qp)?)?;
            let started = Instant::now();
            match rewrite_report(&omq, &budget, args.budget.strategy(), &args.budget.options()) {
                Ok(r) if r.outcome.rewriting().is_some() => row.times.push(started.elapsed().as_secs_f64()),
                Ok(_) => row.aborted += 1,
                Err(_) => row.failed += 1,
            }
        }
        rows.push(row);
    }
    write_out(args.out.as_deref(), &bench_table(&rows))?;
    Ok(0)
}

fn bench_table(rows: &[BenchRow]) -> String {
    let width = rows.iter().map(|r| r.ontology.len()).max().unwrap_or(0).max("ontology".len());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>7}  {:>10}  {:>10}  {:>10}  {:>7}  {:>11}",
        "ontology", "queries", "min CQ ms", "avg CQ ms", "max CQ ms", "aborted", "unsupported"
    );
    for r in rows {
        let ms: Vec<f64> = r.times.iter().map(|t| t * 1000.0).collect();
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let min = ms.iter().copied().reduce(f64::min);
        let max = ms.iter().copied().reduce(f64::max);
        let avg = (!ms.is_empty()).then(|| ms.iter().sum::<f64>() / ms.len() as f64);
        let _ = writeln!(
            s,
            "{:<width$}  {:>7}  {:>10}  {:>10}  {:>10}  {:>7}  {:>11}",
            r.ontology,
            r.times.len() + r.aborted + r.failed,
            cell(min),
            cell(avg),
            cell(max),
            r.aborted,
            r.failed
        );
    }
    s
}
