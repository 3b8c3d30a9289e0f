use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use factorsim::costmodel::{MachineError, MachineParams};
use factorsim::experiment::{run_experiment, ExperimentConfig, ExperimentError};
use factorsim::factoring::{build_tree, evaluate_tree, tree_stats, EvalTree, Heuristic, TreeError, DEFAULT_EVAL_CAP};
use factorsim::factors::{brute_force_posterior, query_factors, query_scopes, FactorError, Scope, DEFAULT_JOINT_CAP};
use factorsim::metrics::{build_report_rows, memory_table, results_table, tree_parallelism_table, NetInfo, ReportRow};
use factorsim::network::{load_net, net_from_str, net_to_string, random_net, save_net, Interval, NetError, NetGenParams};

macro_rules! outln {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

#[derive(Parser)]
#[command(name = "factorsim", version, about = "Belief-net factoring and hypercube cost simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random net with observations and a query.
    Gen {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a net file for structural and numeric problems.
    Validate { net: PathBuf },
    /// Evaluate the query posterior.
    Query {
        net: PathBuf,
        #[arg(long, default_value = "set-factoring")]
        heuristic: Heuristic,
        /// Also enumerate the full joint and report the largest deviation.
        #[arg(long)]
        check_oracle: bool,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Build an evaluation tree and summarise its shape.
    Plan {
        net: PathBuf,
        #[arg(long, default_value = "set-factoring")]
        heuristic: Heuristic,
        #[command(flatten)]
        machine: MachineArgs,
        /// Tree output file; the tree is printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cost a net's trees, or a saved tree, on the modelled machine.
    Simulate {
        /// A net file, or a tree file written by `plan`.
        input: PathBuf,
        /// Heuristics to compare when the input is a net (all by default); for a tree
        /// file, the label its rows are reported under.
        #[arg(long)]
        heuristic: Vec<Heuristic>,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Run a seeded corpus and write every table.
    Experiment {
        #[arg(long, default_value_t = 50)]
        nets: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        gen: GenArgs,
        /// Heuristics to run; all of them by default.
        #[arg(long)]
        heuristic: Vec<Heuristic>,
        #[command(flatten)]
        machine: MachineArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    /// Node count range, e.g. 10..100.
    #[arg(long, default_value = "10..100")]
    nodes: Interval<usize>,
    /// Average in-arcs per node, e.g. 1..5.
    #[arg(long, default_value = "1..5")]
    arcs: Interval<f64>,
    /// Observation count range, e.g. 1..20.
    #[arg(long, default_value = "1..20")]
    obs: Interval<usize>,
}

impl GenArgs {
    fn params(&self, seed: u64) -> NetGenParams {
        NetGenParams {
            nodes: self.nodes,
            avg_arcs: self.arcs,
            observations: self.obs,
            seed,
        }
    }
}

#[derive(Args)]
struct MachineArgs {
    /// TOML machine description; defaults apply to missing keys.
    #[arg(long)]
    machine: Option<PathBuf>,
    /// Available processors (a power of two).
    #[arg(long)]
    procs: Option<u64>,
    /// Minimum multiplies per processor.
    #[arg(long)]
    grainsize: Option<u64>,
}

impl MachineArgs {
    fn load(&self) -> Result<MachineParams, CliError> {
        let mut m = match &self.machine {
            Some(path) => MachineParams::load(path)?,
            None => MachineParams::default(),
        };
        if let Some(p) = self.procs {
            if !p.is_power_of_two() {
                return Err(CliError::Usage(format!("--procs {p} is not a power of two")));
            }
            m.n_a = p;
        }
        if let Some(g) = self.grainsize {
            m.g_min = g;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Parse(String),
    Validation(String),
    Cap(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Cap(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Parse(m)
            | CliError::Validation(m)
            | CliError::Cap(m)
            | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        let msg = e.to_string();
        match e {
            NetError::Parse { .. } => CliError::Parse(msg),
            NetError::Invalid(_) => CliError::Validation(msg),
            NetError::InfeasibleParams(_) => CliError::Usage(msg),
            NetError::Io { .. } => CliError::Other(msg),
        }
    }
}

impl From<MachineError> for CliError {
    fn from(e: MachineError) -> Self {
        let msg = e.to_string();
        match e {
            MachineError::Parse(_) => CliError::Parse(msg),
            MachineError::Invalid { .. } => CliError::Validation(msg),
            MachineError::Io { .. } => CliError::Other(msg),
        }
    }
}

impl From<FactorError> for CliError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::JointTooLarge { .. } => CliError::Cap(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        let msg = e.to_string();
        match e {
            TreeError::CapExceeded { .. } => CliError::Cap(msg),
            TreeError::Parse { .. } => CliError::Parse(msg),
            TreeError::Factor(f) => f.into(),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => CliError::Usage(m),
            ExperimentError::Machine(m) => m.into(),
            ExperimentError::Net(n) => n.into(),
            ExperimentError::Io { .. } => CliError::Other(e.to_string()),
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display()))),
        None => {
            emit(text);
            Ok(())
        }
    }
}

fn cmd_gen(gen: &GenArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let (net, q) = random_net(&gen.params(seed))?;
    match out {
        Some(path) => {
            save_net(path, &net, &q)?;
            eprintln!(
                "wrote {}: {} nodes, {} arcs, {} observations, query v{}",
                path.display(),
                net.len(),
                net.arc_count(),
                q.evidence.len(),
                q.query
            );
            Ok(())
        }
        None => write_or_print(None, &net_to_string(&net, &q)),
    }
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let (net, q) = load_net(path)?;
    outln!(
        "ok: {} nodes, {} arcs (avg {:.2} in-arcs), {} observations, query {}",
        net.len(),
        net.arc_count(),
        net.avg_in_arcs(),
        q.evidence.len(),
        net.variables[q.query].name
    );
    Ok(())
}

fn cmd_query(path: &Path, heuristic: Heuristic, check_oracle: bool, machine: &MachineParams) -> Result<(), CliError> {
    let (net, q) = load_net(path)?;
    let factors = query_factors(&net, &q)?;
    let leaves: Vec<Scope> = factors.iter().map(Scope::of).collect();
    let tree = build_tree(heuristic, &leaves, q.query, machine)?;
    let posterior = evaluate_tree(&tree, &factors, DEFAULT_EVAL_CAP)?;

    let name = &net.variables[q.query].name;
    let evidence: Vec<String> = q
        .evidence
        .iter()
        .map(|(v, x)| format!("{}={x}", net.variables[*v].name))
        .collect();
    outln!("P({name} | {})", if evidence.is_empty() { "-".to_string() } else { evidence.join(", ") });
    for (value, p) in posterior.table().iter().enumerate() {
        outln!("{name}={value}\t{p:.10}");
    }
    if check_oracle {
        let oracle = brute_force_posterior(&net, &q, DEFAULT_JOINT_CAP)?;
        let dev = posterior
            .table()
            .iter()
            .zip(oracle.table())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        outln!("oracle max abs deviation {dev:.3e}");
    }
    Ok(())
}

fn cmd_plan(path: &Path, heuristic: Heuristic, machine: &MachineParams, out: Option<&Path>) -> Result<(), CliError> {
    let (net, q) = load_net(path)?;
    let tree = build_tree(heuristic, &query_scopes(&net, &q), q.query, machine)?;
    write_or_print(out, &tree.to_json())?;
    let s = tree_stats(&tree);
    eprintln!(
        "{heuristic}: {} leaves, {} products, dm {}, md {}, dd {:.2}",
        tree.leaf_count(),
        s.cp_count,
        s.dm,
        s.md,
        s.dd()
    );
    Ok(())
}

fn print_rows(rows: &[ReportRow]) {
    let mut heuristics: Vec<Heuristic> = rows.iter().map(|r| r.heuristic).collect();
    heuristics.dedup();
    for h in heuristics {
        let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.heuristic == h).collect();
        outln!("{}", results_table(h, &mine).to_text());
        outln!("{}", memory_table(h, &mine).to_text());
        outln!("{}", tree_parallelism_table(h, &mine).to_text());
    }
}

fn cmd_simulate(input: &Path, heuristics: &[Heuristic], machine: &MachineParams) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Other(format!("cannot read {}: {e}", input.display())))?;
    let is_tree = serde_json::from_str::<serde_json::Value>(&text)
        .map(|v| v.get("root").is_some())
        .unwrap_or(false);
    let rows = if is_tree {
        let label = match heuristics {
            [] => Heuristic::SetFactoring,
            [h] => *h,
            _ => return Err(CliError::Usage("a tree file takes at most one --heuristic label".into())),
        };
        let tree = EvalTree::from_json(&text)?;
        build_report_rows(0, &NetInfo::default(), &[(label, tree)], machine)
    } else {
        let (net, q) = net_from_str(&text)?;
        let leaves = query_scopes(&net, &q);
        let chosen = if heuristics.is_empty() { Heuristic::ALL.to_vec() } else { heuristics.to_vec() };
        let trees = chosen
            .into_iter()
            .map(|h| Ok((h, build_tree(h, &leaves, q.query, machine)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let info = NetInfo {
            nodes: net.len(),
            avg_arcs: net.avg_in_arcs(),
            obs: q.evidence.len(),
        };
        build_report_rows(0, &info, &trees, machine)
    };
    print_rows(&rows);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { gen, seed, out } => cmd_gen(&gen, seed, out.as_deref()),
        Command::Validate { net } => cmd_validate(&net),
        Command::Query {
            net,
            heuristic,
            check_oracle,
            machine,
        } => cmd_query(&net, heuristic, check_oracle, &machine.load()?),
        Command::Plan {
            net,
            heuristic,
            machine,
            out,
        } => cmd_plan(&net, heuristic, &machine.load()?, out.as_deref()),
        Command::Simulate {
            input,
            heuristic,
            machine,
        } => cmd_simulate(&input, &heuristic, &machine.load()?),
        Command::Experiment {
            nets,
            seed,
            gen,
            heuristic,
            machine,
            out,
        } => {
            let config = ExperimentConfig {
                nets,
                generator: gen.params(0),
                heuristics: if heuristic.is_empty() { Heuristic::ALL.to_vec() } else { heuristic },
                machine: machine.load()?,
                master_seed: seed,
            };
            let run = run_experiment(&config)?;
            let files = run.write(&out)?;
            outln!(
                "{} nets, {} failed; wrote {} files to {}",
                nets,
                run.failures.len(),
                files.len(),
                out.display()
            );
            for f in &run.failures {
                eprintln!("net {} (seed {}) failed: {}", f.net, f.seed, f.message);
            }
            Ok(())
        }
    }
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: writing output: {e}");
            std::process::exit(1);
        }
        std::process::exit(0);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
