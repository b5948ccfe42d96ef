//! `spir`: run, verify and tabulate SPIR schemes on graph-replicated storage.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or budget error.

use std::fmt::Write as _;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spir_core::analysis::{
    multigraph_rates, star_fr_rate, summaries_text, summaries_tsv, table1_at, table1_text, table1_tsv,
};
use spir_core::converters::{fr_from_pir, fr_multigraph_from_pir, fr_star, gr_from_pir, gr_multigraph_from_pir};
use spir_core::field::PrimeField;
use spir_core::format::TableFile;
use spir_core::general_scheme::{Endpoint, Fault, GeneralScheme};
use spir_core::graphs::{Family, Graph, MultiGraph, RandomnessMode};
use spir_core::par::{with_jobs, Exec};
use spir_core::pir_base::{pir_c3, pir_p3, pir_star_simple, PirScheme};
use spir_core::protocol::{run_transcript, MessageDatabase, RandomnessPool, Scheme};
use spir_core::verifier::{verify_all, Budget, DbEngines, VerifyOptions};
use spir_core::Error;

#[derive(Parser)]
#[command(name = "spir", version, about = "SPIR schemes on graph-replicated storage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded retrieval and print every server's answers and the decoded message.
    Run(RunArgs),
    /// Check reliability, user privacy and database privacy.
    Verify(VerifyArgs),
    /// Achievable rates, bounds and randomness ratios for a graph family.
    Rates(RatesArgs),
    /// The rate table for the four graph families.
    Table1(Table1Args),
}

#[derive(Args)]
struct SchemeArgs {
    /// Family name (path, cycle, star, complete), `m` for the four-server M graph,
    /// or a path to an edge-list file.
    #[arg(long, default_value = "path")]
    graph: String,
    /// Number of servers for a named family.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Edge multiplicity.
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Field order (prime).
    #[arg(long, visible_alias = "field-order", default_value_t = 2)]
    q: u32,
    #[arg(long, value_enum, default_value_t = SchemeKind::General)]
    scheme: SchemeKind,
    /// PIR answer-table file to convert instead of the built-in base scheme.
    #[arg(long)]
    base: Option<String>,
    /// Star-scheme parameter; defaults to the rate-maximising value.
    #[arg(long)]
    t: Option<usize>,
    /// Endpoint of the desired edge that receives the unit vector (general scheme).
    #[arg(long, value_enum, default_value_t = EndpointArg::Higher)]
    endpoint: EndpointArg,
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
    /// Incidence column to corrupt with `--inject-fault flip-sign` (1-based).
    #[arg(long, default_value_t = 1)]
    fault_column: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Desired message: `k`, or `k,t` on a multigraph (1-based).
    #[arg(long, default_value = "1")]
    target: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print each answer symbol as `form=value`.
    #[arg(long)]
    symbolic: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Joint states an exhaustive engine may visit.
    #[arg(long, default_value_t = Budget::default().states)]
    budget: u128,
    /// Coin values the symbolic and linear engines may enumerate.
    #[arg(long, default_value_t = Budget::default().coins)]
    coin_budget: u128,
    #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
    engine: EngineArg,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long, default_value = "path")]
    family: String,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Randomness setting; both when omitted.
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct Table1Args {
    /// Evaluate every entry at this N instead of printing the formulas.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeKind {
    General,
    GrFromPir,
    FrFromPir,
    FrStar,
    GrMultigraph,
    FrMultigraph,
}

#[derive(Clone, Copy, ValueEnum)]
enum EndpointArg {
    Higher,
    Lower,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    DropPad,
    ReusePad,
    FlipSign,
    Unblind,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Auto,
    Linear,
    Exhaustive,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Gr,
    Fr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Text,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Failure {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Rates(a) => cmd_rates(&a),
        Command::Table1(a) => cmd_table1(&a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure { code, msg }) => {
            if code == 1 {
                print!("{msg}");
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(code)
        }
    }
}

fn load_graph(arg: &str, n: usize) -> Result<Graph, Failure> {
    if arg == "m" {
        return Ok(Graph::m_graph());
    }
    match Family::parse(arg) {
        Some(Family::Custom) => Err(Failure::usage("give an edge-list file for a custom graph")),
        Some(family) => Ok(Graph::family(family, n)?),
        None => {
            let text =
                std::fs::read_to_string(arg).map_err(|e| Failure::usage(format!("cannot read graph `{arg}`: {e}")))?;
            Ok(Graph::parse_edge_list(&text)?)
        }
    }
}

fn same_edges(a: &Graph, b: &Graph) -> bool {
    a.n_servers() == b.n_servers() && a.edges() == b.edges()
}

/// The built-in PIR scheme for `graph`. Edge labels must match exactly.
fn builtin_base(graph: &Graph) -> Result<PirScheme, Failure> {
    let n = graph.n_servers();
    let candidates: Vec<PirScheme> = match graph.kind() {
        Family::Path if n == 3 => vec![pir_p3()],
        Family::Cycle if n == 3 => vec![pir_c3()],
        Family::Star => vec![pir_star_simple(n)?],
        _ => vec![],
    };
    candidates.into_iter().find(|p| same_edges(p.graph().base(), graph)).ok_or_else(|| {
        Failure::usage(format!(
            "no built-in PIR scheme for {}; built-ins cover P3, C3 and stars S_N (pass --base FILE for others)",
            graph.label()
        ))
    })
}

fn base_scheme(args: &SchemeArgs, graph: &Graph) -> Result<PirScheme, Failure> {
    let Some(path) = &args.base else {
        return builtin_base(graph);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read `{path}`: {e}")))?;
    let file = TableFile::parse(&text)?;
    let pir = PirScheme::from_table_file(&file)?;
    if !same_edges(pir.graph().base(), graph) {
        return Err(Failure::usage(format!(
            "base scheme is for {}, but --graph gives {}",
            pir.graph().base().label(),
            graph.label()
        )));
    }
    Ok(pir)
}

fn build_scheme(args: &SchemeArgs) -> Result<Box<dyn Scheme>, Failure> {
    let field = PrimeField::new(args.q)?;
    let graph = load_graph(&args.graph, args.n)?;
    let multi = matches!(args.scheme, SchemeKind::General | SchemeKind::GrMultigraph | SchemeKind::FrMultigraph);
    if args.r != 1 && !multi {
        return Err(Failure::usage("--r applies to the general and multigraph schemes"));
    }
    if args.t.is_some() && args.scheme != SchemeKind::FrStar {
        return Err(Failure::usage("--t applies to --scheme fr-star"));
    }
    let general = args.scheme == SchemeKind::General;
    match args.inject_fault {
        Some(FaultArg::FlipSign | FaultArg::Unblind) if !general => {
            return Err(Failure::usage("flip-sign and unblind faults apply to the general scheme"))
        }
        Some(FaultArg::ReusePad) if general => {
            return Err(Failure::usage("reuse-pad applies to converted schemes"))
        }
        _ => {}
    }
    if general {
        let fault = match args.inject_fault {
            None => Fault::None,
            Some(FaultArg::DropPad) => Fault::DropPads,
            Some(FaultArg::Unblind) => Fault::Unblind,
            Some(FaultArg::FlipSign) => {
                if args.fault_column == 0 || args.fault_column > graph.n_edges() {
                    return Err(Failure::usage(format!("--fault-column must be in 1..={}", graph.n_edges())));
                }
                Fault::FlipSign { column: args.fault_column - 1 }
            }
            Some(FaultArg::ReusePad) => unreachable!("rejected above"),
        };
        let endpoint = match args.endpoint {
            EndpointArg::Higher => Endpoint::Higher,
            EndpointArg::Lower => Endpoint::Lower,
        };
        let g = MultiGraph::new(graph, args.r)?;
        return Ok(Box::new(GeneralScheme::with_options(g, field, endpoint, fault)?));
    }
    let table = match args.scheme {
        SchemeKind::General => unreachable!("handled above"),
        SchemeKind::GrFromPir => gr_from_pir(&base_scheme(args, &graph)?, field)?,
        SchemeKind::FrFromPir => fr_from_pir(&base_scheme(args, &graph)?, field)?,
        SchemeKind::GrMultigraph => gr_multigraph_from_pir(&base_scheme(args, &graph)?, args.r, field)?,
        SchemeKind::FrMultigraph => fr_multigraph_from_pir(&base_scheme(args, &graph)?, args.r, field)?,
        SchemeKind::FrStar => {
            let n = graph.n_servers();
            if !same_edges(&graph, &Graph::star(n.max(3))?) {
                return Err(Failure::usage(
                    "fr-star needs a star graph; P3 is the star S3 with edges {1,3}, {2,3} (--graph star --n 3)",
                ));
            }
            let t = match args.t {
                Some(t) => t,
                None => star_fr_rate(n)?.t,
            };
            fr_star(n, t, field)?
        }
    };
    let table = match args.inject_fault {
        Some(FaultArg::DropPad) => table.without_pads()?,
        Some(FaultArg::ReusePad) => table.with_reused_pad()?,
        _ => table,
    };
    Ok(Box::new(table))
}

fn cmd_run(args: &RunArgs) -> Result<String, Failure> {
    let scheme = build_scheme(&args.scheme)?;
    let desc = scheme.descriptor();
    let target = desc.graph.parse_target(&args.target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let db = MessageDatabase::random(desc, &mut rng);
    let pool = RandomnessPool::random(desc, &mut rng);
    let coins = scheme.coin_domain().sample(&mut rng);
    let t = run_transcript(scheme.as_ref(), &db, &pool, &coins, target)?;
    let mut out = String::new();
    if args.symbolic {
        for (n, answers) in t.answers.iter().enumerate() {
            let forms = scheme.answer_forms(n, &t.queries[n])?;
            let cells: Vec<String> =
                forms.iter().zip(answers).map(|(f, v)| format!("{}={v}", desc.render_form(f))).collect();
            let _ = writeln!(out, "{}: {}", n + 1, cells.join(" "));
        }
        let vals: Vec<String> = t.decoded.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "{} = {}", desc.graph.target_label(target), vals.join(","));
    } else {
        out.push_str(&t.to_text(desc));
    }
    let per: Vec<String> = t.downloads.iter().map(usize::to_string).collect();
    let _ = writeln!(
        out,
        "downloads = {} ({}) L = {} rate = {}",
        t.downloads.iter().sum::<usize>(),
        per.join("+"),
        desc.msg_len,
        desc.rate()
    );
    Ok(out)
}

fn cmd_verify(args: &VerifyArgs) -> Result<String, Failure> {
    let scheme = build_scheme(&args.scheme)?;
    let exec = if args.jobs == Some(1) { Exec::Sequential } else { Exec::Parallel };
    let opts = VerifyOptions {
        budget: Budget { states: args.budget, coins: args.coin_budget },
        exec,
        db_engines: match args.engine {
            EngineArg::Auto => DbEngines::Auto,
            EngineArg::Linear => DbEngines::Linear,
            EngineArg::Exhaustive => DbEngines::Exhaustive,
        },
    };
    let report = with_jobs(args.jobs, || verify_all(scheme.as_ref(), &opts))?;
    let text = report.to_text(scheme.descriptor());
    if report.passed() {
        Ok(text)
    } else {
        Err(Failure { code: 1, msg: text })
    }
}

fn cmd_rates(args: &RatesArgs) -> Result<String, Failure> {
    let family = match Family::parse(&args.family) {
        Some(Family::Custom) | None => {
            return Err(Failure::usage(format!(
                "unknown family `{}` (path, cycle, star, complete)",
                args.family
            )))
        }
        Some(f) => f,
    };
    let settings: Vec<RandomnessMode> = match args.setting {
        Some(SettingArg::Gr) => vec![RandomnessMode::GraphReplicated],
        Some(SettingArg::Fr) => vec![RandomnessMode::FullyReplicated],
        None => vec![RandomnessMode::GraphReplicated, RandomnessMode::FullyReplicated],
    };
    let rows = settings
        .into_iter()
        .map(|s| multigraph_rates(family, args.n, args.r, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match args.format {
        Format::Tsv => summaries_tsv(&rows),
        Format::Text => summaries_text(&rows),
    })
}

fn cmd_table1(args: &Table1Args) -> Result<String, Failure> {
    let Some(n) = args.n else {
        return Ok(match args.format {
            Format::Tsv => table1_tsv(),
            Format::Text => table1_text(),
        });
    };
    let rows = table1_at(n)?;
    let header = ["graph", "pir", "general_spir", "pir_derived_spir"];
    let mut lines = vec![header.map(String::from).to_vec()];
    for (family, pir, general, derived) in rows {
        lines.push(vec![format!("{}_{n}", family.name()), pir.to_string(), general.to_string(), derived.to_string()]);
    }
    let mut out = String::new();
    match args.format {
        Format::Tsv => {
            for l in &lines {
                let _ = writeln!(out, "{}", l.join("\t"));
            }
        }
        Format::Text => {
            let widths: Vec<usize> = (0..header.len()).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
            for l in &lines {
                let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            }
        }
    }
    Ok(out)
}
