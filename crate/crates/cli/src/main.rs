mod commands;
mod config;
mod emit;
mod verify;

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use midlayer::cluster::UrsellCache;
use midlayer::{Error, Fugacity, Side};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "midlayer", version, about = "Independent sets in the middle two layers of the Boolean lattice")]
#[command(args_override_self = true)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// A `key = value` file of default flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Leave wall-clock timing out of the report.
    #[arg(long, global = true)]
    no_timing: bool,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Jsonl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build B(n,k) and report sizes, degrees and optional checker results.
    #[command(args_override_self = true)]
    Graph(GraphArgs),
    /// Exact independence polynomial or restricted sums.
    #[command(args_override_self = true)]
    Count(CountArgs),
    /// Cluster expansion terms L_1..L_k and the ln Z prediction.
    #[command(args_override_self = true)]
    Expand(ExpandArgs),
    /// Kotecký–Preiss condition on polymers up to a size cap.
    #[command(name = "kp-check", args_override_self = true)]
    KpCheck(KpArgs),
    /// The family G(a,b) and its exact container sum.
    #[command(args_override_self = true)]
    Container(ContainerArgs),
    /// Draw from the three-step measure.
    #[command(args_override_self = true)]
    Sample(SampleArgs),
    /// Largest 2-linked component profile of independent sets.
    #[command(args_override_self = true)]
    Census(CensusArgs),
    /// Run the built-in verification suite.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Closed-form estimates and predictions.
    #[command(args_override_self = true)]
    Estimate(EstimateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Shape {
    /// Half-size parameter: n = 2d-1, k = d.
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub k: Option<u32>,
}

fn parse_lambda(s: &str) -> Result<Fugacity, String> {
    s.parse::<Fugacity>().map_err(|e| e.to_string())
}

fn parse_side(s: &str) -> Result<Side, String> {
    s.parse::<Side>().map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    #[command(flatten)]
    pub shape: Shape,
    /// Run an isoperimetry scan: i, ii or iii.
    #[arg(long)]
    pub isoperimetry: Option<String>,
    /// Largest set size for the scan.
    #[arg(long)]
    pub max_size: Option<u64>,
    /// Count the 2-linked sets of this size containing `--vertex`.
    #[arg(long)]
    pub linked_t: Option<usize>,
    /// Vertex such as {1,2,3}; defaults to the first vertex of the side.
    #[arg(long)]
    pub vertex: Option<String>,
    #[arg(long, value_parser = parse_side, default_value = "upper")]
    pub side: Side,
    #[arg(long, default_value_t = 0x1505)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[command(flatten)]
    pub shape: Shape,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    pub lambda: Fugacity,
    /// graycode or naive.
    #[arg(long, default_value = "graycode")]
    pub method: String,
    /// z, one-side or both-sides.
    #[arg(long, default_value = "z")]
    pub family: String,
    #[arg(long, value_parser = parse_side, default_value = "upper")]
    pub side: Side,
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    pub lambda: Fugacity,
    #[arg(long, default_value_t = 2)]
    pub k_max: usize,
    /// closed-form or enumerated.
    #[arg(long, default_value = "enumerated")]
    pub source: String,
}

#[derive(Args, Debug)]
pub struct KpArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    pub lambda: Fugacity,
    /// The constant C of the auxiliary weight.
    #[arg(long, default_value_t = 1.0)]
    pub aux_c: f64,
    #[arg(long, default_value_t = 2)]
    pub max_size: usize,
}

#[derive(Args, Debug)]
pub struct ContainerArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long)]
    pub a: u32,
    #[arg(long)]
    pub b: u32,
    #[arg(long, value_parser = parse_side, default_value = "upper")]
    pub side: Side,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    pub lambda: Fugacity,
    /// The constant C_1 of the reference bound.
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    /// List the members.
    #[arg(long)]
    pub members: bool,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    pub lambda: Fugacity,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub count: u64,
    /// Also write every sample as one JSON line to this file.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CensusArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    pub lambda: Fugacity,
    /// exact or sampled.
    #[arg(long, default_value = "exact")]
    pub mode: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub count: u64,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// fast or all.
    #[arg(long, default_value = "fast")]
    pub suite: String,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// theorem14, example31, expected-boundary or predict.
    #[arg(long)]
    pub what: String,
    #[arg(long)]
    pub d: u32,
    #[arg(long)]
    pub t: Option<u64>,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    pub lambda: Fugacity,
    #[arg(long, default_value_t = 2)]
    pub k_max: usize,
    #[arg(long, default_value = "closed-form")]
    pub source: String,
}

/// Exit status for a library error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) => 2,
        Error::Scale(_) | Error::Regime(_) => 3,
        Error::Shape(_) => 4,
        Error::Cache(_) => 1,
    }
}

fn error_payload(code: &str, message: &str) -> String {
    let v = json!({ "schema_version": emit::SCHEMA_VERSION, "error": { "code": code, "message": message } });
    serde_json::to_string(&v).unwrap()
}

/// Long flag names accepted by `sub`, plus the global ones.
fn known_flags(sub: &str) -> HashSet<String> {
    let cmd = Cli::command();
    let mut out: HashSet<String> = cmd.get_arguments().filter_map(|a| a.get_long()).map(str::to_string).collect();
    if let Some(s) = cmd.find_subcommand(sub) {
        out.extend(s.get_arguments().filter_map(|a| a.get_long()).map(str::to_string));
    }
    out
}

/// Inserts config-file flags right after the subcommand name.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, Error> {
    let mut config = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            config = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        }
    }
    let Some(path) = config else { return Ok(args) };
    let cmd = Cli::command();
    let names: HashSet<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(pos) = args.iter().skip(1).position(|a| names.contains(a)).map(|p| p + 1) else {
        return Ok(args);
    };
    let extra = config::config_args(std::path::Path::new(&path), &known_flags(&args[pos]))?;
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn no_form(command: &str, what: &str) -> ExitCode {
    eprintln!("{}", error_payload("parameter", &format!("command '{command}' has no {what} form")));
    ExitCode::from(2)
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("MIDLAYER_CACHE_DIR").filter(|s| !s.is_empty()).map(PathBuf::from)
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", error_payload(e.code(), &e.to_string()));
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let args = match expand_config(raw) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_payload("parse", e.render().to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let ctx = commands::Ctx {
        exec: if cli.sequential { midlayer::Exec::Sequential } else { midlayer::Exec::default() },
    };
    let cache = cache_dir();
    if let Some(dir) = &cache {
        if let Err(e) = UrsellCache::global().load_dir(dir) {
            return fail(&e);
        }
    }
    let start = std::time::Instant::now();
    let result = match &cli.command {
        Command::Graph(a) => commands::graph(&ctx, a),
        Command::Count(a) => commands::count(&ctx, a),
        Command::Expand(a) => commands::expand(&ctx, a),
        Command::KpCheck(a) => commands::kp_check(&ctx, a),
        Command::Container(a) => commands::container(&ctx, a),
        Command::Sample(a) => commands::sample(&ctx, a),
        Command::Census(a) => commands::census(&ctx, a),
        Command::Verify(a) => verify::run(&ctx, a),
        Command::Estimate(a) => commands::estimate(&ctx, a),
    };
    let mut report = match result {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Some(dir) = &cache {
        if let Err(e) = UrsellCache::global().save_dir(dir) {
            return fail(&e);
        }
    }
    if !cli.no_timing {
        report.timing_ms = Some(start.elapsed().as_millis());
    }
    let bytes = match cli.format {
        Format::Json => emit::json_bytes(&report),
        Format::Csv => match &report.table {
            Some(t) => emit::csv_bytes(t),
            None => return no_form(report.command, "CSV"),
        },
        Format::Jsonl => match report.lines.take() {
            Some(l) => l,
            None => return no_form(report.command, "JSON-lines"),
        },
    };
    let written = match &cli.output {
        Some(p) => std::fs::write(p, bytes.as_bytes()).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(bytes.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(msg) = written {
        eprintln!("{}", error_payload("io", &msg));
        return ExitCode::from(1);
    }
    if report.failed {
        return ExitCode::from(5);
    }
    ExitCode::SUCCESS
}
