//! `edgeac`: operator CLI. Every command is a call to the HTTP service,
//! either the one named by `--server` or an embedded one on 127.0.0.1:0.
//!
//! Exit status: 0 success, 1 validation or scenario failure, 2 usage error.

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use edgeac_client::{Client, ClientError};
use edgeac_core::api::{InitRequest, RunReport, ValidateRequest};
use edgeac_core::bench::BenchConfig;
use edgeac_core::contracts::EngineConfig;
use edgeac_core::netsim::{canonical_scenario, Scenario, Topology};

#[derive(Parser)]
#[command(name = "edgeac", version, about = "Attribute-based access control over an edge blockchain")]
struct Cli {
    /// Service URL; without it an embedded server is started.
    #[arg(long, global = true)]
    server: Option<String>,
    /// Overrides the seed of the scenario or config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config: engine knobs for `init`, a bench config for `bench-*`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for machine-readable outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Register every node of a topology file and write the genesis chain.
    Init { topology: PathBuf },
    /// Run a scenario script (the built-in three-site scenario if omitted).
    Run { scenario: Option<PathBuf> },
    /// Verify a JSONL chain file.
    Validate {
        chain: PathBuf,
        /// Minimum difficulty for every non-genesis block.
        #[arg(long, default_value_t = 0)]
        min_bits: u32,
    },
    /// ABE cost against attribute count and payload size.
    BenchAbe,
    /// Proof-of-work attempts per strategy, difficulty and concurrency.
    BenchPow,
    /// Contract throughput for granted, denied and verified accesses.
    BenchThroughput,
}

enum Failure {
    /// Bad input on our side: exit 2.
    Usage(String),
    /// The operation ran and said no: exit 1.
    Rejected(String),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Rejected(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Rejected(format!("i/o: {e}"))
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

struct Ctx {
    client: Client,
    out: PathBuf,
    format: Format,
    seed: Option<u64>,
    config: Option<PathBuf>,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }

    fn write_report<T: Serialize>(&self, stem: &str, value: &T, csv: impl FnOnce() -> String) -> Result<PathBuf, Failure> {
        match self.format {
            Format::Csv => self.write(&format!("{stem}.csv"), &csv()),
            Format::Json => self.write(&format!("{stem}.json"), &to_json(value)),
        }
    }

    fn bench_config(&self) -> Result<BenchConfig, Failure> {
        let mut config: BenchConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => BenchConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn run_table(report: &RunReport) -> String {
    let mut s = format!("run seed={} config={}\n", report.seed, &report.config_digest[..16]);
    for (k, v) in report.metrics.rows() {
        let _ = writeln!(s, "{k:<22} {v}");
    }
    let _ = writeln!(s, "{:<6} {:<12} {:<12} {:<18} verified", "tick", "subject", "object", "outcome");
    for a in &report.accesses {
        let outcome = serde_json::to_value(a.outcome).expect("outcome serializes");
        let verified = a.verified.map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(s, "{:<6} {:<12} {:<12} {:<18} {verified}", a.tick, a.subject, a.object, outcome["outcome"].as_str().unwrap_or("?"));
    }
    s
}

async fn init(ctx: &Ctx, topology: &Path) -> Result<(), Failure> {
    let topology: Topology = read_json(topology)?;
    let engine: EngineConfig = match &ctx.config {
        Some(path) => read_json(path)?,
        None => EngineConfig::default(),
    };
    let req = InitRequest { seed: ctx.seed.unwrap_or_default(), group: Default::default(), engine, topology };
    let resp = ctx.client.init(&req).await?;
    println!("init seed={} config={}", resp.seed, &resp.config_digest[..16]);
    for (name, id) in &resp.ids {
        println!("{name:<16} {id}");
    }
    let scenario = ctx.write("scenario.json", &to_json(&resp.scenario))?;
    let chain = ctx.write("chain.jsonl", &resp.chain_jsonl)?;
    println!("wrote {} and {}", scenario.display(), chain.display());
    Ok(())
}

async fn run(ctx: &Ctx, path: Option<&Path>) -> Result<(), Failure> {
    let mut scenario = match path {
        Some(path) => {
            // Semantic checks are left to the service.
            let mut s: Scenario = read_json(path)?;
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            s.resolve_in(dir).map_err(|e| Failure::Usage(e.to_string()))?;
            s
        }
        None => canonical_scenario(),
    };
    if let Some(seed) = ctx.seed {
        scenario.seed = seed;
    }
    let report = ctx.client.run(&scenario).await?;
    print!("{}", run_table(&report));
    ctx.write("chain.jsonl", &report.chain_jsonl)?;
    ctx.write_report("metrics", &report.metrics.to_json(), || report.metrics.to_csv())?;
    ctx.write("report.json", &to_json(&report))?;
    println!("wrote chain.jsonl, metrics and report.json to {}", ctx.out.display());
    Ok(())
}

async fn validate(ctx: &Ctx, chain: &Path, min_bits: u32) -> Result<(), Failure> {
    let chain_jsonl = read_text(chain)?;
    let report = ctx.client.validate(&ValidateRequest { chain_jsonl, min_bits }).await?;
    match report.error {
        None => {
            println!("VALID {}: {} blocks, {} transactions", chain.display(), report.blocks, report.transactions);
            Ok(())
        }
        Some(e) => Err(Failure::Rejected(format!("INVALID {}: {e}", chain.display()))),
    }
}

async fn dispatch(cli: Cli, client: Client) -> Result<(), Failure> {
    let ctx = Ctx { client, out: cli.out, format: cli.format, seed: cli.seed, config: cli.config };
    match cli.command {
        Command::Init { topology } => init(&ctx, &topology).await,
        Command::Run { scenario } => run(&ctx, scenario.as_deref()).await,
        Command::Validate { chain, min_bits } => validate(&ctx, &chain, min_bits).await,
        Command::BenchAbe => {
            let report = ctx.client.bench_abe(&ctx.bench_config()?).await?;
            print!("{}", report.table());
            ctx.write_report("bench-abe", &report, || report.to_csv())?;
            Ok(())
        }
        Command::BenchPow => {
            let report = ctx.client.bench_pow(&ctx.bench_config()?).await?;
            print!("{}", report.table());
            ctx.write_report("bench-pow", &report, || report.to_csv())?;
            Ok(())
        }
        Command::BenchThroughput => {
            let report = ctx.client.bench_throughput(&ctx.bench_config()?).await?;
            print!("{}", report.table());
            ctx.write_report("bench-throughput", &report, || report.to_csv())?;
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let client = match &cli.server {
        Some(url) => Client::new(url.clone()),
        None => match edgeac_server::spawn(SocketAddr::from(([127, 0, 0, 1], 0))).await {
            Ok((addr, _task)) => Client::new(format!("http://{addr}")),
            Err(e) => {
                eprintln!("error: cannot start embedded server: {e}");
                return ExitCode::from(1);
            }
        },
    };
    match dispatch(cli, client).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
