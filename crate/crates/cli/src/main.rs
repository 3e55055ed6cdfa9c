use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tce_core::certificate::{
    build_and_sign_certificate, valid_cert, Certificate, CrossSubnetMessage, SubnetGroup, SubnetId, SubnetState,
    Transaction,
};
use tce_core::group::Group;
use tce_core::harness::{
    report_traces, run_scenario, scenarios, sweep_message_complexity, HarnessError, MetricsSummary, Scenario,
    ScenarioReport, SweepOptions,
};
use tce_core::ice_frost::{
    run_keygen, run_signing, verify_signature, FrostError, KeyMaterial, SessionContext, SigningFault, ThresholdParams,
};
use tce_core::simnet::{SimError, Trace};

#[derive(Parser)]
#[command(name = "tce-sim", version, about = "Simulator and experiment runner for certificate broadcast")]
struct Cli {
    /// Base seed; overrides the scenario's seed base.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run horizon in event-time units.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Check certificate validity before echoing at the broadcast layer.
    #[arg(long, global = true)]
    validate_at_prb: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and evaluate its assertions.
    RunScenario {
        file: PathBuf,
        /// Override the number of repetitions.
        #[arg(long)]
        reps: Option<usize>,
        /// Write one JSON-lines trace per repetition into this directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Write the metrics summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Message complexity sweep over network sizes.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "128,512,2048")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Sample size factor.
        #[arg(long, default_value_t = 4.0)]
        k: f64,
        /// Force every sample to this size (control).
        #[arg(long)]
        fixed_size: Option<usize>,
        #[arg(long, default_value_t = 0.30)]
        tolerance: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run key generation and print the group key and verification shares.
    KeygenDemo {
        #[arg(long)]
        t: u32,
        #[arg(long)]
        n: u32,
    },
    /// Generate a key, sign a message with the first t holders and verify.
    SignDemo {
        #[arg(long, default_value_t = 2)]
        t: u32,
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[arg(long, default_value = "hello")]
        message: String,
        /// Holder that answers with a bad response.
        #[arg(long)]
        faulty: Option<u32>,
    },
    /// Build a signed demo certificate and write its binary encoding.
    MakeCert {
        out: PathBuf,
    },
    /// Check a certificate file's signature and validity proof.
    VerifyCert {
        file: PathBuf,
        /// Print the decoded certificate as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Audit trace files and print the reduced metrics.
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// List the built-in scenarios, or write them as JSON files.
    Scenarios {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Frost(#[from] FrostError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    /// An assertion, ratio test or verification failed.
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::RunScenario {
            file,
            reps,
            trace_dir,
            csv,
        } => run_scenario_file(cli, file, *reps, trace_dir.as_deref(), csv.as_deref()),
        Command::Sweep {
            n,
            reps,
            k,
            fixed_size,
            tolerance,
            csv,
        } => {
            let opts = SweepOptions {
                ns: n.clone(),
                reps: *reps,
                seed_base: cli.seed.unwrap_or(0),
                k: *k,
                fixed_sample_size: *fixed_size,
                tolerance: *tolerance,
                validate_at_prb: cli.validate_at_prb,
                horizon: cli.horizon,
            };
            if opts.ns.len() < 3 {
                return Err(CliError::Usage("--n needs at least three sizes".into()));
            }
            let report = sweep_message_complexity(&opts)?;
            print!("{}", report.to_csv());
            println!(
                "ratio {:.4} predicted {:.4} tolerance {:.0}% -> {}",
                report.observed_ratio,
                report.predicted_ratio,
                report.tolerance * 100.0,
                if report.within_tolerance { "PASS" } else { "FAIL" }
            );
            if let Some(path) = csv {
                fs::write(path, report.to_csv()).map_err(io_err(path))?;
            }
            Ok(if report.within_tolerance { Outcome::Ok } else { Outcome::Failed })
        }
        Command::KeygenDemo { t, n } => keygen_demo(cli.seed.unwrap_or(0), *t, *n),
        Command::SignDemo {
            t,
            n,
            message,
            faulty,
        } => sign_demo(cli.seed.unwrap_or(0), *t, *n, message, *faulty),
        Command::MakeCert { out } => make_cert(cli.seed.unwrap_or(0), out),
        Command::VerifyCert { file, json } => verify_cert(file, *json),
        Command::Report { traces, csv } => {
            let mut loaded = Vec::new();
            for path in traces {
                let f = fs::File::open(path).map_err(io_err(path))?;
                loaded.push(Trace::read_jsonl(BufReader::new(f)).map_err(io_err(path))?);
            }
            let report = report_traces("report", &loaded);
            print_metrics(&report.metrics);
            if let Some(path) = csv {
                write_csv(path, &report.metrics)?;
            }
            Ok(Outcome::Ok)
        }
        Command::Scenarios { write } => {
            for s in scenarios::library() {
                match write {
                    Some(dir) => {
                        fs::create_dir_all(dir).map_err(io_err(dir))?;
                        let path = dir.join(format!("{}.json", s.name));
                        let text = serde_json::to_string_pretty(&s).expect("scenario serialises");
                        fs::write(&path, text + "\n").map_err(io_err(&path))?;
                        println!("{}", path.display());
                    }
                    None => println!("{:<28} {}", s.name, s.description),
                }
            }
            Ok(Outcome::Ok)
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: malformed scenario: {e}", path.display())))
}

fn run_scenario_file(
    cli: &Cli,
    file: &Path,
    reps: Option<usize>,
    trace_dir: Option<&Path>,
    csv: Option<&Path>,
) -> Result<Outcome, CliError> {
    let mut s = load_scenario(file)?;
    if let Some(seed) = cli.seed {
        s.seed_base = seed;
    }
    if let Some(h) = cli.horizon {
        s.config.horizon = h;
    }
    if cli.validate_at_prb {
        s.config.validate_at_prb = true;
    }
    if let Some(r) = reps {
        s.repetitions = r;
    }
    // Malformed configs are usage errors, not failed runs.
    s.validate().map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
    let report = run_scenario(&s, trace_dir.is_some())?;
    if let Some(dir) = trace_dir {
        write_traces(dir, &s, &report)?;
    }
    println!("scenario {} ({} runs, seeds {}..)", s.name, report.metrics.runs, s.seed_base);
    print_metrics(&report.metrics);
    for a in &report.assertions {
        println!(
            "{} {} {:?} {} (observed {})",
            if a.passed { "PASS" } else { "FAIL" },
            a.assertion.metric,
            a.assertion.op,
            a.assertion.value,
            a.observed
        );
    }
    if let Some(path) = csv {
        write_csv(path, &report.metrics)?;
    }
    Ok(if report.passed() { Outcome::Ok } else { Outcome::Failed })
}

fn write_traces(dir: &Path, s: &Scenario, report: &ScenarioReport) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (r, trace) in report.traces.iter().enumerate() {
        let path = dir.join(format!("{}-{}.jsonl", s.name, s.seed_base + r as u64));
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        trace.write_jsonl(std::io::BufWriter::new(f)).map_err(io_err(&path))?;
    }
    Ok(())
}

fn write_csv(path: &Path, m: &MetricsSummary) -> Result<(), CliError> {
    let text = format!("{}\n{}\n", MetricsSummary::csv_header(), m.to_csv_row());
    fs::write(path, text).map_err(io_err(path))
}

fn print_metrics(m: &MetricsSummary) {
    println!("runs: {}", m.runs);
    println!("delivery_rate: {:.6}", m.delivery_rate);
    println!("full_delivery_runs: {}", m.full_delivery_runs);
    println!("consistency_violations: {}", m.consistency_violations);
    println!("weak_causal_violations: {}", m.weak_causal_violations);
    println!("unsatisfied_deps: {}", m.unsatisfied_deps);
    println!("integrity_violations: {}", m.integrity_violations);
    println!("supply_violations: {}", m.supply_violations);
    println!("monotonicity_violations: {}", m.monotonicity_violations);
    println!("messages per process: mean {:.2} max {}", m.messages_mean, m.messages_max);
    println!(
        "latency: mean {:.3} p50 {:.3} p99 {:.3} max {:.3}",
        m.latency_mean, m.latency_p50, m.latency_p99, m.latency_max
    );
    println!("pending_high_water: {}", m.pending_high_water);
}

fn element_hex(e: &<SubnetGroup as Group>::Element) -> String {
    hex::encode(SubnetGroup::encode_element(e))
}

fn keygen(seed: u64, t: u32, n: u32) -> Result<BTreeMap<u32, KeyMaterial<SubnetGroup>>, CliError> {
    let params = ThresholdParams::new(t, n).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let out = run_keygen(params, SessionContext::new(seed, 0, b"cli".to_vec()), &BTreeMap::new(), &mut rng)?;
    Ok(out.keys)
}

fn keygen_demo(seed: u64, t: u32, n: u32) -> Result<Outcome, CliError> {
    let keys = keygen(seed, t, n)?;
    let public = &keys.values().next().expect("at least one holder").public;
    println!("Y = {}", element_hex(&public.group_key));
    println!("subnet_id = {}", SubnetId::from_group_key(&public.group_key));
    for (i, y) in &public.verification_shares {
        println!("Y_{i} = {}", element_hex(y));
    }
    Ok(Outcome::Ok)
}

fn sign_demo(seed: u64, t: u32, n: u32, message: &str, faulty: Option<u32>) -> Result<Outcome, CliError> {
    let keys = keygen(seed, t, n)?;
    let y = keys.values().next().expect("at least one holder").group_key();
    let mut signers: BTreeSet<u32> = (1..=t).collect();
    let mut faults = BTreeMap::new();
    if let Some(f) = faulty {
        if !keys.contains_key(&f) {
            return Err(CliError::Usage(format!("--faulty {f} is not a holder")));
        }
        faults.insert(f, SigningFault::BadResponse);
        // Everyone takes part so that the quorum survives the exclusion.
        signers = keys.keys().copied().collect();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5157);
    let out = run_signing(&keys, &signers, message.as_bytes(), &faults, &mut rng)?;
    let ok = verify_signature(&y, message.as_bytes(), &out.signature);
    println!("Y = {}", element_hex(&y));
    println!("signers = {:?}", out.signers);
    println!("excluded = {:?}", out.excluded);
    println!("attempts = {}", out.attempts);
    println!("signature = {}", hex::encode(out.signature.to_bytes()));
    println!("{}", if ok { "valid" } else { "invalid" });
    Ok(if ok { Outcome::Ok } else { Outcome::Failed })
}

fn make_cert(seed: u64, out: &Path) -> Result<Outcome, CliError> {
    let keys = keygen(seed, 2, 3)?;
    let genesis = SubnetState::with_balances([("alice", "TKN", 1000)]);
    let txs = [
        Transaction::LocalTransfer {
            from: "alice".into(),
            to: "bob".into(),
            asset_id: "TKN".into(),
            amount: 25,
        },
        Transaction::OutboundXS {
            from: "alice".into(),
            message: CrossSubnetMessage::TransferAsset {
                target_subnet: SubnetId::from_bytes([7; 32]),
                asset_id: "TKN".into(),
                recipient: "carol".into(),
                amount: 40,
            },
        },
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xce47);
    let (cert, _) = build_and_sign_certificate(&keys, &[1, 2].into(), &genesis, &txs, &mut rng)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(out, cert.encode()).map_err(io_err(out))?;
    println!("{} {}", cert.digest(), out.display());
    Ok(Outcome::Ok)
}

fn verify_cert(file: &Path, json: bool) -> Result<Outcome, CliError> {
    let bytes = fs::read(file).map_err(io_err(file))?;
    let cert = match Certificate::decode(&bytes) {
        Ok(c) => c,
        Err(e) => {
            println!("invalid ({e})");
            return Ok(Outcome::Failed);
        }
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&cert.to_json()).expect("json renders"));
    }
    let signed = cert.verify_signature();
    let proven = valid_cert(&cert);
    if signed && proven {
        println!("valid");
        Ok(Outcome::Ok)
    } else {
        println!("invalid (signature {}, proof {})", ok_str(signed), ok_str(proven));
        Ok(Outcome::Failed)
    }
}

fn ok_str(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "bad"
    }
}
