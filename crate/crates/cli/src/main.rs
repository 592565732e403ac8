//! `dcnet`: throughput tables, channel simulations, protocol demos and
//! transcript verification.
//!
//! Exit codes: 0 on success, 1 when the protocol flagged a disruptor or a
//! transcript was rejected, 2 on usage, configuration or file errors.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dcnet::analytics::{mst_estimate, throughput_curve};
use dcnet::sicta::Variant;
use dcnet::sim::{
    parse_adversaries, replay_verify, run_channel_sim, run_protocol_demo, CoinScript, DemoConfig, KeyFile,
    SimConfig, DEFAULT_MODULUS_BITS,
};
use dcnet::verification::Verdict;

#[derive(Parser, Debug)]
#[command(name = "dcnet", version, about = "Verifiable DC-net channel with SICTA collision resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Standard,
    Optimized,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Standard => Variant::Standard,
            VariantArg::Optimized => Variant::Optimized,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScriptArg {
    /// Coin table reproducing the exemplary five-message tree.
    Fig1,
    /// Seeded random coins.
    Random,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the expected-rounds table as CSV and the MST estimate.
    Analyze {
        #[arg(long, value_enum, default_value = "optimized")]
        variant: VariantArg,
        /// Largest collision size in the table (at least 2).
        #[arg(long, default_value_t = 64)]
        kmax: usize,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the channel with Poisson arrivals and print a metrics summary.
    Simulate {
        /// Number of participants.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Arrival rate in messages per transmitted round.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Transmitted rounds to simulate.
        #[arg(long, default_value_t = 10_000)]
        rounds: u64,
        #[arg(long, value_enum, default_value = "optimized")]
        variant: VariantArg,
        /// Adversaries as INDEX:STRATEGY pairs, comma separated. Strategies:
        /// honest, injector, canceller, rule-violator-transmit,
        /// rule-violator-silent, always-collide, invalid-proof.
        #[arg(long, default_value = "")]
        adversary: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Full group arithmetic and proofs (on) or splitting only (off).
        #[arg(long, value_enum, default_value = "off")]
        crypto: Switch,
        /// Abandon a branch after this many consecutive non-splits.
        #[arg(long)]
        skip_threshold: Option<u32>,
        /// Modulus size for crypto runs.
        #[arg(long, default_value_t = DEFAULT_MODULUS_BITS)]
        modulus_bits: u32,
        /// Write the transcript of a crypto run here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one full protocol instance and write its transcript.
    Demo {
        /// Number of participants.
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Participants 1..=SENDERS each send one message.
        #[arg(long, default_value_t = 5)]
        senders: usize,
        #[arg(long, value_enum, default_value = "random")]
        script: ScriptArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "optimized")]
        variant: VariantArg,
        /// Adversaries as INDEX:STRATEGY pairs, comma separated.
        #[arg(long, default_value = "")]
        adversary: String,
        /// Abandon a branch after this many consecutive non-splits.
        #[arg(long)]
        skip_threshold: Option<u32>,
        /// Use the 16-bit toy group instead of the 256-bit default.
        #[arg(long)]
        toy: bool,
        /// Transcript output path.
        #[arg(long)]
        out: PathBuf,
        /// Key file output path (default: the transcript path with `.keys.json`).
        #[arg(long)]
        keys: Option<PathBuf>,
    },
    /// Replay a transcript and check every round, proof and verdict.
    Verify {
        /// Transcript to check.
        #[arg(long = "in")]
        input: PathBuf,
        /// Key file; without it the recorded bases are taken as given.
        #[arg(long)]
        keys: Option<PathBuf>,
    },
}

/// A run that completed but found protocol violations.
struct Flagged;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Flagged)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<Option<Flagged>> {
    match cmd {
        Command::Analyze { variant, kmax, out } => analyze(variant.into(), kmax, out.as_deref()),
        Command::Simulate {
            n,
            lambda,
            rounds,
            variant,
            adversary,
            seed,
            crypto,
            skip_threshold,
            modulus_bits,
            out,
        } => {
            let config = SimConfig {
                n,
                lambda,
                rounds,
                variant: variant.into(),
                adversaries: parse_adversaries(&adversary).map_err(anyhow::Error::msg)?,
                seed,
                crypto: crypto == Switch::On,
                skip_threshold,
                modulus_bits,
            };
            if out.is_some() && !config.crypto {
                bail!("--out needs --crypto on: fast runs produce no transcript");
            }
            config.validate()?;
            let m = run_channel_sim(&config)?;
            print!("{}", m.summary());
            if let (Some(path), Some(t)) = (out, &m.transcript) {
                write_file(&path, t)?;
                println!("transcript written to {}", path.display());
            }
            Ok(flagged(&m.verdicts))
        }
        Command::Demo {
            n,
            senders,
            script,
            seed,
            variant,
            adversary,
            skip_threshold,
            toy,
            out,
            keys,
        } => {
            let config = DemoConfig {
                n,
                senders,
                script: match script {
                    ScriptArg::Fig1 => CoinScript::Figure1,
                    ScriptArg::Random => CoinScript::Random,
                },
                seed,
                toy,
                variant: variant.into(),
                adversaries: parse_adversaries(&adversary).map_err(anyhow::Error::msg)?,
                skip_threshold,
                ..Default::default()
            };
            demo(&config, &out, keys)
        }
        Command::Verify { input, keys } => verify(&input, keys.as_deref()),
    }
}

fn flagged(verdicts: &[Verdict]) -> Option<Flagged> {
    (!verdicts.is_empty()).then_some(Flagged)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn analyze(variant: Variant, kmax: usize, out: Option<&Path>) -> Result<Option<Flagged>> {
    let Some(table) = throughput_curve(kmax, variant) else {
        bail!("--kmax must be at least 2, got {kmax}");
    };
    let csv = table.to_csv();
    match out {
        Some(path) => write_file(path, &csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    let mst = mst_estimate(variant);
    println!("MST({variant}) = {:.5}", mst.value);
    Ok(None)
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        let who = v.index.map_or("-".to_string(), |i| i.to_string());
        let rounds: Vec<String> = v.rounds.iter().map(u64::to_string).collect();
        println!(
            "verdict: epoch {} node {} participant {} {:?} (rounds {})",
            v.epoch,
            v.node,
            who,
            v.evidence,
            rounds.join(",")
        );
    }
}

fn id_list(ids: &[u64]) -> String {
    let s: Vec<String> = ids.iter().map(u64::to_string).collect();
    format!("{{{}}}", s.join(","))
}

fn payload_text(p: &[u8]) -> String {
    let trimmed: Vec<u8> = p.iter().copied().take_while(|b| *b != 0).collect();
    match std::str::from_utf8(&trimmed) {
        Ok(s) if !s.is_empty() && s.chars().all(|c| c.is_ascii_graphic()) => s.to_string(),
        _ => format!("0x{}", hex::encode(p)),
    }
}

fn demo(config: &DemoConfig, out: &Path, keys: Option<PathBuf>) -> Result<Option<Flagged>> {
    let result = run_protocol_demo(config)?;
    for e in &result.epochs {
        println!(
            "epoch {}: transmitted {} inferred {}",
            e.epoch,
            id_list(&e.transmitted),
            id_list(&e.inferred)
        );
        let got: Vec<String> = e.delivered.iter().map(|p| payload_text(p)).collect();
        println!("  delivered: {}", got.join(" "));
    }
    if result.undelivered > 0 {
        println!("{} messages still queued after {} epochs", result.undelivered, config.max_epochs);
    }
    print_verdicts(&result.verdicts);
    write_file(out, &result.transcript)?;
    let keys = keys.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".keys.json");
        PathBuf::from(p)
    });
    write_file(&keys, &result.key_file.to_json())?;
    println!("transcript written to {}", out.display());
    println!("key file written to {}", keys.display());
    Ok(flagged(&result.verdicts))
}

fn verify(input: &Path, keys: Option<&Path>) -> Result<Option<Flagged>> {
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let key_file = match keys {
        Some(p) => {
            let k = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            Some(KeyFile::from_json(&k)?)
        }
        None => None,
    };
    let report = replay_verify(&text, key_file.as_ref())?;
    for e in &report.epochs {
        println!(
            "epoch {}: transmitted {} inferred {}",
            e.epoch,
            id_list(&e.transmitted),
            id_list(&e.inferred)
        );
    }
    println!(
        "{} transmitted rounds, {} inferred, {} messages delivered; bases {}",
        report.transmitted,
        report.inferred,
        report.delivered.len(),
        if report.bases_checked { "recomputed" } else { "taken from transcript" }
    );
    print_verdicts(&report.verdicts);
    if report.accepted {
        println!("accepted");
    } else {
        for p in &report.problems {
            println!("problem: {p}");
        }
        println!("rejected");
        return Ok(Some(Flagged));
    }
    Ok(flagged(&report.verdicts))
}
