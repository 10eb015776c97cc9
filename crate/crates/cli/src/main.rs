//! `pmtr`: generate fractured samples, assemble them, certify the PMT /
//! convolution equivalence, benchmark scaling and tabulate metrics.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use pmtr_core::scaling::CountingAlloc;

use config::RunConfig;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_CAP: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "pmtr", version, about = "Proxy Match Transform point-cloud matching and shape assembly")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Leave wall-clock and memory measurements out of the outputs, making
    /// them byte-reproducible.
    #[arg(long, global = true)]
    omit_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate fractured samples (`sample_<seed>/part_<i>.ply`, `gt.json`).
    Gen {
        /// Parts per sample, 2 to 20.
        #[arg(long)]
        parts: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble one sample directory; writes `result.json` and `metrics.csv`.
    Assemble {
        sample: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Coarse matches kept.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        sinkhorn_iters: Option<usize>,
    },
    /// Check PMT against the dense second-order convolution over a seed sweep.
    VerifyTheorem {
        #[arg(long)]
        dproxy: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time PMT and the dense baseline across sizes; CSV output.
    Bench {
        #[arg(long, value_delimiter = ',')]
        pmt_sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        hdc_sizes: Option<Vec<usize>>,
        #[arg(long)]
        dproxy: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
        /// Dense-baseline memory cap, e.g. `8GiB` or `500000000`.
        #[arg(long, value_parser = parse_bytes)]
        mem_cap: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate every `metrics.csv` under a results directory.
    Eval {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let n: u64 = digits.parse().map_err(|_| format!("bad byte count `{s}`"))?;
    let scale: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" | "kib" => 1 << 10,
        "m" | "mb" | "mib" => 1 << 20,
        "g" | "gb" | "gib" => 1 << 30,
        _ => return Err(format!("unknown unit in `{s}`")),
    };
    n.checked_mul(scale).ok_or_else(|| format!("`{s}` overflows"))
}

enum Outcome {
    Done,
    VerificationFailed,
    CapHit,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.resolve_seed(cli.seed);
    match &cli.command {
        Command::Gen { parts, count, .. } => {
            if let Some(p) = parts {
                cfg.gen.spec.parts = *p;
            }
            if let Some(c) = count {
                cfg.gen.count = *c;
            }
        }
        Command::Assemble { k, sinkhorn_iters, .. } => {
            if let Some(k) = k {
                cfg.assembly.matcher.k = *k;
            }
            if let Some(n) = sinkhorn_iters {
                cfg.assembly.matcher.sinkhorn_iters = *n;
            }
        }
        Command::VerifyTheorem { dproxy, heads, seeds, .. } => {
            cfg.theorem.d_proxy = dproxy.or(cfg.theorem.d_proxy);
            cfg.theorem.heads = heads.or(cfg.theorem.heads);
            cfg.theorem.seeds = seeds.unwrap_or(cfg.theorem.seeds);
        }
        Command::Bench {
            pmt_sizes,
            hdc_sizes,
            dproxy,
            heads,
            mem_cap,
            ..
        } => {
            let b = &mut cfg.bench;
            b.pmt_sizes = pmt_sizes.clone().unwrap_or(b.pmt_sizes.clone());
            b.hdc_sizes = hdc_sizes.clone().unwrap_or(b.hdc_sizes.clone());
            b.d_proxy = dproxy.unwrap_or(b.d_proxy);
            b.heads = heads.unwrap_or(b.heads);
            b.mem_cap = mem_cap.unwrap_or(b.mem_cap);
        }
        Command::Eval { .. } => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome> {
    let cfg = resolve(&cli)?;
    // Directory outputs carry config.json; file outputs get a sibling
    // `<name>.config.json`; stdout runs log it.
    match &cli.command {
        Command::VerifyTheorem { out: Some(p), .. } | Command::Bench { out: Some(p), .. } | Command::Eval { out: Some(p), .. } => {
            output::write_atomic(&p.with_extension("config.json"), cfg.to_json().as_bytes())?
        }
        Command::Gen { .. } | Command::Assemble { .. } => {}
        _ => log::info!("resolved config: {}", serde_json::to_string(&cfg)?),
    }
    Ok(match &cli.command {
        Command::Gen { out, .. } => {
            commands::gen::run(&cfg, out)?;
            Outcome::Done
        }
        Command::Assemble { sample, out, .. } => {
            commands::assemble::run(&cfg, sample, out)?;
            Outcome::Done
        }
        Command::VerifyTheorem { out, .. } => {
            if cfg.theorem.seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            match commands::theorem::run(&cfg, out.as_deref(), cli.omit_timing)? {
                true => Outcome::Done,
                false => Outcome::VerificationFailed,
            }
        }
        Command::Bench { out, .. } => match commands::bench::run(&cfg, out.as_deref(), cli.omit_timing)? {
            true => Outcome::CapHit,
            false => Outcome::Done,
        },
        Command::Eval { results, out } => {
            commands::eval::run(results, out.as_deref())?;
            Outcome::Done
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            // Printing help or usage to a closed pipe is not worth a panic.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(EXIT_VERIFY),
        Ok(Outcome::CapHit) => ExitCode::from(EXIT_CAP),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn byte_sizes_parse() {
        assert_eq!(parse_bytes("1024"), Ok(1024));
        assert_eq!(parse_bytes("8GiB"), Ok(8 << 30));
        assert_eq!(parse_bytes("3 mb"), Ok(3 << 20));
        assert!(parse_bytes("GiB").is_err());
        assert!(parse_bytes("4TB").is_err());
    }
}
