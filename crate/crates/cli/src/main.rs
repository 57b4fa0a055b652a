use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use explab::duals::CertifyOptions;
use explab::simulator::DEFAULT_ENUMERATION_CAP;
use explab::{DecodingMetric, ExponentKind};
use explab_cli::run::{
    self, resolve_composition, resolve_threads, CommandConfig, SimulationOptions, Unit,
};
use explab_cli::{ChannelSpec, RunConfig};

#[derive(Parser)]
#[command(
    name = "explab",
    version,
    about = "Error exponents of typical random codes and expurgated codes"
)]
struct Cli {
    /// Worker threads for the parallel kernels (falls back to EXPLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Channel file: header `dmc <|X|> <|Y|> [name]`, then |X| rows of |Y| probabilities.
    #[arg(long)]
    channel: PathBuf,

    /// Codeword composition as comma-separated probabilities (default: uniform);
    /// rounded to the nearest aligned composition with a notice.
    #[arg(long)]
    composition: Option<String>,

    /// Output prefix; writes <prefix>.json, <prefix>.csv and, for curves, <prefix>.gp.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Optimizer {
    /// Grid resolution k of the optimizer (default 8 for binary alphabets, 4 otherwise).
    #[arg(long)]
    grid_k: Option<u32>,

    /// Polishing levels after the grid search.
    #[arg(long)]
    refine_iters: Option<usize>,

    /// Grid incumbents that get polished.
    #[arg(long)]
    starts: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Trc,
    Ex,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Ml,
    Mmi,
}

impl From<Metric> for DecodingMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Ml => DecodingMetric::Ml,
            Metric::Mmi => DecodingMetric::Mmi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Theorem1,
}

#[derive(Subcommand)]
enum Command {
    /// Exponent curve over a set of rates.
    ///
    /// CSV columns: rate, value (clamped at 0), raw_value (before clamping),
    /// reason (why a value is missing or infinite). Rates and values are in
    /// nats unless --bits is given.
    Exponent {
        #[arg(value_enum)]
        kind: Kind,
        /// Rates in nats: start:stop:step or a comma-separated list.
        #[arg(long)]
        rates: String,
        #[arg(long, value_enum, default_value = "ml")]
        metric: Metric,
        /// Report rates and values in bits (computation stays in nats).
        #[arg(long)]
        bits: bool,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        optimizer: Optimizer,
    },
    /// Numerical certification of the bound chain between ML and MMI.
    ///
    /// CSV columns: rate, trc_ml, ml_upper, mmi_lower, trc_mmi, pass, then
    /// one margin_<check> column per inequality (negative = violated).
    Certify {
        #[arg(value_enum)]
        target: Target,
        /// Rates in nats: a single value, start:stop:step or a list.
        #[arg(long)]
        rate: String,
        /// Exit with status 2 when any check fails.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        optimizer: Optimizer,
    },
    /// Exact finite-blocklength error probabilities of sampled codebooks.
    ///
    /// CSV columns: n, m, rate, decoder, samples, zero_error_samples,
    /// mean_log_pe, std_err_log_pe, empirical_exponent, mean_pe.
    Simulate {
        #[arg(long)]
        n: usize,
        /// Number of codewords.
        #[arg(long = "M", visible_alias = "m")]
        m: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// ml, mmi or gld.
        #[arg(long, default_value = "ml")]
        decoder: String,
        /// Inverse temperature of the gld decoder.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Metric of the gld decoder.
        #[arg(long, value_enum, default_value = "ml")]
        gld_metric: Metric,
        /// Largest number of output sequences enumerated per codebook.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn load_channel(common: &Common) -> Result<ChannelSpec> {
    let text = std::fs::read_to_string(&common.channel)
        .with_context(|| format!("reading {}", common.channel.display()))?;
    ChannelSpec::parse(&text).with_context(|| format!("parsing {}", common.channel.display()))
}

fn build(cli: &Cli) -> Result<(RunConfig, Vec<String>)> {
    let threads = resolve_threads(cli.threads)?;
    let (common, grid) = match &cli.command {
        Command::Exponent {
            common, optimizer, ..
        }
        | Command::Certify {
            common, optimizer, ..
        } => {
            let spec = load_channel(common)?;
            let o = run::optimizer_options(
                &spec,
                optimizer.grid_k,
                optimizer.refine_iters,
                optimizer.starts,
            )?;
            (common, Some((spec, o)))
        }
        Command::Simulate { common, .. } => (common, None),
    };
    let spec = match &grid {
        Some((s, _)) => s.clone(),
        None => load_channel(common)?,
    };
    let requested = common
        .composition
        .as_deref()
        .map(run::parse_composition)
        .transpose()?;
    let k = match (&cli.command, &grid) {
        (Command::Simulate { n, .. }, _) => *n,
        (_, Some((_, o))) => o.grid_k as usize,
        _ => unreachable!(),
    };
    let (composition, requested_composition, notice) =
        resolve_composition(requested.as_deref(), spec.inputs, k)?;
    let mut flags = Vec::new();
    if let Some(n) = notice {
        eprintln!("note: {n}");
        flags.push(n);
    }
    let command = match &cli.command {
        Command::Exponent {
            kind,
            rates,
            metric,
            bits,
            ..
        } => CommandConfig::Exponent {
            kind: match kind {
                Kind::Trc => ExponentKind::Trc,
                Kind::Ex => ExponentKind::Expurgated,
                Kind::Random => ExponentKind::Random,
            },
            metric: match kind {
                Kind::Random => None,
                _ => Some((*metric).into()),
            },
            rates: run::parse_rates(rates)?,
            unit: if *bits { Unit::Bits } else { Unit::Nats },
            optimizer: grid.as_ref().unwrap().1.clone(),
        },
        Command::Certify {
            target,
            rate,
            strict,
            ..
        } => CommandConfig::Certify {
            theorem: match target {
                Target::Theorem1 => "theorem1".into(),
            },
            rates: run::parse_rates(rate)?,
            strict: *strict,
            optimizer: grid.as_ref().unwrap().1.clone(),
            tolerances: CertifyOptions::default(),
        },
        Command::Simulate {
            n,
            m,
            samples,
            seed,
            decoder,
            beta,
            gld_metric,
            cap,
            ..
        } => CommandConfig::Simulate(SimulationOptions {
            n: *n,
            m: *m,
            samples: *samples,
            seed: *seed,
            decoder: run::decoder(decoder, (*gld_metric).into(), *beta)?,
            enumeration_cap: *cap,
        }),
    };
    Ok((
        RunConfig {
            channel_file: Some(common.channel.display().to_string()),
            channel: spec,
            composition,
            requested_composition,
            threads,
            output_prefix: common.out.clone(),
            command,
        },
        flags,
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: &Cli) -> Result<ExitCode> {
    let (config, flags) = build(cli)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = explab_cli::run(&config, flags)?;
    for f in &out.envelope.flags {
        eprintln!("warning: {f}");
    }
    // With an output prefix the summary table goes to stdout; without one
    // stdout carries the JSON and the table moves to stderr.
    match &config.output_prefix {
        Some(prefix) => {
            print!("{}", out.table);
            let art = out.write(prefix)?;
            eprintln!("wrote {}", art.json.display());
        }
        None => {
            eprint!("{}", out.table);
            print!("{}", out.envelope.to_json()?);
        }
    }
    Ok(if out.strict_failure {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}
