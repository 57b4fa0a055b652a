//! Resolved run configurations and the three commands.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use explab::duals::{certify_theorem1, BoundReport, CertifyOptions};
use explab::exponents::sweep;
use explab::simulator::empirical_trc;
use explab::{
    Channel, Decoder, DecodingMetric, Dist, ExponentKind, GldConfig, OptimizerOptions, RatePoint,
};

use crate::channel::ChannelSpec;
use crate::output::{csv, gnuplot, round_sig, write_atomic, Artifacts, Envelope};

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a
/// comma-separated list; the result is sorted ascending without duplicates.
pub fn parse_rates(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s
            .trim()
            .parse()
            .with_context(|| format!("not a rate: {s:?}"))?;
        ensure!(
            v.is_finite() && v >= 0.0,
            "rates must be finite and nonnegative, got {v}"
        );
        Ok(v)
    };
    let mut rates = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        ensure!(
            parts.len() == 3,
            "a rate range is start:stop:step, got {spec:?}"
        );
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        ensure!(step > 0.0, "rate step must be positive");
        ensure!(stop >= start, "rate range ends below its start");
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        ensure!(count <= 100_000, "rate range has too many points");
        // Round away the drift of start + i * step (0.15000000000000002).
        (0..count)
            .map(|i| round_sig(start + i as f64 * step))
            .collect::<Vec<_>>()
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(num)
            .collect::<Result<Vec<_>>>()?
    };
    ensure!(!rates.is_empty(), "no rates given");
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rates.dedup();
    Ok(rates)
}

pub fn parse_composition(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("not a probability: {s:?}"))
        })
        .collect()
}

/// Worker threads: the command line wins over `EXPLAB_THREADS`.
pub fn resolve_threads(cli: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = cli {
        ensure!(n > 0, "--threads must be positive");
        return Ok(Some(n));
    }
    match std::env::var("EXPLAB_THREADS") {
        Ok(s) if !s.trim().is_empty() => {
            let n: usize = s
                .trim()
                .parse()
                .with_context(|| format!("EXPLAB_THREADS is not a count: {s:?}"))?;
            ensure!(n > 0, "EXPLAB_THREADS must be positive");
            Ok(Some(n))
        }
        _ => Ok(None),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Nats,
    Bits,
}

impl Unit {
    fn scale(self, v: f64) -> f64 {
        match self {
            Unit::Nats => v,
            Unit::Bits => v / std::f64::consts::LN_2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub seed: u64,
    pub decoder: Decoder,
    pub enumeration_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum CommandConfig {
    Exponent {
        kind: ExponentKind,
        metric: Option<DecodingMetric>,
        rates: Vec<f64>,
        unit: Unit,
        optimizer: OptimizerOptions,
    },
    Certify {
        theorem: String,
        rates: Vec<f64>,
        strict: bool,
        optimizer: OptimizerOptions,
        tolerances: CertifyOptions,
    },
    Simulate(SimulationOptions),
}

/// Everything a run depends on; embedded in its own output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub channel_file: Option<String>,
    pub channel: ChannelSpec,
    /// Composition actually used.
    pub composition: Vec<f64>,
    /// Composition as requested, when rounding changed it.
    pub requested_composition: Option<Vec<f64>>,
    pub threads: Option<usize>,
    pub output_prefix: Option<PathBuf>,
    #[serde(flatten)]
    pub command: CommandConfig,
}

/// Resolves a requested composition (uniform by default) to one with
/// entries on the `1/k` grid; the notice is `Some` when rounding moved it.
pub fn resolve_composition(
    requested: Option<&[f64]>,
    inputs: usize,
    k: usize,
) -> Result<(Vec<f64>, Option<Vec<f64>>, Option<String>)> {
    let req = match requested {
        Some(r) => {
            ensure!(
                r.len() == inputs,
                "composition has {} entries but the channel has {inputs} inputs",
                r.len()
            );
            r.to_vec()
        }
        None => vec![1.0 / inputs as f64; inputs],
    };
    let d = Dist::new(req.clone()).context("invalid composition")?;
    let rounded = d.round_to_grid(k as u32).probs().to_vec();
    if rounded.iter().zip(&req).all(|(a, b)| (a - b).abs() < 1e-12) {
        return Ok((rounded, None, None));
    }
    let notice = format!("composition {req:?} rounded to the 1/{k} grid: {rounded:?}");
    Ok((rounded, Some(req), Some(notice)))
}

/// What a run produced, before anything is written.
pub struct RunOutput {
    pub envelope: Envelope,
    pub csv: String,
    pub gnuplot: Option<String>,
    pub table: String,
    /// A certification check failed and `--strict` was set.
    pub strict_failure: bool,
}

impl RunOutput {
    /// Writes `<prefix>.json`, `<prefix>.csv` and (if any) `<prefix>.gp`.
    pub fn write(&self, prefix: &std::path::Path) -> Result<Artifacts> {
        let art = Artifacts::from_prefix(prefix, self.gnuplot.is_some());
        write_atomic(&art.json, &self.envelope.to_json()?)?;
        write_atomic(&art.csv, &self.csv)?;
        if let (Some(p), Some(g)) = (&art.gnuplot, &self.gnuplot) {
            write_atomic(p, g)?;
        }
        Ok(art)
    }
}

fn opt_num(v: &Value, key: &str) -> Value {
    v.get(key).cloned().unwrap_or(Value::Null)
}

fn fmt_num(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.6}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn table(header: &[&str], rows: &[Vec<Value>]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(fmt_num).collect())
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            cells
                .iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap()
        })
        .collect();
    let mut out = String::new();
    let line = |cols: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cols
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  "));
    };
    line(header.to_vec(), &mut out);
    for r in &cells {
        line(r.iter().map(|s| s.as_str()).collect(), &mut out);
    }
    out
}

fn finite_or_str(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("+inf")
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

/// Runs a resolved configuration.
pub fn run(config: &RunConfig, mut flags: Vec<String>) -> Result<RunOutput> {
    let ch = config.channel.channel()?;
    let q_x = Dist::new(config.composition.clone()).context("invalid composition")?;
    match &config.command {
        CommandConfig::Exponent {
            kind,
            metric,
            rates,
            unit,
            optimizer,
        } => run_exponent(
            config, &ch, &q_x, *kind, *metric, rates, *unit, optimizer, flags,
        ),
        CommandConfig::Certify {
            theorem,
            rates,
            strict,
            optimizer,
            tolerances,
        } => {
            if theorem != "theorem1" {
                bail!("unknown certification target {theorem:?} (expected theorem1)");
            }
            run_certify(
                config, &ch, &q_x, rates, *strict, optimizer, tolerances, flags,
            )
        }
        CommandConfig::Simulate(sim) => {
            let s = empirical_trc(
                sim.n,
                sim.m,
                &q_x,
                &ch,
                sim.decoder,
                sim.samples,
                sim.seed,
                sim.enumeration_cap,
            )?;
            flags.extend(s.flags.iter().cloned());
            let mut result = serde_json::to_value(&s)?;
            crate::output::round_value(&mut result);
            let header = [
                "n",
                "m",
                "rate",
                "decoder",
                "samples",
                "zero_error_samples",
                "mean_log_pe",
                "std_err_log_pe",
                "empirical_exponent",
                "mean_pe",
            ];
            let row: Vec<Value> = header.iter().map(|k| opt_num(&result, k)).collect();
            let rows = vec![row];
            Ok(RunOutput {
                csv: csv(&header, &rows),
                table: table(&header, &rows),
                gnuplot: None,
                envelope: Envelope::new(config, vec![result], flags)?,
                strict_failure: false,
            })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_exponent(
    config: &RunConfig,
    ch: &Channel,
    q_x: &Dist,
    kind: ExponentKind,
    metric: Option<DecodingMetric>,
    rates: &[f64],
    unit: Unit,
    opts: &OptimizerOptions,
    mut flags: Vec<String>,
) -> Result<RunOutput> {
    let m = metric.unwrap_or(DecodingMetric::Ml);
    let curve = sweep(rates, q_x, m, ch, opts, kind)?;
    let mut results = Vec::new();
    for rec in &curve.records {
        let (value, raw, reason) = match (&rec.result, &rec.error) {
            (Some(r), _) => {
                let reason = if r.value.is_finite() {
                    None
                } else {
                    Some("infeasible at every searched coupling".to_string())
                };
                (r.value, r.raw_value, reason)
            }
            (None, e) => (
                f64::NAN,
                f64::NAN,
                Some(e.clone().unwrap_or_else(|| "failed".into())),
            ),
        };
        if let Some(why) = &reason {
            flags.push(format!("rate {}: {why}", rec.rate));
        }
        results.push(json!({
            "rate": unit.scale(rec.rate),
            "value": finite_or_str(unit.scale(value)),
            "raw_value": finite_or_str(unit.scale(raw)),
            "reason": reason,
            "detail": rec.result,
        }));
    }
    let env = Envelope::new(config, results, flags)?;
    let header = ["rate", "value", "raw_value", "reason"];
    let rows: Vec<Vec<Value>> = env
        .results
        .iter()
        .map(|r| header.iter().map(|k| opt_num(r, k)).collect())
        .collect();
    let unit_name = if unit == Unit::Bits { "bits" } else { "nats" };
    let name = match kind {
        ExponentKind::Random => "E_r".to_string(),
        ExponentKind::Trc => format!("E_trc ({m})"),
        ExponentKind::Expurgated => format!("E_ex ({m})"),
    };
    let csv_name = config
        .output_prefix
        .as_ref()
        .and_then(|p| p.file_name())
        .map(|f| format!("{}.csv", f.to_string_lossy()))
        .unwrap_or_else(|| "results.csv".into());
    let gp = gnuplot(
        &csv_name,
        &name,
        &format!("R [{unit_name}]"),
        &format!("exponent [{unit_name}]"),
        &[(2, &name)],
    );
    Ok(RunOutput {
        csv: csv(&header, &rows),
        table: table(
            &header[..3],
            &rows.iter().map(|r| r[..3].to_vec()).collect::<Vec<_>>(),
        ),
        gnuplot: Some(gp),
        envelope: env,
        strict_failure: false,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_certify(
    config: &RunConfig,
    ch: &Channel,
    q_x: &Dist,
    rates: &[f64],
    strict: bool,
    opts: &OptimizerOptions,
    tols: &CertifyOptions,
    mut flags: Vec<String>,
) -> Result<RunOutput> {
    let reports: Vec<BoundReport> = rates
        .iter()
        .map(|&r| certify_theorem1(&RatePoint::new(r, q_x.clone())?, ch, opts, tols))
        .collect::<explab::Result<_>>()?;
    let mut failed = false;
    let mut results = Vec::new();
    for rep in &reports {
        for c in rep.checks.iter().filter(|c| !c.pass) {
            failed = true;
            flags.push(format!(
                "rate {}: check {} failed (margin {:.6}, tolerance {})",
                rep.rate, c.name, c.margin.value, c.tol
            ));
        }
        results.push(json!({
            "rate": rep.rate,
            "pass": rep.pass,
            "failed_checks": rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect::<Vec<_>>(),
            "report": rep,
        }));
    }
    let env = Envelope::new(config, results, flags)?;
    let names: Vec<String> = reports
        .first()
        .map(|r| r.checks.iter().map(|c| c.name.clone()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = ["rate", "trc_ml", "ml_upper", "mmi_lower", "trc_mmi", "pass"]
        .map(String::from)
        .to_vec();
    header.extend(names.iter().map(|n| format!("margin_{n}")));
    let rows: Vec<Vec<Value>> = env
        .results
        .iter()
        .map(|r| {
            let rep = &r["report"];
            let mut row = vec![
                opt_num(r, "rate"),
                opt_num(rep, "trc_ml"),
                opt_num(rep, "ml_upper"),
                opt_num(rep, "mmi_lower"),
                opt_num(rep, "trc_mmi"),
                opt_num(r, "pass"),
            ];
            let checks = rep["checks"].as_array().cloned().unwrap_or_default();
            for n in &names {
                let c = checks.iter().find(|c| c["name"] == n.as_str());
                row.push(
                    c.map(|c| c["margin"]["value"].clone())
                        .unwrap_or(Value::Null),
                );
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let csv_name = config
        .output_prefix
        .as_ref()
        .and_then(|p| p.file_name())
        .map(|f| format!("{}.csv", f.to_string_lossy()))
        .unwrap_or_else(|| "results.csv".into());
    let gp = gnuplot(
        &csv_name,
        "bound chain",
        "R [nats]",
        "exponent [nats]",
        &[
            (2, "E_trc ML"),
            (3, "ML upper bound"),
            (4, "MMI lower bound"),
            (5, "E_trc MMI"),
        ],
    );
    Ok(RunOutput {
        csv: csv(&header_refs, &rows),
        table: table(
            &header_refs[..6],
            &rows.iter().map(|r| r[..6].to_vec()).collect::<Vec<_>>(),
        ),
        gnuplot: Some(gp),
        envelope: env,
        strict_failure: strict && failed,
    })
}

/// Default optimizer options for a channel, with optional overrides.
pub fn optimizer_options(
    ch: &ChannelSpec,
    grid_k: Option<u32>,
    refine_iters: Option<usize>,
    starts: Option<usize>,
) -> Result<OptimizerOptions> {
    let mut o = OptimizerOptions::for_alphabets(ch.inputs, ch.outputs);
    if let Some(k) = grid_k {
        o = o.with_grid(k);
    }
    if let Some(r) = refine_iters {
        o.refine_iters = r;
    }
    if let Some(s) = starts {
        o.starts = s;
    }
    o.validate()?;
    Ok(o)
}

pub fn decoder(name: &str, gld_metric: DecodingMetric, beta: f64) -> Result<Decoder> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "ml" => Decoder::Ml,
        "mmi" => Decoder::Mmi,
        "gld" => Decoder::Gld(GldConfig::new(gld_metric, beta)?),
        other => bail!("unknown decoder {other:?} (expected ml, mmi or gld)"),
    })
}
