//! Command-line front end shared by the `bb84-rates` binary.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible model,
//! 3 verification failure.

use crate::edp_mc::{self, AttackScenario, Tally};
use crate::error::Error;
use crate::keyrate::{rate_with, FlawModel, KeyRate, RateOptions, RefinedMode};
use crate::lemma_verify::{run_suite, Suite, VerifyReport};
use crate::wcp::{self, Link, WcpBudget, WcpSource};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GLLP_THREADS";

pub const SWEEP_HEADER: &[&str] = &["param", "delta", "Delta_eff", "phase_rate", "rate_raw", "rate", "feasible"];
pub const WCP_HEADER: &[&str] = &[
    "length_km", "eta", "mu", "p0", "p1", "pM", "pD", "Delta", "delta_bits", "sifted_hz", "rate", "throughput_hz",
];
pub const VERIFY_HEADER: &[&str] = &["claim_id", "params", "measured", "bound", "pass"];
pub const SIMULATE_HEADER: &[&str] = &[
    "scenario", "n_pairs", "n_sifted", "bit_err", "phase_err", "delta_hat", "delta_p_hat", "gap_hat", "ci99",
];

#[derive(Debug, Parser)]
#[command(name = "bb84-rates", version, about = "BB84 key rates with imperfect devices")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Plain-text `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the table here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    fn separator(self) -> &'static str {
        match self {
            Format::Csv => ",",
            Format::Tsv => "\t",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one key rate.
    Rate(ModelArgs),
    /// Evaluate a key rate along one `start:end:step` parameter.
    Sweep(ModelArgs),
    /// Weak coherent pulse link budget, optionally over a range of lengths.
    Wcp(WcpArgs),
    /// Run numerical lemma checks.
    Verify(VerifyArgs),
    /// Monte Carlo of an attack scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// basis_independent, delta_balanced, source_flaw, oblivious_individual,
    /// misalignment, generic_individual, tagging_simple, tagging,
    /// coherent_tagging, trojan_pony, ilm_double_click or refined.
    #[arg(long)]
    model: String,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long = "Delta", allow_hyphen_values = true)]
    big_delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    #[arg(long = "eps_s", allow_hyphen_values = true)]
    eps_s: Option<String>,
    /// Radians, or degrees with a `deg` suffix.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long = "f_random", allow_hyphen_values = true)]
    f_random: Option<String>,
    #[arg(long = "delta_x", allow_hyphen_values = true)]
    delta_x: Option<String>,
    #[arg(long = "delta_z", allow_hyphen_values = true)]
    delta_z: Option<String>,
    #[arg(long = "p_x", allow_hyphen_values = true)]
    p_x: Option<String>,
    /// `biased` or `pure`, for the refined model.
    #[arg(long)]
    mode: Option<String>,
    /// Statistical slack added to the balance parameter.
    #[arg(long, allow_hyphen_values = true)]
    slack: Option<String>,
    /// Random loss fraction amplifying the balance parameter.
    #[arg(long, allow_hyphen_values = true)]
    loss: Option<String>,
}

#[derive(Debug, Args)]
struct WcpArgs {
    /// Mean photon number; optimized over [mu_min, mu_max] when absent.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "mu_min", default_value_t = 1e-4)]
    mu_min: f64,
    #[arg(long = "mu_max", default_value_t = 1.0)]
    mu_max: f64,
    /// Repetition rate in Hz.
    #[arg(long, default_value_t = 1e6)]
    nu: f64,
    #[arg(long = "eta_det")]
    eta_det: f64,
    /// Fiber attenuation in dB/km.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Fiber length in km, scalar or `start:end:step`.
    #[arg(long, default_value = "0")]
    length: String,
    #[arg(long, default_value_t = 0.0)]
    dark: f64,
    /// Intrinsic bit error rate.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Measured detection probability replacing the modeled one.
    #[arg(long = "pD")]
    p_d: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// all, gap_trans, coin_tail, lemma3, dilation or coin_leak.
    #[arg(long, default_value = "all")]
    suite: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// tagging, pony, misalign or null.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1_000_000)]
    n: u64,
    #[arg(long = "Delta")]
    big_delta: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Radians, or degrees with a `deg` suffix.
    #[arg(long)]
    theta: Option<String>,
}

/// A diagnostic naming the offending key where there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub key: Option<String>,
    pub message: String,
    pub code: i32,
}

impl CliError {
    fn usage(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            key: Some(key.into()),
            message: message.into(),
            code: EXIT_USAGE,
        }
    }

    fn plain(message: impl Into<String>) -> Self {
        CliError {
            key: None,
            message: message.into(),
            code: EXIT_USAGE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "error: --{k}: {}", self.message),
            None => write!(f, "error: {}", self.message),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let key = match &e {
            Error::Domain { name, .. } => Some(name.to_string()),
            _ => None,
        };
        CliError {
            key,
            message: e.to_string(),
            code: EXIT_USAGE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A parameter given either as one value or as an inclusive range.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Scalar(f64),
    Range { start: f64, end: f64, step: f64 },
}

impl ParamValue {
    /// The grid `start, start + step, …` up to `end` within half a step.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            ParamValue::Scalar(v) => vec![v],
            ParamValue::Range { start, end, step } => {
                let count = ((end - start) / step + 0.5).floor() as usize + 1;
                (0..count).map(|i| start + i as f64 * step).collect()
            }
        }
    }
}

fn parse_number(key: &str, s: &str, angle: bool) -> CliResult<f64> {
    let s = s.trim();
    let (body, deg) = match s.strip_suffix("deg") {
        Some(b) if angle => (b.trim(), true),
        _ => (s, false),
    };
    let v: f64 = body
        .parse()
        .map_err(|_| CliError::usage(key, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::usage(key, format!("`{s}` is not finite")));
    }
    Ok(if deg { v.to_radians() } else { v })
}

/// Parse `x`, `x deg`, or `start:end:step` (a trailing `deg` converts the
/// whole range for angles).
pub fn parse_param(key: &str, s: &str, angle: bool) -> CliResult<ParamValue> {
    let trimmed = s.trim();
    let (body, deg_suffix) = match trimmed.strip_suffix("deg") {
        Some(b) if angle && b.contains(':') => (b, true),
        _ => (trimmed, false),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let conv = |x: f64| if deg_suffix { x.to_radians() } else { x };
    match parts.as_slice() {
        [one] => Ok(ParamValue::Scalar(parse_number(key, one, angle)?)),
        [a, b, c] => {
            let start = conv(parse_number(key, a, angle)?);
            let end = conv(parse_number(key, b, angle)?);
            let step = conv(parse_number(key, c, angle)?);
            if !(step > 0.0) || end < start {
                return Err(CliError::usage(key, format!("range `{s}` needs start <= end and step > 0")));
            }
            if (end - start) / step > 1e7 {
                return Err(CliError::usage(key, format!("range `{s}` has too many points")));
            }
            Ok(ParamValue::Range { start, end, step })
        }
        _ => Err(CliError::usage(key, format!("`{s}` is neither a number nor start:end:step"))),
    }
}

const MODEL_KEYS: &[&str] = &[
    "delta", "Delta", "eps", "eps_s", "theta", "f_random", "delta_x", "delta_z", "p_x", "slack", "loss",
];

fn model_params(args: &ModelArgs) -> CliResult<BTreeMap<&'static str, ParamValue>> {
    let raw: [(&'static str, &Option<String>); 11] = [
        ("delta", &args.delta),
        ("Delta", &args.big_delta),
        ("eps", &args.eps),
        ("eps_s", &args.eps_s),
        ("theta", &args.theta),
        ("f_random", &args.f_random),
        ("delta_x", &args.delta_x),
        ("delta_z", &args.delta_z),
        ("p_x", &args.p_x),
        ("slack", &args.slack),
        ("loss", &args.loss),
    ];
    debug_assert_eq!(raw.len(), MODEL_KEYS.len());
    let mut out = BTreeMap::new();
    for (key, value) in raw {
        if let Some(s) = value {
            out.insert(key, parse_param(key, s, key == "theta")?);
        }
    }
    Ok(out)
}

/// Keys each model reads, required ones first; `optional` keys default to 0.
fn model_keys(model: &str) -> CliResult<(&'static [&'static str], &'static [&'static str])> {
    Ok(match model {
        "basis_independent" => (&["delta"], &[]),
        "delta_balanced" | "tagging_simple" | "tagging" | "coherent_tagging" | "ilm_double_click" => {
            (&["delta", "Delta"], &[])
        }
        "source_flaw" => (&["delta", "eps_s"], &[]),
        "oblivious_individual" | "generic_individual" => (&["delta", "eps"], &[]),
        "misalignment" => (&["delta", "theta"], &[]),
        "trojan_pony" => (&["delta", "Delta"], &["f_random"]),
        "refined" => (&["delta_x", "delta_z", "p_x"], &[]),
        other => return Err(CliError::usage("model", format!("unknown model `{other}`"))),
    })
}

/// Build a model from scalar parameter values.
pub fn build_model(model: &str, values: &BTreeMap<&str, f64>, mode: Option<&str>) -> CliResult<FlawModel> {
    let get = |k: &str| values.get(k).copied().unwrap_or(0.0);
    let m = match model {
        "basis_independent" => FlawModel::BasisIndependent { delta: get("delta") },
        "delta_balanced" => FlawModel::DeltaBalanced { delta: get("delta"), balance: get("Delta") },
        "source_flaw" => FlawModel::SourceFlaw { delta: get("delta"), eps_s: get("eps_s") },
        "oblivious_individual" => FlawModel::ObliviousIndividual { delta: get("delta"), eps: get("eps") },
        "misalignment" => FlawModel::Misalignment { delta: get("delta"), theta: get("theta") },
        "generic_individual" => FlawModel::GenericIndividual { delta: get("delta"), eps: get("eps") },
        "tagging_simple" => FlawModel::TaggingSimple { delta: get("delta"), tagged: get("Delta") },
        "tagging" => FlawModel::Tagging { delta: get("delta"), tagged: get("Delta") },
        "coherent_tagging" => FlawModel::CoherentTagging { delta: get("delta"), tagged: get("Delta") },
        "trojan_pony" => FlawModel::TrojanPony {
            delta: get("delta"),
            removed: get("Delta"),
            random_loss: get("f_random"),
        },
        "ilm_double_click" => FlawModel::IlmDoubleClick { delta: get("delta"), double_click: get("Delta") },
        "refined" => FlawModel::RefinedBias {
            delta_x: get("delta_x"),
            delta_z: get("delta_z"),
            p_x: get("p_x"),
            mode: match mode {
                None | Some("biased") => RefinedMode::BiasedEfficiency,
                Some("pure") => RefinedMode::PureRefined,
                Some(other) => return Err(CliError::usage("mode", format!("unknown refined mode `{other}`"))),
            },
        },
        other => return Err(CliError::usage("model", format!("unknown model `{other}`"))),
    };
    m.validate()?;
    Ok(m)
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Table {
    format: Format,
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(format: Format, header: &'static [&'static str]) -> Self {
        Table {
            format,
            header,
            rows: Vec::new(),
        }
    }

    fn render(&self) -> String {
        let sep = self.format.separator();
        let mut s = self.header.join(sep);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(sep));
            s.push('\n');
        }
        s
    }
}

fn emit(table: &Table, out: Option<&Path>, stdout: &mut dyn Write, summary: &str) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::plain(format!("write failed: {e}"));
    match out {
        Some(path) => {
            std::fs::write(path, table.render())
                .map_err(|e| CliError::usage("out", format!("{}: {e}", path.display())))?;
            stdout.write_all(summary.as_bytes()).map_err(io)?;
            writeln!(stdout, "wrote {} rows to {}", table.rows.len(), path.display()).map_err(io)
        }
        None => stdout.write_all(table.render().as_bytes()).map_err(io),
    }
}

fn rate_row(param: &str, r: &KeyRate) -> Vec<String> {
    vec![
        param.to_string(),
        fmt_f64(r.bit_error.value()),
        fmt_f64(r.effective_delta.value()),
        fmt_f64(r.effective_phase_rate.value()),
        fmt_f64(r.raw),
        fmt_f64(r.clamped),
        (r.feasible as u8).to_string(),
    ]
}

fn model_setup(args: &ModelArgs) -> CliResult<(BTreeMap<&'static str, ParamValue>, Vec<&'static str>)> {
    let params = model_params(args)?;
    let (required, optional) = model_keys(&args.model)?;
    for k in required {
        if !params.contains_key(k) {
            return Err(CliError::usage(*k, format!("required by model `{}`", args.model)));
        }
    }
    for k in params.keys() {
        if !required.contains(k) && !optional.contains(k) && *k != "slack" && *k != "loss" {
            return Err(CliError::usage(*k, format!("not a parameter of model `{}`", args.model)));
        }
    }
    if args.mode.is_some() && args.model != "refined" {
        return Err(CliError::usage("mode", "only the refined model takes a mode"));
    }
    let ranged: Vec<&'static str> = params
        .iter()
        .filter(|(_, v)| matches!(v, ParamValue::Range { .. }))
        .map(|(k, _)| *k)
        .collect();
    Ok((params, ranged))
}

fn evaluate(args: &ModelArgs, params: &BTreeMap<&'static str, ParamValue>, over: Option<(&str, f64)>) -> CliResult<KeyRate> {
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    for (k, v) in params {
        let x = match (over, v) {
            (Some((key, x)), _) if key == *k => x,
            (_, ParamValue::Scalar(x)) => *x,
            (_, ParamValue::Range { .. }) => unreachable!("ranges are swept"),
        };
        values.insert(k, x);
    }
    let options = RateOptions {
        slack: values.get("slack").copied().unwrap_or(0.0),
        loss: values.get("loss").copied().unwrap_or(0.0),
    };
    let model = build_model(&args.model, &values, args.mode.as_deref())?;
    Ok(rate_with(&model, &options)?)
}

fn cmd_rate(g: &GlobalArgs, args: &ModelArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let (params, ranged) = model_setup(args)?;
    if let Some(k) = ranged.first() {
        return Err(CliError::usage(*k, "ranges are only accepted by `sweep`"));
    }
    let r = evaluate(args, &params, None)?;
    let summary = format!(
        "model {}: delta = {}, Delta_eff = {}, phase rate = {}\nR = {} (raw {}, {})\n",
        args.model,
        r.bit_error,
        r.effective_delta,
        r.effective_phase_rate,
        r.clamped,
        r.raw,
        if r.feasible { "feasible" } else { "infeasible" }
    );
    let mut table = Table::new(g.format, SWEEP_HEADER);
    table.rows.push(rate_row("", &r));
    match &g.out {
        Some(p) => emit(&table, Some(p), stdout, &summary)?,
        None => stdout
            .write_all(summary.as_bytes())
            .map_err(|e| CliError::plain(e.to_string()))?,
    }
    Ok(if r.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn cmd_sweep(g: &GlobalArgs, args: &ModelArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let (params, ranged) = model_setup(args)?;
    let key = match ranged.as_slice() {
        [k] => *k,
        [] => return Err(CliError::plain("sweep needs one parameter given as start:end:step")),
        [_, second, ..] => return Err(CliError::usage(*second, "only one parameter may be swept")),
    };
    let grid = params[key].values();
    let rows = grid
        .par_iter()
        .map(|&x| evaluate(args, &params, Some((key, x))).map(|r| rate_row(&fmt_f64(x), &r)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut table = Table::new(g.format, SWEEP_HEADER);
    table.rows = rows;
    let feasible = table.rows.iter().filter(|r| r[6] == "1").count();
    let summary = format!(
        "model {}: swept {key} over {} points, {feasible} feasible\n",
        args.model,
        grid.len()
    );
    emit(&table, g.out.as_deref(), stdout, &summary)?;
    Ok(EXIT_OK)
}

fn wcp_row(length: f64, b: &WcpBudget) -> Vec<String> {
    vec![
        fmt_f64(length),
        fmt_f64(b.eta),
        fmt_f64(b.mu),
        fmt_f64(b.p0),
        fmt_f64(b.p1),
        fmt_f64(b.p_m),
        fmt_f64(b.p_d),
        fmt_f64(b.delta_tag.value()),
        fmt_f64(b.delta_bits.value()),
        fmt_f64(b.sifted_rate_hz),
        fmt_f64(b.final_rate.clamped),
        fmt_f64(b.throughput_hz),
    ]
}

fn cmd_wcp(g: &GlobalArgs, args: &WcpArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let lengths = parse_param("length", &args.length, false)?.values();
    let mut link = Link::fiber(args.eta_det, args.alpha, 0.0, args.dark, args.delta)?;
    if let Some(pd) = args.p_d {
        link = link.with_detection_override(pd);
    }
    let source = WcpSource::new(args.mu.unwrap_or(args.mu_min), args.nu)?;
    let optimize = match args.mu {
        Some(_) => None,
        None => Some((args.mu_min, args.mu_max)),
    };
    let budgets = wcp::rate_vs_distance(&source, &link, &lengths, optimize)?;
    let mut table = Table::new(g.format, WCP_HEADER);
    table.rows = lengths.iter().zip(&budgets).map(|(&l, b)| wcp_row(l, b)).collect();
    let best = budgets.iter().map(|b| b.throughput_hz).fold(0.0, f64::max);
    let summary = format!(
        "wcp: {} lengths, peak throughput {} Hz\n",
        lengths.len(),
        best
    );
    emit(&table, g.out.as_deref(), stdout, &summary)?;
    Ok(if budgets.iter().any(|b| b.final_rate.feasible && b.throughput_hz > 0.0) {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    })
}

fn verify_row(r: &VerifyReport) -> Vec<String> {
    vec![
        r.claim_id.clone(),
        r.params.clone(),
        fmt_f64(r.measured),
        fmt_f64(r.bound),
        (r.pass as u8).to_string(),
    ]
}

fn cmd_verify(g: &GlobalArgs, args: &VerifyArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let suite: Suite = args
        .suite
        .parse()
        .map_err(|e: Error| CliError::usage("suite", e.to_string()))?;
    let reports = run_suite(suite, g.seed)?;
    let mut table = Table::new(g.format, VERIFY_HEADER);
    table.rows = reports.iter().map(verify_row).collect();
    let failed: Vec<&VerifyReport> = reports.iter().filter(|r| !r.pass).collect();
    let mut summary = format!("verify {}: {} reports, {} failed\n", args.suite, reports.len(), failed.len());
    for r in &failed {
        summary.push_str(&format!("  {r}\n"));
    }
    emit(&table, g.out.as_deref(), stdout, &summary)?;
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn simulate_row(name: &str, t: &Tally) -> Vec<String> {
    vec![
        name.to_string(),
        t.n_pairs.to_string(),
        t.n_sifted.to_string(),
        t.n_bit_err.to_string(),
        t.n_phase_err.to_string(),
        fmt_f64(t.delta_hat),
        fmt_f64(t.delta_p_hat),
        fmt_f64(t.gap_hat),
        fmt_f64(t.ci_half_width),
    ]
}

fn scenario_from(args: &SimulateArgs) -> CliResult<AttackScenario> {
    let need = |key: &str, v: Option<f64>| v.ok_or_else(|| CliError::usage(key, format!("required by scenario `{}`", args.scenario)));
    let reject = |key: &str, present: bool| -> CliResult<()> {
        if present {
            Err(CliError::usage(key, format!("not a parameter of scenario `{}`", args.scenario)))
        } else {
            Ok(())
        }
    };
    let theta = args
        .theta
        .as_deref()
        .map(|s| parse_number("theta", s, true))
        .transpose()?;
    let s = match args.scenario.as_str() {
        "tagging" => {
            reject("p", args.p.is_some())?;
            reject("theta", theta.is_some())?;
            AttackScenario::Tagging {
                delta: need("Delta", args.big_delta)?,
                q_untagged: need("q", args.q)?,
            }
        }
        "pony" => {
            reject("q", args.q.is_some())?;
            reject("theta", theta.is_some())?;
            AttackScenario::Pony {
                p: need("p", args.p)?,
                delta: need("Delta", args.big_delta)?,
            }
        }
        "misalign" => {
            reject("p", args.p.is_some())?;
            reject("Delta", args.big_delta.is_some())?;
            AttackScenario::Misalign {
                theta: need("theta", theta)?,
                q_channel: args.q.unwrap_or(0.0),
            }
        }
        "null" => {
            reject("p", args.p.is_some())?;
            reject("Delta", args.big_delta.is_some())?;
            reject("theta", theta.is_some())?;
            AttackScenario::Null { q: need("q", args.q)? }
        }
        other => return Err(CliError::usage("scenario", format!("unknown scenario `{other}`"))),
    };
    s.validate().map_err(|e| match e {
        Error::Scenario(msg) => CliError::usage("p", msg),
        other => other.into(),
    })?;
    Ok(s)
}

fn cmd_simulate(g: &GlobalArgs, args: &SimulateArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let scenario = scenario_from(args)?;
    if args.n == 0 {
        return Err(CliError::usage("n", "need at least one pair"));
    }
    let t = edp_mc::simulate(&scenario, args.n, g.seed)?;
    let mut table = Table::new(g.format, SIMULATE_HEADER);
    table.rows.push(simulate_row(scenario.name(), &t));
    let summary = format!(
        "simulate {}: delta_hat = {}, delta_p_hat = {}, gap = {} (99% half-width {})\n",
        scenario.name(),
        t.delta_hat,
        t.delta_p_hat,
        t.gap_hat,
        t.ci_half_width
    );
    emit(&table, g.out.as_deref(), stdout, &summary)?;
    Ok(EXIT_OK)
}

const SUBCOMMANDS: &[&str] = &["rate", "sweep", "wcp", "verify", "simulate"];

/// Read `key = value` lines; `#` starts a comment.
pub fn read_config(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage("config", format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::usage("config", format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k == "config" {
            return Err(CliError::usage("config", format!("{}:{}: bad key `{k}`", path.display(), i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn flag_given(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_eq = format!("--{key}=");
    args.iter().any(|a| *a == flag || a.starts_with(&with_eq))
}

/// Splice config-file entries in as flags right after the subcommand,
/// skipping keys that also appear on the command line.
fn expand_config(args: Vec<String>) -> CliResult<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let entries = read_config(&path)?;
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (k, v) in entries {
        if !flag_given(&args, &k) {
            injected.push(format!("--{k}"));
            injected.push(v);
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::plain(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // A pool may already exist when called from tests; the cap then stays as it was.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse arguments (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    match run_inner(args, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.code
        }
    }
}

fn run_inner(args: Vec<String>, stdout: &mut dyn Write) -> CliResult<i32> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    Ok(EXIT_OK)
                }
                _ => Err(CliError::plain(e.to_string().trim_end().trim_start_matches("error: ").to_string())),
            };
        }
    };
    configure_threads()?;
    let g = &cli.global;
    match &cli.command {
        Command::Rate(a) => cmd_rate(g, a, stdout),
        Command::Sweep(a) => cmd_sweep(g, a, stdout),
        Command::Wcp(a) => cmd_wcp(g, a, stdout),
        Command::Verify(a) => cmd_verify(g, a, stdout),
        Command::Simulate(a) => cmd_simulate(g, a, stdout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["bb84-rates"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn params_parse() {
        assert_eq!(parse_param("x", "0.5", false).unwrap(), ParamValue::Scalar(0.5));
        let deg = parse_param("theta", "90deg", true).unwrap();
        assert_eq!(deg, ParamValue::Scalar(std::f64::consts::FRAC_PI_2));
        assert!(parse_param("delta", "5deg", false).is_err());
        let r = parse_param("Delta", "0:0.05:0.001", false).unwrap();
        let v = r.values();
        assert_eq!(v.len(), 51);
        assert_eq!(v[0], 0.0);
        assert!((v[50] - 0.05).abs() < 1e-15);
        assert_eq!(parse_param("x", "0:1:0.3", false).unwrap().values().len(), 4);
        assert!(parse_param("x", "1:0:0.1", false).is_err());
        assert!(parse_param("x", "a", false).is_err());
        let r = parse_param("theta", "0:10:5deg", true).unwrap().values();
        assert!((r[2] - 10f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn rate_tagging_example() {
        let (code, out, _) = run_str(&["rate", "--model", "tagging", "--delta", "0.05", "--Delta", "0.1"]);
        assert_eq!(code, 0);
        assert!(out.contains("R = 0.3350139566487"), "{out}");
    }

    #[test]
    fn infeasible_exit_code() {
        let (code, _, _) = run_str(&["rate", "--model", "delta_balanced", "--delta", "0.0", "--Delta", "0.2"]);
        assert_eq!(code, EXIT_INFEASIBLE);
    }

    #[test]
    fn usage_errors_name_the_key() {
        let (code, _, err) = run_str(&["rate", "--model", "tagging", "--delta", "0.05"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--Delta"), "{err}");
        let (code, _, err) = run_str(&["rate", "--model", "tagging", "--delta", "0.05", "--Delta", "0.1", "--theta", "1"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--theta"), "{err}");
        let (code, _, err) = run_str(&["rate", "--model", "tagging", "--delta", "1.5", "--Delta", "0.1"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("delta"), "{err}");
        let (code, _, _) = run_str(&["rate", "--model", "tagging", "--bogus", "1"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _, _) = run_str(&["nonsense"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, out, _) = run_str(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("sweep"));
    }

    #[test]
    fn sweep_crosses_zero_near_threshold() {
        let (code, out, _) = run_str(&["sweep", "--model", "delta_balanced", "--delta", "0", "--Delta", "0:0.05:0.001"]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
        let rows: Vec<(f64, f64)> = lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[5].parse().unwrap())
            })
            .collect();
        let last_positive = rows.iter().filter(|r| r.1 > 0.0).map(|r| r.0).fold(0.0, f64::max);
        assert!((0.028..0.029).contains(&last_positive), "{last_positive}");
    }

    #[test]
    fn tsv_format() {
        let (_, out, _) = run_str(&["--format", "tsv", "sweep", "--model", "basis_independent", "--delta", "0:0.1:0.05"]);
        assert!(out.starts_with("param\tdelta\t"));
    }

    #[test]
    fn wcp_table() {
        let (code, out, _) = run_str(&["wcp", "--eta_det", "0.1", "--mu", "0.01", "--delta", "0.01"]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), WCP_HEADER.join(","));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert!((row[11] - 392.653_270_437_481).abs() < 1e-6);
    }

    #[test]
    fn simulate_table() {
        let (code, out, _) = run_str(&["simulate", "--scenario", "null", "--q", "0", "--n", "1000"]);
        assert_eq!(code, 0);
        assert!(out.starts_with(&SIMULATE_HEADER.join(",")));
        assert!(out.contains("null,1000,1000,0,0,"));
        let (code, _, err) = run_str(&["simulate", "--scenario", "pony", "--p", "0.01", "--Delta", "0.05"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Delta <= p"), "{err}");
    }

    #[test]
    fn verify_gap_trans_suite() {
        let (code, out, _) = run_str(&["verify", "--suite", "gap_trans"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("claim_id,params,measured,bound,pass\ngap_trans,"));
    }

    #[test]
    fn config_file_with_override() {
        let dir = std::env::temp_dir().join(format!("bb84-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("run.cfg");
        std::fs::write(&cfg, "# tagging run\nmodel = tagging\ndelta = 0.05\nDelta = 0.3 # overridden\n").unwrap();
        let cfg_s = cfg.to_str().unwrap();
        let (code, out, _) = run_str(&["rate", "--config", cfg_s, "--Delta", "0.1"]);
        assert_eq!(code, 0);
        assert!(out.contains("R = 0.3350139566487"), "{out}");
        std::fs::write(&cfg, "colour = blue\n").unwrap();
        let (code, _, _) = run_str(&["rate", "--config", cfg_s, "--model", "tagging"]);
        assert_eq!(code, EXIT_USAGE);
        std::fs::write(&cfg, "no equals sign\n").unwrap();
        let (code, _, err) = run_str(&["rate", "--config", cfg_s]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--config"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn out_file_written() {
        let path = std::env::temp_dir().join(format!("bb84-out-{}.csv", std::process::id()));
        let p = path.to_str().unwrap();
        let (code, out, _) = run_str(&["--out", p, "sweep", "--model", "basis_independent", "--delta", "0:0.2:0.1"]);
        assert_eq!(code, 0);
        assert!(out.contains("wrote 3 rows"));
        let csv = std::fs::read_to_string(&path).unwrap();
        assert_eq!(csv.lines().count(), 4);
        std::fs::remove_file(&path).unwrap();
    }
}
