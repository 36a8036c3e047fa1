//! Command-line front end: `gen`, `train`, `eval`, `baseline`, `report`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O or file-format
//! error, 3 numeric failure. Every output gets a JSON sidecar manifest
//! recording the arguments and seed (`<file>.manifest.json`, or
//! `manifest.json` inside a report directory).

use crate::channel::ChannelModel;
use crate::dft_baseline::DftDecoder;
use crate::error::{Error, Result};
use crate::evalmetrics::{
    group_reports, merge_reports, overall_report, predict, write_reports, Decoder, GroupBy, Predictions,
};
use crate::muxdatagen::{
    generate_dataset, read_dataset, train_test_split, write_dataset, DatasetFormat, DatasetSpec, PucchRecord,
};
use crate::neuralnet::{load_model, save_model, train, Decision, Hyper};
use crate::rng::{mix_seed, SimRng};
use crate::waveform::{base_sequence, BaseSequenceId};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "PUCCH0_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pucch0", version, about = "PUCCH Format 0 dataset generation, training and evaluation")]
pub struct Cli {
    /// Worker threads (default: $PUCCH0_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset.
    Gen(GenArgs),
    /// Split a dataset, train on one SNR slice and save the best model.
    Train(TrainArgs),
    /// Evaluate a trained model.
    Eval(EvalArgs),
    /// Evaluate the DFT receiver.
    Baseline(BaselineArgs),
    /// Merge report CSVs into accuracy-vs-SNR and accuracy-vs-UE tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Comma-separated SNRs in dB.
    #[arg(long, default_value = "0,5,10,15,20")]
    pub snr: String,
    /// UE counts, `a..b` (inclusive) or comma-separated.
    #[arg(long = "n-ue", default_value = "0..12")]
    pub n_ue: String,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Allocations per (SNR, UE count, iteration).
    #[arg(long, default_value_t = 32)]
    pub allocs: usize,
    /// awgn, rayleigh or tdl-lite.
    #[arg(long, default_value = "rayleigh")]
    pub channel: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "n-cs", default_value_t = 0)]
    pub n_cs: u8,
    /// Base sequence group u.
    #[arg(long = "base-group", default_value_t = 0)]
    pub base_group: u8,
    /// Probability that an SR-only UE has a negative request and stays silent.
    #[arg(long = "neg-sr", default_value_t = 0.0)]
    pub neg_sr: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// csv or bin (default: from the file extension).
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// SNR slice used for training and validation.
    #[arg(long = "train-snr", default_value_t = 10.0)]
    pub train_snr: f64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// Hidden layer widths.
    #[arg(long, default_value = "512,512,512")]
    pub arch: String,
    #[arg(long = "meta-scale", default_value_t = 1.0)]
    pub meta_scale: f32,
    /// Validation scoring rule: threshold:<p> or top-k.
    #[arg(long, default_value = "threshold:0.5")]
    pub decision: String,
    /// Fraction of the dataset used for training plus validation.
    #[arg(long = "train-frac", default_value_t = 0.75)]
    pub train_frac: f64,
    /// Fraction of the training part held out for validation.
    #[arg(long = "val-frac", default_value_t = 0.3)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "model.ucn0")]
    pub out: PathBuf,
    /// Where to write the held-out test split (default: `<out>.test.csv`).
    #[arg(long = "test-out")]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated maximum UE-count offsets.
    #[arg(long, default_value = "0")]
    pub delta: String,
    #[arg(long, default_value = "threshold:0.5")]
    pub decision: String,
    /// Multiplier for the UE-count input (default: the value recorded when
    /// the model was trained, else 1).
    #[arg(long = "meta-scale")]
    pub meta_scale: Option<f32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "0")]
    pub delta: String,
    /// Drop peaks whose magnitude falls below this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long = "base-group", default_value_t = 0)]
    pub base_group: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Decode(_) | Error::Config(_) => 1,
        Error::Io(_) | Error::Format { .. } => 2,
        Error::Numeric(_) => 3,
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pucch0: {e}");
            exit_code(&e)
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV}='{v}' is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    Ok(n)
}

pub fn execute(cli: &Cli, args: &[String]) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(a, args),
        Command::Train(a) => cmd_train(a, args),
        Command::Eval(a) => cmd_eval(a, args),
        Command::Baseline(a) => cmd_baseline(a, args),
        Command::Report(a) => cmd_report(a, args),
    })
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("'{t}' is not a number")))
        })
        .collect()
}

/// `a..b` (inclusive), `a..=b`, or a comma-separated list.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    let bad = |t: &str| Error::Config(format!("'{t}' is not a non-negative integer"));
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let a: usize = a.trim().parse().map_err(|_| bad(a))?;
        let b: usize = b.trim().parse().map_err(|_| bad(b))?;
        if a > b {
            return Err(Error::Config(format!("empty range {s}")));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad(t))).collect()
}

fn parse_deltas(s: &str) -> Result<Vec<u8>> {
    parse_usize_list(s)?
        .into_iter()
        .map(|d| u8::try_from(d).map_err(|_| Error::Config(format!("delta {d} too large"))))
        .collect()
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, v).map_err(|e| Error::Io(e.into()))?;
    f.write_all(b"\n")?;
    Ok(())
}

fn invocation(command: &str, args: &[String], seed: u64, extra: Value) -> Value {
    json!({
        "program": "pucch0",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "argv": args,
        "seed": seed,
        "details": extra,
    })
}

/// Adds `entry` to `DIR/manifest.json`, replacing an entry with the same
/// command and series.
fn append_dir_manifest(dir: &Path, entry: Value) -> Result<()> {
    let path = dir.join("manifest.json");
    let mut runs: Vec<Value> = match std::fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(mut o)) => match o.remove("runs") {
                Some(Value::Array(a)) => a,
                _ => Vec::new(),
            },
            _ => return Err(Error::format(1, format!("{} is not a manifest", path.display()))),
        },
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let same = |v: &Value| v["command"] == entry["command"] && v["details"]["series"] == entry["details"]["series"];
    runs.retain(|v| !same(v));
    runs.push(entry);
    write_json(&path, &json!({ "runs": runs }))
}

fn cmd_gen(a: &GenArgs, args: &[String]) -> Result<()> {
    let channel: ChannelModel = a.channel.parse()?;
    let mut spec = DatasetSpec::desk(a.seed);
    spec.snr_list = parse_f64_list(&a.snr)?;
    spec.n_ue_list = parse_usize_list(&a.n_ue)?;
    spec.iters = a.iters;
    spec.allocs_per_grid = a.allocs;
    spec.channel = channel;
    spec.n_cs = a.n_cs;
    spec.base = BaseSequenceId::new(a.base_group)?;
    spec.policy.sr_only_negative_prob = a.neg_sr;
    let format = match &a.format {
        Some(f) => f.parse()?,
        None => DatasetFormat::from_path(&a.out),
    };
    let records = generate_dataset(&spec)?;
    write_dataset(&a.out, &records, format)?;
    write_json(
        &sidecar(&a.out),
        &invocation(
            "gen",
            args,
            a.seed,
            json!({
                "records": records.len(),
                "snr_db": spec.snr_list,
                "n_ue": spec.n_ue_list,
                "iters": spec.iters,
                "allocs": spec.allocs_per_grid,
                "channel": spec.channel.to_string(),
                "n_cs": spec.n_cs,
                "base_group": a.base_group,
            }),
        ),
    )?;
    eprintln!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn at_snr(records: &[PucchRecord], snr: f64) -> Vec<PucchRecord> {
    records
        .iter()
        .filter(|r| (r.snr_db as f64 - snr).abs() < 1e-3)
        .copied()
        .collect()
}

fn cmd_train(a: &TrainArgs, args: &[String]) -> Result<()> {
    let hyper = Hyper {
        lr: a.lr,
        momentum: a.momentum,
        dropout: a.dropout,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        hidden: parse_usize_list(&a.arch)?,
        meta_scale: a.meta_scale,
        decision: a.decision.parse()?,
    };
    hyper.validate()?;
    let records = read_dataset(&a.data)?;
    let mut split_rng = SimRng::new(mix_seed(a.seed, &[u64::from_le_bytes(*b"split\0\0\0")]));
    let split = train_test_split(&records, a.train_frac, a.val_frac, &mut split_rng)?;
    let train_set = at_snr(&split.train, a.train_snr);
    let val_set = at_snr(&split.val, a.train_snr);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(format!(
            "no training or validation records at {} dB",
            a.train_snr
        )));
    }
    eprintln!(
        "training on {} records, validating on {} ({} dB); {} test records",
        train_set.len(),
        val_set.len(),
        a.train_snr,
        split.test.len()
    );
    let outcome = train(&train_set, &val_set, &hyper)?;
    for l in &outcome.log {
        eprintln!(
            "epoch {:3}  train_loss {:.6}  val_loss {:.6}  val_acc {:.4}",
            l.epoch, l.train_loss, l.val_loss, l.val_accuracy
        );
    }
    save_model(&a.out, &outcome.params)?;

    let mut log_path = a.out.as_os_str().to_owned();
    log_path.push(".log.csv");
    let mut w = csv::Writer::from_path(PathBuf::from(&log_path)).map_err(csv_io)?;
    w.write_record(["epoch", "train_loss", "val_loss", "val_acc"]).map_err(csv_io)?;
    for l in &outcome.log {
        w.write_record([
            l.epoch.to_string(),
            format!("{:.6}", l.train_loss),
            format!("{:.6}", l.val_loss),
            format!("{:.6}", l.val_accuracy),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;

    let test_out = a.test_out.clone().unwrap_or_else(|| {
        let mut p = a.out.as_os_str().to_owned();
        p.push(".test.csv");
        PathBuf::from(p)
    });
    write_dataset(&test_out, &split.test, DatasetFormat::from_path(&test_out))?;
    write_json(
        &sidecar(&a.out),
        &invocation(
            "train",
            args,
            a.seed,
            json!({
                "arch": hyper.arch(),
                "meta_scale": hyper.meta_scale,
                "best_epoch": outcome.best_epoch,
                "train_records": train_set.len(),
                "val_records": val_set.len(),
                "test_records": split.test.len(),
                "test_out": test_out.to_string_lossy(),
            }),
        ),
    )?;
    write_json(&sidecar(&test_out), &invocation("train", args, a.seed, json!({ "split": "test" })))?;
    eprintln!(
        "best epoch {} (val_acc {:.4}); model written to {}",
        outcome.best_epoch,
        outcome.log[outcome.best_epoch].val_accuracy,
        a.out.display()
    );
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn score_and_write(
    records: &[PucchRecord],
    preds: &Predictions,
    decoder: &str,
    report_dir: &Path,
) -> Result<()> {
    let by_snr = group_reports(records, preds, GroupBy::Snr)?;
    let by_nue = group_reports(records, preds, GroupBy::NUe)?;
    write_reports(report_dir, decoder, preds.delta, &by_snr, &by_nue)?;
    let overall = overall_report(records, preds)?;
    println!("{decoder} delta={} subset_acc={:.4} n={}", preds.delta, overall.subset_accuracy, overall.n);
    for g in &by_snr {
        if let crate::evalmetrics::GroupKey::Snr(s) = g.key {
            println!("  snr {:>6.2} dB  subset_acc {:.4}  n {}", s, g.report.subset_accuracy, g.report.n);
        }
    }
    Ok(())
}

/// Metadata scale stored in a model's training manifest, if any.
fn recorded_meta_scale(model: &Path) -> Result<Option<f32>> {
    let text = match std::fs::read_to_string(sidecar(model)) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::format(e.line() as u64, format!("{}: {e}", sidecar(model).display())))?;
    Ok(v["details"]["meta_scale"].as_f64().map(|m| m as f32))
}

fn cmd_eval(a: &EvalArgs, args: &[String]) -> Result<()> {
    let decision: Decision = a.decision.parse()?;
    let deltas = parse_deltas(&a.delta)?;
    let model = load_model(&a.model)?;
    let records = read_dataset(&a.data)?;
    let base = base_sequence(BaseSequenceId::default())?;
    let meta_scale = match a.meta_scale {
        Some(m) => m,
        None => recorded_meta_scale(&a.model)?.unwrap_or(1.0),
    };
    let decoder = Decoder::Nn {
        model: &model,
        decision,
        meta_scale,
    };
    for &delta in &deltas {
        let preds = predict(&records, &base, decoder, delta, a.seed)?;
        score_and_write(&records, &preds, "nn", &a.report)?;
        append_dir_manifest(
            &a.report,
            invocation(
                "eval",
                args,
                a.seed,
                json!({
                    "series": format!("nn_delta{delta}"),
                    "decision": decision.to_string(),
                    "meta_scale": meta_scale,
                }),
            ),
        )?;
    }
    Ok(())
}

fn cmd_baseline(a: &BaselineArgs, args: &[String]) -> Result<()> {
    let deltas = parse_deltas(&a.delta)?;
    let records = read_dataset(&a.data)?;
    let base = base_sequence(BaseSequenceId::new(a.base_group)?)?;
    let decoder = Decoder::Dft(DftDecoder { threshold: a.threshold });
    for &delta in &deltas {
        let preds = predict(&records, &base, decoder, delta, a.seed)?;
        score_and_write(&records, &preds, "dft", &a.report)?;
        append_dir_manifest(
            &a.report,
            invocation("baseline", args, a.seed, json!({ "series": format!("dft_delta{delta}") })),
        )?;
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs, args: &[String]) -> Result<()> {
    let (snr_rows, nue_rows) = merge_reports(&a.input)?;
    append_dir_manifest(&a.input, invocation("report", args, 0, json!({ "series": "merged" })))?;
    eprintln!(
        "merged {} SNR rows and {} UE-count rows in {}",
        snr_rows,
        nue_rows,
        a.input.display()
    );
    Ok(())
}
