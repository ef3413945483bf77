//! Subcommand dispatch and IO plumbing.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Every file
//! output goes through an atomic write, so interrupted runs leave no
//! partial files, and identical invocations produce identical bytes.

use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, ValueEnum};

use illumest::chroma::{build_histogram, Feature, HistogramGeometry, Weighting};
use illumest::error::Error;
use illumest::evaluation::{
    cross_validate, evaluate, load_samples, EvaluationReport, GrayWorldEstimator, GroundTruthTable,
};
use illumest::ffcc::{train, FfccModel, LabeledSample, TrainConfig};
use illumest::grayness::{GiConfig, GiEstimator};
use illumest::imaging::{apply_white_balance, load_image, save_png16};
use illumest::synth::{generate_dataset, DatasetRanges};
use illumest::util::write_atomic;
use illumest::{IlluminantEstimator, PreprocessConfig};

use crate::args::{
    Cli, Command, CorrectArgs, EstimateArgs, EvaluateArgs, Method, MethodArgs, SynthArgs,
    TrainArgs,
};

pub enum RunError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

/// Flag values are validated before any work starts, so a range failure
/// here is a usage error, not a runtime one.
fn usage_if_invalid<T>(r: illumest::Result<T>) -> Result<T, RunError> {
    r.map_err(|e| match e {
        Error::InvalidConfig(msg) => RunError::Usage(msg),
        other => RunError::Runtime(other),
    })
}

pub fn run() -> i32 {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(cli, &matches) {
        Ok(()) => 0,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(RunError::Runtime(err)) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn dispatch(cli: Cli, matches: &ArgMatches) -> Result<(), RunError> {
    init_jobs(cli.jobs)?;
    let verbose = cli.verbose;
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match cli.command {
        Command::Estimate(mut a) => {
            merge_config(&a.config.clone(), sub, |k, v, m| {
                apply_method_key(&mut a.method, k, v, m)
            })?;
            cmd_estimate(&a, verbose)
        }
        Command::Train(mut a) => {
            let config = a.config.clone();
            merge_config(&config, sub, |k, v, m| apply_train_key(&mut a, k, v, m))?;
            cmd_train(&a, verbose)
        }
        Command::Evaluate(mut a) => {
            merge_config(&a.config.clone(), sub, |k, v, m| {
                apply_method_key(&mut a.method, k, v, m)
            })?;
            cmd_evaluate(&a, verbose)
        }
        Command::Correct(mut a) => {
            merge_config(&a.config.clone(), sub, |k, v, m| {
                apply_method_key(&mut a.method, k, v, m)
            })?;
            cmd_correct(&a, verbose)
        }
        Command::Synth(a) => cmd_synth(&a, verbose),
    }
}

#[cfg(feature = "parallel")]
fn init_jobs(jobs: Option<usize>) -> Result<(), RunError> {
    let Some(j) = jobs else { return Ok(()) };
    if j == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(j)
        .build_global()
        .map_err(|e| RunError::Runtime(Error::InvalidConfig(format!("thread pool: {e}"))))
}

#[cfg(not(feature = "parallel"))]
fn init_jobs(jobs: Option<usize>) -> Result<(), RunError> {
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// True when the flag still holds its default (or env) value, so a
/// config-file entry may override it.
fn defaulted(m: &ArgMatches, id: &str) -> bool {
    !matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

/// Applies `key=value` lines from `--config`; explicit command-line
/// flags win over file entries.
fn merge_config<F>(config: &Option<PathBuf>, sub: &ArgMatches, mut apply: F) -> Result<(), RunError>
where
    F: FnMut(&str, &str, &ArgMatches) -> Result<bool, String>,
{
    let Some(path) = config else { return Ok(()) };
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| usage(format!("{}:{}: {msg}", path.display(), idx + 1));
        let Some((key, value)) = line.split_once('=') else {
            return Err(at(format!("expected key=value, got \"{line}\"")));
        };
        match apply(key.trim(), value.trim(), sub) {
            Ok(true) => {}
            Ok(false) => return Err(at(format!("unknown key \"{}\"", key.trim()))),
            Err(msg) => return Err(at(msg)),
        }
    }
    Ok(())
}

fn parse_into<T: std::str::FromStr>(slot: &mut T, value: &str) -> Result<(), String>
where
    T::Err: std::fmt::Display,
{
    *slot = value
        .parse()
        .map_err(|e| format!("bad value \"{value}\": {e}"))?;
    Ok(())
}

fn apply_method_key(
    args: &mut MethodArgs,
    key: &str,
    value: &str,
    m: &ArgMatches,
) -> Result<bool, String> {
    match key {
        "method" => {
            if defaulted(m, "method") {
                args.method = Method::from_str(value, true)?;
            }
        }
        "model" => {
            if defaulted(m, "model") {
                args.model = Some(PathBuf::from(value));
            }
        }
        "sigma" => {
            if defaulted(m, "sigma") {
                parse_into(&mut args.sigma, value)?;
            }
        }
        "top_fraction" => {
            if defaulted(m, "top_fraction") {
                parse_into(&mut args.top_fraction, value)?;
            }
        }
        "min_pixels" => {
            if defaulted(m, "min_pixels") {
                parse_into(&mut args.min_pixels, value)?;
            }
        }
        "epsilon" => {
            if defaulted(m, "epsilon") {
                parse_into(&mut args.epsilon, value)?;
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply_train_key(
    args: &mut TrainArgs,
    key: &str,
    value: &str,
    m: &ArgMatches,
) -> Result<bool, String> {
    match key {
        "learning_rate" => {
            if defaulted(m, "learning_rate") {
                parse_into(&mut args.learning_rate, value)?;
            }
        }
        "momentum" => {
            if defaulted(m, "momentum") {
                parse_into(&mut args.momentum, value)?;
            }
        }
        "epochs" => {
            if defaulted(m, "epochs") {
                parse_into(&mut args.epochs, value)?;
            }
        }
        "l2_filter" => {
            if defaulted(m, "l2_filter") {
                parse_into(&mut args.l2_filter, value)?;
            }
        }
        "l2_bias" => {
            if defaulted(m, "l2_bias") {
                parse_into(&mut args.l2_bias, value)?;
            }
        }
        "seed" => {
            if defaulted(m, "seed") {
                parse_into(&mut args.seed, value)?;
            }
        }
        "bins" => {
            if defaulted(m, "bins") {
                parse_into(&mut args.bins, value)?;
            }
        }
        "bin_size" => {
            if defaulted(m, "bin_size") {
                parse_into(&mut args.bin_size, value)?;
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn gi_config(margs: &MethodArgs) -> Result<GiConfig, RunError> {
    let cfg = GiConfig {
        sigma: margs.sigma,
        top_fraction: margs.top_fraction,
        min_pixels: margs.min_pixels,
        epsilon: margs.epsilon,
    };
    usage_if_invalid(cfg.validate())?;
    Ok(cfg)
}

fn build_estimator(margs: &MethodArgs) -> Result<Box<dyn IlluminantEstimator>, RunError> {
    match margs.method {
        Method::Gi => Ok(Box::new(GiEstimator::new(gi_config(margs)?))),
        Method::Grayworld => Ok(Box::new(GrayWorldEstimator)),
        Method::Ffcc => {
            let path = margs
                .model
                .as_ref()
                .ok_or_else(|| usage("--method ffcc requires --model <file>"))?;
            Ok(Box::new(FfccModel::load(path)?))
        }
    }
}

/// A file stays itself; a directory expands to its .png/.ppm entries
/// sorted by name.
fn collect_inputs(input: &Path) -> Result<Vec<PathBuf>, RunError> {
    let meta = std::fs::metadata(input).map_err(|source| Error::Io {
        path: input.to_path_buf(),
        source,
    })?;
    if !meta.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = std::fs::read_dir(input).map_err(|source| Error::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: input.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png" | "ppm")) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(RunError::Runtime(Error::InvalidConfig(format!(
            "no .png or .ppm images in {}",
            input.display()
        ))));
    }
    paths.sort();
    Ok(paths)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), RunError> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs, verbose: u8) -> Result<(), RunError> {
    let estimator = build_estimator(&args.method)?;
    let inputs = collect_inputs(&args.input)?;
    if args.dump_histogram.is_some() && inputs.len() != 1 {
        return Err(usage("--dump-histogram needs a single-image input"));
    }
    let cfg = PreprocessConfig::default();
    let rows = map_ordered(&inputs, |path| -> Result<String, Error> {
        let img = load_image(path, &cfg)?;
        let est = estimator.estimate(&img)?;
        let [r, g, b] = est.rgb();
        Ok(format!("{},{r:.6},{g:.6},{b:.6}", path.display()))
    });
    let mut text = String::from("path,r,g,b\n");
    for row in rows {
        text.push_str(&row?);
        text.push('\n');
    }
    emit(&args.out, &text)?;
    if let Some(dump) = &args.dump_histogram {
        let img = load_image(&inputs[0], &cfg)?;
        let hist = build_histogram(
            &img,
            HistogramGeometry::default(),
            Feature::Intensity,
            Weighting::Luminance,
        )?;
        write_atomic(dump, hist.dump_text().as_bytes())?;
        if verbose > 0 {
            eprintln!("histogram written to {}", dump.display());
        }
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, verbose: u8) -> Result<(), RunError> {
    let origin = -(args.bins as f64 / 2.0) * args.bin_size;
    let geom = usage_if_invalid(HistogramGeometry::new(args.bins, args.bin_size, (origin, origin)))?;
    let tcfg = TrainConfig {
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        epochs: args.epochs,
        l2_filter: args.l2_filter,
        l2_bias: args.l2_bias,
        seed: args.seed,
    };
    usage_if_invalid(tcfg.validate())?;
    let table = GroundTruthTable::load(&args.gt)?;
    let cfg = PreprocessConfig::default();
    let results = map_ordered(table.rows(), |(name, truth)| -> Result<LabeledSample, Error> {
        let img = load_image(&args.data.join(name), &cfg)?;
        LabeledSample::from_image(&img, truth, geom, name.as_str())
    });
    let samples = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (model, trace) = train(&samples, &tcfg)?;
    if verbose > 0 {
        eprintln!(
            "trained on {} samples over {} epochs, loss {:.6} -> {:.6}",
            samples.len(),
            trace.len(),
            trace.first().copied().unwrap_or(f64::NAN),
            trace.last().copied().unwrap_or(f64::NAN)
        );
    }
    model.save(&args.out)?;
    Ok(())
}

fn report_json(report: &EvaluationReport) -> String {
    let per: Vec<serde_json::Value> = report
        .per_image
        .iter()
        .map(|(name, err)| serde_json::json!({ "image": name, "error_degrees": err }))
        .collect();
    let doc = serde_json::json!({
        "count": report.per_image.len(),
        "per_image": per,
        "aggregates": {
            "mean": report.aggregates.mean,
            "median": report.aggregates.median,
            "trimean": report.aggregates.trimean,
            "best25_mean": report.aggregates.best25_mean,
            "worst25_mean": report.aggregates.worst25_mean,
        },
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

fn cmd_evaluate(args: &EvaluateArgs, verbose: u8) -> Result<(), RunError> {
    if matches!(args.folds, Some(k) if k < 2) {
        return Err(usage("--folds must be at least 2"));
    }
    let table = GroundTruthTable::load(&args.gt)?;
    let samples = load_samples(&args.data, &table, &PreprocessConfig::default())?;
    if verbose > 0 {
        eprintln!("loaded {} samples", samples.len());
    }
    let report = match args.folds {
        None => {
            let estimator = build_estimator(&args.method)?;
            evaluate(estimator.as_ref(), &samples)?
        }
        Some(k) => match args.method.method {
            Method::Ffcc => cross_validate(&samples, k, args.seed, |train_set| {
                let geom = HistogramGeometry::default();
                let labeled = train_set
                    .iter()
                    .map(|s| LabeledSample::from_image(&s.image, &s.truth, geom, s.path.as_str()))
                    .collect::<Result<Vec<_>, _>>()?;
                let (model, _) = train(&labeled, &TrainConfig::default())?;
                Ok(Box::new(model) as Box<dyn IlluminantEstimator>)
            })?,
            Method::Gi => {
                let cfg = gi_config(&args.method)?;
                cross_validate(&samples, k, args.seed, |_| {
                    Ok(Box::new(GiEstimator::new(cfg)) as Box<dyn IlluminantEstimator>)
                })?
            }
            Method::Grayworld => cross_validate(&samples, k, args.seed, |_| {
                Ok(Box::new(GrayWorldEstimator) as Box<dyn IlluminantEstimator>)
            })?,
        },
    };
    let text = if args.json {
        report_json(&report)
    } else {
        report.to_csv()
    };
    emit(&args.out, &text)
}

fn cmd_correct(args: &CorrectArgs, verbose: u8) -> Result<(), RunError> {
    let estimator = build_estimator(&args.method)?;
    let img = load_image(&args.input, &PreprocessConfig::default())?;
    let est = estimator.estimate(&img)?;
    if verbose > 0 {
        let [r, g, b] = est.rgb();
        eprintln!("estimate: {r:.6},{g:.6},{b:.6}");
    }
    let balanced = apply_white_balance(&img, &est, 1.0)?;
    save_png16(&balanced, &args.out)?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs, verbose: u8) -> Result<(), RunError> {
    let ranges = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            DatasetRanges::from_config_text(&text)?
        }
        None => DatasetRanges::default(),
    };
    let rows = generate_dataset(&args.out, args.count, &ranges, args.seed)?;
    if verbose > 0 {
        eprintln!("wrote {} scenes to {}", rows.len(), args.out.display());
    }
    Ok(())
}
