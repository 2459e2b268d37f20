use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mlpst::error::{Error, Result};
use mlpst::eval::{evaluate, Forecaster, HistoricalAverage, MlpstForecaster, Persistence};
use mlpst::ingest::{aggregate, read_trips, synth, GridDataset, GridSpec, SynthKind, SynthSpec};
use mlpst::training::{chronological_split, train, Split};
use mlpst::{param_count, slice_at, GridMap, ModelParams, RunConfig, TrainedModel};

const THREADS_VAR: &str = "MLPST_THREADS";

#[derive(Parser)]
#[command(name = "mlpst", version, about = "All-MLP spatio-temporal traffic flow forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate trip records into an STGRID1 grid file.
    Ingest {
        #[arg(long)]
        trips: PathBuf,
        /// JSON grid spec: lat_min, lat_max, lon_min, lon_max, height, width, interval_seconds, start, end.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic STGRID1 grid file.
    Synth(SynthArgs),
    /// Train a model; writes the best checkpoint to OUT and the epoch log to OUT.log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint or a baseline on one split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Phase length of the historical-average baseline, in steps.
        #[arg(long, default_value_t = 24)]
        period: usize,
        /// Settings that fix the split when no checkpoint is given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        /// Dataset label for the report; defaults to the file stem.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Predict step AT from the maps before it and write a one-map STGRID1 file.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        at: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print parameter counts by module for a checkpoint or a config.
    Inspect {
        #[arg(long, conflicts_with_all = ["config", "set"])]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Override one config key, e.g. `--set depth=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 10)]
    height: usize,
    #[arg(long, default_value_t = 20)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    channels: usize,
    #[arg(long, default_value_t = 672)]
    steps: usize,
    #[arg(long, default_value_t = 24)]
    period: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Constant,
    Periodic,
    Trend,
    Diffusive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Persistence,
    Havg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
}

fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(p) = path {
        pairs = RunConfig::load(p)?.to_pairs();
    }
    for s in &overrides.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    RunConfig::from_pairs(&pairs)
}

fn check_shape(cfg: &RunConfig, ds: &GridDataset) -> Result<()> {
    let m = &cfg.model;
    if (m.height, m.width, m.channels) != (ds.height, ds.width, ds.channels) {
        return Err(Error::config(format!(
            "model is {}x{}x{} but the data is {}x{}x{}",
            m.height, m.width, m.channels, ds.height, ds.width, ds.channels
        )));
    }
    Ok(())
}

fn cmd_ingest(trips: &Path, spec: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec)
        .map_err(|e| Error::config(format!("cannot read grid spec {}: {e}", spec.display())))?;
    let spec = GridSpec::from_json(&text)?;
    let (records, read) = read_trips(BufReader::new(File::open(trips)?))?;
    let (ds, stats) = aggregate(&records, &spec)?;
    ds.write(out)?;
    eprintln!(
        "rows {}  unparseable {}  out_of_box {}  out_of_range {}  inverted_times {}  counted {}",
        read.rows, read.unparseable, stats.out_of_box, stats.out_of_range, stats.inverted_times, stats.counted
    );
    println!("wrote {} maps of {}x{}x2 to {}", ds.steps(), ds.height, ds.width, out.display());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let kind = match a.kind {
        Kind::Constant => SynthKind::Constant,
        Kind::Periodic => SynthKind::Periodic,
        Kind::Trend => SynthKind::Trend,
        Kind::Diffusive => SynthKind::Diffusive,
    };
    let ds = synth(&SynthSpec {
        kind,
        height: a.height,
        width: a.width,
        channels: a.channels,
        steps: a.steps,
        period: a.period,
        noise: a.noise,
        seed: a.seed,
    })?;
    ds.write(&a.out)?;
    println!("wrote {} {kind} maps to {}", ds.steps(), a.out.display());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_train(data: &Path, config: Option<&Path>, overrides: &Overrides, out: &Path) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let ds = GridDataset::read(data)?;
    check_shape(&cfg, &ds)?;
    let log_path = with_suffix(out, ".log");
    let mut log = File::create(&log_path)?;
    let mut log_err = None;
    let outcome = train(&ds.maps, &cfg.model, &cfg.train, |r| {
        eprintln!("{r}");
        if let Err(e) = writeln!(log, "{r}") {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let model = TrainedModel {
        config: cfg,
        params: outcome.params,
        norm: outcome.norm,
        train_seconds: outcome.train_seconds,
    };
    model.save(out)?;
    let best = outcome.history[outcome.best_epoch - 1];
    println!(
        "best_epoch {} val_mae {} epochs {} train_s {:.3}",
        outcome.best_epoch,
        best.val_mae,
        outcome.history.len(),
        outcome.train_seconds
    );
    Ok(())
}

fn pick(split: &Split, which: SplitName) -> &[usize] {
    match which {
        SplitName::Train => &split.train,
        SplitName::Val => &split.val,
        SplitName::Test => &split.test,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    data: &Path,
    checkpoint: Option<&Path>,
    baseline: Option<Baseline>,
    period: usize,
    config: Option<&Path>,
    overrides: &Overrides,
    which: SplitName,
    batch_size: usize,
    dataset: Option<&str>,
) -> Result<()> {
    let ds = GridDataset::read(data)?;
    let (cfg, model) = match checkpoint {
        Some(p) => {
            let m = TrainedModel::load(p)?;
            (m.config.clone(), Some(m))
        }
        None => (load_config(config, overrides)?, None),
    };
    let forecaster: Box<dyn Forecaster> = match (baseline, model) {
        (Some(Baseline::Persistence), _) => Box::new(Persistence),
        (Some(Baseline::Havg), _) => Box::new(HistoricalAverage { period }),
        (None, Some(m)) => {
            check_shape(&m.config, &ds)?;
            Box::new(MlpstForecaster {
                config: m.config.model,
                params: m.params,
                norm: m.norm,
                train_seconds: Some(m.train_seconds),
            })
        }
        (None, None) => {
            return Err(Error::config("evaluate needs --checkpoint or --baseline"));
        }
    };
    // The split matches the one used in training; baselines share it.
    let min_anchor = cfg.model.temporal.min_anchor().max(forecaster.min_anchor());
    let split = chronological_split(ds.steps(), min_anchor, &cfg.train.split)?;
    let name = dataset.map(str::to_string).unwrap_or_else(|| {
        data.file_stem()
            .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let report = evaluate(forecaster.as_ref(), &ds.maps, pick(&split, which), batch_size, &name)?;
    println!("{}", mlpst::EvalReport::CSV_HEADER);
    println!("{}", report.csv_row());
    println!();
    print!("{report}");
    Ok(())
}

fn cmd_predict(data: &Path, checkpoint: &Path, at: usize, out: &Path) -> Result<()> {
    let model = TrainedModel::load(checkpoint)?;
    let ds = GridDataset::read(data)?;
    check_shape(&model.config, &ds)?;
    if at > ds.steps() {
        return Err(Error::data(format!("--at {at} is past the {} maps in the file", ds.steps())));
    }
    // Surface a clear history error before scaling.
    slice_at(&ds.maps, at, &model.config.model.temporal)?;
    let f = MlpstForecaster {
        config: model.config.model.clone(),
        params: model.params,
        norm: model.norm,
        train_seconds: None,
    };
    let pred: GridMap = f.predict(&ds.maps, at)?;
    let (h, w, d) = pred.dims();
    GridDataset::new(h, w, d, ds.interval_seconds, ds.bbox, vec![pred])?.write(out)?;
    println!("wrote prediction for step {at} to {}", out.display());
    Ok(())
}

fn cmd_inspect(checkpoint: Option<&Path>, config: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let (cfg, params) = match checkpoint {
        Some(p) => {
            let m = TrainedModel::load(p)?;
            (m.config, m.params)
        }
        None => {
            let cfg = load_config(config, overrides)?;
            let params = ModelParams::init(&cfg.model, cfg.train.seed)?;
            (cfg, params)
        }
    };
    let m = &cfg.model;
    println!(
        "grid {}x{}x{}  patch {}  C_S {}  C_T {}  expansion {}  depth {}  variant {}  share_layers {}  share_temporal {}",
        m.height,
        m.width,
        m.channels,
        m.patch,
        m.spatial_channels,
        m.temporal_channels,
        m.expansion,
        m.depth,
        m.variant,
        m.share_layers,
        m.share_temporal
    );
    println!("{}", param_count(&params));
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("{THREADS_VAR} must be a non-negative integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::internal(format!("cannot start thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Ingest { trips, spec, out } => cmd_ingest(trips, spec, out),
        Command::Synth(a) => cmd_synth(a),
        Command::Train {
            data,
            config,
            overrides,
            out,
        } => cmd_train(data, config.as_deref(), overrides, out),
        Command::Evaluate {
            data,
            checkpoint,
            baseline,
            period,
            config,
            overrides,
            split,
            batch_size,
            dataset,
        } => cmd_evaluate(
            data,
            checkpoint.as_deref(),
            *baseline,
            *period,
            config.as_deref(),
            overrides,
            *split,
            *batch_size,
            dataset.as_deref(),
        ),
        Command::Predict {
            data,
            checkpoint,
            at,
            out,
        } => cmd_predict(data, checkpoint, *at, out),
        Command::Inspect {
            checkpoint,
            config,
            overrides,
        } => cmd_inspect(checkpoint.as_deref(), config.as_deref(), overrides),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mlpst: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
