//! `aerosense`: simulate, label, train and evaluate the flow predictor from
//! the command line. Every command writes a `<output>.manifest.json` next to
//! each artifact it produces.

mod config;
mod error;
mod manifest;

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aerosense::features::{build_situation, Normalizer};
use aerosense::geometry::AirspaceGeometry;
use aerosense::ingest::{
    build_labeled_samples, build_snapshot, chronological_split, parse_labeled_samples, parse_trajectory_stream,
    sort_records, write_jsonl, write_trajectory_csv, LabeledSample, ParseOptions, TrajectoryRecord,
};
use aerosense::model::{ModelCheckpoint, Pooling, Predictor};
use aerosense::sim::{simulate, SimSidecar};
use aerosense::training::{
    build_situations, dayparting_evaluate, evaluate, export_attention, group_removal_variants, run_ablation,
    standard_variants, state_importance, train, AblationData,
};
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use error::CliError;
use manifest::Recorder;

const FORMATS: &str = "\
File formats:
  trajectory CSV   header timestamp,aircraft_id,latitude,longitude,altitude_m,ground_speed_mps,
                   vertical_speed_mps,heading_deg,dialed_speed_mps,dialed_altitude_m,origin,
                   destination; timestamp in UTC seconds, heading in degrees from north
  samples JSONL    one labeled sample per line: {\"snapshot\": {\"time\", \"aircraft\"},
                   \"label\": {\"query_time\", \"horizon\", \"y_ap\", \"y_ar\"}}
  geometry JSON    {\"geometry_version\": 1, \"origin\": {latitude, longitude, altitude},
                   \"ap\"/\"ar\": {\"footprint\": [[lat, lon], ...], \"floor_m\", \"ceiling_m\"},
                   \"scope_margin_d\": m}
  checkpoint JSON  model weights, normalizer, feature config and geometry fingerprint
  config TOML      optional sections [sim] [labeling] [features] [model] [train] [split]
                   [ablation] plus top-level seed, horizon_min, error_budget; flags win

Exit status: 0 success, 2 usage or configuration error, 3 data error,
4 training diverged.";

#[derive(Debug, Parser)]
#[command(name = "aerosense", version, about = "Terminal-airspace traffic flow prediction", after_long_help = FORMATS)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Prediction horizon in minutes.
    #[arg(long, global = true)]
    horizon_min: Option<i64>,
    /// Airspace geometry JSON; defaults to the built-in terminal.
    #[arg(long, global = true)]
    geometry: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelInput {
    /// Checkpoint JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic trajectory stream.
    Simulate {
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Snapshot and label a trajectory stream.
    Label {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chronological train/val/test split of labeled samples.
    Split {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit normalization statistics on training samples.
    FitFeatures {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes the checkpoint and `<out>.log.jsonl`.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        pooling: Option<Pooling>,
    },
    /// MAE, RMSE and R² per airspace as CSV.
    Evaluate {
        #[command(flatten)]
        model: ModelInput,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Round predictions to whole aircraft before scoring.
        #[arg(long)]
        round: bool,
    },
    /// MAE in twelve two-hour local-time bins.
    Daypart {
        #[command(flatten)]
        model: ModelInput,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict flows for one snapshot time.
    Predict {
        #[command(flatten)]
        model: ModelInput,
        #[command(flatten)]
        source: SnapshotSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the head-averaged attention matrix of one snapshot.
    Attention {
        #[command(flatten)]
        model: ModelInput,
        #[command(flatten)]
        source: SnapshotSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient importance of each state dimension and group.
    Importance {
        #[command(flatten)]
        model: ModelInput,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and test the ablation variants over several seeds.
    Ablate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// `standard`, `groups` or `all`.
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["records", "samples"])))]
struct SnapshotSource {
    /// Trajectory CSV to snapshot at `--at`.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Samples JSONL holding a snapshot taken at `--at`.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Snapshot time, UTC seconds.
    #[arg(long)]
    at: i64,
}

#[derive(Serialize)]
struct PredictionOutput {
    time: i64,
    cardinality: usize,
    y_ap: f64,
    y_ar: f64,
}

#[derive(Serialize)]
struct ErrorOutput<'a> {
    error: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let out = ErrorOutput { error: e.kind(), message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&out).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_geometry(path: Option<&Path>) -> Result<AirspaceGeometry, CliError> {
    match path {
        None => Ok(AirspaceGeometry::default_terminal()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("geometry {}: {e}", p.display())))?;
            AirspaceGeometry::from_json(&text).map_err(|e| CliError::Usage(format!("geometry {}: {e}", p.display())))
        }
    }
}

fn read_records(path: &Path, budget: f64) -> Result<Vec<TrajectoryRecord>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let parsed = parse_trajectory_stream(BufReader::new(file), ParseOptions { error_budget: budget })?;
    for r in &parsed.rejected {
        eprintln!("skipped {r}");
    }
    let mut records = parsed.records;
    sort_records(&mut records);
    Ok(records)
}

fn read_samples(path: &Path) -> Result<Vec<LabeledSample>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_labeled_samples(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    ModelCheckpoint::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_jsonl(items, &mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?.resolve(cli.seed, cli.horizon_min)?;
    let geometry = load_geometry(cli.geometry.as_deref())?;
    let predictor = |m: &ModelInput, rec: &mut Recorder| -> Result<Predictor, CliError> {
        rec.input(&m.model);
        Ok(Predictor::new(read_checkpoint(&m.model)?, &geometry)?)
    };

    match cli.command {
        Command::Simulate { days, out } => {
            let mut rec = Recorder::new("simulate");
            if let Some(d) = days {
                cfg.sim = cfg.sim.with_days(d);
            }
            let records = simulate(&cfg.sim, &geometry)?;
            let mut csv = Vec::new();
            write_trajectory_csv(&records, &mut csv)?;
            let flights = {
                let mut ids: Vec<&str> = records.iter().map(|r| r.aircraft_id.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                ids.len()
            };
            let sidecar = SimSidecar {
                config: cfg.sim.clone(),
                geometry_fingerprint: geometry.fingerprint(),
                flights,
                records: records.len(),
            };
            rec.output(&out, &csv)?;
            rec.output(&with_suffix(&out, ".sim.json"), &json_bytes(&sidecar)?)?;
            rec.finish(&cfg)
        }
        Command::Label { records, out } => {
            let mut rec = Recorder::new("label");
            rec.input(&records);
            let stream = read_records(&records, cfg.error_budget)?;
            let samples = build_labeled_samples(&stream, &geometry, &cfg.labeling)?;
            if samples.is_empty() {
                return Err(CliError::Data(format!("{} spans less than one label horizon", records.display())));
            }
            rec.output(&out, &jsonl_bytes(&samples)?)?;
            rec.finish(&cfg)
        }
        Command::Split { samples, out_dir } => {
            let mut rec = Recorder::new("split");
            rec.input(&samples);
            let all = read_samples(&samples)?;
            let s = &cfg.split;
            let (tr, va, te) = chronological_split(&all, (s.train, s.val, s.test)).map_err(|e| match e {
                aerosense::ingest::IngestError::InvalidRatios(_) => CliError::Usage(e.to_string()),
                other => CliError::Data(other.to_string()),
            })?;
            for (name, part) in [("train", tr), ("val", va), ("test", te)] {
                rec.output(&out_dir.join(format!("{name}.jsonl")), &jsonl_bytes(&part)?)?;
            }
            rec.finish(&cfg)
        }
        Command::FitFeatures { samples, out } => {
            let mut rec = Recorder::new("fit-features");
            rec.input(&samples);
            let all = read_samples(&samples)?;
            let sits = build_situations(&all, &geometry, &cfg.features);
            let normalizer = Normalizer::fit_situations(&sits, &cfg.features.layout)?;
            rec.output(&out, &json_bytes(&normalizer)?)?;
            rec.finish(&cfg)
        }
        Command::Train { train: train_path, val, out, epochs, learning_rate, batch_size, pooling } => {
            let mut rec = Recorder::new("train");
            rec.input(&train_path);
            rec.input(&val);
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            if pooling.is_some() {
                cfg.train.pooling = pooling;
            }
            let tr = read_samples(&train_path)?;
            let va = read_samples(&val)?;
            let outcome = train(&tr, &va, &geometry, &cfg.features, &cfg.model, &cfg.train)?;
            let mut ckpt = outcome.checkpoint.to_json();
            ckpt.push('\n');
            rec.output(&out, ckpt.as_bytes())?;
            rec.output(&with_suffix(&out, ".log.jsonl"), &jsonl_bytes(&outcome.log)?)?;
            eprintln!("best epoch {} of {}", outcome.best_epoch, outcome.log.len());
            rec.finish(&cfg)
        }
        Command::Evaluate { model, samples, out, round } => {
            let mut rec = Recorder::new("evaluate");
            let p = predictor(&model, &mut rec)?;
            rec.input(&samples);
            let report = evaluate(&p, &read_samples(&samples)?, &geometry, round)?;
            rec.output(&out, report.to_csv().as_bytes())?;
            rec.finish(&cfg)
        }
        Command::Daypart { model, samples, out } => {
            let mut rec = Recorder::new("daypart");
            let p = predictor(&model, &mut rec)?;
            rec.input(&samples);
            let tz = p.checkpoint.features.tz_offset;
            let report = dayparting_evaluate(&p, &read_samples(&samples)?, &geometry, tz)?;
            rec.output(&out, report.to_csv().as_bytes())?;
            rec.finish(&cfg)
        }
        Command::Predict { model, source, out } => {
            let mut rec = Recorder::new("predict");
            let p = predictor(&model, &mut rec)?;
            let situation = situation_at(&source, &p, &geometry, &cfg, &mut rec)?;
            let pred = p.forward(&situation)?;
            let output = PredictionOutput {
                time: source.at,
                cardinality: pred.cardinality,
                y_ap: pred.y_ap,
                y_ar: pred.y_ar,
            };
            let bytes = json_bytes(&output)?;
            print!("{}", String::from_utf8_lossy(&bytes));
            if let Some(out) = out {
                rec.output(&out, &bytes)?;
                rec.finish(&cfg)?;
            }
            Ok(())
        }
        Command::Attention { model, source, out } => {
            let mut rec = Recorder::new("attention");
            let p = predictor(&model, &mut rec)?;
            let situation = situation_at(&source, &p, &geometry, &cfg, &mut rec)?;
            let export = export_attention(&p, &situation)?;
            rec.output(&out, &json_bytes(&export)?)?;
            rec.finish(&cfg)
        }
        Command::Importance { model, samples, out } => {
            let mut rec = Recorder::new("importance");
            let p = predictor(&model, &mut rec)?;
            rec.input(&samples);
            let report = state_importance(&p, &read_samples(&samples)?, &geometry)?;
            rec.output(&out, &json_bytes(&report)?)?;
            rec.finish(&cfg)
        }
        Command::Ablate { train: train_path, val, test, out, seeds, variants, epochs } => {
            let mut rec = Recorder::new("ablate");
            for p in [&train_path, &val, &test] {
                rec.input(p);
            }
            if let Some(s) = seeds {
                cfg.ablation.seeds = s;
            }
            if let Some(v) = variants {
                cfg.ablation.variants = v;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if cfg.ablation.seeds.is_empty() {
                return Err(CliError::Usage("at least one ablation seed is required".into()));
            }
            let list = match cfg.ablation.variants.as_str() {
                "standard" => standard_variants(),
                "groups" => group_removal_variants(),
                "all" => standard_variants().into_iter().chain(group_removal_variants()).collect(),
                other => return Err(CliError::Usage(format!("unknown variant set {other:?} (standard, groups, all)"))),
            };
            let (tr, va, te) = (read_samples(&train_path)?, read_samples(&val)?, read_samples(&test)?);
            let data = AblationData { train: &tr, val: &va, test: &te, geometry: &geometry };
            let table = run_ablation(&data, &cfg.features, &cfg.model, &cfg.train, &list, &cfg.ablation.seeds, |row| {
                eprintln!(
                    "{} seed {}: AP MAE {:.3}, AR MAE {:.3}",
                    row.variant, row.seed, row.metrics.ap.mae, row.metrics.ar.mae
                );
            })?;
            rec.output(&out, table.to_csv().as_bytes())?;
            rec.output(&with_suffix(&out, ".json"), &json_bytes(&table)?)?;
            rec.finish(&cfg)
        }
    }
}

fn situation_at(
    source: &SnapshotSource,
    p: &Predictor,
    geometry: &AirspaceGeometry,
    cfg: &RunConfig,
    rec: &mut Recorder,
) -> Result<aerosense::features::AirspaceSituation, CliError> {
    let snapshot = if let Some(path) = &source.records {
        rec.input(path);
        build_snapshot(&read_records(path, cfg.error_budget)?, source.at, cfg.labeling.staleness_limit)
    } else if let Some(path) = &source.samples {
        rec.input(path);
        read_samples(path)?
            .into_iter()
            .find(|s| s.snapshot.time == source.at)
            .map(|s| s.snapshot)
            .ok_or_else(|| CliError::Data(format!("{} has no snapshot at {}", path.display(), source.at)))?
    } else {
        return Err(CliError::Usage("one of --records or --samples is required".into()));
    };
    Ok(build_situation(&snapshot, geometry, &p.checkpoint.features))
}
