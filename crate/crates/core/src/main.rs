use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hexlogi::pipeline::{self, ExportInputs, PipelineConfig};
use hexlogi::{Error, Result};

#[derive(Parser)]
#[command(name = "hexlogi", version, about = "Delivery service-time modelling over hexagonal city cells")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hexagonal grid resolution (0-15).
    #[arg(long, global = true)]
    resolution: Option<u8>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count whitelisted OSM tags per cell.
    IngestOsm {
        #[arg(long)]
        osm: Option<PathBuf>,
        #[arg(long)]
        whitelist: Option<PathBuf>,
        /// Cell feature file (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert route and package JSON into the stops CSV.
    ConvertLmrrc {
        #[arg(long)]
        routes: PathBuf,
        #[arg(long)]
        packages: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate stop service times per cell.
    IngestStops {
        #[arg(long)]
        stops: Option<PathBuf>,
        #[arg(long)]
        min_stops: Option<usize>,
        /// Cell aggregate file (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the boosted model and cross-validate it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        n_stages: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        min_samples_leaf: Option<usize>,
        #[arg(long)]
        k_folds: Option<usize>,
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        cv_out: Option<PathBuf>,
    },
    /// Cluster cells on the model's most important features.
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        n_clusters: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[arg(long)]
        assignment_out: Option<PathBuf>,
    },
    /// Write cells, predictions and clusters as GeoJSON.
    Export {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[arg(long)]
        cluster_report: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    stops: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    min_stops: Option<usize>,
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Error::InvalidArgument(format!("missing --{name} (or paths.{} in the config)", name.replace('-', "_"))))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn apply_data_overrides(cfg: &mut PipelineConfig, data: &DataArgs) {
    if let Some(n) = data.min_stops {
        cfg.min_stops_per_cell = n;
    }
}

fn data_paths(data: DataArgs, cfg: &PipelineConfig) -> Result<(PathBuf, PathBuf)> {
    Ok((pick(data.stops, &cfg.paths.stops, "stops")?, pick(data.features, &cfg.paths.features, "features")?))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(r) = cli.resolution {
        cfg.resolution = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }

    match cli.command {
        Command::IngestOsm { osm, whitelist, out } => {
            if whitelist.is_some() {
                cfg.whitelist_path = whitelist;
            }
            cfg.validate()?;
            let osm = pick(osm, &cfg.paths.osm, "osm")?;
            let out = pick(out, &cfg.paths.features, "out")?;
            print_json(&pipeline::ingest_osm(&osm, &out, &cfg)?)
        }
        Command::ConvertLmrrc { routes, packages, out } => {
            let out = pick(out, &cfg.paths.stops, "out")?;
            print_json(&pipeline::convert_lmrrc_files(&routes, &packages, &out)?)
        }
        Command::IngestStops { stops, min_stops, out } => {
            if let Some(n) = min_stops {
                cfg.min_stops_per_cell = n;
            }
            cfg.validate()?;
            let stops = pick(stops, &cfg.paths.stops, "stops")?;
            let out = pick(out, &cfg.paths.aggregates, "out")?;
            print_json(&pipeline::ingest_stops(&stops, &out, &cfg)?)
        }
        Command::Train { data, n_stages, learning_rate, max_depth, min_samples_leaf, k_folds, model_out, cv_out } => {
            apply_data_overrides(&mut cfg, &data);
            if let Some(v) = n_stages {
                cfg.fit.n_stages = v;
            }
            if let Some(v) = learning_rate {
                cfg.fit.learning_rate = v;
            }
            if let Some(v) = max_depth {
                cfg.fit.max_depth = v;
            }
            if let Some(v) = min_samples_leaf {
                cfg.fit.min_samples_leaf = v;
            }
            if let Some(v) = k_folds {
                cfg.k_folds = v;
            }
            cfg.validate()?;
            let (stops, features) = data_paths(data, &cfg)?;
            let model_out = pick(model_out, &cfg.paths.model, "model-out")?;
            let cv_out = pick(cv_out, &cfg.paths.cv_report, "cv-out")?;
            let (_, report) = pipeline::train(&stops, &features, &model_out, &cv_out, &cfg)?;
            print_json(&report)
        }
        Command::Cluster { data, model, n_clusters, top_k, normalize, report_out, assignment_out } => {
            apply_data_overrides(&mut cfg, &data);
            if let Some(v) = n_clusters {
                cfg.n_clusters = v;
            }
            if let Some(v) = top_k {
                cfg.top_k_features = v;
            }
            cfg.normalize_cluster_features |= normalize;
            cfg.validate()?;
            let (stops, features) = data_paths(data, &cfg)?;
            let model = pick(model, &cfg.paths.model, "model")?;
            let report_out = pick(report_out, &cfg.paths.cluster_report, "report-out")?;
            let assignment_out = pick(assignment_out, &cfg.paths.assignment, "assignment-out")?;
            let (report, _) = pipeline::cluster(&model, &features, &stops, &report_out, &assignment_out, &cfg)?;
            print_json(&report)
        }
        Command::Export { data, model, assignment, cluster_report, out } => {
            apply_data_overrides(&mut cfg, &data);
            cfg.validate()?;
            let (stops, features) = data_paths(data, &cfg)?;
            let model = pick(model, &cfg.paths.model, "model")?;
            let assignment = pick(assignment, &cfg.paths.assignment, "assignment")?;
            let cluster_report = pick(cluster_report, &cfg.paths.cluster_report, "cluster-report")?;
            let out = pick(out, &cfg.paths.geojson, "out")?;
            let inputs = ExportInputs {
                stops: &stops,
                features: &features,
                model: &model,
                assignment: &assignment,
                cluster_report: &cluster_report,
            };
            let fc = pipeline::export_geojson(&inputs, &out, &cfg)?;
            print_json(&serde_json::json!({ "features": fc.features.len(), "out": display(&out) }))
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
