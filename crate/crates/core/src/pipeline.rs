//! Pipeline configuration and the file-level steps behind each CLI command.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::analytics::{cross_validate, CvReport};
use crate::boost::{fit, BoostModel, FitConfig};
use crate::cluster::{cluster_cells, select_significant_features, summarize_clusters, ClusterAssignment, ClusterReport};
use crate::delivery::{
    aggregate_stops, build_dataset, convert_lmrrc, filter_min_stops, parse_stops_csv, write_aggregates,
    write_stops_csv, CellDataset,
};
use crate::error::{Error, Result};
use crate::geojson::{feature_collection, CellFeatureRecord, FeatureCollection};
use crate::hexgrid::{validate_resolution, CellId, DEFAULT_RESOLUTION};
use crate::osm::{aggregate_counts, filter_tags, parse_osm, read_cell_features, write_cell_features, TagCountVector, TagWhitelist};

/// Number of per-cell tags listed in the export.
pub const EXPORT_TOP_TAGS: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub osm: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stops: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geojson: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub resolution: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub whitelist_path: Option<PathBuf>,
    pub fit: FitConfig,
    pub k_folds: usize,
    pub n_clusters: usize,
    pub top_k_features: usize,
    /// Drives fold shuffling and is copied into the fit configuration.
    pub seed: u64,
    pub min_stops_per_cell: usize,
    /// Scale each clustering feature by its maximum over cells.
    pub normalize_cluster_features: bool,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            whitelist_path: None,
            fit: FitConfig::default(),
            k_folds: 5,
            n_clusters: 2,
            top_k_features: 50,
            seed: 0,
            min_stops_per_cell: 1,
            normalize_cluster_features: false,
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        validate_resolution(self.resolution)?;
        self.fit.validate()?;
        if self.k_folds < 2 {
            return Err(Error::invalid("k_folds must be at least 2"));
        }
        if self.n_clusters == 0 || self.top_k_features == 0 || self.min_stops_per_cell == 0 {
            return Err(Error::invalid("n_clusters, top_k_features and min_stops_per_cell must be positive"));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { seed: self.seed, ..self.fit }
    }

    pub fn whitelist(&self) -> Result<TagWhitelist> {
        match &self.whitelist_path {
            Some(p) => TagWhitelist::parse(&read_to_string(p)?),
            None => Ok(TagWhitelist::default_set()),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path`, creating parent directories.
fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OsmIngestSummary {
    pub objects: usize,
    pub kept_objects: usize,
    pub skipped_ways: usize,
    pub cells: usize,
}

pub fn ingest_osm(osm: &Path, out: &Path, cfg: &PipelineConfig) -> Result<OsmIngestSummary> {
    let parsed = parse_osm(open(osm)?)?;
    let n_objects = parsed.objects.len();
    let kept = filter_tags(parsed.objects, &cfg.whitelist()?);
    let cells = aggregate_counts(&kept, cfg.resolution)?;
    if cells.is_empty() {
        warn!("{}: no whitelisted objects; writing an empty feature file", osm.display());
    }
    let mut buf = Vec::new();
    write_cell_features(&mut buf, &cells)?;
    write_file(out, &buf)?;
    Ok(OsmIngestSummary {
        objects: n_objects,
        kept_objects: kept.len(),
        skipped_ways: parsed.skipped_ways,
        cells: cells.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StopIngestSummary {
    pub stops: usize,
    pub rejected: usize,
    pub cells: usize,
}

pub fn ingest_stops(stops: &Path, out: &Path, cfg: &PipelineConfig) -> Result<StopIngestSummary> {
    let parsed = parse_stops_csv(open(stops)?)?;
    let aggregates = filter_min_stops(aggregate_stops(&parsed.stops, cfg.resolution)?, cfg.min_stops_per_cell);
    let mut buf = Vec::new();
    write_aggregates(&mut buf, &aggregates)?;
    write_file(out, &buf)?;
    Ok(StopIngestSummary { stops: parsed.stops.len(), rejected: parsed.rejected, cells: aggregates.len() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LmrrcSummary {
    pub stops: usize,
    pub missing_coordinates: usize,
    pub no_service_time: usize,
}

pub fn convert_lmrrc_files(routes: &Path, packages: &Path, out: &Path) -> Result<LmrrcSummary> {
    let conv = convert_lmrrc(open(routes)?, open(packages)?)?;
    let mut buf = Vec::new();
    write_stops_csv(&mut buf, &conv.stops)?;
    write_file(out, &buf)?;
    Ok(LmrrcSummary {
        stops: conv.stops.len(),
        missing_coordinates: conv.missing_coordinates,
        no_service_time: conv.no_service_time,
    })
}

/// Stops CSV + cell feature file → modelling dataset.
pub fn load_dataset(stops: &Path, features: &Path, cfg: &PipelineConfig) -> Result<(CellDataset, BTreeMap<CellId, TagCountVector>)> {
    let parsed = parse_stops_csv(open(stops)?)?;
    if parsed.rejected > 0 {
        warn!("{}: {} stop rows rejected", stops.display(), parsed.rejected);
    }
    let aggregates = filter_min_stops(aggregate_stops(&parsed.stops, cfg.resolution)?, cfg.min_stops_per_cell);
    let cell_features = read_cell_features(open(features)?)?;
    if let Some(c) = cell_features.keys().find(|c| c.resolution() != cfg.resolution) {
        return Err(Error::Schema(format!(
            "feature cell {c} has resolution {}, config expects {}",
            c.resolution(),
            cfg.resolution
        )));
    }
    Ok((build_dataset(&aggregates, &cell_features)?, cell_features))
}

pub fn train(
    stops: &Path,
    features: &Path,
    model_out: &Path,
    cv_out: &Path,
    cfg: &PipelineConfig,
) -> Result<(BoostModel, CvReport)> {
    let (data, _) = load_dataset(stops, features, cfg)?;
    let fit_cfg = cfg.fit_config();
    info!("training on {} cells x {} features", data.len(), data.n_features());
    let report = cross_validate(&data, &fit_cfg, cfg.k_folds, cfg.seed)?;
    let model = fit(&data, &fit_cfg)?;
    let mut text = model.to_json()?;
    text.push('\n');
    write_file(model_out, text.as_bytes())?;
    write_json(cv_out, &report)?;
    Ok((model, report))
}

pub fn load_model(path: &Path) -> Result<BoostModel> {
    BoostModel::from_json(&read_to_string(path)?)
}

/// Per-cell vectors over the model's most important features, with
/// all-zero cells separated out.
pub fn cluster_vectors(
    data: &CellDataset,
    cell_features: &BTreeMap<CellId, TagCountVector>,
    significant: &[String],
    normalize: bool,
) -> (Vec<CellId>, Vec<Vec<f64>>, Vec<CellId>) {
    let empty = TagCountVector::new();
    let mut vectors: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| {
            let counts = cell_features.get(&r.cell).unwrap_or(&empty);
            significant.iter().map(|f| counts.get(f) as f64).collect()
        })
        .collect();
    if normalize {
        for j in 0..significant.len() {
            let max = vectors.iter().map(|v| v[j]).fold(0.0, f64::max);
            if max > 0.0 {
                for v in &mut vectors {
                    v[j] /= max;
                }
            }
        }
    }
    let (mut cells, mut kept, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
    for (row, v) in data.rows.iter().zip(vectors) {
        if v.iter().any(|&x| x != 0.0) {
            cells.push(row.cell);
            kept.push(v);
        } else {
            excluded.push(row.cell);
        }
    }
    (cells, kept, excluded)
}

pub fn cluster(
    model_path: &Path,
    features: &Path,
    stops: &Path,
    report_out: &Path,
    assignment_out: &Path,
    cfg: &PipelineConfig,
) -> Result<(ClusterReport, ClusterAssignment)> {
    let model = load_model(model_path)?;
    let (data, cell_features) = load_dataset(stops, features, cfg)?;
    if model.feature_names != data.feature_names {
        warn!("model features differ from the feature file; matching by name");
    }
    let significant = select_significant_features(&model.feature_importance(), cfg.top_k_features)?;
    if significant.is_empty() {
        return Err(Error::invalid("model has no feature importance to select clustering features from"));
    }
    let (cells, vectors, excluded) = cluster_vectors(&data, &cell_features, &significant, cfg.normalize_cluster_features);
    if !excluded.is_empty() {
        warn!("{} cells have no significant tags and are not clustered", excluded.len());
    }
    if cells.len() < cfg.n_clusters {
        return Err(Error::invalid(format!(
            "{} clusterable cells cannot form {} clusters",
            cells.len(),
            cfg.n_clusters
        )));
    }
    let assignment = cluster_cells(cells, &vectors, cfg.n_clusters)?;
    let mut report = summarize_clusters(&assignment, &data.per_stop_index, &vectors)?;
    report.excluded_cells = excluded;
    write_json(report_out, &report)?;
    write_json(assignment_out, &assignment)?;
    Ok((report, assignment))
}

fn top_tags(counts: Option<&TagCountVector>, n: usize) -> Vec<String> {
    let Some(counts) = counts else { return Vec::new() };
    let mut tags: Vec<(&str, u64)> = counts.iter().collect();
    tags.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    tags.into_iter().take(n).map(|(t, _)| t.to_owned()).collect()
}

pub struct ExportInputs<'a> {
    pub stops: &'a Path,
    pub features: &'a Path,
    pub model: &'a Path,
    pub assignment: &'a Path,
    pub cluster_report: &'a Path,
}

pub fn export_geojson(inputs: &ExportInputs<'_>, out: &Path, cfg: &PipelineConfig) -> Result<FeatureCollection> {
    let (data, cell_features) = load_dataset(inputs.stops, inputs.features, cfg)?;
    let model = load_model(inputs.model)?;
    let assignment: ClusterAssignment = read_json(inputs.assignment)?;
    let report: ClusterReport = read_json(inputs.cluster_report)?;
    let index: BTreeMap<&str, usize> =
        model.feature_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut records = Vec::with_capacity(data.len());
    for row in &data.rows {
        let counts = cell_features.get(&row.cell);
        let mut x = vec![0.0; model.feature_names.len()];
        if let Some(counts) = counts {
            for (name, n) in counts.iter() {
                if let Some(&j) = index.get(name) {
                    x[j] = n as f64;
                }
            }
        }
        let theta = model.predict(&x)?;
        let times = &data.per_stop_index[&row.cell];
        records.push(CellFeatureRecord {
            cell: row.cell,
            n_stops: times.len(),
            mean_service_time_s: row.y,
            median_service_time_s: crate::delivery::median_sorted(times),
            pred_mu: theta.mu,
            pred_sigma: theta.sigma(),
            cluster: assignment.label_of(row.cell),
            medoid: report.is_medoid(row.cell),
            top_tags: top_tags(counts, EXPORT_TOP_TAGS),
        });
    }
    let fc = feature_collection(records);
    write_json(out, &fc)?;
    Ok(fc)
}
