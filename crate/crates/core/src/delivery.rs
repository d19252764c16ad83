//! Delivery stop ingestion, per-cell aggregation, and the modelling dataset.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexgrid::{latlng_to_cell, validate_resolution, CellId, GeoPoint};
use crate::osm::TagCountVector;

pub const STOPS_HEADER: [&str; 5] = ["route_id", "stop_id", "lat", "lng", "service_time_s"];

#[derive(Debug, Clone, PartialEq)]
pub struct StopRecord {
    pub route_id: String,
    pub stop_id: String,
    pub location: GeoPoint,
    pub service_time_s: f64,
}

impl StopRecord {
    pub fn new(
        route_id: impl Into<String>,
        stop_id: impl Into<String>,
        location: GeoPoint,
        service_time_s: f64,
    ) -> Result<Self> {
        if !(service_time_s.is_finite() && service_time_s > 0.0) {
            return Err(Error::invalid(format!(
                "service time must be positive, got {service_time_s}"
            )));
        }
        Ok(Self {
            route_id: route_id.into(),
            stop_id: stop_id.into(),
            location,
            service_time_s,
        })
    }
}

/// Parsed stops plus the number of data rows that failed validation.
#[derive(Debug, Clone, Default)]
pub struct StopParse {
    pub stops: Vec<StopRecord>,
    pub rejected: usize,
}

pub fn parse_stops_csv<R: Read>(input: R) -> Result<StopParse> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable stops header: {e}")))?
        .clone();
    let mut columns = [0usize; 5];
    for (slot, name) in columns.iter_mut().zip(STOPS_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("stops CSV missing column {name:?}")))?;
    }

    let mut out = StopParse::default();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let field = |c: usize| row.get(columns[c]).unwrap_or("");
        let parsed = (|| {
            let lat: f64 = field(2).parse().map_err(|_| Error::invalid("bad lat"))?;
            let lng: f64 = field(3).parse().map_err(|_| Error::invalid("bad lng"))?;
            let t: f64 = field(4).parse().map_err(|_| Error::invalid("bad service_time_s"))?;
            StopRecord::new(field(0), field(1), GeoPoint::new(lat, lng)?, t)
        })();
        match parsed {
            Ok(stop) => out.stops.push(stop),
            Err(e) => {
                warn!("stops line {line} rejected: {e}");
                out.rejected += 1;
            }
        }
    }
    Ok(out)
}

pub fn write_stops_csv<W: Write>(out: W, stops: &[StopRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Schema(e.to_string());
    w.write_record(STOPS_HEADER).map_err(csv_err)?;
    for s in stops {
        w.write_record([
            s.route_id.clone(),
            s.stop_id.clone(),
            s.location.lat().to_string(),
            s.location.lng().to_string(),
            s.service_time_s.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<stops csv>", e))
}

#[derive(Deserialize)]
struct LmrrcRoute {
    #[serde(default)]
    stops: BTreeMap<String, LmrrcStop>,
}

#[derive(Deserialize)]
struct LmrrcStop {
    lat: Option<f64>,
    lng: Option<f64>,
}

#[derive(Deserialize)]
struct LmrrcPackage {
    #[serde(default)]
    planned_service_time_seconds: Option<f64>,
}

type LmrrcPackages = BTreeMap<String, BTreeMap<String, BTreeMap<String, LmrrcPackage>>>;

/// Result of converting the routing-challenge JSON files.
#[derive(Debug, Clone, Default)]
pub struct LmrrcConversion {
    pub stops: Vec<StopRecord>,
    /// Stops skipped for missing or out-of-range coordinates.
    pub missing_coordinates: usize,
    /// Stops skipped because their packages carry no planned service time.
    pub no_service_time: usize,
}

/// Converts the Last Mile Routing challenge `route_data.json` and
/// `package_data.json` layout into stop records. A stop's service time is
/// the sum of its packages' planned service times. Output is ordered by
/// route id, then stop id.
pub fn convert_lmrrc<R1: Read, R2: Read>(routes: R1, packages: R2) -> Result<LmrrcConversion> {
    let routes: BTreeMap<String, LmrrcRoute> = serde_json::from_reader(routes)?;
    let packages: LmrrcPackages = serde_json::from_reader(packages)?;
    let mut out = LmrrcConversion::default();
    for (route_id, route) in &routes {
        let route_packages = packages.get(route_id);
        for (stop_id, stop) in &route.stops {
            let total: f64 = route_packages
                .and_then(|p| p.get(stop_id))
                .map(|pkgs| {
                    pkgs.values()
                        .filter_map(|p| p.planned_service_time_seconds)
                        .sum()
                })
                .unwrap_or(0.0);
            if !(total > 0.0) {
                out.no_service_time += 1;
                continue;
            }
            let location = match (stop.lat, stop.lng) {
                (Some(lat), Some(lng)) => GeoPoint::new(lat, lng).ok(),
                _ => None,
            };
            match location {
                Some(location) => {
                    out.stops.push(StopRecord::new(route_id, stop_id, location, total)?)
                }
                None => {
                    warn!("route {route_id} stop {stop_id} has no usable coordinates; skipped");
                    out.missing_coordinates += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Stops falling in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    pub cell: CellId,
    pub n_stops: usize,
    pub mean_service_time_s: f64,
    pub median_service_time_s: f64,
    /// Member service times, ascending.
    pub service_times_s: Vec<f64>,
}

impl CellAggregate {
    fn from_times(cell: CellId, mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        Self {
            cell,
            n_stops: times.len(),
            mean_service_time_s: mean(&times),
            median_service_time_s: median_sorted(&times),
            service_times_s: times,
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median of an ascending, non-empty slice.
pub(crate) fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// One aggregate per occupied cell, ordered by cell id.
pub fn aggregate_stops(stops: &[StopRecord], resolution: u8) -> Result<Vec<CellAggregate>> {
    validate_resolution(resolution)?;
    if stops.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut by_cell: BTreeMap<CellId, Vec<f64>> = BTreeMap::new();
    for s in stops {
        by_cell
            .entry(latlng_to_cell(&s.location, resolution)?)
            .or_default()
            .push(s.service_time_s);
    }
    Ok(by_cell
        .into_iter()
        .map(|(cell, times)| CellAggregate::from_times(cell, times))
        .collect())
}

/// Drops cells with fewer than `min_stops` stops.
pub fn filter_min_stops(aggregates: Vec<CellAggregate>, min_stops: usize) -> Vec<CellAggregate> {
    aggregates.into_iter().filter(|a| a.n_stops >= min_stops).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct AggregateLine {
    cell: CellId,
    n_stops: usize,
    mean_s: f64,
    median_s: f64,
}

pub fn write_aggregates<W: Write>(mut out: W, aggregates: &[CellAggregate]) -> Result<()> {
    for a in aggregates {
        let line = AggregateLine {
            cell: a.cell,
            n_stops: a.n_stops,
            mean_s: a.mean_service_time_s,
            median_s: a.median_service_time_s,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io("<aggregates>", e))?;
    }
    Ok(())
}

/// Reads aggregate lines back; the per-stop lists are not part of the file
/// and come back empty.
pub fn read_aggregates<R: BufRead>(input: R) -> Result<Vec<(CellId, usize, f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<aggregates>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AggregateLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push((rec.cell, rec.n_stops, rec.mean_s, rec.median_s));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub cell: CellId,
    pub x: Vec<f64>,
    /// Mean stop service time in seconds.
    pub y: f64,
}

/// Cells × features design matrix with per-cell targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<DatasetRow>,
    pub per_stop_index: BTreeMap<CellId, Vec<f64>>,
}

impl CellDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.x.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.binary_search_by(|f| f.as_str().cmp(name)).ok()
    }
}

/// Joins cell targets with tag features. Cells without features get zero
/// rows; features are the sorted union of all names seen.
pub fn build_dataset(
    aggregates: &[CellAggregate],
    cell_features: &BTreeMap<CellId, TagCountVector>,
) -> Result<CellDataset> {
    if aggregates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut names: Vec<String> = cell_features
        .values()
        .flat_map(|v| v.iter().map(|(k, _)| k.to_owned()))
        .collect();
    names.sort();
    names.dedup();
    let column: BTreeMap<&str, usize> =
        names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut rows = Vec::with_capacity(aggregates.len());
    let mut per_stop_index = BTreeMap::new();
    for a in aggregates {
        let mut x = vec![0.0; names.len()];
        if let Some(counts) = cell_features.get(&a.cell) {
            for (name, n) in counts.iter() {
                x[column[name]] = n as f64;
            }
        }
        if per_stop_index.insert(a.cell, a.service_times_s.clone()).is_some() {
            return Err(Error::invalid(format!("cell {} aggregated twice", a.cell)));
        }
        rows.push(DatasetRow { cell: a.cell, x, y: a.mean_service_time_s });
    }
    Ok(CellDataset { feature_names: names, rows, per_stop_index })
}
