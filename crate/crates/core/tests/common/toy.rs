//! Runs the toy city through the CLI and compares every artifact with the
//! golden file written by tests/oracle/make_golden.py.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use super::{close, data_path, golden};

pub const RTOL: f64 = 1e-9;
pub const ATOL: f64 = 1e-12;

pub struct ToyArtifacts {
    pub features: PathBuf,
    pub aggregates: PathBuf,
    pub model: PathBuf,
    pub cv: PathBuf,
    pub cluster_report: PathBuf,
    pub assignment: PathBuf,
    pub geojson: PathBuf,
}

impl ToyArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            features: dir.join("features.jsonl"),
            aggregates: dir.join("aggregates.jsonl"),
            model: dir.join("model.json"),
            cv: dir.join("cv.json"),
            cluster_report: dir.join("cluster_report.json"),
            assignment: dir.join("assignment.json"),
            geojson: dir.join("cells.geojson"),
        }
    }

    pub fn all(&self) -> [&PathBuf; 7] {
        [&self.features, &self.aggregates, &self.model, &self.cv, &self.cluster_report, &self.assignment, &self.geojson]
    }
}

pub fn hexlogi(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hexlogi")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("hexlogi {args:?} exited {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// ingest-osm → ingest-stops → train → cluster → export on the toy city.
pub fn run_toy(dir: &Path) -> Result<ToyArtifacts, String> {
    let a = ToyArtifacts::in_dir(dir);
    let config = data_path("toy_config.json");
    let osm = data_path("toy_city.osm");
    let stops = data_path("toy_stops.csv");
    let c = ["--config", s(&config)];
    hexlogi(&[&c[..], &["ingest-osm", "--osm", s(&osm), "--out", s(&a.features)]].concat())?;
    hexlogi(&[&c[..], &["ingest-stops", "--stops", s(&stops), "--out", s(&a.aggregates)]].concat())?;
    let data = ["--stops", s(&stops), "--features", s(&a.features)];
    hexlogi(&[&c[..], &["train"], &data[..], &["--model-out", s(&a.model), "--cv-out", s(&a.cv)]].concat())?;
    hexlogi(
        &[
            &c[..],
            &["cluster"],
            &data[..],
            &["--model", s(&a.model), "--report-out", s(&a.cluster_report), "--assignment-out", s(&a.assignment)],
        ]
        .concat(),
    )?;
    hexlogi(
        &[
            &c[..],
            &["export"],
            &data[..],
            &[
                "--model",
                s(&a.model),
                "--assignment",
                s(&a.assignment),
                "--cluster-report",
                s(&a.cluster_report),
                "--out",
                s(&a.geojson),
            ],
        ]
        .concat(),
    )?;
    Ok(a)
}

fn read_json(p: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
}

fn read_lines(p: &Path) -> Result<Vec<Value>, String> {
    let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

/// Compares numbers with RTOL/ATOL and everything else exactly.
struct Checker {
    failures: Vec<String>,
    compared: usize,
}

impl Checker {
    fn num(&mut self, what: &str, got: &Value, want: &Value) {
        self.compared += 1;
        match (got.as_f64(), want.as_f64()) {
            (Some(g), Some(w)) if close(g, w, RTOL, ATOL) => {}
            (None, None) if got.is_null() && want.is_null() => {}
            _ => self.failures.push(format!("{what}: got {got}, want {want}")),
        }
    }

    fn eq(&mut self, what: &str, got: &Value, want: &Value) {
        self.compared += 1;
        if got != want {
            self.failures.push(format!("{what}: got {got}, want {want}"));
        }
    }
}

/// Returns the number of compared values, or every mismatch found.
pub fn check_against_golden(a: &ToyArtifacts) -> Result<usize, String> {
    let g = golden("toy_city.json");
    let mut c = Checker { failures: Vec::new(), compared: 0 };

    // Cell features.
    let features = read_lines(&a.features)?;
    let want = g["features"].as_object().unwrap();
    c.eq("feature cell count", &Value::from(features.len()), &Value::from(want.len()));
    for line in &features {
        let cell = line["cell"].as_str().unwrap_or_default();
        c.eq(&format!("features[{cell}]"), &line["counts"], &want.get(cell).cloned().unwrap_or(Value::Null));
    }

    // Aggregates.
    let aggs = read_lines(&a.aggregates)?;
    let want = g["aggregates"].as_array().unwrap();
    c.eq("aggregate count", &Value::from(aggs.len()), &Value::from(want.len()));
    for (got, want) in aggs.iter().zip(want) {
        let cell = want["cell"].as_str().unwrap();
        c.eq(&format!("aggregate cell {cell}"), &got["cell"], &want["cell"]);
        c.eq(&format!("n_stops[{cell}]"), &got["n_stops"], &want["n_stops"]);
        c.num(&format!("mean_s[{cell}]"), &got["mean_s"], &want["mean_s"]);
        c.num(&format!("median_s[{cell}]"), &got["median_s"], &want["median_s"]);
    }

    // Model.
    let model = read_json(&a.model)?;
    c.eq("feature_names", &model["feature_names"], &g["feature_names"]);
    c.num("init.mu", &model["init"]["mu"], &g["init"]["mu"]);
    c.num("init.log_sigma", &model["init"]["log_sigma"], &g["init"]["log_sigma"]);
    c.eq("stage count", &Value::from(model["stages"].as_array().map_or(0, |s| s.len())),
        &Value::from(g["train_nll"].as_array().unwrap().len() - 1));

    // Cross-validation.
    let cv = read_json(&a.cv)?;
    let folds = golden("toy_folds.json");
    c.eq("fold assignments", &cv["assignments"], &folds["assignments"]);
    let want = &g["cv"];
    for (i, (got, w)) in cv["per_fold"].as_array().unwrap().iter().zip(want["per_fold"].as_array().unwrap()).enumerate() {
        c.eq(&format!("fold {i} n_test"), &got["n_test"], &w["n_test"]);
        for key in ["nll", "r2", "nll_seconds", "r2_seconds"] {
            c.num(&format!("fold {i} {key}"), &got[key], &w[key]);
        }
    }
    for key in ["nll", "r2", "nll_seconds", "r2_seconds"] {
        for stat in ["mean_", "sd_"] {
            let k = format!("{stat}{key}");
            c.num(&format!("cv {k}"), &cv[&k], &want[&k]);
        }
    }

    // Clustering.
    let report = read_json(&a.cluster_report)?;
    let assignment = read_json(&a.assignment)?;
    let want = &g["cluster"];
    c.eq("clustered cells", &assignment["cells"], &want["cells"]);
    c.eq("labels", &assignment["labels"], &want["labels"]);
    c.eq("excluded cells", &report["excluded_cells"], &want["excluded"]);
    for (i, (got, w)) in
        report["per_cluster"].as_array().unwrap().iter().zip(want["per_cluster"].as_array().unwrap()).enumerate()
    {
        for key in ["label", "size", "medoid_cell", "n_stops"] {
            c.eq(&format!("cluster {i} {key}"), &got[key], &w[key]);
        }
        for key in ["median_service_time_s", "mean_service_time_s"] {
            c.num(&format!("cluster {i} {key}"), &got[key], &w[key]);
        }
    }
    c.eq("t-test df", &report["test"]["df"], &want["test"]["df"]);
    c.num("t-test t", &report["test"]["t"], &want["test"]["t"]);
    c.num("t-test p", &report["test"]["p_two_sided"], &want["test"]["p_two_sided"]);

    // Export.
    let fc = read_json(&a.geojson)?;
    if let Err(e) = hexlogi::geojson::validate(&fc) {
        c.failures.push(format!("geojson invalid: {e}"));
    }
    let feats = fc["features"].as_array().cloned().unwrap_or_default();
    c.eq("exported feature count", &Value::from(feats.len()), &Value::from(g["aggregates"].as_array().unwrap().len()));
    let medoids: Vec<&Value> = want["per_cluster"].as_array().unwrap().iter().map(|p| &p["medoid_cell"]).collect();
    for f in &feats {
        let cell = f["id"].as_str().unwrap_or_default().to_owned();
        let p = &f["properties"];
        let ring = &f["geometry"]["coordinates"][0];
        let want_ring = &g["rings"][&cell];
        let (got_pts, want_pts) = (ring.as_array().cloned().unwrap_or_default(), want_ring.as_array().cloned().unwrap_or_default());
        c.eq(&format!("ring length [{cell}]"), &Value::from(got_pts.len()), &Value::from(want_pts.len()));
        for (gp, wp) in got_pts.iter().zip(&want_pts) {
            c.num(&format!("ring lng [{cell}]"), &gp[0], &wp[0]);
            c.num(&format!("ring lat [{cell}]"), &gp[1], &wp[1]);
        }
        let pred = &g["predictions"][&cell];
        c.num(&format!("pred_mu [{cell}]"), &p["pred_mu"], &pred["mu"]);
        c.num(&format!("pred_sigma [{cell}]"), &p["pred_sigma"], &pred["sigma"]);
        let label = want["cells"]
            .as_array()
            .unwrap()
            .iter()
            .position(|x| x.as_str() == Some(cell.as_str()))
            .map_or(Value::Null, |i| want["labels"][i].clone());
        c.eq(&format!("cluster label [{cell}]"), &p["cluster"], &label);
        c.eq(&format!("medoid flag [{cell}]"), &p["medoid"], &Value::from(medoids.iter().any(|m| m.as_str() == Some(&cell))));
        let agg = g["aggregates"].as_array().unwrap().iter().find(|x| x["cell"].as_str() == Some(&cell)).cloned();
        if let Some(agg) = agg {
            c.eq(&format!("n_stops [{cell}]"), &p["n_stops"], &agg["n_stops"]);
            c.num(&format!("mean [{cell}]"), &p["mean_service_time_s"], &agg["mean_s"]);
            c.num(&format!("median [{cell}]"), &p["median_service_time_s"], &agg["median_s"]);
        } else {
            c.failures.push(format!("exported cell {cell} missing from golden aggregates"));
        }
    }

    if c.failures.is_empty() {
        Ok(c.compared)
    } else {
        Err(c.failures.join("\n"))
    }
}
