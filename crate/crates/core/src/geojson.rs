//! GeoJSON export of cells with their statistics, predictions, and clusters.

use serde::{Deserialize, Serialize};

use crate::hexgrid::{cell_boundary, CellId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFeatureRecord {
    pub cell: CellId,
    pub n_stops: usize,
    pub mean_service_time_s: f64,
    pub median_service_time_s: f64,
    pub pred_mu: f64,
    pub pred_sigma: f64,
    pub cluster: Option<usize>,
    pub medoid: bool,
    pub top_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    #[serde(rename = "type")]
    pub kind: String,
    /// Rings of [lng, lat] positions; the first is the exterior.
    pub coordinates: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    #[serde(rename = "type")]
    pub kind: String,
    pub id: String,
    pub geometry: Polygon,
    pub properties: CellFeatureRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCollection {
    #[serde(rename = "type")]
    pub kind: String,
    pub features: Vec<Feature>,
}

/// Closed exterior ring of a cell: the boundary vertices with the first
/// repeated at the end.
pub fn cell_ring(cell: CellId) -> Vec<[f64; 2]> {
    let boundary = cell_boundary(cell);
    let mut ring: Vec<[f64; 2]> = boundary.vertices.iter().map(|v| [v.lng(), v.lat()]).collect();
    ring.push(ring[0]);
    ring
}

pub fn feature_collection(records: Vec<CellFeatureRecord>) -> FeatureCollection {
    let features = records
        .into_iter()
        .map(|properties| Feature {
            kind: "Feature".into(),
            id: properties.cell.to_string(),
            geometry: Polygon { kind: "Polygon".into(), coordinates: vec![cell_ring(properties.cell)] },
            properties,
        })
        .collect();
    FeatureCollection { kind: "FeatureCollection".into(), features }
}

/// Structural checks against RFC 7946 for the subset written here. Returns
/// a description of the first violation.
pub fn validate(doc: &serde_json::Value) -> Result<(), String> {
    let obj = doc.as_object().ok_or("document is not an object")?;
    if obj.get("type").and_then(|t| t.as_str()) != Some("FeatureCollection") {
        return Err("top-level type must be FeatureCollection".into());
    }
    let features = obj.get("features").and_then(|f| f.as_array()).ok_or("features must be an array")?;
    for (i, f) in features.iter().enumerate() {
        if f.get("type").and_then(|t| t.as_str()) != Some("Feature") {
            return Err(format!("feature {i}: type must be Feature"));
        }
        if !f.get("properties").is_some_and(|p| p.is_object() || p.is_null()) {
            return Err(format!("feature {i}: properties must be an object or null"));
        }
        let geom = f.get("geometry").ok_or(format!("feature {i}: missing geometry"))?;
        if geom.get("type").and_then(|t| t.as_str()) != Some("Polygon") {
            return Err(format!("feature {i}: geometry must be a Polygon"));
        }
        let rings = geom.get("coordinates").and_then(|c| c.as_array()).ok_or(format!("feature {i}: no rings"))?;
        if rings.is_empty() {
            return Err(format!("feature {i}: polygon has no rings"));
        }
        for ring in rings {
            let ring = ring.as_array().ok_or(format!("feature {i}: ring is not an array"))?;
            if ring.len() < 4 {
                return Err(format!("feature {i}: ring has fewer than 4 positions"));
            }
            let mut positions = Vec::with_capacity(ring.len());
            for p in ring {
                let p = p.as_array().filter(|p| p.len() >= 2).ok_or(format!("feature {i}: bad position"))?;
                let (lng, lat) = (p[0].as_f64(), p[1].as_f64());
                match (lng, lat) {
                    (Some(lng), Some(lat)) if (-180.0..=180.0).contains(&lng) && (-90.0..=90.0).contains(&lat) => {
                        positions.push((lng, lat))
                    }
                    _ => return Err(format!("feature {i}: position out of range")),
                }
            }
            if positions.first() != positions.last() {
                return Err(format!("feature {i}: ring is not closed"));
            }
        }
    }
    Ok(())
}
