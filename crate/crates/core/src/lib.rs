//! Service-time modelling for last-mile deliveries across urban
//! micro-regions.
//!
//! The pipeline tessellates a city into hexagonal cells ([`hexgrid`]),
//! describes each cell by counts of OpenStreetMap tags ([`osm`]), joins those
//! features with per-cell delivery stop statistics ([`delivery`]), fits a
//! log-normal service-time model by natural-gradient boosting ([`boost`]),
//! evaluates it by k-fold cross-validation ([`analytics`]), groups cells by
//! urban context ([`cluster`]), and writes map-ready GeoJSON
//! ([`pipeline`]).

pub mod analytics;
pub mod boost;
pub mod cluster;
pub mod delivery;
pub mod error;
pub mod geojson;
pub mod hexgrid;
pub mod osm;
pub mod pipeline;

pub use error::{Error, Result};
