//! Random-point conformance sweep for the hexagonal grid.

use std::collections::BTreeSet;

use hexlogi::hexgrid::{cell_boundary, cell_contains, latlng_to_cell, CellId, GeoPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Downtown Boston.
pub const TEST_BBOX: (f64, f64, f64, f64) = (42.33, -71.10, 42.38, -71.03);

pub struct Sweep {
    pub points: usize,
    pub deterministic: usize,
    pub contained: usize,
    pub cells: BTreeSet<CellId>,
    /// Mean over distinct cells of each boundary's mean great-circle edge.
    pub mean_edge_m: f64,
    /// Same cells, edge lengths from h3o's directed edges.
    pub reference_edge_m: f64,
}

pub fn sweep(n: usize, seed: u64, res: u8) -> Sweep {
    let (lat0, lng0, lat1, lng1) = TEST_BBOX;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Sweep {
        points: n,
        deterministic: 0,
        contained: 0,
        cells: BTreeSet::new(),
        mean_edge_m: 0.0,
        reference_edge_m: 0.0,
    };
    for _ in 0..n {
        let p = GeoPoint::new(rng.gen_range(lat0..lat1), rng.gen_range(lng0..lng1)).unwrap();
        let a = latlng_to_cell(&p, res).unwrap();
        let b = latlng_to_cell(&GeoPoint::new(p.lat(), p.lng()).unwrap(), res).unwrap();
        let reparsed: CellId = a.to_string().parse().unwrap();
        if a == b && reparsed == a && a.resolution() == res {
            out.deterministic += 1;
        }
        if cell_contains(a, &p) {
            out.contained += 1;
        }
        out.cells.insert(a);
    }
    let k = out.cells.len() as f64;
    out.mean_edge_m = out.cells.iter().map(|&c| cell_boundary(c).mean_edge_length_m()).sum::<f64>() / k;
    out.reference_edge_m = out
        .cells
        .iter()
        .map(|c| {
            let idx = h3o::CellIndex::try_from(c.as_u64()).unwrap();
            let lens: Vec<f64> = idx.edges().map(|e| e.length_m()).collect();
            lens.iter().sum::<f64>() / lens.len() as f64
        })
        .sum::<f64>()
        / k;
    out
}
