mod common;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use common::{close, data_path, golden};
use hexlogi::delivery::{aggregate_stops, build_dataset, convert_lmrrc, parse_stops_csv};
use hexlogi::hexgrid::CellId;
use hexlogi::osm::{aggregate_counts, filter_tags, parse_osm, TagWhitelist};

fn open(name: &str) -> BufReader<File> {
    BufReader::new(File::open(data_path(name)).unwrap())
}

#[test]
fn toy_city_end_to_end_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::toy::run_toy(dir.path()).unwrap();
    let compared = common::toy::check_against_golden(&artifacts).unwrap_or_else(|e| panic!("{e}"));
    assert!(compared > 200, "only {compared} values compared");
}

#[test]
fn osm_four_cells_match_tally() {
    let parsed = parse_osm(open("osm_4cell.osm")).unwrap();
    assert_eq!(parsed.objects.len(), 25);
    assert_eq!(parsed.skipped_ways, 0);
    let kept = filter_tags(parsed.objects, &TagWhitelist::default_set());
    let cells = aggregate_counts(&kept, 9).unwrap();
    assert_eq!(cells.len(), 4);

    let want = golden("osm_4cell.json");
    let want = want.as_object().unwrap();
    assert_eq!(cells.len(), want.len());
    for (cell, counts) in &cells {
        let w = &want[&cell.to_string()];
        let got: BTreeMap<&str, u64> = counts.iter().collect();
        let w: BTreeMap<&str, u64> = w.as_object().unwrap().iter().map(|(k, v)| (k.as_str(), v.as_u64().unwrap())).collect();
        assert_eq!(got, w, "cell {cell}");
    }
}

#[test]
fn osm_tally_matches_naive_pass_over_parsed_objects() {
    // The same tally done with h3o directly on the unfiltered parse output.
    let parsed = parse_osm(open("toy_city.osm")).unwrap();
    let wl = TagWhitelist::default_set();
    let raw: Vec<(f64, f64, Vec<(String, String)>)> = parsed
        .objects
        .iter()
        .map(|o| {
            let tags = o.tags.iter().filter(|(k, v)| wl.allows(k, v)).map(|(k, v)| (k.clone(), v.clone())).collect();
            (o.representative_point.lat(), o.representative_point.lng(), tags)
        })
        .collect();
    let want = common::naive_tally(&raw, 9);
    let got = aggregate_counts(&filter_tags(parsed.objects, &wl), 9).unwrap();
    let got: BTreeMap<String, BTreeMap<String, u64>> =
        got.iter().map(|(c, v)| (c.to_string(), v.iter().map(|(k, n)| (k.to_owned(), n)).collect())).collect();
    assert_eq!(got, want);
}

#[test]
fn lmrrc_fixture_matches_script() {
    let conv = convert_lmrrc(open("lmrrc_route_data.json"), open("lmrrc_package_data.json")).unwrap();
    assert_eq!(conv.stops.len(), 17);
    assert_eq!(conv.missing_coordinates, 3);
    assert_eq!(conv.no_service_time, 1);
    let want = golden("lmrrc.json");
    let stops = want["stops"].as_array().unwrap();
    assert_eq!(stops.len(), 17);
    for (got, w) in conv.stops.iter().zip(stops) {
        assert_eq!(got.route_id, w["route_id"].as_str().unwrap());
        assert_eq!(got.stop_id, w["stop_id"].as_str().unwrap());
        assert_eq!(got.location.lat(), w["lat"].as_f64().unwrap());
        assert_eq!(got.location.lng(), w["lng"].as_f64().unwrap());
        assert_eq!(got.service_time_s, w["service_time_s"].as_f64().unwrap());
    }
    let total: f64 = conv.stops.iter().map(|s| s.service_time_s).sum();
    assert_eq!(total, want["total_service_time_s"].as_f64().unwrap());
}

#[test]
fn converted_ten_stops_read_back() {
    let parsed = parse_stops_csv(open("lmrrc_10_stops.csv")).unwrap();
    assert_eq!(parsed.stops.len(), 10);
    assert_eq!(parsed.rejected, 0);
    let first = &parsed.stops[0];
    assert_eq!((first.route_id.as_str(), first.stop_id.as_str()), ("RouteID_aa11", "AA"));
    assert_eq!((first.location.lat(), first.location.lng()), (42.3585632, -71.0603693));
    assert_eq!(first.service_time_s, 105.0);
    let fifth = &parsed.stops[4];
    assert_eq!((fifth.stop_id.as_str(), fifth.service_time_s), ("EC", 255.0));
    let last = &parsed.stops[9];
    assert_eq!((last.route_id.as_str(), last.stop_id.as_str()), ("RouteID_bb22", "DL"));
    assert_eq!((last.location.lat(), last.location.lng(), last.service_time_s), (42.3662291, -71.0619645, 165.0));
    let times: Vec<f64> = parsed.stops.iter().map(|s| s.service_time_s).collect();
    assert_eq!(times, [105.0, 225.0, 75.0, 195.0, 255.0, 120.0, 75.0, 180.0, 60.0, 165.0]);
}

#[test]
fn toy_join_matches_hand_table() {
    let stops = parse_stops_csv(open("toy_stops.csv")).unwrap().stops;
    let aggregates = aggregate_stops(&stops, 9).unwrap();
    let parsed = parse_osm(open("toy_city.osm")).unwrap();
    let features = aggregate_counts(&filter_tags(parsed.objects, &TagWhitelist::default_set()), 9).unwrap();
    let data = build_dataset(&aggregates, &features).unwrap();

    assert_eq!(
        data.feature_names,
        [
            "amenity=cafe",
            "amenity=restaurant",
            "barrier=fence",
            "building=apartments",
            "building=house",
            "crossing=zebra",
            "highway=crossing",
            "highway=residential",
            "highway=service",
            "highway=traffic_signals",
            "leisure=park",
            "office=company",
            "shop=clothes",
            "shop=convenience",
        ]
    );
    #[rustfmt::skip]
    let table: [(&str, [f64; 14], f64); 10] = [
        ("892a3066007ffff", [1., 1., 0., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0.], (154.5 + 108.4 + 117.8) / 3.0),
        ("892a3066027ffff", [0., 0., 1., 1., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.], (83.2 + 136.3 + 109.8) / 3.0),
        ("892a306602fffff", [1., 1., 0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0.], (113.4 + 191.5 + 223.4) / 3.0),
        ("892a3066037ffff", [0., 0., 1., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.], (110.9 + 120.6 + 108.4) / 3.0),
        ("892a30660a3ffff", [0., 0., 0., 0., 2., 0., 0., 0., 0., 0., 1., 0., 0., 0.], (90.7 + 122.6 + 103.0) / 3.0),
        ("892a30660abffff", [0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1.], (176.5 + 194.6 + 151.0) / 3.0),
        ("892a3066153ffff", [0., 0., 0., 0., 2., 0., 0., 0., 0., 0., 1., 0., 0., 0.], (67.3 + 91.9 + 130.2) / 3.0),
        ("892a30661c3ffff", [0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1.], (109.2 + 163.5 + 155.4) / 3.0),
        ("892a30661cfffff", [0.; 14], (138.5 + 120.0 + 107.8) / 3.0),
        ("892a30661dbffff", [0.; 14], (109.3 + 190.0 + 63.2) / 3.0),
    ];
    assert_eq!(data.rows.len(), table.len());
    for (row, (cell, x, y)) in data.rows.iter().zip(table) {
        assert_eq!(row.cell, cell.parse::<CellId>().unwrap());
        assert_eq!(row.x, x, "{cell}");
        assert!(close(row.y, y, 1e-12, 0.0), "{cell}: {} vs {y}", row.y);
    }
}
