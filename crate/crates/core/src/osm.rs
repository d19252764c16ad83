//! OpenStreetMap XML ingestion and per-cell tag counting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use log::warn;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexgrid::{latlng_to_cell, validate_resolution, CellId, GeoPoint};

pub const DEFAULT_WHITELIST: &str = include_str!("../data/default_whitelist.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Node,
    Way,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedObject {
    pub osm_id: i64,
    pub kind: ObjectKind,
    pub representative_point: GeoPoint,
    pub tags: BTreeMap<String, String>,
}

impl TaggedObject {
    /// Feature names ("key=value") carried by this object.
    pub fn feature_names(&self) -> impl Iterator<Item = String> + '_ {
        self.tags.iter().map(|(k, v)| format!("{k}={v}"))
    }
}

/// Sparse per-cell feature counts keyed by "key=value". Zero counts are never
/// stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagCountVector(BTreeMap<String, u64>);

impl TagCountVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&mut self, feature: String) {
        *self.0.entry(feature).or_insert(0) += 1;
    }

    pub fn add(&mut self, feature: &str, n: u64) {
        if n > 0 {
            *self.0.entry(feature.to_owned()).or_insert(0) += n;
        }
    }

    pub fn get(&self, feature: &str) -> u64 {
        self.0.get(feature).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, u64)> for TagCountVector {
    fn from_iter<I: IntoIterator<Item = (String, u64)>>(iter: I) -> Self {
        let mut v = TagCountVector::new();
        for (k, n) in iter {
            v.add(&k, n);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum WhitelistEntry {
    Key(String),
    Pair(String, String),
}

impl WhitelistEntry {
    fn parse(s: &str) -> Self {
        match s.split_once('=') {
            Some((k, v)) => WhitelistEntry::Pair(k.trim().to_owned(), v.trim().to_owned()),
            None => WhitelistEntry::Key(s.to_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagWhitelist {
    keys: BTreeSet<String>,
    pairs: BTreeSet<(String, String)>,
}

impl TagWhitelist {
    pub fn new(entries: impl IntoIterator<Item = WhitelistEntry>) -> Result<Self> {
        let mut keys = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        for entry in entries {
            let fresh = match &entry {
                WhitelistEntry::Key(k) => keys.insert(k.clone()),
                WhitelistEntry::Pair(k, v) => pairs.insert((k.clone(), v.clone())),
            };
            if !fresh {
                return Err(Error::invalid(format!("duplicate whitelist entry {entry:?}")));
            }
        }
        if keys.is_empty() && pairs.is_empty() {
            return Err(Error::invalid("whitelist is empty"));
        }
        Ok(Self { keys, pairs })
    }

    /// Parses the plain-text format: one entry per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let entry = WhitelistEntry::parse(line);
            let (WhitelistEntry::Key(key) | WhitelistEntry::Pair(key, _)) = &entry;
            if key.is_empty() {
                return Err(Error::Parse {
                    line: i as u64 + 1,
                    message: format!("whitelist entry {line:?} has an empty key"),
                });
            }
            if !seen.insert(entry.clone()) {
                return Err(Error::Parse {
                    line: i as u64 + 1,
                    message: format!("duplicate whitelist entry {line:?}"),
                });
            }
            entries.push(entry);
        }
        Self::new(entries)
    }

    pub fn default_set() -> Self {
        Self::parse(DEFAULT_WHITELIST).expect("bundled whitelist is valid")
    }

    pub fn allows(&self, key: &str, value: &str) -> bool {
        self.keys.contains(key) || self.pairs.contains(&(key.to_owned(), value.to_owned()))
    }
}

/// Result of reading one OSM XML document.
#[derive(Debug, Clone, Default)]
pub struct OsmParse {
    pub objects: Vec<TaggedObject>,
    /// Ways dropped because they referenced nodes absent from the document.
    pub skipped_ways: usize,
}

/// Counts newlines in consumed bytes so parse errors can report a line.
struct LineCounting<R> {
    inner: R,
    newlines: u64,
}

impl<R: BufRead> io::Read for LineCounting<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.newlines += buf[..n].iter().filter(|&&b| b == b'\n').count() as u64;
        Ok(n)
    }
}

impl<R: BufRead> BufRead for LineCounting<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        if let Ok(buf) = self.inner.fill_buf() {
            let amt = amt.min(buf.len());
            self.newlines += buf[..amt].iter().filter(|&&b| b == b'\n').count() as u64;
        }
        self.inner.consume(amt);
    }
}

enum Element {
    Node { id: i64, point: GeoPoint, tags: BTreeMap<String, String> },
    Way { id: i64, refs: Vec<i64>, tags: BTreeMap<String, String> },
    Relation,
    Other,
}

enum Pending {
    Node(TaggedObject),
    Way { id: i64, refs: Vec<i64>, tags: BTreeMap<String, String> },
}

fn attr(e: &BytesStart<'_>, name: &[u8], line: u64) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::Parse { line, message: err.to_string() })?;
        if a.key.as_ref() == name {
            let v = a
                .unescape_value()
                .map_err(|err| Error::Parse { line, message: err.to_string() })?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn required<T: std::str::FromStr>(e: &BytesStart<'_>, name: &str, line: u64) -> Result<T> {
    let raw = attr(e, name.as_bytes(), line)?.ok_or_else(|| Error::Parse {
        line,
        message: format!(
            "<{}> missing attribute {name}",
            String::from_utf8_lossy(e.name().as_ref())
        ),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} value {raw:?}"),
    })
}

fn open_element(e: &BytesStart<'_>, line: u64) -> Result<Element> {
    Ok(match e.name().as_ref() {
        b"node" => {
            let lat: f64 = required(e, "lat", line)?;
            let lon: f64 = required(e, "lon", line)?;
            let point = GeoPoint::new(lat, lon).map_err(|err| Error::Parse {
                line,
                message: err.to_string(),
            })?;
            Element::Node { id: required(e, "id", line)?, point, tags: BTreeMap::new() }
        }
        b"way" => Element::Way { id: required(e, "id", line)?, refs: Vec::new(), tags: BTreeMap::new() },
        b"relation" => Element::Relation,
        _ => Element::Other,
    })
}

/// Reads nodes and ways from an OSM XML stream. Ways are represented by the
/// centroid of their member nodes; relations and untagged objects are
/// dropped.
pub fn parse_osm<R: BufRead>(input: R) -> Result<OsmParse> {
    let mut reader = Reader::from_reader(LineCounting { inner: input, newlines: 0 });
    let mut buf = Vec::new();
    let mut coords: HashMap<i64, GeoPoint> = HashMap::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut current: Option<Element> = None;

    loop {
        let event = reader.read_event_into(&mut buf);
        let line = reader.get_ref().newlines + 1;
        let event = event.map_err(|err| Error::Parse { line, message: err.to_string() })?;
        match event {
            Event::Eof => break,
            Event::Start(e) => {
                if current.is_none() {
                    let el = open_element(&e, line)?;
                    if !matches!(el, Element::Other) {
                        current = Some(el);
                    }
                } else {
                    child(&mut current, &e, line)?;
                }
            }
            Event::Empty(e) => {
                if current.is_none() {
                    let el = open_element(&e, line)?;
                    close(el, &mut coords, &mut pending);
                } else {
                    child(&mut current, &e, line)?;
                }
            }
            Event::End(e) => {
                if matches!(e.name().as_ref(), b"node" | b"way" | b"relation") {
                    if let Some(el) = current.take() {
                        close(el, &mut coords, &mut pending);
                    }
                }
            }
            _ => {}
        }
        buf.clear();
    }

    let mut out = OsmParse::default();
    for item in pending {
        match item {
            Pending::Node(obj) => out.objects.push(obj),
            Pending::Way { id, mut refs, tags } => {
                if refs.len() > 1 && refs.first() == refs.last() {
                    refs.pop();
                }
                let points: Option<Vec<GeoPoint>> =
                    refs.iter().map(|r| coords.get(r).copied()).collect();
                match points {
                    Some(points) if !points.is_empty() => {
                        let n = points.len() as f64;
                        let lat = points.iter().map(|p| p.lat()).sum::<f64>() / n;
                        let lng = points.iter().map(|p| p.lng()).sum::<f64>() / n;
                        out.objects.push(TaggedObject {
                            osm_id: id,
                            kind: ObjectKind::Way,
                            representative_point: GeoPoint::new(lat, lng)?,
                            tags,
                        });
                    }
                    _ => {
                        warn!("way {id} references missing nodes; skipped");
                        out.skipped_ways += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn child(current: &mut Option<Element>, e: &BytesStart<'_>, line: u64) -> Result<()> {
    match (current, e.name().as_ref()) {
        (Some(Element::Node { tags, .. } | Element::Way { tags, .. }), b"tag") => {
            let k: String = required(e, "k", line)?;
            let v: String = required(e, "v", line)?;
            tags.insert(k, v);
        }
        (Some(Element::Way { refs, .. }), b"nd") => refs.push(required(e, "ref", line)?),
        _ => {}
    }
    Ok(())
}

fn close(el: Element, coords: &mut HashMap<i64, GeoPoint>, pending: &mut Vec<Pending>) {
    match el {
        Element::Node { id, point, tags } => {
            coords.insert(id, point);
            if !tags.is_empty() {
                pending.push(Pending::Node(TaggedObject {
                    osm_id: id,
                    kind: ObjectKind::Node,
                    representative_point: point,
                    tags,
                }));
            }
        }
        Element::Way { id, refs, tags } => {
            if !tags.is_empty() {
                pending.push(Pending::Way { id, refs, tags });
            }
        }
        Element::Relation | Element::Other => {}
    }
}

/// Keeps only whitelisted tags; objects left without tags are dropped.
pub fn filter_tags(objects: Vec<TaggedObject>, whitelist: &TagWhitelist) -> Vec<TaggedObject> {
    objects
        .into_iter()
        .filter_map(|mut obj| {
            obj.tags.retain(|k, v| whitelist.allows(k, v));
            (!obj.tags.is_empty()).then_some(obj)
        })
        .collect()
}

/// Counts each object's "key=value" features in the one cell holding its
/// representative point.
pub fn aggregate_counts(
    objects: &[TaggedObject],
    resolution: u8,
) -> Result<BTreeMap<CellId, TagCountVector>> {
    validate_resolution(resolution)?;
    let mut cells: BTreeMap<CellId, TagCountVector> = BTreeMap::new();
    for obj in objects {
        let cell = latlng_to_cell(&obj.representative_point, resolution)?;
        let counts = cells.entry(cell).or_default();
        for feature in obj.feature_names() {
            counts.increment(feature);
        }
    }
    cells.retain(|_, v| !v.is_empty());
    Ok(cells)
}

#[derive(Serialize, Deserialize)]
struct CellFeatureLine {
    cell: CellId,
    counts: TagCountVector,
}

/// Writes one JSON object per cell, ordered by cell id.
pub fn write_cell_features<W: Write>(
    mut out: W,
    cells: &BTreeMap<CellId, TagCountVector>,
) -> Result<()> {
    for (cell, counts) in cells {
        let line = CellFeatureLine { cell: *cell, counts: counts.clone() };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io("<cell features>", e))?;
    }
    Ok(())
}

pub fn read_cell_features<R: BufRead>(input: R) -> Result<BTreeMap<CellId, TagCountVector>> {
    let mut cells = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<cell features>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CellFeatureLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        let counts: TagCountVector = rec.counts.iter().map(|(k, n)| (k.to_owned(), n)).collect();
        if cells.insert(rec.cell, counts).is_some() {
            return Err(Error::Parse {
                line: i as u64 + 1,
                message: format!("duplicate cell {}", rec.cell),
            });
        }
    }
    Ok(cells)
}
