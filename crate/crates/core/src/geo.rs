//! Boundary loading and geometry joins.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use serde_json::Value as Json;

use crate::cache::{Cache, FetchPolicy, SourceRef};
use crate::error::{Context, Location, PipelineError, Result};
use crate::table::{Column, ColumnData, GeoMatch, TidyTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoLevel {
    Lsoa,
    LocalAuthority,
}

impl GeoLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            GeoLevel::Lsoa => "lsoa",
            GeoLevel::LocalAuthority => "local_authority",
        }
    }

    pub fn default_code_property(self) -> &'static str {
        match self {
            GeoLevel::Lsoa => "LSOA11CD",
            GeoLevel::LocalAuthority => "LAD21CD",
        }
    }
}

impl fmt::Display for GeoLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeoLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lsoa" => Ok(GeoLevel::Lsoa),
            "local_authority" | "la" | "lad" => Ok(GeoLevel::LocalAuthority),
            _ => Err(format!("unknown geography level {s:?}; expected lsoa or local_authority")),
        }
    }
}

/// A closed ring of (lon, lat) positions.
pub type Ring = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Exterior ring followed by holes.
    Polygon(Vec<Ring>),
    MultiPolygon(Vec<Vec<Ring>>),
}

impl Geometry {
    pub fn polygons(&self) -> impl Iterator<Item = &[Ring]> {
        let (single, multi) = match self {
            Geometry::Polygon(p) => (Some(p.as_slice()), None),
            Geometry::MultiPolygon(m) => (None, Some(m.iter().map(Vec::as_slice))),
        };
        single.into_iter().chain(multi.into_iter().flatten())
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        self.polygons().flatten()
    }

    /// (min_lon, min_lat, max_lon, max_lat), or None for an empty geometry.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        let mut points = self.rings().flatten().peekable();
        points.peek()?;
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in points {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        Some(b)
    }

    pub fn to_geojson(&self) -> Json {
        let rings = |p: &[Ring]| Json::from(p.iter().map(|r| r.iter().map(|c| vec![c[0], c[1]]).collect::<Vec<_>>()).collect::<Vec<_>>());
        match self {
            Geometry::Polygon(p) => serde_json::json!({"type": "Polygon", "coordinates": rings(p)}),
            Geometry::MultiPolygon(m) => serde_json::json!({
                "type": "MultiPolygon",
                "coordinates": m.iter().map(|p| rings(p)).collect::<Vec<_>>(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub code: String,
    pub name: String,
    pub geometry: Geometry,
    pub properties: BTreeMap<String, Json>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    level: GeoLevel,
    features: Vec<Feature>,
    index: HashMap<String, usize>,
}

impl FeatureSet {
    pub fn new(level: GeoLevel, features: Vec<Feature>) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            for ring in f.geometry.rings() {
                check_ring(ring).map_err(|d| {
                    PipelineError::MalformedDocument(Context::at(
                        format!("feature {:?}: {d}", f.code),
                        Location::default().with_row(i),
                    ))
                })?;
            }
            if index.insert(f.code.clone(), i).is_some() {
                return Err(PipelineError::DuplicateKey(Context::at(
                    format!("boundary code {:?} appears more than once", f.code),
                    Location::default().with_row(i),
                )));
            }
        }
        Ok(FeatureSet { level, features, index })
    }

    /// Parses a GeoJSON FeatureCollection. `name_property` is optional;
    /// features without it get an empty name.
    pub fn from_geojson(
        bytes: &[u8],
        level: GeoLevel,
        code_property: &str,
        name_property: Option<&str>,
        source: &str,
    ) -> Result<Self> {
        let at = |detail: String, row: Option<usize>| {
            let mut loc = Location::file(source);
            loc.row = row;
            PipelineError::MalformedDocument(Context::at(detail, loc))
        };
        let doc: Json = serde_json::from_slice(bytes).map_err(|e| at(format!("invalid JSON: {e}"), None))?;
        if doc.get("type").and_then(Json::as_str) != Some("FeatureCollection") {
            return Err(at("top-level object is not a FeatureCollection".into(), None));
        }
        let items = doc
            .get("features")
            .and_then(Json::as_array)
            .ok_or_else(|| at("FeatureCollection has no features array".into(), None))?;

        let mut features = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let props = match item.get("properties") {
                Some(Json::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                Some(Json::Null) | None => BTreeMap::new(),
                Some(_) => return Err(at("properties is not an object".into(), Some(i))),
            };
            let code = match props.get(code_property) {
                Some(Json::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
                Some(Json::Number(n)) => n.to_string(),
                _ => {
                    let mut loc = Location::file(source);
                    loc.row = Some(i);
                    return Err(PipelineError::MissingCodeProperty(Context::at(
                        format!("feature has no {code_property:?} property"),
                        loc,
                    )));
                }
            };
            let name = name_property
                .and_then(|p| props.get(p))
                .and_then(Json::as_str)
                .unwrap_or_default()
                .to_string();
            let geometry = item
                .get("geometry")
                .ok_or_else(|| at(format!("feature {code:?} has no geometry"), Some(i)))
                .and_then(|g| parse_geometry(g).map_err(|d| at(format!("feature {code:?}: {d}"), Some(i))))?;
            features.push(Feature { code, name, geometry, properties: props });
        }
        FeatureSet::new(level, features).map_err(|e| match e {
            PipelineError::MalformedDocument(mut c) | PipelineError::DuplicateKey(mut c) => {
                c.location.file = Some(source.to_string());
                PipelineError::MalformedDocument(c)
            }
            other => other,
        })
    }

    pub fn level(&self) -> GeoLevel {
        self.level
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, code: &str) -> Option<&Feature> {
        self.index.get(code).map(|&i| &self.features[i])
    }
}

fn parse_position(v: &Json) -> Result<[f64; 2], String> {
    let arr = v.as_array().filter(|a| a.len() >= 2).ok_or("position is not an array of numbers")?;
    let lon = arr[0].as_f64().ok_or("longitude is not a number")?;
    let lat = arr[1].as_f64().ok_or("latitude is not a number")?;
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(format!(
            "position ({lon}, {lat}) is outside longitude/latitude bounds; reproject to WGS84 first"
        ));
    }
    Ok([lon, lat])
}

fn parse_polygon(v: &Json) -> Result<Vec<Ring>, String> {
    let rings = v.as_array().ok_or("polygon coordinates are not an array")?;
    if rings.is_empty() {
        return Err("polygon has no rings".into());
    }
    rings
        .iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| "ring is not an array".to_string())?
                .iter()
                .map(parse_position)
                .collect()
        })
        .collect()
}

fn parse_geometry(g: &Json) -> Result<Geometry, String> {
    let coords = g.get("coordinates").ok_or("geometry has no coordinates")?;
    match g.get("type").and_then(Json::as_str) {
        Some("Polygon") => Ok(Geometry::Polygon(parse_polygon(coords)?)),
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| "multipolygon coordinates are not an array".to_string())?
            .iter()
            .map(parse_polygon)
            .collect::<Result<_, _>>()
            .map(Geometry::MultiPolygon),
        Some(other) => Err(format!("unsupported geometry type {other:?}")),
        None => Err("geometry has no type".into()),
    }
}

fn check_ring(ring: &Ring) -> Result<(), String> {
    if ring.len() < 4 {
        return Err(format!("ring has {} positions, at least 4 required", ring.len()));
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".into());
    }
    for p in ring {
        if !(-180.0..=180.0).contains(&p[0]) || !(-90.0..=90.0).contains(&p[1]) {
            return Err(format!("position ({}, {}) is outside longitude/latitude bounds", p[0], p[1]));
        }
    }
    Ok(())
}

/// Downloads (or reuses) a boundary file and parses it.
pub fn get_geo(
    cache: &Cache,
    policy: FetchPolicy,
    level: GeoLevel,
    source: &SourceRef,
    code_property: &str,
    name_property: Option<&str>,
) -> Result<FeatureSet> {
    let path = cache.fetch(source, policy)?;
    let bytes = std::fs::read(&path).map_err(|e| {
        PipelineError::MalformedDocument(Context::at(e.to_string(), Location::file(path.display().to_string())))
    })?;
    FeatureSet::from_geojson(&bytes, level, code_property, name_property, &source.url)
}

/// A table with an optional boundary feature per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoTable {
    pub table: TidyTable,
    pub features: Vec<Option<Feature>>,
    pub level: GeoLevel,
}

impl GeoTable {
    pub fn geometry(&self, row: usize) -> Option<&Geometry> {
        self.features.get(row)?.as_ref().map(|f| &f.geometry)
    }

    pub fn matched(&self) -> usize {
        self.features.iter().filter(|f| f.is_some()).count()
    }

    /// The table with an extra text column `geometry` holding each row's
    /// GeoJSON geometry object.
    pub fn into_table_with_geometry(self) -> Result<TidyTable> {
        let GeoTable { mut table, features, .. } = self;
        let geometry = features
            .iter()
            .map(|f| f.as_ref().map(|f| f.geometry.to_geojson().to_string()))
            .collect();
        table.push_column(Column::new("geometry", ColumnData::Text(geometry)))?;
        Ok(table)
    }
}

/// Attaches boundaries to rows by matching `key` against feature codes.
pub fn join_geo(table: TidyTable, fs: &FeatureSet, key: &str) -> Result<GeoTable> {
    let keys = table.require(key)?.as_text().ok_or_else(|| {
        PipelineError::MissingKeyColumn(Context::new(format!("key column {key:?} is not text")))
    })?;
    let features: Vec<Option<Feature>> = keys
        .iter()
        .map(|k| k.as_deref().and_then(|k| fs.get(k.trim())).cloned())
        .collect();
    let matched = features.iter().filter(|f| f.is_some()).count();
    let mut table = table;
    table.provenance_mut().geo_match = Some(GeoMatch {
        matched,
        unmatched: features.len() - matched,
    });
    Ok(GeoTable { table, features, level: fs.level() })
}

/// Codes present in the table but absent from the boundary set.
pub fn unmatched_codes(gt: &GeoTable, key: &str) -> Vec<String> {
    let Some(keys) = gt.table.column(key).and_then(|c| c.as_text()) else {
        return Vec::new();
    };
    let mut seen = HashSet::new();
    keys.iter()
        .zip(&gt.features)
        .filter(|(_, f)| f.is_none())
        .filter_map(|(k, _)| k.clone())
        .filter(|k| seen.insert(k.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Provenance;

    fn square(code: &str, x: f64) -> Json {
        serde_json::json!({
            "type": "Feature",
            "properties": {"LSOA11CD": code, "LSOA11NM": format!("Area {code}")},
            "geometry": {"type": "Polygon", "coordinates": [[[x, 51.0], [x + 0.1, 51.0], [x + 0.1, 51.1], [x, 51.1], [x, 51.0]]]},
        })
    }

    fn collection(features: Vec<Json>) -> Vec<u8> {
        serde_json::json!({"type": "FeatureCollection", "features": features}).to_string().into_bytes()
    }

    fn load(bytes: &[u8]) -> Result<FeatureSet> {
        FeatureSet::from_geojson(bytes, GeoLevel::Lsoa, "LSOA11CD", Some("LSOA11NM"), "test.geojson")
    }

    fn four() -> FeatureSet {
        load(&collection((1..=4).map(|i| square(&format!("E0100000{i}"), i as f64 * -0.2)).collect())).unwrap()
    }

    fn table(codes: &[&str]) -> TidyTable {
        TidyTable::new(
            vec![
                Column::new("lsoa_code", ColumnData::Text(codes.iter().map(|c| Some(c.to_string())).collect())),
                Column::new("v", ColumnData::Float((0..codes.len()).map(|i| Some(i as f64)).collect())),
            ],
            Provenance::new("t"),
        )
        .unwrap()
    }

    #[test]
    fn loads_features() {
        let fs = four();
        assert_eq!(fs.len(), 4);
        let codes: Vec<_> = fs.features().iter().map(|f| f.code.as_str()).collect();
        assert_eq!(codes, ["E01000001", "E01000002", "E01000003", "E01000004"]);
        assert_eq!(fs.get("E01000002").unwrap().name, "Area E01000002");
        assert!(load(&collection(vec![])).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_features() {
        let mut f = square("E01000001", 0.0);
        f["properties"].as_object_mut().unwrap().remove("LSOA11CD");
        assert_eq!(load(&collection(vec![f])).unwrap_err().name(), "MissingCodeProperty");

        let mut open = square("E01000001", 0.0);
        open["geometry"]["coordinates"][0].as_array_mut().unwrap().pop();
        assert_eq!(load(&collection(vec![open])).unwrap_err().name(), "MalformedDocument");

        let bng = serde_json::json!({
            "type": "Feature",
            "properties": {"LSOA11CD": "E01000001"},
            "geometry": {"type": "Polygon", "coordinates": [[[530000.0, 180000.0], [530100.0, 180000.0], [530100.0, 180100.0], [530000.0, 180000.0]]]},
        });
        let err = load(&collection(vec![bng])).unwrap_err();
        assert!(err.to_string().contains("bounds"), "{err}");

        let dup = collection(vec![square("E01000001", 0.0), square("E01000001", 1.0)]);
        assert_eq!(load(&dup).unwrap_err().name(), "MalformedDocument");
        assert_eq!(load(b"{}").unwrap_err().name(), "MalformedDocument");
    }

    #[test]
    fn join_preserves_rows_and_values() {
        let t = table(&["E01000001", "E01000002", "E01000003", "E01000009"]);
        let gt = join_geo(t.clone(), &four(), "lsoa_code").unwrap();
        assert_eq!(gt.table.columns(), t.columns());
        assert_eq!(gt.matched(), 3);
        assert!(gt.geometry(3).is_none());
        assert_eq!(gt.table.provenance().geo_match, Some(GeoMatch { matched: 3, unmatched: 1 }));
        for (row, f) in gt.features.iter().enumerate() {
            if let Some(f) = f {
                assert_eq!(Some(f.code.as_str()), t.column("lsoa_code").unwrap().as_text().unwrap()[row].as_deref());
            }
        }
        assert_eq!(unmatched_codes(&gt, "lsoa_code"), ["E01000009"]);

        let empty = load(&collection(vec![])).unwrap();
        assert_eq!(join_geo(t.clone(), &empty, "lsoa_code").unwrap().matched(), 0);
        assert_eq!(join_geo(t, &empty, "nope").unwrap_err().name(), "MissingKeyColumn");
    }

    #[test]
    fn geometry_column_export() {
        let gt = join_geo(table(&["E01000001", "X"]), &four(), "lsoa_code").unwrap();
        let t = gt.into_table_with_geometry().unwrap();
        let g = t.column("geometry").unwrap().as_text().unwrap();
        assert!(g[0].as_deref().unwrap().starts_with("{\"coordinates\""));
        assert!(g[1].is_none());
    }

    #[test]
    fn level_names() {
        assert_eq!("lsoa".parse::<GeoLevel>().unwrap(), GeoLevel::Lsoa);
        assert_eq!("local-authority".parse::<GeoLevel>().unwrap(), GeoLevel::LocalAuthority);
        assert_eq!(GeoLevel::LocalAuthority.to_string(), "local_authority");
    }
}
