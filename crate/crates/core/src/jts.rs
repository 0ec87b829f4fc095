//! The retrieval facade: resolve, fetch, parse, clean and optionally
//! attach boundaries.

use std::path::Path;

use crate::cache::{Cache, FetchPolicy, MediaKind};
use crate::clean::clean;
use crate::error::{Context, Location, PipelineError, Result};
use crate::geo::{get_geo, join_geo, FeatureSet, GeoLevel, GeoTable};
use crate::imd::{get_imd, ImdDomain};
use crate::ods::{CellGrid, OdsDocument};
use crate::registry::{family_of, Registry, SheetSelector, TableSpec};
use crate::table::TidyTable;

/// What to retrieve. Either `table_code`, or `family` and `purpose`, must
/// be set; when both are given they must name the same table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JtsRequest {
    pub table_code: Option<String>,
    pub family: Option<String>,
    pub purpose: Option<String>,
    pub sheet: Option<SheetSelector>,
    pub geo: bool,
}

impl JtsRequest {
    pub fn table(code: impl Into<String>) -> Self {
        JtsRequest {
            table_code: Some(code.into()),
            ..Default::default()
        }
    }

    pub fn purpose(family: impl Into<String>, purpose: impl Into<String>) -> Self {
        JtsRequest {
            family: Some(family.into()),
            purpose: Some(purpose.into()),
            ..Default::default()
        }
    }

    pub fn sheet(mut self, sheet: impl Into<SheetSelector>) -> Self {
        self.sheet = Some(sheet.into());
        self
    }

    pub fn with_geo(mut self, geo: bool) -> Self {
        self.geo = geo;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JtsData {
    Table(TidyTable),
    Geo(GeoTable),
}

impl JtsData {
    pub fn table(&self) -> &TidyTable {
        match self {
            JtsData::Table(t) => t,
            JtsData::Geo(g) => &g.table,
        }
    }

    pub fn into_table(self) -> TidyTable {
        match self {
            JtsData::Table(t) => t,
            JtsData::Geo(g) => g.table,
        }
    }
}

fn ambiguous(detail: String) -> PipelineError {
    PipelineError::AmbiguousRequest(Context::new(detail))
}

/// A catalog plus a download cache.
#[derive(Debug, Clone)]
pub struct Jts {
    registry: Registry,
    cache: Cache,
    policy: FetchPolicy,
}

impl Jts {
    pub fn new(registry: Registry, cache: Cache) -> Self {
        Jts {
            registry,
            cache,
            policy: FetchPolicy::default(),
        }
    }

    /// The built-in catalog with the cache from the environment.
    pub fn from_env() -> Result<Self> {
        Ok(Jts::new(Registry::builtin().clone(), Cache::from_env()?))
    }

    pub fn with_policy(mut self, policy: FetchPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn policy(&self) -> FetchPolicy {
        self.policy
    }

    /// The catalog entry and concrete sheet name a request refers to.
    pub fn resolve(&self, request: &JtsRequest) -> Result<(&TableSpec, String)> {
        let by_purpose = |family: &str, purpose: &str| self.registry.resolve(family, purpose, request.sheet.as_ref());
        match (&request.table_code, &request.family, &request.purpose) {
            (None, Some(f), Some(p)) => by_purpose(f, p),
            (None, None, None) => Err(ambiguous("request names neither a table code nor a family and purpose".into())),
            (None, _, _) => Err(ambiguous("a family and a purpose are both required without a table code".into())),
            (Some(code), family, purpose) => {
                let spec = self.registry.lookup(code)?;
                if let Some(f) = family {
                    if f.trim().to_lowercase() != spec.family {
                        return Err(ambiguous(format!(
                            "table {} belongs to {}, not {}",
                            spec.table_code, spec.family, f
                        )));
                    }
                }
                if let Some(p) = purpose {
                    let family = family.clone().unwrap_or_else(|| family_of(&spec.table_code));
                    let other = by_purpose(&family, p).map_err(|e| {
                        ambiguous(format!("table {} conflicts with purpose {p:?} ({e})", spec.table_code))
                    })?;
                    if other.0.table_code != spec.table_code {
                        return Err(ambiguous(format!(
                            "table {} does not match {family}/{p}, which is {}",
                            spec.table_code, other.0.table_code
                        )));
                    }
                }
                Ok((spec, spec.sheet_name(request.sheet.as_ref())?))
            }
        }
    }

    /// Retrieves a cleaned table, with boundaries attached when
    /// `request.geo` is set.
    pub fn get_jts(&self, request: &JtsRequest) -> Result<JtsData> {
        let (spec, sheet) = self.resolve(request)?;
        let geo_key = match (request.geo, spec.level, spec.key_column.as_deref()) {
            (false, _, _) => None,
            (true, Some(level), Some(key)) => Some((level, key)),
            (true, _, _) => {
                return Err(PipelineError::MissingKeyColumn(Context::new(format!(
                    "{} has no area code column to join boundaries on",
                    spec.table_code
                ))))
            }
        };
        let source = self.registry.source(&spec.source_ref)?;
        let entry = self.cache.fetch_entry(&source, self.policy)?;
        let bytes = std::fs::read(&entry.path).map_err(|e| {
            PipelineError::MalformedDocument(Context::at(e.to_string(), Location::file(entry.path.display().to_string())))
        })?;
        let grid = match source.media_kind {
            MediaKind::Ods => OdsDocument::from_bytes(&bytes, &source.url)?.parse_sheet(&sheet)?,
            MediaKind::Csv => CellGrid::from_csv(sheet.as_str(), &bytes)?,
            other => {
                return Err(PipelineError::MalformedDocument(Context::at(
                    format!("a {other:?} file cannot hold a statistics table"),
                    Location::file(&source.url),
                )))
            }
        };
        let mut table = clean(&grid, spec).map_err(|e| with_file(e, &source.url))?;
        let p = table.provenance_mut();
        p.source = source.url.clone();
        p.fetched_at_ms = Some(entry.fetched_at_ms);

        let Some((level, key)) = geo_key else {
            return Ok(JtsData::Table(table));
        };
        let fs = self.geo(level, None)?;
        Ok(JtsData::Geo(join_geo(table, &fs, key)?))
    }

    /// Loads a boundary set declared in the catalog.
    pub fn geo(&self, level: GeoLevel, name: Option<&str>) -> Result<FeatureSet> {
        let g = self.registry.geo_source(level, name)?;
        let source = self.registry.source(&g.source_ref)?;
        get_geo(&self.cache, self.policy, level, &source, &g.code_property, g.name_property.as_deref())
    }

    pub fn imd(&self, year: u16, domain: ImdDomain) -> Result<TidyTable> {
        get_imd(&self.registry, &self.cache, self.policy, year, domain)
    }
}

fn with_file(err: PipelineError, file: &str) -> PipelineError {
    let set = |mut c: Context| {
        if c.location.file.is_none() {
            c.location.file = Some(file.to_string());
        }
        c
    };
    match err {
        PipelineError::NoHeader(c) => PipelineError::NoHeader(set(c)),
        PipelineError::MalformedDocument(c) => PipelineError::MalformedDocument(set(c)),
        PipelineError::ShapeMismatch { expected, actual, context } => PipelineError::ShapeMismatch {
            expected,
            actual,
            context: set(context),
        },
        other => other,
    }
}

/// Parses every sheet (or the named ones) of an ODS file and writes one
/// `<sheet>.csv` per sheet into `out_dir`. Returns the written paths.
pub fn convert_ods(path: &Path, sheets: &[String], out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let doc = OdsDocument::open(path)?;
    let names: Vec<String> = if sheets.is_empty() { doc.sheet_names().to_vec() } else { sheets.to_vec() };
    let grids = names.iter().map(|n| doc.parse_sheet(n)).collect::<Result<Vec<_>>>()?;
    let io = |e: std::io::Error, p: &Path| {
        PipelineError::MalformedDocument(Context::at(format!("cannot write output: {e}"), Location::file(p.display().to_string())))
    };
    std::fs::create_dir_all(out_dir).map_err(|e| io(e, out_dir))?;
    let mut written = Vec::with_capacity(grids.len());
    for grid in grids {
        let file_name: String = grid
            .sheet_name()
            .chars()
            .map(|c| if c == '/' || c == '\\' || c == '\0' { '_' } else { c })
            .collect();
        let dest = out_dir.join(format!("{file_name}.csv"));
        std::fs::write(&dest, grid.to_csv()).map_err(|e| io(e, &dest))?;
        written.push(dest);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jts() -> (tempfile::TempDir, Jts) {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        (dir, Jts::new(Registry::builtin().clone(), cache).with_policy(FetchPolicy::Offline))
    }

    #[test]
    fn request_resolution() {
        let (_d, j) = jts();
        let (a, sheet) = j.resolve(&JtsRequest::purpose("jts05", "employment").sheet(2019)).unwrap();
        assert_eq!((a.table_code.as_str(), sheet.as_str()), ("JTS0501", "2019"));
        let (b, _) = j.resolve(&JtsRequest::table("jts0501").sheet(2019)).unwrap();
        assert_eq!(a, b);
        let (c, sheet) = j.resolve(&JtsRequest::table("jts0101").sheet("JTS0101")).unwrap();
        assert_eq!((c.table_code.as_str(), sheet.as_str()), ("JTS0101", "JTS0101"));

        let mut both = JtsRequest::purpose("jts05", "food");
        both.table_code = Some("JTS0501".into());
        assert_eq!(j.resolve(&both).unwrap_err().name(), "AmbiguousRequest");
        let mut code_purpose = JtsRequest::table("JTS0501");
        code_purpose.purpose = Some("food".into());
        assert_eq!(j.resolve(&code_purpose).unwrap_err().name(), "AmbiguousRequest");
        let mut agree = JtsRequest::purpose("jts05", "employment").sheet(2019);
        agree.table_code = Some("JTS0501".into());
        assert!(j.resolve(&agree).is_ok());
        assert_eq!(j.resolve(&JtsRequest::default()).unwrap_err().name(), "AmbiguousRequest");
        assert_eq!(j.resolve(&JtsRequest::purpose("jts05", "cinema")).unwrap_err().name(), "UnknownPurpose");
    }

    #[test]
    fn offline_cold_cache_misses() {
        let (_d, j) = jts();
        let err = j.get_jts(&JtsRequest::table("JTS0101")).unwrap_err();
        assert_eq!(err.name(), "CacheMiss");
    }
}
