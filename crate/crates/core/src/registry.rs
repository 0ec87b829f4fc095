//! The catalog of JTS tables.
//!
//! The catalog is data: a TOML file shipped in `registry/jts.toml` and
//! embedded at build time. A different file can be loaded at runtime with
//! [`Registry::from_path`]. The schema is described in `docs/registry.md`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::cache::{MediaKind, SourceRef};
use crate::error::{Context, PipelineError, Result};
use crate::geo::GeoLevel;

const BUILTIN_REGISTRY: &str = include_str!("../registry/jts.toml");

/// Rewrites a whole-cell placeholder string into a number.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SentinelRule {
    pub pattern: String,
    pub replacement: f64,
    pub meaning: String,
    /// Column-name glob (`*` matches any run of characters), checked against
    /// both the normalized and the verbatim column name, case-insensitively.
    #[serde(default = "match_all")]
    pub applies_to: String,
}

fn match_all() -> String {
    "*".to_string()
}

impl SentinelRule {
    pub fn applies_to_column(&self, name: &str, source_name: &str) -> bool {
        glob_match(&self.applies_to, name) || glob_match(&self.applies_to, source_name)
    }
}

/// Case-insensitive glob match supporting only `*`.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let pattern: Vec<char> = pattern.to_lowercase().chars().collect();
    let text: Vec<char> = text.to_lowercase().chars().collect();
    let (mut p, mut t) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while t < text.len() {
        if p < pattern.len() && pattern[p] == '*' {
            backtrack = Some((p, t));
            p += 1;
        } else if p < pattern.len() && pattern[p] == text[t] {
            p += 1;
            t += 1;
        } else if let Some((bp, bt)) = backtrack {
            p = bp + 1;
            t = bt + 1;
            backtrack = Some((bp, bt + 1));
        } else {
            return false;
        }
    }
    pattern[p..].iter().all(|&c| c == '*')
}

/// Expected table dimensions. Column counts are fixed per table; row counts
/// are recorded per release year (sheet name).
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ExpectedShape {
    pub cols: usize,
    #[serde(default)]
    pub rows: BTreeMap<String, usize>,
}

impl ExpectedShape {
    pub fn rows_for(&self, sheet: &str) -> Option<usize> {
        self.rows.get(sheet).copied()
    }
}

/// One catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub table_code: String,
    pub family: String,
    pub purpose: Option<String>,
    pub title: String,
    pub source_ref: String,
    pub sheet_name_pattern: String,
    /// 0-based header row; `None` means detect it.
    pub header_row: Option<usize>,
    /// Minimum share of non-empty text cells for header detection.
    pub header_min_fill: f64,
    pub sentinel_rules: Vec<SentinelRule>,
    pub expected_shape: Option<ExpectedShape>,
    /// Column-name globs that are never coerced to numbers.
    pub text_columns: Vec<String>,
    pub level: Option<GeoLevel>,
    pub key_column: Option<String>,
}

impl TableSpec {
    /// A spec with defaults, for cleaning ad-hoc grids outside the catalog.
    pub fn ad_hoc(code: impl Into<String>) -> Self {
        let code: String = code.into();
        TableSpec {
            family: family_of(&code),
            source_ref: code.to_lowercase(),
            table_code: code,
            purpose: None,
            title: String::new(),
            sheet_name_pattern: "{code}".into(),
            header_row: None,
            header_min_fill: 0.5,
            sentinel_rules: Vec::new(),
            expected_shape: None,
            text_columns: Vec::new(),
            level: None,
            key_column: None,
        }
    }

    pub fn keeps_text(&self, name: &str, source_name: &str) -> bool {
        self.text_columns
            .iter()
            .any(|g| glob_match(g, name) || glob_match(g, source_name))
    }

    /// The concrete sheet name for a selector, following the table's pattern.
    pub fn sheet_name(&self, sheet: Option<&SheetSelector>) -> Result<String> {
        let with_code = self.sheet_name_pattern.replace("{code}", &self.table_code);
        let wants_year = with_code.contains("{year}");
        match sheet {
            Some(SheetSelector::Name(name)) => Ok(name.clone()),
            Some(SheetSelector::Year(year)) if wants_year => {
                Ok(with_code.replace("{year}", &year.to_string()))
            }
            Some(SheetSelector::Year(year)) => Ok(year.to_string()),
            None if !wants_year => Ok(with_code),
            None => Err(PipelineError::UnknownSheet(Context::new(format!(
                "{} has one sheet per year; a sheet or year is required",
                self.table_code
            )))),
        }
    }
}

/// The lowercase family prefix of a table code: `JTS0501` → `jts05`.
pub fn family_of(code: &str) -> String {
    code.chars().take(5).collect::<String>().to_lowercase()
}

/// A sheet given either as a release year or as a literal sheet name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SheetSelector {
    Year(u16),
    Name(String),
}

impl FromStr for SheetSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(year) = s.parse() {
                return Ok(SheetSelector::Year(year));
            }
        }
        Ok(SheetSelector::Name(s.to_string()))
    }
}

impl From<u16> for SheetSelector {
    fn from(year: u16) -> Self {
        SheetSelector::Year(year)
    }
}

impl From<&str> for SheetSelector {
    fn from(s: &str) -> Self {
        s.parse().expect("infallible")
    }
}

impl fmt::Display for SheetSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SheetSelector::Year(y) => write!(f, "{y}"),
            SheetSelector::Name(n) => f.write_str(n),
        }
    }
}

/// Filter for [`Registry::list_tables`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TableFilter {
    #[default]
    All,
    Family(String),
    /// Case-insensitive substring of the code, title or purpose.
    Query(String),
}

/// A boundary data set.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoSourceSpec {
    pub name: String,
    pub level: GeoLevel,
    pub source_ref: String,
    pub code_property: String,
    pub name_property: Option<String>,
}

/// Source column headers for one deprivation domain.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ImdColumns {
    pub score: String,
    pub rank: String,
    pub decile: Option<String>,
}

/// Where a deprivation release lives and how its columns are named.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ImdRelease {
    pub source: String,
    pub code_column: String,
    pub domains: BTreeMap<String, ImdColumns>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyInfo {
    pub title: String,
    pub sheet_name_pattern: String,
    pub level: Option<GeoLevel>,
    pub key_column: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Registry {
    tables: Vec<TableSpec>,
    by_code: HashMap<String, usize>,
    families: BTreeMap<String, FamilyInfo>,
    base_url: String,
    sources: BTreeMap<String, SourceRef>,
    geo: Vec<GeoSourceSpec>,
    imd: BTreeMap<u16, ImdRelease>,
}

// ---- file schema ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    schema_version: u32,
    defaults: RawDefaults,
    families: BTreeMap<String, RawFamily>,
    tables: Vec<RawTable>,
    #[serde(default)]
    sources: BTreeMap<String, RawSource>,
    #[serde(default)]
    geo: Vec<RawGeo>,
    #[serde(default)]
    imd: BTreeMap<String, ImdRelease>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    base_url: String,
    #[serde(default = "default_fill")]
    header_min_fill: f64,
    #[serde(default)]
    text_columns: Vec<String>,
}

fn default_fill() -> f64 {
    0.5
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    title: String,
    sheet_name_pattern: String,
    header_row: Option<usize>,
    level: Option<GeoLevel>,
    key_column: Option<String>,
    #[serde(default)]
    sentinels: Vec<SentinelRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    code: String,
    title: String,
    purpose: Option<String>,
    source: Option<String>,
    sheet_name_pattern: Option<String>,
    header_row: Option<usize>,
    header_min_fill: Option<f64>,
    expected_shape: Option<ExpectedShape>,
    #[serde(default)]
    sentinels: Vec<SentinelRule>,
    text_columns: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    url: String,
    media_kind: MediaKind,
    checksum: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeo {
    name: String,
    level: GeoLevel,
    source: String,
    code_property: String,
    name_property: Option<String>,
}

fn invalid(detail: impl Into<String>) -> PipelineError {
    PipelineError::malformed(format!("registry: {}", detail.into()))
}

impl Registry {
    /// The catalog shipped with the crate.
    pub fn builtin() -> &'static Registry {
        static BUILTIN: OnceLock<Registry> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Registry::from_toml_str(BUILTIN_REGISTRY).expect("built-in registry is valid")
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawRegistry = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if raw.schema_version != 1 {
            return Err(invalid(format!(
                "unsupported schema_version {}",
                raw.schema_version
            )));
        }

        let mut families = BTreeMap::new();
        for (name, fam) in &raw.families {
            families.insert(
                name.clone(),
                FamilyInfo {
                    title: fam.title.clone(),
                    sheet_name_pattern: fam.sheet_name_pattern.clone(),
                    level: fam.level,
                    key_column: fam.key_column.clone(),
                },
            );
        }

        let mut tables = Vec::with_capacity(raw.tables.len());
        for t in raw.tables {
            let code = t.code.to_uppercase();
            let family = family_of(&code);
            if code.len() != 7 || !code.starts_with("JTS") || !code[3..].bytes().all(|b| b.is_ascii_digit()) {
                return Err(invalid(format!("malformed table code {:?}", t.code)));
            }
            let fam = raw
                .families
                .get(&family)
                .ok_or_else(|| invalid(format!("{code}: family {family} is not declared")))?;
            let mut sentinel_rules = fam.sentinels.clone();
            sentinel_rules.extend(t.sentinels);
            for rule in &sentinel_rules {
                if rule.pattern.is_empty() || !rule.replacement.is_finite() {
                    return Err(invalid(format!("{code}: invalid sentinel rule {rule:?}")));
                }
            }
            tables.push(TableSpec {
                family,
                purpose: t.purpose.map(|p| p.to_lowercase()),
                title: t.title,
                source_ref: t.source.unwrap_or_else(|| code.to_lowercase()),
                sheet_name_pattern: t
                    .sheet_name_pattern
                    .unwrap_or_else(|| fam.sheet_name_pattern.clone()),
                header_row: t.header_row.or(fam.header_row),
                header_min_fill: t.header_min_fill.unwrap_or(raw.defaults.header_min_fill),
                sentinel_rules,
                expected_shape: t.expected_shape,
                text_columns: t
                    .text_columns
                    .unwrap_or_else(|| raw.defaults.text_columns.clone()),
                level: fam.level,
                key_column: fam.key_column.clone(),
                table_code: code,
            });
        }
        tables.sort_by(|a, b| a.table_code.cmp(&b.table_code));

        let mut by_code = HashMap::new();
        let mut purposes = HashMap::new();
        for (i, spec) in tables.iter().enumerate() {
            if by_code.insert(spec.table_code.clone(), i).is_some() {
                return Err(invalid(format!("duplicate table code {}", spec.table_code)));
            }
            if let Some(p) = &spec.purpose {
                if let Some(other) = purposes.insert((spec.family.clone(), p.clone()), i) {
                    return Err(invalid(format!(
                        "{} and {} share family/purpose {}/{p}",
                        tables[other].table_code, spec.table_code, spec.family
                    )));
                }
            }
        }

        let mut sources = BTreeMap::new();
        for (name, s) in raw.sources {
            let source = SourceRef::new(&name, s.url, s.media_kind, s.checksum)?;
            sources.insert(name, source);
        }

        let geo = raw
            .geo
            .into_iter()
            .map(|g| GeoSourceSpec {
                name: g.name,
                level: g.level,
                source_ref: g.source,
                code_property: g.code_property,
                name_property: g.name_property,
            })
            .collect();

        let mut imd = BTreeMap::new();
        for (year, release) in raw.imd {
            let year: u16 = year
                .parse()
                .map_err(|_| invalid(format!("imd release key {year:?} is not a year")))?;
            imd.insert(year, release);
        }

        Ok(Registry {
            tables,
            by_code,
            families,
            base_url: raw.defaults.base_url.trim_end_matches('/').to_string(),
            sources,
            geo,
            imd,
        })
    }

    /// Replaces the base URL used for tables without an explicit source.
    pub fn with_base_url(mut self, base_url: impl Into<String>) -> Self {
        self.base_url = base_url.into().trim_end_matches('/').to_string();
        self
    }

    /// Overrides (or adds) one logical source.
    pub fn with_source(mut self, source: SourceRef) -> Self {
        self.sources.insert(source.logical_name.clone(), source);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn families(&self) -> &BTreeMap<String, FamilyInfo> {
        &self.families
    }

    /// Case-insensitive lookup by table code.
    pub fn lookup(&self, table_code: &str) -> Result<&TableSpec> {
        let code = table_code.trim().to_uppercase();
        match self.by_code.get(&code) {
            Some(&i) => Ok(&self.tables[i]),
            None => {
                let mut near: Vec<(usize, &str)> = self
                    .tables
                    .iter()
                    .map(|t| (strsim::levenshtein(&code, &t.table_code), t.table_code.as_str()))
                    .collect();
                near.sort();
                let near: Vec<&str> = near.into_iter().take(3).map(|(_, c)| c).collect();
                Err(PipelineError::UnknownTable(Context::new(format!(
                    "{table_code:?} is not in the catalog; nearest: {}",
                    near.join(", ")
                ))))
            }
        }
    }

    /// Finds the table for a family and purpose and instantiates its sheet
    /// name.
    pub fn resolve(
        &self,
        family: &str,
        purpose: &str,
        sheet: Option<&SheetSelector>,
    ) -> Result<(&TableSpec, String)> {
        let family = family.trim().to_lowercase();
        let purpose = purpose.trim().to_lowercase();
        if !self.families.contains_key(&family) {
            return Err(PipelineError::UnknownFamily(Context::new(format!(
                "{family:?}; known families: {}",
                self.families.keys().cloned().collect::<Vec<_>>().join(", ")
            ))));
        }
        let in_family: Vec<&TableSpec> =
            self.tables.iter().filter(|t| t.family == family).collect();
        let spec = in_family
            .iter()
            .find(|t| t.purpose.as_deref() == Some(purpose.as_str()))
            .ok_or_else(|| {
                let valid: Vec<&str> = in_family.iter().filter_map(|t| t.purpose.as_deref()).collect();
                PipelineError::UnknownPurpose(Context::new(format!(
                    "{purpose:?} for {family}; valid purposes: {}",
                    if valid.is_empty() { "(none)".to_string() } else { valid.join(", ") }
                )))
            })?;
        let sheet_name = spec.sheet_name(sheet)?;
        Ok((spec, sheet_name))
    }

    /// Catalog entries matching a filter, ordered by table code.
    pub fn list_tables(&self, filter: &TableFilter) -> Vec<&TableSpec> {
        match filter {
            TableFilter::All => self.tables.iter().collect(),
            TableFilter::Family(f) => {
                let f = f.trim().to_lowercase();
                self.tables.iter().filter(|t| t.family == f).collect()
            }
            TableFilter::Query(q) => {
                let q = q.trim().to_lowercase();
                self.tables
                    .iter()
                    .filter(|t| {
                        t.table_code.to_lowercase().contains(&q)
                            || t.title.to_lowercase().contains(&q)
                            || t.purpose.as_deref().is_some_and(|p| p.contains(&q))
                    })
                    .collect()
            }
        }
    }

    /// Resolves a logical source name. Release files without an explicit
    /// entry live at `<base_url>/<name>.ods`.
    pub fn source(&self, logical_name: &str) -> Result<SourceRef> {
        if let Some(s) = self.sources.get(logical_name) {
            return Ok(s.clone());
        }
        if self.by_code.contains_key(&logical_name.to_uppercase()) {
            return SourceRef::new(
                logical_name,
                format!("{}/{logical_name}.ods", self.base_url),
                MediaKind::Ods,
                None,
            );
        }
        Err(invalid(format!("no source named {logical_name:?}")))
    }

    pub fn geo_sources(&self) -> &[GeoSourceSpec] {
        &self.geo
    }

    /// The named boundary set, or the first one declared for the level.
    pub fn geo_source(&self, level: GeoLevel, name: Option<&str>) -> Result<&GeoSourceSpec> {
        self.geo
            .iter()
            .find(|g| g.level == level && name.is_none_or(|n| g.name == n))
            .ok_or_else(|| {
                invalid(format!(
                    "no boundary set{} for level {level}",
                    name.map(|n| format!(" named {n:?}")).unwrap_or_default()
                ))
            })
    }

    pub fn imd_release(&self, year: u16) -> Result<&ImdRelease> {
        self.imd.get(&year).ok_or_else(|| {
            PipelineError::UnsupportedYear(Context::new(format!(
                "no deprivation release for {year}; supported: {}",
                self.imd.keys().map(u16::to_string).collect::<Vec<_>>().join(", ")
            )))
        })
    }
}
