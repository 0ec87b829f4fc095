//! Indices of Multiple Deprivation, normalized to one row per LSOA.
//!
//! Output columns are always `lsoa_code` (text), `score` (float), `rank`
//! (int, 1 = most deprived) and `decile` (int, 1 = most deprived 10%).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::cache::{Cache, FetchPolicy, MediaKind};
use crate::clean::{parse_decimal, parse_integer};
use crate::error::{Context, Location, PipelineError, Result};
use crate::ods::{Cell, CellGrid, OdsDocument};
use crate::registry::{ImdRelease, Registry};
use crate::table::{Column, ColumnData, Provenance, TidyTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImdDomain {
    Overall,
    Income,
    Employment,
    Education,
    Health,
    Crime,
    Barriers,
    LivingEnvironment,
}

impl ImdDomain {
    pub const ALL: [ImdDomain; 8] = [
        ImdDomain::Overall,
        ImdDomain::Income,
        ImdDomain::Employment,
        ImdDomain::Education,
        ImdDomain::Health,
        ImdDomain::Crime,
        ImdDomain::Barriers,
        ImdDomain::LivingEnvironment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImdDomain::Overall => "overall",
            ImdDomain::Income => "income",
            ImdDomain::Employment => "employment",
            ImdDomain::Education => "education",
            ImdDomain::Health => "health",
            ImdDomain::Crime => "crime",
            ImdDomain::Barriers => "barriers",
            ImdDomain::LivingEnvironment => "living_environment",
        }
    }
}

impl fmt::Display for ImdDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImdDomain {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        ImdDomain::ALL
            .into_iter()
            .find(|d| d.as_str() == wanted)
            .ok_or_else(|| {
                let valid: Vec<_> = ImdDomain::ALL.iter().map(|d| d.as_str()).collect();
                PipelineError::UnknownDomain(Context::new(format!(
                    "{s:?} is not a deprivation domain; valid domains: {}",
                    valid.join(", ")
                )))
            })
    }
}

/// Fetches the release for `year` through the cache and extracts `domain`.
pub fn get_imd(
    registry: &Registry,
    cache: &Cache,
    policy: FetchPolicy,
    year: u16,
    domain: ImdDomain,
) -> Result<TidyTable> {
    let release = registry.imd_release(year)?;
    let source = registry.source(&release.source)?;
    let entry = cache.fetch_entry(&source, policy)?;
    let bytes = std::fs::read(&entry.path).map_err(|e| {
        PipelineError::MalformedDocument(Context::at(e.to_string(), Location::file(entry.path.display().to_string())))
    })?;
    let mut table = imd_from_source(&bytes, source.media_kind, release, domain, &source.url)?;
    table.provenance_mut().fetched_at_ms = Some(entry.fetched_at_ms);
    Ok(table)
}

/// Extracts one domain from release file bytes.
pub fn imd_from_source(
    bytes: &[u8],
    media: MediaKind,
    release: &ImdRelease,
    domain: ImdDomain,
    source: &str,
) -> Result<TidyTable> {
    let cols = release.domains.get(domain.as_str()).ok_or_else(|| {
        PipelineError::UnknownDomain(Context::new(format!(
            "release has no header mapping for domain {domain}"
        )))
    })?;
    let grid = match media {
        MediaKind::Csv => CellGrid::from_csv("imd", bytes)?,
        MediaKind::Ods => {
            let doc = OdsDocument::from_bytes(bytes, source)?;
            let mut found = None;
            for name in doc.sheet_names() {
                let grid = doc.parse_sheet(name)?;
                if header_row(&grid, &release.code_column).is_some() {
                    found = Some(grid);
                    break;
                }
            }
            found.ok_or_else(|| {
                PipelineError::MissingKeyColumn(Context::at(
                    format!("no sheet has a {:?} column", release.code_column),
                    Location::file(source),
                ))
            })?
        }
        other => {
            return Err(PipelineError::malformed(format!(
                "deprivation data cannot be read from {other:?} files"
            )))
        }
    };
    let loc = |row: Option<usize>| {
        let mut l = Location::file(source).with_sheet(grid.sheet_name());
        l.row = row;
        l
    };

    let header = header_row(&grid, &release.code_column).ok_or_else(|| {
        PipelineError::MissingKeyColumn(Context::at(
            format!("no {:?} column", release.code_column),
            loc(None),
        ))
    })?;
    let find = |name: &str| -> Result<usize> {
        grid.rows()[header]
            .iter()
            .position(|c| c.as_text().trim() == name)
            .ok_or_else(|| {
                PipelineError::MissingKeyColumn(Context::at(format!("no {name:?} column"), loc(Some(header))))
            })
    };
    let code_i = find(&release.code_column)?;
    let score_i = find(&cols.score)?;
    let rank_i = find(&cols.rank)?;
    let decile_i = cols.decile.as_deref().map(find).transpose()?;

    let mut codes = Vec::new();
    let mut scores = Vec::new();
    let mut ranks = Vec::new();
    let mut deciles = Vec::new();
    for r in header + 1..grid.n_rows() {
        let row_loc = || loc(Some(r));
        let code = grid.get(r, code_i).as_text().trim();
        if code.is_empty() {
            if grid.rows()[r].iter().all(Cell::is_empty) {
                continue;
            }
            return Err(PipelineError::MalformedDocument(Context::at("empty LSOA code", row_loc())));
        }
        let bad = |what: &str, cell: &Cell| {
            PipelineError::MalformedDocument(Context::at(
                format!("{what} {:?} is not valid", cell.as_text()),
                row_loc(),
            ))
        };
        let score_cell = grid.get(r, score_i);
        let score = number(score_cell).ok_or_else(|| bad("score", score_cell))?;
        let rank_cell = grid.get(r, rank_i);
        let rank = integer(rank_cell).ok_or_else(|| bad("rank", rank_cell))?;
        let decile = match decile_i {
            Some(i) => {
                let c = grid.get(r, i);
                Some(integer(c).ok_or_else(|| bad("decile", c))?)
            }
            None => None,
        };
        codes.push(code.to_string());
        scores.push(score);
        ranks.push(rank);
        deciles.push(decile);
    }

    let n = codes.len() as i64;
    let mut seen_codes = HashSet::with_capacity(codes.len());
    for (i, c) in codes.iter().enumerate() {
        if !seen_codes.insert(c.as_str()) {
            return Err(PipelineError::DuplicateKey(Context::at(
                format!("LSOA code {c:?} appears more than once"),
                loc(Some(header + 1 + i)),
            )));
        }
    }
    let mut by_rank: Vec<Option<usize>> = vec![None; codes.len()];
    for (i, &r) in ranks.iter().enumerate() {
        if r < 1 || r > n || by_rank[(r - 1) as usize].replace(i).is_some() {
            return Err(PipelineError::MalformedDocument(Context::at(
                format!("{domain} ranks are not a permutation of 1..{n} (rank {r})"),
                loc(None),
            )));
        }
    }
    let deciles: Vec<i64> = deciles
        .iter()
        .zip(&ranks)
        .map(|(d, &r)| d.unwrap_or_else(|| decile_of(r, n)))
        .collect();
    if let Some(d) = deciles.iter().find(|d| !(1..=10).contains(*d)) {
        return Err(PipelineError::MalformedDocument(Context::at(
            format!("{domain} decile {d} is outside 1..10"),
            loc(None),
        )));
    }
    let mut prev = 1;
    for i in by_rank.into_iter().flatten() {
        if deciles[i] < prev {
            return Err(PipelineError::MalformedDocument(Context::at(
                format!("{domain} deciles decrease as rank increases at {:?}", codes[i]),
                loc(None),
            )));
        }
        prev = deciles[i];
    }

    let mut provenance = Provenance::new(source);
    provenance.table_code = Some(format!("imd:{domain}"));
    TidyTable::with_rows(
        vec![
            Column::new("lsoa_code", ColumnData::Text(codes.into_iter().map(Some).collect())),
            Column::new("score", ColumnData::Float(scores.into_iter().map(Some).collect())),
            Column::new("rank", ColumnData::Int(ranks.into_iter().map(Some).collect())),
            Column::new("decile", ColumnData::Int(deciles.into_iter().map(Some).collect())),
        ],
        n as usize,
        provenance,
    )
}

/// Decile for a 1-based rank among `n` areas.
pub fn decile_of(rank: i64, n: i64) -> i64 {
    ((rank * 10 + n - 1) / n).clamp(1, 10)
}

fn header_row(grid: &CellGrid, code_column: &str) -> Option<usize> {
    grid.rows()
        .iter()
        .take(50)
        .position(|row| row.iter().any(|c| c.as_text().trim() == code_column))
}

fn number(cell: &Cell) -> Option<f64> {
    cell.as_number().or_else(|| parse_decimal(cell.as_text().trim()))
}

fn integer(cell: &Cell) -> Option<i64> {
    match cell.as_number() {
        Some(v) if v.fract() == 0.0 && v.abs() < 9e15 => Some(v as i64),
        Some(_) => None,
        None => parse_integer(cell.as_text().trim()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn release() -> ImdRelease {
        Registry::builtin().imd_release(2019).unwrap().clone()
    }

    fn csv(rows: &[(&str, f64, i64, i64)]) -> Vec<u8> {
        let r = release();
        let h = &r.domains["health"];
        let mut out = format!(
            "{},\"{}\",\"{}\",\"{}\"\n",
            r.code_column,
            h.score,
            h.rank,
            h.decile.as_ref().unwrap()
        );
        for (c, s, rk, d) in rows {
            out.push_str(&format!("{c},{s},{rk},{d}\n"));
        }
        out.into_bytes()
    }

    #[test]
    fn domain_names() {
        assert_eq!("living-environment".parse::<ImdDomain>().unwrap(), ImdDomain::LivingEnvironment);
        let err = "cuisine".parse::<ImdDomain>().unwrap_err();
        assert_eq!(err.name(), "UnknownDomain");
        for d in ImdDomain::ALL {
            assert!(err.to_string().contains(d.as_str()));
        }
    }

    #[test]
    fn reads_health_domain() {
        let bytes = csv(&[("E01000002", 1.5, 2, 6), ("E01000001", 2.5, 1, 1)]);
        let t = imd_from_source(&bytes, MediaKind::Csv, &release(), ImdDomain::Health, "x").unwrap();
        assert_eq!(t.column_names(), ["lsoa_code", "score", "rank", "decile"]);
        assert_eq!(t.column("rank").unwrap().data, ColumnData::Int(vec![Some(2), Some(1)]));
    }

    #[test]
    fn validates_ranks_and_deciles() {
        let r = release();
        let gap = csv(&[("A", 1.0, 1, 1), ("B", 1.0, 3, 1)]);
        assert_eq!(imd_from_source(&gap, MediaKind::Csv, &r, ImdDomain::Health, "x").unwrap_err().name(), "MalformedDocument");
        let non_monotone = csv(&[("A", 1.0, 1, 5), ("B", 1.0, 2, 4)]);
        assert_eq!(imd_from_source(&non_monotone, MediaKind::Csv, &r, ImdDomain::Health, "x").unwrap_err().name(), "MalformedDocument");
        let dup = csv(&[("A", 1.0, 1, 1), ("A", 1.0, 2, 1)]);
        assert_eq!(imd_from_source(&dup, MediaKind::Csv, &r, ImdDomain::Health, "x").unwrap_err().name(), "DuplicateKey");
        let wrong_domain = csv(&[("A", 1.0, 1, 1)]);
        assert_eq!(imd_from_source(&wrong_domain, MediaKind::Csv, &r, ImdDomain::Crime, "x").unwrap_err().name(), "MissingKeyColumn");
    }

    #[test]
    fn computed_deciles() {
        let n = 32844;
        assert_eq!(decile_of(1, n), 1);
        assert_eq!(decile_of(3284, n), 1);
        assert_eq!(decile_of(3285, n), 2);
        assert_eq!(decile_of(n, n), 10);
        assert_eq!(decile_of(1, 3), 4);
    }

    #[test]
    fn unsupported_year() {
        assert_eq!(Registry::builtin().imd_release(2015).unwrap_err().name(), "UnsupportedYear");
    }
}
