#![allow(dead_code)]

use jtstats::ods::CellKind;
use jtstats::{Cache, CellGrid, Registry, SourceRef};
use jtstats_fixtures::{FixtureCell, Grid};

/// The parsed grid in fixture terms, for comparison with a logical grid.
pub fn as_fixture(grid: &CellGrid) -> Grid {
    grid.rows()
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| match c.kind() {
                    CellKind::Empty => FixtureCell::Empty,
                    CellKind::Number => FixtureCell::Number(c.as_number().unwrap()),
                    CellKind::Boolean => FixtureCell::Bool(c.as_text() == "TRUE"),
                    CellKind::Text | CellKind::Date => FixtureCell::Text(c.as_text().to_string()),
                })
                .collect()
        })
        .collect()
}

pub fn temp_cache() -> (tempfile::TempDir, Cache) {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    (dir, cache)
}

/// Seeds the cache with `bytes` under the catalog source `name`.
pub fn seed(cache: &Cache, registry: &Registry, name: &str, bytes: &[u8]) -> SourceRef {
    let source = registry.source(name).unwrap();
    cache.store(&source, bytes).unwrap();
    source
}

pub fn imd_headers(registry: &Registry) -> (String, Vec<(String, String, Option<String>)>) {
    let release = registry.imd_release(2019).unwrap();
    let domains = release
        .domains
        .values()
        .map(|d| (d.score.clone(), d.rank.clone(), d.decile.clone()))
        .collect();
    (release.code_column.clone(), domains)
}

pub fn imd_fixture(registry: &Registry, n: usize, seed: u64) -> Vec<u8> {
    let (code, domains) = imd_headers(registry);
    let headers: Vec<jtstats_fixtures::ImdHeaders<'_>> = domains
        .iter()
        .map(|(s, r, d)| jtstats_fixtures::ImdHeaders { score: s, rank: r, decile: d.as_deref() })
        .collect();
    jtstats_fixtures::imd_csv(n, seed, &code, &headers)
}

/// Logical fixture cells as parser cells.
pub fn to_cells(grid: &[Vec<jtstats_fixtures::FixtureCell>]) -> Vec<Vec<jtstats::Cell>> {
    use jtstats::Cell;
    use jtstats_fixtures::FixtureCell as F;
    grid.iter()
        .map(|row| {
            row.iter()
                .map(|c| match c {
                    F::Empty => Cell::EMPTY,
                    F::Text(s) => Cell::text(s.clone()),
                    F::Number(v) | F::Percent(v) => Cell::number(*v),
                    F::Bool(b) => Cell::boolean(*b),
                })
                .collect()
        })
        .collect()
}
