mod common;

use jtstats::{grid_to_csv, OdsDocument};
use jtstats_fixtures::{oracle_csv, trim_grid, write_fixture_ods, write_ods, FixtureCell, FixtureRecipe, Sheet};
use proptest::prelude::*;

fn cell() -> impl Strategy<Value = FixtureCell> {
    prop_oneof![
        3 => Just(FixtureCell::Empty),
        3 => "[a-zA-Z0-9 ,\"&<>.\t-]{0,10}(\n[a-z ]{0,4})?".prop_map(FixtureCell::Text),
        3 => any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(FixtureCell::Number),
        2 => (-100_000i64..100_000).prop_map(|v| FixtureCell::Number(v as f64 / 100.0)),
        1 => (0u32..=100).prop_map(|v| FixtureCell::Percent(v as f64 / 100.0)),
        1 => any::<bool>().prop_map(FixtureCell::Bool),
    ]
}

fn grid() -> impl Strategy<Value = Vec<Vec<FixtureCell>>> {
    prop::collection::vec(
        prop::collection::vec(cell(), 0..8).prop_flat_map(|row| {
            // Duplicate some cells in place to produce column runs.
            let len = row.len();
            (Just(row), 0..=len)
        })
        .prop_map(|(mut row, k)| {
            if k > 0 {
                let c = row[k - 1].clone();
                row.insert(k, c);
            }
            row
        }),
        0..12,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn parse_matches_logical_grid(rows in grid(), dup_row in any::<bool>()) {
        let mut rows = rows;
        if dup_row && !rows.is_empty() {
            rows.push(rows[rows.len() - 1].clone());
        }
        let ods = write_ods(&[Sheet { name: "S", rows: &rows }]);
        let doc = OdsDocument::from_bytes(&ods, "prop.ods").unwrap();
        let parsed = doc.parse_sheet("S").unwrap();
        prop_assert_eq!(common::as_fixture(&parsed), trim_grid(&rows));
        prop_assert_eq!(grid_to_csv(&parsed), oracle_csv(&rows));
    }
}

#[test]
fn two_hundred_recipes_round_trip() {
    for seed in 0..200 {
        let recipe = FixtureRecipe::random(seed);
        let pair = write_fixture_ods(&recipe);
        let doc = OdsDocument::from_bytes(&pair.ods, "recipe.ods").unwrap();
        assert_eq!(doc.sheet_names(), ["Data", "Notes"]);
        let parsed = doc.parse_sheet("Data").unwrap();
        assert_eq!(common::as_fixture(&parsed), trim_grid(&pair.grid), "seed {seed}");
        assert_eq!(grid_to_csv(&parsed), pair.csv, "seed {seed}");
    }
}

#[test]
fn notes_sheet_round_trips() {
    let pair = write_fixture_ods(&FixtureRecipe::new(2, 3, 0, 1));
    let doc = OdsDocument::from_bytes(&pair.ods, "x").unwrap();
    let notes = doc.parse_sheet("Notes").unwrap();
    assert_eq!(common::as_fixture(&notes), trim_grid(&jtstats_fixtures::notes_sheet()));
    assert_eq!(notes.to_csv(), b"Notes,\n,\n..,240 minutes or more\nTRUE,0.25\n");
}

/// The committed fixture files parse to their committed CSV.
#[test]
fn frozen_fixture_files() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../fixtures/frozen");
    let doc = jtstats::OdsDocument::open(dir.join("recipe_42.ods")).unwrap();
    assert_eq!(doc.sheet_names(), ["Data", "Notes"]);
    let csv = std::fs::read(dir.join("recipe_42.csv")).unwrap();
    assert_eq!(doc.parse_sheet("Data").unwrap().to_csv(), csv);
    let jts = jtstats::OdsDocument::open(dir.join("jts05_pharmacy_2019.ods")).unwrap();
    assert_eq!(jts.parse_sheet("2019").unwrap().rows().len(), 28);
}
