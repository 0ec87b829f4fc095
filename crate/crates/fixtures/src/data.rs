//! Domain-shaped fixtures: journey-time workbooks, deprivation CSVs,
//! boundary GeoJSON and a small time series.

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};

use crate::{write_ods, FixtureCell, Grid, Sheet};

pub const JTS05_ID_COLUMNS: [&str; 5] = ["LSOA_code", "LSOA_name", "LA_Code", "LA_Name", "Region"];
const METRICS: [&str; 9] = ["Min", "15", "30", "45", "60", "15pct", "30pct", "45pct", "60pct"];
const ALL_MODES: [&str; 4] = ["PT", "Cyc", "Car", "Walk"];

/// Header prefixes and modes for each JTS05 purpose.
fn jts05_layout(purpose: &str) -> (Vec<&'static str>, &'static [&'static str]) {
    match purpose {
        "employment" => (vec!["100Emp", "500Emp", "5000Emp"], &ALL_MODES),
        "primary" => (vec!["PS"], &ALL_MODES),
        "secondary" => (vec!["SS"], &ALL_MODES),
        "further" => (vec!["FE"], &ALL_MODES),
        "gp" => (vec!["GP"], &ALL_MODES),
        "hospital" => (vec!["Hosp"], &ALL_MODES),
        "food" => (vec!["Food"], &ALL_MODES),
        "town" => (vec!["Town"], &ALL_MODES),
        "pharmacy" => (vec!["Pharm"], &ALL_MODES[1..3]),
        other => panic!("no JTS05 layout for purpose {other:?}"),
    }
}

pub fn jts05_headers(purpose: &str) -> Vec<String> {
    let (services, modes) = jts05_layout(purpose);
    let mut out: Vec<String> = JTS05_ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    for s in &services {
        for m in modes {
            for metric in METRICS {
                out.push(format!("{s}{m}{metric}"));
            }
        }
    }
    out
}

/// A JTS05-style sheet: two title lines, a header row and `rows` LSOAs.
pub fn jts05_grid(purpose: &str, rows: usize, seed: u64) -> Grid {
    let headers = jts05_headers(purpose);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut grid: Grid = vec![
        vec![FixtureCell::text(format!("Travel time, destination and origin indicators: {purpose}"))],
        vec![FixtureCell::text("Synthetic fixture, values are random")],
        headers.iter().cloned().map(FixtureCell::Text).collect(),
    ];
    const REGIONS: [&str; 3] = ["London", "North East", "South West"];
    for r in 0..rows {
        let la = r / 100;
        let mut row = vec![
            FixtureCell::text(format!("E01{:06}", r + 1)),
            FixtureCell::text(format!("Area {:05}", r + 1)),
            FixtureCell::text(format!("E09{:06}", la + 1)),
            FixtureCell::text(format!("Authority {la}")),
            FixtureCell::text(REGIONS[la % REGIONS.len()]),
        ];
        for h in &headers[5..] {
            let v = if h.ends_with("pct") {
                rng.random_range(0..=1000u32) as f64 / 10.0
            } else if h.ends_with("Min") {
                rng.random_range(10..1800u32) as f64 / 10.0
            } else {
                rng.random_range(0..40u32) as f64
            };
            row.push(FixtureCell::Number(v));
        }
        grid.push(row);
    }
    grid
}

/// A workbook with a cover sheet, one year sheet and a notes sheet.
pub fn jts05_ods(purpose: &str, sheet: &str, rows: usize, seed: u64) -> Vec<u8> {
    let cover = vec![vec![FixtureCell::text("Journey time statistics")]];
    let grid = jts05_grid(purpose, rows, seed);
    let notes = crate::notes_sheet();
    write_ods(&[
        Sheet { name: "Cover", rows: &cover },
        Sheet { name: sheet, rows: &grid },
        Sheet { name: "Notes", rows: &notes },
    ])
}

/// One deprivation domain's source headers.
pub struct ImdHeaders<'a> {
    pub score: &'a str,
    pub rank: &'a str,
    pub decile: Option<&'a str>,
}

/// A deprivation CSV for `n` LSOAs. In every domain rank 1 has the highest
/// score and deciles follow `ceil(10 * rank / n)`.
pub fn imd_csv(n: usize, seed: u64, code_header: &str, domains: &[ImdHeaders<'_>]) -> Vec<u8> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
    let mut header = vec![quote(code_header), quote("LSOA name (2011)")];
    for d in domains {
        header.push(quote(d.score));
        header.push(quote(d.rank));
        if let Some(dec) = d.decile {
            header.push(quote(dec));
        }
    }
    let mut columns: Vec<Vec<String>> = Vec::new();
    for d in domains {
        let scores: Vec<u32> = (0..n).map(|_| rng.random_range(0..100_000u32)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
        let mut rank = vec![0usize; n];
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos + 1;
        }
        columns.push(scores.iter().map(|s| format!("{}", *s as f64 / 1000.0)).collect());
        columns.push(rank.iter().map(|r| r.to_string()).collect());
        if d.decile.is_some() {
            columns.push(rank.iter().map(|&r| (r * 10).div_ceil(n).to_string()).collect());
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..n {
        let mut fields = vec![format!("E01{:06}", i + 1), format!("Area {:05}", i + 1)];
        for c in &columns {
            fields.push(c[i].clone());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

/// Square LSOA-like polygons laid out on a grid west of Greenwich.
pub fn lsoa_geojson(codes: &[&str], code_property: &str, name_property: &str) -> Vec<u8> {
    let features: Vec<serde_json::Value> = codes
        .iter()
        .enumerate()
        .map(|(i, code)| {
            let x = -0.5 + (i % 10) as f64 * 0.01;
            let y = 51.3 + (i / 10) as f64 * 0.01;
            serde_json::json!({
                "type": "Feature",
                "properties": {code_property: code, name_property: format!("Area {code}")},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[x, y], [x + 0.01, y], [x + 0.01, y + 0.01], [x, y + 0.01], [x, y]]],
                },
            })
        })
        .collect();
    let doc = serde_json::json!({"type": "FeatureCollection", "features": features});
    let mut bytes = serde_json::to_vec_pretty(&doc).unwrap();
    bytes.push(b'\n');
    bytes
}

/// Average minutes to the nearest food store by mode, 2015 to 2019.
pub const FOOD_BY_MODE_CSV: &str = "\
year,walk,cycle,car,pt
2015,16.8,10.1,7.2,12.9
2016,16.5,10.0,7.1,12.7
2017,16.3,9.8,7.1,12.6
2018,16.2,9.8,7.0,12.4
2019,16.0,9.7,6.9,12.3
";
