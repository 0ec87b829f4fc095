//! Synthetic spreadsheets and reference outputs for testing `jtstats`.
//!
//! Nothing here depends on the library under test. The CSV oracle is a
//! direct loop over the logical grid so it can catch serialization bugs in
//! the production path.

pub mod data;
pub mod ods;

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};

pub use data::*;
pub use ods::{write_ods, Sheet};

/// A logical spreadsheet cell.
#[derive(Debug, Clone, PartialEq)]
pub enum FixtureCell {
    Empty,
    Text(String),
    Number(f64),
    /// Stored as a fraction, shown as a percentage.
    Percent(f64),
    Bool(bool),
}

impl FixtureCell {
    pub fn text(s: impl Into<String>) -> Self {
        FixtureCell::Text(s.into())
    }

    /// The CSV form of the cell.
    pub fn csv_text(&self) -> String {
        match self {
            FixtureCell::Empty => String::new(),
            FixtureCell::Text(s) => s.clone(),
            FixtureCell::Number(v) | FixtureCell::Percent(v) => {
                if *v == 0.0 {
                    "0".to_string()
                } else {
                    format!("{v}")
                }
            }
            FixtureCell::Bool(true) => "TRUE".to_string(),
            FixtureCell::Bool(false) => "FALSE".to_string(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            FixtureCell::Empty => true,
            FixtureCell::Text(s) => s.is_empty(),
            _ => false,
        }
    }
}

pub type Grid = Vec<Vec<FixtureCell>>;

/// Drops trailing empty cells from each row, then trailing empty rows.
pub fn trim_grid(grid: &[Vec<FixtureCell>]) -> Grid {
    let mut out: Grid = Vec::new();
    for row in grid {
        let mut keep = row.len();
        while keep > 0 && row[keep - 1].is_empty() {
            keep -= 1;
        }
        let mut trimmed = Vec::new();
        for cell in &row[..keep] {
            trimmed.push(match cell {
                FixtureCell::Percent(v) => FixtureCell::Number(*v),
                c if c.is_empty() => FixtureCell::Empty,
                c => c.clone(),
            });
        }
        out.push(trimmed);
    }
    while let Some(last) = out.last() {
        if last.is_empty() {
            out.pop();
        } else {
            break;
        }
    }
    out
}

/// Reference CSV: RFC 4180 quoting, `\n` line ends, rows padded to the
/// widest row. A record made of one empty field is written as `""`.
pub fn oracle_csv(grid: &[Vec<FixtureCell>]) -> Vec<u8> {
    let grid = trim_grid(grid);
    let mut width = 0;
    for row in &grid {
        if row.len() > width {
            width = row.len();
        }
    }
    let mut out = String::new();
    for row in &grid {
        for c in 0..width {
            if c > 0 {
                out.push(',');
            }
            let text = match row.get(c) {
                Some(cell) => cell.csv_text(),
                None => String::new(),
            };
            let mut needs_quotes = false;
            for ch in text.chars() {
                if ch == ',' || ch == '"' || ch == '\n' || ch == '\r' {
                    needs_quotes = true;
                }
            }
            if width == 1 && text.is_empty() {
                needs_quotes = true;
            }
            if needs_quotes {
                out.push('"');
                for ch in text.chars() {
                    if ch == '"' {
                        out.push('"');
                    }
                    out.push(ch);
                }
                out.push('"');
            } else {
                out.push_str(&text);
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Parameters of a synthetic JTS-like sheet: metadata lines, a header row,
/// then data rows whose first column is an area code.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureRecipe {
    pub data_rows: usize,
    /// Includes the leading code column.
    pub data_cols: usize,
    pub metadata_rows: usize,
    /// (sentinel text, number of cells to overwrite with it).
    pub sentinels: Vec<(String, usize)>,
    /// Probability that a data cell is left empty.
    pub empty_ratio: f64,
    /// Probability that a data cell repeats its left neighbour.
    pub run_ratio: f64,
    pub seed: u64,
}

impl FixtureRecipe {
    pub fn new(data_rows: usize, data_cols: usize, metadata_rows: usize, seed: u64) -> Self {
        FixtureRecipe {
            data_rows,
            data_cols,
            metadata_rows,
            sentinels: Vec::new(),
            empty_ratio: 0.0,
            run_ratio: 0.0,
            seed,
        }
    }

    pub fn with_sentinel(mut self, text: impl Into<String>, count: usize) -> Self {
        self.sentinels.push((text.into(), count));
        self
    }

    /// A recipe with every parameter drawn from `seed`; grids stay within
    /// 50 rows by 20 columns.
    pub fn random(seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let metadata_rows = rng.random_range(0..4usize);
        let data_rows = rng.random_range(0..(50 - metadata_rows));
        let data_cols = rng.random_range(3..=20usize);
        let mut recipe = FixtureRecipe::new(data_rows, data_cols, metadata_rows, seed);
        recipe.empty_ratio = rng.random_range(0.0..0.3);
        recipe.run_ratio = rng.random_range(0.0..0.5);
        let capacity = data_rows * (data_cols - 1);
        if capacity > 0 && rng.random_bool(0.7) {
            recipe.sentinels.push(("..".into(), rng.random_range(0..=capacity.min(10))));
        }
        recipe
    }

    pub fn header(&self) -> Vec<String> {
        let mut names = vec!["LSOA_code".to_string()];
        for j in 1..self.data_cols {
            names.push(format!("Metric{j}Min"));
        }
        names
    }

    /// The logical grid described by the recipe.
    pub fn grid(&self) -> Grid {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut grid: Grid = Vec::new();
        for m in 0..self.metadata_rows {
            let mut row = vec![FixtureCell::text(metadata_line(m, &mut rng))];
            if m == 0 && self.data_cols > 4 {
                row.push(FixtureCell::Empty);
                row.push(FixtureCell::text("Source: synthetic"));
            }
            grid.push(row);
        }
        grid.push(self.header().into_iter().map(FixtureCell::Text).collect());

        let mut slots = Vec::new();
        for r in 0..self.data_rows {
            let mut row = vec![FixtureCell::text(format!("E01{:06}", r + 1))];
            for c in 1..self.data_cols {
                let cell = if rng.random_bool(self.empty_ratio) {
                    FixtureCell::Empty
                } else if c > 1 && rng.random_bool(self.run_ratio) {
                    row[c - 1].clone()
                } else {
                    FixtureCell::Number(random_minutes(&mut rng))
                };
                slots.push((r, c));
                row.push(cell);
            }
            grid.push(row);
        }

        let base = self.metadata_rows + 1;
        for (text, count) in &self.sentinels {
            assert!(*count <= slots.len(), "recipe asks for more sentinels than data cells");
            for _ in 0..*count {
                let k = rng.random_range(0..slots.len());
                let (r, c) = slots.swap_remove(k);
                grid[base + r][c] = FixtureCell::text(text.clone());
            }
        }
        grid
    }
}

fn metadata_line(m: usize, rng: &mut Xoshiro256PlusPlus) -> String {
    const WORDS: [&str; 8] = ["Travel", "time", "to", "services,", "\"minutes\"", "&", "<LSOA>", "2019"];
    let n = rng.random_range(2..6);
    let mut words = Vec::new();
    for _ in 0..n {
        words.push(WORDS[rng.random_range(0..WORDS.len())]);
    }
    match m {
        1 => format!("  {}", words.join("  ")),
        2 => format!("{}\nsecond line\tend ", words.join(" ")),
        _ => words.join(" "),
    }
}

/// A journey time in minutes with one decimal, never a sentinel value.
fn random_minutes(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.random_range(0..2000u32) as f64) / 10.0
}

/// A fixture workbook and its ground truth.
#[derive(Debug, Clone)]
pub struct FixturePair {
    pub ods: Vec<u8>,
    pub csv: Vec<u8>,
    pub grid: Grid,
    pub sheet_name: String,
}

pub fn write_fixture_ods(recipe: &FixtureRecipe) -> FixturePair {
    write_fixture_sheet(recipe, "Data")
}

pub fn write_fixture_sheet(recipe: &FixtureRecipe, sheet_name: &str) -> FixturePair {
    let grid = recipe.grid();
    let notes = notes_sheet();
    let ods = write_ods(&[
        Sheet { name: sheet_name, rows: &grid },
        Sheet { name: "Notes", rows: &notes },
    ]);
    FixturePair {
        csv: oracle_csv(&grid),
        ods,
        grid,
        sheet_name: sheet_name.to_string(),
    }
}

pub fn notes_sheet() -> Grid {
    vec![
        vec![FixtureCell::text("Notes")],
        vec![],
        vec![FixtureCell::text(".."), FixtureCell::text("240 minutes or more")],
        vec![FixtureCell::Bool(true), FixtureCell::Percent(0.25)],
    ]
}
