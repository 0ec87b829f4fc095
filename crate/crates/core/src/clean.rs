//! Turns a raw sheet grid into a typed table: finds the header row, drops
//! the metadata rows above it, rewrites sentinel placeholders and infers
//! column types.

use std::collections::HashSet;

use crate::error::{Context, Location, PipelineError, Result, Shape};
use crate::ods::{Cell, CellGrid, CellKind};
use crate::registry::{SentinelRule, TableSpec};
use crate::table::{Column, ColumnData, Provenance, TidyTable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderResolution {
    pub header_row: usize,
    /// Verbatim header texts, made unique with `_2`, `_3`, ... suffixes.
    pub column_names: Vec<String>,
    pub data_start_row: usize,
}

/// Picks the header row: the table's fixed header row when it has one, otherwise the
/// first row where at least `header_min_fill` of the grid width holds text
/// and no cell is numeric.
pub fn detect_header(grid: &CellGrid, spec: &TableSpec) -> Result<HeaderResolution> {
    let no_header = |detail: String| {
        PipelineError::NoHeader(Context::at(detail, Location::sheet(grid.sheet_name())))
    };
    if grid.is_empty() {
        return Err(no_header("sheet is empty".into()));
    }

    let header_row = match spec.header_row {
        Some(row) => {
            if grid.rows().get(row).is_none_or(|r| r.is_empty()) {
                return Err(no_header(format!("configured header row {row} is empty")));
            }
            row
        }
        None => grid
            .rows()
            .iter()
            .position(|row| looks_like_header(row, grid.width(), spec.header_min_fill))
            .ok_or_else(|| {
                no_header(format!(
                    "no row with at least {:.0}% text cells and no numbers",
                    spec.header_min_fill * 100.0
                ))
            })?,
    };

    let raw: Vec<String> = grid.rows()[header_row]
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let text = cell.as_text().trim();
            if text.is_empty() {
                format!("column_{}", i + 1)
            } else {
                text.to_string()
            }
        })
        .collect();
    Ok(HeaderResolution {
        header_row,
        column_names: dedupe(raw),
        data_start_row: header_row + 1,
    })
}

fn looks_like_header(row: &[Cell], width: usize, min_fill: f64) -> bool {
    if row.is_empty() || width == 0 {
        return false;
    }
    let mut text_cells = 0usize;
    for cell in row {
        match cell.kind() {
            CellKind::Empty => {}
            CellKind::Text => {
                if parse_decimal(cell.as_text()).is_some() {
                    return false;
                }
                text_cells += 1;
            }
            CellKind::Number => return false,
            CellKind::Boolean | CellKind::Date => {}
        }
    }
    text_cells > 0 && text_cells as f64 >= min_fill * width as f64
}

/// Appends `_2`, `_3`, ... to repeated names.
fn dedupe(names: Vec<String>) -> Vec<String> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let mut candidate = name.clone();
        let mut n = 2;
        while seen.contains(&candidate) {
            candidate = format!("{name}_{n}");
            n += 1;
        }
        seen.insert(candidate.clone());
        out.push(candidate);
    }
    out
}

/// Rewrites cells whose whole text equals a rule's pattern into number
/// cells holding the rule's replacement. The first matching rule wins.
pub fn apply_sentinels(values: &[Cell], rules: &[SentinelRule]) -> Vec<Cell> {
    let rules: Vec<&SentinelRule> = rules.iter().collect();
    values.iter().map(|c| substitute(c, &rules)).collect()
}

fn substitute(cell: &Cell, rules: &[&SentinelRule]) -> Cell {
    if matches!(cell.kind(), CellKind::Text) {
        if let Some(rule) = rules.iter().find(|r| r.pattern == cell.as_text()) {
            return Cell::number(rule.replacement);
        }
    }
    cell.clone()
}

/// Snake-case form of a header: `FoodPTMin` → `food_pt_min`,
/// `LSOA_code` → `lsoa_code`, `Income Score (rate)` → `income_score_rate`.
pub fn normalize_name(source: &str) -> String {
    let chars: Vec<char> = source.chars().collect();
    let mut out = String::with_capacity(source.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !out.is_empty() && !out.ends_with('_') {
                out.push('_');
            }
            continue;
        }
        if i > 0 && !out.is_empty() && !out.ends_with('_') {
            let prev = chars[i - 1];
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_alphabetic() && c.is_numeric())
                || (prev.is_numeric() && c.is_uppercase())
                || (prev.is_uppercase() && c.is_uppercase() && next.is_some_and(char::is_lowercase));
            if boundary {
                out.push('_');
            }
        }
        out.extend(c.to_lowercase());
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// Strict decimal syntax: optional sign, digits (optionally grouped in
/// threes with commas), optional fraction, optional exponent.
pub fn parse_decimal(text: &str) -> Option<f64> {
    let s = text.trim();
    if !is_decimal_syntax(s) {
        return None;
    }
    let v: f64 = if s.contains(',') {
        s.replace(',', "").parse().ok()?
    } else {
        s.parse().ok()?
    };
    v.is_finite().then_some(v)
}

/// Integer syntax with optional thousands separators.
pub fn parse_integer(text: &str) -> Option<i64> {
    let s = text.trim();
    if !is_decimal_syntax(s) || s.contains(['.', 'e', 'E']) {
        return None;
    }
    if s.contains(',') {
        s.replace(',', "").parse().ok()
    } else {
        s.parse().ok()
    }
}

fn is_decimal_syntax(s: &str) -> bool {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b',') {
        i += 1;
    }
    let int_part = &s[int_start..i];
    if int_part.contains(',') && !valid_grouping(int_part) {
        return false;
    }
    let mut digits = int_part.bytes().filter(u8::is_ascii_digit).count();
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
    }
    if digits == 0 {
        return false;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return false;
        }
    }
    i == b.len()
}

fn valid_grouping(int_part: &str) -> bool {
    let groups: Vec<&str> = int_part.split(',').collect();
    let first = groups[0];
    !first.is_empty()
        && first.len() <= 3
        && groups[1..].iter().all(|g| g.len() == 3)
        && int_part.bytes().all(|c| c == b',' || c.is_ascii_digit())
}

/// Infers the narrowest kind that fits every non-empty cell: bool when all
/// cells are booleans, then integer, then float, else text. Empty cells
/// become nulls.
pub fn coerce_types(cells: &[Cell], name: &str) -> Column {
    let refs: Vec<&Cell> = cells.iter().collect();
    let mut column = Column::new(normalize_name(name), coerce_refs(&refs));
    column.source_name = name.to_string();
    column
}

fn cell_integer(cell: &Cell) -> Option<i64> {
    match cell.kind() {
        CellKind::Number => {
            let v = cell.as_number()?;
            (v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
        }
        CellKind::Text => parse_integer(cell.as_text()),
        _ => None,
    }
}

fn cell_decimal(cell: &Cell) -> Option<f64> {
    match cell.kind() {
        CellKind::Number => cell.as_number(),
        CellKind::Text => parse_decimal(cell.as_text()),
        _ => None,
    }
}

fn coerce_refs(cells: &[&Cell]) -> ColumnData {
    let non_empty = || cells.iter().filter(|c| !c.is_empty());
    if non_empty().next().is_none() {
        return ColumnData::Text(vec![None; cells.len()]);
    }
    if non_empty().all(|c| c.kind() == CellKind::Boolean) {
        return ColumnData::Bool(
            cells
                .iter()
                .map(|c| (!c.is_empty()).then(|| c.as_text() == "TRUE"))
                .collect(),
        );
    }
    if non_empty().all(|c| cell_integer(c).is_some()) {
        return ColumnData::Int(cells.iter().map(|c| cell_integer(c)).collect());
    }
    if non_empty().all(|c| cell_decimal(c).is_some()) {
        return ColumnData::Float(cells.iter().map(|c| cell_decimal(c)).collect());
    }
    text_data(cells)
}

fn text_data(cells: &[&Cell]) -> ColumnData {
    ColumnData::Text(
        cells
            .iter()
            .map(|c| (!c.is_empty()).then(|| c.as_text().to_string()))
            .collect(),
    )
}

/// Full cleaning pass: header detection, row slicing, sentinel
/// substitution, type coercion and the expected-shape check.
pub fn clean(grid: &CellGrid, spec: &TableSpec) -> Result<TidyTable> {
    let header = detect_header(grid, spec)?;
    let n_cols = header.column_names.len();

    let mut data_rows: &[Vec<Cell>] = grid.rows().get(header.data_start_row..).unwrap_or(&[]);
    while data_rows
        .last()
        .is_some_and(|r| r.iter().take(n_cols).all(Cell::is_empty))
    {
        data_rows = &data_rows[..data_rows.len() - 1];
    }

    let mut columns = Vec::with_capacity(n_cols);
    let mut used_names: HashSet<String> = HashSet::new();
    let mut replaced: Vec<Cell> = Vec::new();
    for (j, source_name) in header.column_names.iter().enumerate() {
        let mut name = normalize_name(source_name);
        if name.is_empty() {
            name = format!("column_{}", j + 1);
        }
        let base = name.clone();
        let mut n = 2;
        while used_names.contains(&name) {
            name = format!("{base}_{n}");
            n += 1;
        }
        used_names.insert(name.clone());

        let rules: Vec<&SentinelRule> = spec
            .sentinel_rules
            .iter()
            .filter(|r| r.applies_to_column(&name, source_name))
            .collect();
        let raw = data_rows.iter().map(|r| r.get(j).unwrap_or(&crate::ods::EMPTY_CELL));
        let cells: Vec<&Cell> = if rules.is_empty() {
            raw.collect()
        } else {
            replaced.clear();
            replaced.extend(raw.map(|c| substitute(c, &rules)));
            replaced.iter().collect()
        };

        let data = if spec.keeps_text(&name, source_name) {
            text_data(&cells)
        } else {
            coerce_refs(&cells)
        };
        columns.push(Column {
            name,
            source_name: source_name.clone(),
            data,
        });
    }

    let provenance = Provenance {
        source: String::new(),
        table_code: Some(spec.table_code.clone()),
        sheet: Some(grid.sheet_name().to_string()),
        fetched_at_ms: None,
        geo_match: None,
    };
    let table = TidyTable::with_rows(columns, data_rows.len(), provenance)?;
    check_shape(&table, spec, grid.sheet_name())?;
    Ok(table)
}

fn check_shape(table: &TidyTable, spec: &TableSpec, sheet: &str) -> Result<()> {
    let Some(expected) = &spec.expected_shape else {
        return Ok(());
    };
    let actual = table.shape();
    let rows_ok = expected.rows_for(sheet).is_none_or(|r| r == actual.rows);
    if expected.cols != actual.cols || !rows_ok {
        return Err(PipelineError::ShapeMismatch {
            expected: Shape {
                rows: expected.rows_for(sheet).unwrap_or(actual.rows),
                cols: expected.cols,
            },
            actual,
            context: Context::at(
                format!("{}: the release layout may have changed", spec.table_code),
                Location::sheet(sheet),
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;

    fn t(s: &str) -> Cell {
        Cell::text(s)
    }

    fn rule(pattern: &str, replacement: f64) -> SentinelRule {
        SentinelRule {
            pattern: pattern.into(),
            replacement,
            meaning: String::new(),
            applies_to: "*".into(),
        }
    }

    fn jts_like_grid() -> CellGrid {
        CellGrid::new(
            "2019",
            vec![
                vec![t("Journey times to food stores")],
                vec![t("Source: modelled"), Cell::EMPTY, t("2019")],
                vec![t("LSOA_code"), t("LA_Name"), t("FoodPTMin"), t("FoodPTMin")],
                vec![t("E01000001"), t("City"), Cell::number(12.5), t(".."), ],
                vec![t("E01000002"), t("City"), t("1,234"), Cell::number(3.0)],
            ],
        )
    }

    #[test]
    fn header_after_metadata_rows() {
        let h = detect_header(&jts_like_grid(), &TableSpec::ad_hoc("JTS0507")).unwrap();
        assert_eq!(h.header_row, 2);
        assert_eq!(h.data_start_row, 3);
        assert_eq!(h.column_names, ["LSOA_code", "LA_Name", "FoodPTMin", "FoodPTMin_2"]);
    }

    #[test]
    fn fixed_header_row_wins() {
        let rows = (0..8).map(|i| vec![Cell::number(i as f64)]).collect();
        let grid = CellGrid::new("s", rows);
        let mut spec = TableSpec::ad_hoc("JTS0101");
        spec.header_row = Some(6);
        let h = detect_header(&grid, &spec).unwrap();
        assert_eq!(h.header_row, 6);
        assert_eq!(h.column_names, ["6"]);
    }

    #[test]
    fn no_header() {
        let spec = TableSpec::ad_hoc("JTS0101");
        let empty = CellGrid::new("s", vec![vec![Cell::EMPTY, Cell::EMPTY]]);
        assert_eq!(detect_header(&empty, &spec).unwrap_err().name(), "NoHeader");
        let numbers = CellGrid::new("s", vec![vec![Cell::number(1.0), t("a")]]);
        assert_eq!(detect_header(&numbers, &spec).unwrap_err().name(), "NoHeader");
    }

    #[test]
    fn sentinels() {
        let jts09 = Registry::builtin().lookup("JTS0901").unwrap();
        let out = apply_sentinels(&[t(".."), t("37.2"), t("...")], &jts09.sentinel_rules);
        assert_eq!(out, [Cell::number(240.0), t("37.2"), t("...")]);

        let jts0930 = Registry::builtin().lookup("JTS0930").unwrap();
        let out = apply_sentinels(&[t("--"), t("..")], &jts0930.sentinel_rules);
        assert_eq!(out, [Cell::number(-99.0), Cell::number(240.0)]);

        let out = apply_sentinels(&[t("x")], &[rule("x", 1.0), rule("x", 2.0)]);
        assert_eq!(out, [Cell::number(1.0)]);
    }

    #[test]
    fn coercion() {
        let c = coerce_types(&[t("1"), t("2"), Cell::EMPTY], "n");
        assert_eq!(c.data, ColumnData::Int(vec![Some(1), Some(2), None]));
        let c = coerce_types(&[t("1.5"), t("2")], "n");
        assert_eq!(c.data, ColumnData::Float(vec![Some(1.5), Some(2.0)]));
        let c = coerce_types(&[t("E01000001"), t("E01000002")], "LSOA_code");
        assert_eq!(c.name, "lsoa_code");
        assert_eq!(c.source_name, "LSOA_code");
        assert_eq!(
            c.data,
            ColumnData::Text(vec![Some("E01000001".into()), Some("E01000002".into())])
        );
        let c = coerce_types(&[t("1,234"), Cell::number(5.0)], "n");
        assert_eq!(c.data, ColumnData::Int(vec![Some(1234), Some(5)]));
        let c = coerce_types(&[Cell::boolean(true), Cell::EMPTY, Cell::boolean(false)], "b");
        assert_eq!(c.data, ColumnData::Bool(vec![Some(true), None, Some(false)]));
        let c = coerce_types(&[t("1"), t("x")], "m");
        assert_eq!(c.data.kind(), crate::table::ColumnKind::Text);
    }

    #[test]
    fn decimal_syntax() {
        for ok in ["1", "-2.5", "+3", "1,234", "12,345,678.9", ".5", "5.", "1e3", "2.5E-2"] {
            assert!(parse_decimal(ok).is_some(), "{ok}");
        }
        for bad in ["", "..", "--", "NaN", "inf", "1,23", "12,3456", ",123", "1e", "E01000001", "1.2.3"] {
            assert!(parse_decimal(bad).is_none(), "{bad}");
        }
        assert_eq!(parse_integer("1,234"), Some(1234));
        assert_eq!(parse_integer("1.0"), None);
    }

    #[test]
    fn names() {
        assert_eq!(normalize_name("LSOA_code"), "lsoa_code");
        assert_eq!(normalize_name("LA_Code"), "la_code");
        assert_eq!(normalize_name("FoodPTMin"), "food_pt_min");
        assert_eq!(normalize_name("FoodPT15pct"), "food_pt_15pct");
        assert_eq!(normalize_name("100EmpCarMin"), "100_emp_car_min");
        assert_eq!(normalize_name("Income Score (rate)"), "income_score_rate");
        assert_eq!(normalize_name("  "), "");
    }

    #[test]
    fn clean_fixture() {
        let mut spec = Registry::builtin().lookup("JTS0901").unwrap().clone();
        spec.expected_shape = None;
        let table = clean(&jts_like_grid(), &spec).unwrap();
        assert_eq!(table.shape(), Shape { rows: 2, cols: 4 });
        assert_eq!(
            table.column_names(),
            ["lsoa_code", "la_name", "food_pt_min", "food_pt_min_2"]
        );
        assert_eq!(
            table.column("food_pt_min").unwrap().data,
            ColumnData::Float(vec![Some(12.5), Some(1234.0)])
        );
        assert_eq!(
            table.column("food_pt_min_2").unwrap().data,
            ColumnData::Int(vec![Some(240), Some(3)])
        );
        assert_eq!(table.provenance().sheet.as_deref(), Some("2019"));
    }

    #[test]
    fn code_columns_stay_text() {
        let grid = CellGrid::new(
            "s",
            vec![vec![t("LA_Code"), t("v")], vec![t("0101"), t("1")]],
        );
        let spec = Registry::builtin().lookup("JTS0401").unwrap();
        let table = clean(&grid, spec).unwrap();
        assert_eq!(table.column("la_code").unwrap().data, ColumnData::Text(vec![Some("0101".into())]));
    }

    #[test]
    fn shape_mismatch() {
        let spec = Registry::builtin().lookup("JTS0507").unwrap();
        let err = clean(&jts_like_grid(), spec).unwrap_err();
        assert_eq!(err.name(), "ShapeMismatch");
        let msg = err.to_string();
        assert!(msg.contains("32844x41") && msg.contains("2x4"), "{msg}");
    }

    #[test]
    fn header_only_grid_gives_empty_table() {
        let grid = CellGrid::new("s", vec![vec![t("a"), t("b")]]);
        let table = clean(&grid, &TableSpec::ad_hoc("JTS0101")).unwrap();
        assert_eq!(table.shape(), Shape { rows: 0, cols: 2 });
    }
}
