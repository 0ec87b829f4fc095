//! The typed in-memory table shared by every stage.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use crate::error::{Context, PipelineError, Result};
use crate::ods::format_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Text,
    Int,
    Float,
    Bool,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Int | ColumnKind::Float)
    }
}

/// Column values; `None` marks a null.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Text(Vec<Option<String>>),
    Int(Vec<Option<i64>>),
    Float(Vec<Option<f64>>),
    Bool(Vec<Option<bool>>),
}

impl ColumnData {
    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Text(_) => ColumnKind::Text,
            ColumnData::Int(_) => ColumnKind::Int,
            ColumnData::Float(_) => ColumnKind::Float,
            ColumnData::Bool(_) => ColumnKind::Bool,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Text(v) => v.len(),
            ColumnData::Int(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// An all-null column of the given kind.
    pub fn nulls(kind: ColumnKind, len: usize) -> Self {
        match kind {
            ColumnKind::Text => ColumnData::Text(vec![None; len]),
            ColumnKind::Int => ColumnData::Int(vec![None; len]),
            ColumnKind::Float => ColumnData::Float(vec![None; len]),
            ColumnKind::Bool => ColumnData::Bool(vec![None; len]),
        }
    }

    /// Gathers rows by index; `None` produces a null.
    pub fn take(&self, indices: &[Option<usize>]) -> Self {
        fn gather<T: Clone>(v: &[Option<T>], idx: &[Option<usize>]) -> Vec<Option<T>> {
            idx.iter().map(|i| i.and_then(|i| v[i].clone())).collect()
        }
        match self {
            ColumnData::Text(v) => ColumnData::Text(gather(v, indices)),
            ColumnData::Int(v) => ColumnData::Int(gather(v, indices)),
            ColumnData::Float(v) => ColumnData::Float(gather(v, indices)),
            ColumnData::Bool(v) => ColumnData::Bool(gather(v, indices)),
        }
    }
}

/// A borrowed cell value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Null,
    Text(&'a str),
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Value<'_> {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(v) => Some(v as f64),
            Value::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Canonical text form used by CSV export; nulls are empty.
    pub fn to_text(&self) -> String {
        match *self {
            Value::Null => String::new(),
            Value::Text(s) => s.to_string(),
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format_number(v),
            Value::Bool(v) => v.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    /// Normalized snake_case name, unique within a table.
    pub name: String,
    /// Header text exactly as it appeared in the source.
    pub source_name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn new(name: impl Into<String>, data: ColumnData) -> Self {
        let name = name.into();
        Column {
            source_name: name.clone(),
            name,
            data,
        }
    }

    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize) -> Value<'_> {
        match &self.data {
            ColumnData::Text(v) => v[row].as_deref().map_or(Value::Null, Value::Text),
            ColumnData::Int(v) => v[row].map_or(Value::Null, Value::Int),
            ColumnData::Float(v) => v[row].map_or(Value::Null, Value::Float),
            ColumnData::Bool(v) => v[row].map_or(Value::Null, Value::Bool),
        }
    }

    pub fn is_null(&self, row: usize) -> bool {
        self.get(row).is_null()
    }

    /// `true` where the value is null.
    pub fn null_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_null(i)).collect()
    }

    pub fn null_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_null(i)).count()
    }

    pub fn as_text(&self) -> Option<&[Option<String>]> {
        match &self.data {
            ColumnData::Text(v) => Some(v),
            _ => None,
        }
    }
}

/// Geographic join statistics attached by the geo stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GeoMatch {
    pub matched: usize,
    pub unmatched: usize,
}

/// Where a table came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    /// Source file, URL or logical name.
    pub source: String,
    pub table_code: Option<String>,
    pub sheet: Option<String>,
    /// Milliseconds since the Unix epoch at which the source was fetched.
    pub fetched_at_ms: Option<u64>,
    pub geo_match: Option<GeoMatch>,
}

impl Provenance {
    pub fn new(source: impl Into<String>) -> Self {
        Provenance {
            source: source.into(),
            ..Provenance::default()
        }
    }
}

/// A typed columnar table: named columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct TidyTable {
    columns: Vec<Column>,
    n_rows: usize,
    provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Left,
    Inner,
}

impl TidyTable {
    /// Builds a table; columns must have equal lengths and unique names.
    pub fn new(columns: Vec<Column>, provenance: Provenance) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        Self::with_rows(columns, n_rows, provenance)
    }

    /// Like [`TidyTable::new`] but with an explicit row count, so tables
    /// without columns can still have rows.
    pub fn with_rows(columns: Vec<Column>, n_rows: usize, provenance: Provenance) -> Result<Self> {
        let mut names = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(PipelineError::malformed(format!(
                    "column {:?} has {} values, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
            if c.name.is_empty() || !names.insert(c.name.as_str()) {
                return Err(PipelineError::malformed(format!(
                    "column name {:?} is empty or repeated",
                    c.name
                )));
            }
        }
        Ok(TidyTable {
            columns,
            n_rows,
            provenance,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn shape(&self) -> crate::error::Shape {
        crate::error::Shape {
            rows: self.n_rows,
            cols: self.columns.len(),
        }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Like [`TidyTable::column`] but a missing column is an error.
    pub fn require(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| PipelineError::missing_column(name))
    }

    /// Renames a column in place.
    pub fn rename(&mut self, from: &str, to: &str) -> Result<()> {
        if from != to && self.column(to).is_some() {
            return Err(PipelineError::malformed(format!("column {to:?} already exists")));
        }
        let col = self
            .columns
            .iter_mut()
            .find(|c| c.name == from)
            .ok_or_else(|| PipelineError::missing_column(from))?;
        col.name = to.to_string();
        Ok(())
    }

    /// Appends a column of matching length.
    pub fn push_column(&mut self, column: Column) -> Result<()> {
        if column.len() != self.n_rows {
            return Err(PipelineError::malformed(format!(
                "column {:?} has {} values, expected {}",
                column.name,
                column.len(),
                self.n_rows
            )));
        }
        if self.column(&column.name).is_some() {
            return Err(PipelineError::malformed(format!(
                "column {:?} already exists",
                column.name
            )));
        }
        self.columns.push(column);
        Ok(())
    }

    /// Keeps the named columns in the requested order.
    pub fn select(&self, names: &[&str]) -> Result<TidyTable> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            columns.push(self.require(name)?.clone());
        }
        TidyTable::with_rows(columns, self.n_rows, self.provenance.clone())
    }

    /// Joins `right` onto `self` by a text key column present in both.
    ///
    /// Keys must be unique in `right`. Right-hand columns other than the key
    /// are appended, with `_r` added to names already used on the left.
    /// Left joins keep every left row in order; unmatched rows get nulls.
    pub fn join(&self, right: &TidyTable, key: &str, kind: JoinKind) -> Result<TidyTable> {
        let left_keys = text_key(self, key)?;
        let right_keys = text_key(right, key)?;

        let mut index: HashMap<&str, usize> = HashMap::with_capacity(right_keys.len());
        for (i, k) in right_keys.iter().enumerate() {
            if let Some(k) = k.as_deref() {
                if index.insert(k, i).is_some() {
                    return Err(PipelineError::DuplicateKey(Context::new(format!(
                        "key {k:?} appears more than once in column {key:?} of the right table"
                    ))));
                }
            }
        }

        let matches: Vec<Option<usize>> = left_keys
            .iter()
            .map(|k| k.as_deref().and_then(|k| index.get(k).copied()))
            .collect();
        let (left_rows, right_rows): (Vec<Option<usize>>, Vec<Option<usize>>) = match kind {
            JoinKind::Left => ((0..self.n_rows).map(Some).collect(), matches),
            JoinKind::Inner => matches
                .iter()
                .enumerate()
                .filter_map(|(i, m)| m.map(|m| (Some(i), Some(m))))
                .unzip(),
        };

        let mut columns: Vec<Column> = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                source_name: c.source_name.clone(),
                data: if kind == JoinKind::Left {
                    c.data.clone()
                } else {
                    c.data.take(&left_rows)
                },
            })
            .collect();
        let mut used: HashSet<String> = columns.iter().map(|c| c.name.clone()).collect();
        for c in right.columns.iter().filter(|c| c.name != key) {
            let mut name = c.name.clone();
            while used.contains(&name) {
                name.push_str("_r");
            }
            used.insert(name.clone());
            columns.push(Column {
                name,
                source_name: c.source_name.clone(),
                data: c.data.take(&right_rows),
            });
        }
        TidyTable::with_rows(columns, left_rows.len(), self.provenance.clone())
    }

    /// Value at (row, column name).
    pub fn value(&self, row: usize, column: &str) -> Option<Value<'_>> {
        self.column(column).map(|c| c.get(row))
    }

    /// RFC 4180 CSV with a header row of column names; nulls are empty
    /// fields and floats use their shortest round-trip form.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv_writer(Vec::new());
        self.write_csv_rows(&mut writer);
        writer.into_inner().expect("writing to a Vec cannot fail")
    }

    fn write_csv_rows<W: Write>(&self, writer: &mut csv::Writer<W>) {
        if self.columns.is_empty() {
            return;
        }
        writer
            .write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        let mut record: Vec<String> = Vec::with_capacity(self.columns.len());
        for row in 0..self.n_rows {
            record.clear();
            record.extend(self.columns.iter().map(|c| c.get(row).to_text()));
            writer.write_record(&record).expect("in-memory write");
        }
    }

    /// Reads a CSV with a header row, inferring column kinds the same way
    /// the cleaner does.
    pub fn from_csv(bytes: &[u8], source: impl Into<String>) -> Result<TidyTable> {
        let source = source.into();
        let grid = crate::ods::CellGrid::from_csv(source.clone(), bytes)?;
        let mut spec = crate::registry::TableSpec::ad_hoc("CSV");
        spec.header_row = Some(0);
        spec.header_min_fill = 0.0;
        if grid.is_empty() {
            return TidyTable::new(Vec::new(), Provenance::new(source));
        }
        let mut table = crate::clean::clean(&grid, &spec)?;
        table.provenance = Provenance::new(source);
        Ok(table)
    }
}

/// Free-function form of [`TidyTable::join`].
pub fn join(left: &TidyTable, right: &TidyTable, key: &str, kind: JoinKind) -> Result<TidyTable> {
    left.join(right, key, kind)
}

/// Free-function form of [`TidyTable::select`].
pub fn select(table: &TidyTable, names: &[&str]) -> Result<TidyTable> {
    table.select(names)
}

/// Free-function form of [`TidyTable::to_csv`].
pub fn to_csv(table: &TidyTable) -> Vec<u8> {
    table.to_csv()
}

fn text_key<'a>(table: &'a TidyTable, key: &str) -> Result<&'a [Option<String>]> {
    let col = table.require(key)?;
    col.as_text().ok_or_else(|| {
        PipelineError::MissingKeyColumn(Context::new(format!(
            "key column {key:?} is {:?}, not text",
            col.kind()
        )))
    })
}

/// The CSV dialect used for every export: comma separated, LF terminated,
/// fields quoted only when they contain a delimiter, quote or line break.
pub(crate) fn csv_writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .flexible(true)
        .from_writer(inner)
}
