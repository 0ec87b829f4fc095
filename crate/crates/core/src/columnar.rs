//! Parquet export and import of [`TidyTable`]s.
//!
//! Column kinds map onto nullable Arrow types (`Utf8`, `Int64`, `Float64`,
//! `Boolean`). The verbatim header of each column is stored as field
//! metadata under `jtstats.source_name`; provenance and the row count are
//! stored as schema metadata under `jtstats.*` keys.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use arrow_array::{
    Array, ArrayRef, BooleanArray, Float64Array, Int64Array, RecordBatch, RecordBatchOptions,
    StringArray,
};
use arrow_schema::{DataType, Field, Schema};
use parquet::arrow::arrow_reader::ParquetRecordBatchReaderBuilder;
use parquet::arrow::ArrowWriter;

use crate::error::{Context, Location, PipelineError, Result};
use crate::table::{Column, ColumnData, GeoMatch, Provenance, TidyTable};

const SOURCE_NAME_KEY: &str = "jtstats.source_name";
const N_ROWS_KEY: &str = "jtstats.n_rows";
const SOURCE_KEY: &str = "jtstats.source";
const TABLE_CODE_KEY: &str = "jtstats.table_code";
const SHEET_KEY: &str = "jtstats.sheet";
const FETCHED_AT_KEY: &str = "jtstats.fetched_at_ms";
const GEO_MATCHED_KEY: &str = "jtstats.geo_matched";
const GEO_UNMATCHED_KEY: &str = "jtstats.geo_unmatched";

fn data_type(data: &ColumnData) -> DataType {
    match data {
        ColumnData::Text(_) => DataType::Utf8,
        ColumnData::Int(_) => DataType::Int64,
        ColumnData::Float(_) => DataType::Float64,
        ColumnData::Bool(_) => DataType::Boolean,
    }
}

fn to_array(data: &ColumnData) -> ArrayRef {
    match data {
        ColumnData::Text(v) => Arc::new(StringArray::from_iter(v.iter().map(|s| s.as_deref()))),
        ColumnData::Int(v) => Arc::new(Int64Array::from(v.clone())),
        ColumnData::Float(v) => Arc::new(Float64Array::from(v.clone())),
        ColumnData::Bool(v) => Arc::new(BooleanArray::from(v.clone())),
    }
}

/// Writes `table` as a Parquet file at `path`.
pub fn to_columnar(table: &TidyTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |detail: String| {
        PipelineError::MalformedDocument(Context::at(detail, Location::file(path.display().to_string())))
    };

    let fields: Vec<Field> = table
        .columns()
        .iter()
        .map(|c| {
            Field::new(&c.name, data_type(&c.data), true)
                .with_metadata([(SOURCE_NAME_KEY, c.source_name.clone())])
        })
        .collect();
    let p = table.provenance();
    let mut metadata = vec![
        (N_ROWS_KEY.to_string(), table.n_rows().to_string()),
        (SOURCE_KEY.to_string(), p.source.clone()),
    ];
    let optional = [
        (TABLE_CODE_KEY, p.table_code.clone()),
        (SHEET_KEY, p.sheet.clone()),
        (FETCHED_AT_KEY, p.fetched_at_ms.map(|v| v.to_string())),
        (GEO_MATCHED_KEY, p.geo_match.map(|g| g.matched.to_string())),
        (GEO_UNMATCHED_KEY, p.geo_match.map(|g| g.unmatched.to_string())),
    ];
    metadata.extend(
        optional
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
    );
    let schema = Arc::new(Schema::new(fields).with_metadata(metadata.into_iter().collect::<arrow_schema::Metadata>()));

    let arrays: Vec<ArrayRef> = table.columns().iter().map(|c| to_array(&c.data)).collect();
    let batch = RecordBatch::try_new_with_options(
        schema.clone(),
        arrays,
        &RecordBatchOptions::new().with_row_count(Some(table.n_rows())),
    )
    .map_err(|e| io_err(format!("cannot build record batch: {e}")))?;

    let file = File::create(path).map_err(|e| io_err(format!("cannot create file: {e}")))?;
    let mut writer = ArrowWriter::try_new(file, schema, None)
        .map_err(|e| io_err(format!("cannot start Parquet writer: {e}")))?;
    if table.n_rows() > 0 && table.n_cols() > 0 {
        writer
            .write(&batch)
            .map_err(|e| io_err(format!("cannot write Parquet data: {e}")))?;
    }
    writer
        .close()
        .map_err(|e| io_err(format!("cannot finish Parquet file: {e}")))?;
    Ok(())
}

/// Reads a Parquet file written by [`to_columnar`] (or any file using the
/// supported column types).
pub fn from_columnar(path: impl AsRef<Path>) -> Result<TidyTable> {
    let path = path.as_ref();
    let malformed = |detail: String| {
        PipelineError::MalformedDocument(Context::at(detail, Location::file(path.display().to_string())))
    };

    let file = File::open(path).map_err(|e| malformed(format!("cannot open file: {e}")))?;
    let builder = ParquetRecordBatchReaderBuilder::try_new(file)
        .map_err(|e| malformed(format!("not a readable Parquet file: {e}")))?;
    let schema = builder.schema().clone();
    let reader = builder
        .build()
        .map_err(|e| malformed(format!("cannot read Parquet data: {e}")))?;

    let mut data: Vec<ColumnData> = schema
        .fields()
        .iter()
        .map(|f| match f.data_type() {
            DataType::Utf8 | DataType::LargeUtf8 | DataType::Utf8View => Ok(ColumnData::Text(Vec::new())),
            DataType::Int64 | DataType::Int32 => Ok(ColumnData::Int(Vec::new())),
            DataType::Float64 | DataType::Float32 => Ok(ColumnData::Float(Vec::new())),
            DataType::Boolean => Ok(ColumnData::Bool(Vec::new())),
            other => Err(malformed(format!(
                "column {:?} has unsupported type {other}",
                f.name()
            ))),
        })
        .collect::<Result<_>>()?;

    for batch in reader {
        let batch = batch.map_err(|e| malformed(format!("cannot decode row group: {e}")))?;
        for (col, array) in data.iter_mut().zip(batch.columns()) {
            append(col, array.as_ref()).map_err(malformed)?;
        }
    }

    let meta = schema.metadata();
    let get = |k: &str| meta.get(k).cloned();
    let parse_num = |k: &str| -> Result<Option<u64>> {
        get(k)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| malformed(format!("metadata {k} is not a number: {v:?}")))
            })
            .transpose()
    };
    let n_rows_meta = parse_num(N_ROWS_KEY)?;
    let geo_match = match (parse_num(GEO_MATCHED_KEY)?, parse_num(GEO_UNMATCHED_KEY)?) {
        (Some(m), Some(u)) => Some(GeoMatch {
            matched: m as usize,
            unmatched: u as usize,
        }),
        _ => None,
    };
    let provenance = Provenance {
        source: get(SOURCE_KEY).unwrap_or_else(|| path.display().to_string()),
        table_code: get(TABLE_CODE_KEY),
        sheet: get(SHEET_KEY),
        fetched_at_ms: parse_num(FETCHED_AT_KEY)?,
        geo_match,
    };

    let columns: Vec<Column> = schema
        .fields()
        .iter()
        .zip(data)
        .map(|(f, data)| Column {
            name: f.name().clone(),
            source_name: f
                .metadata()
                .get(SOURCE_NAME_KEY)
                .cloned()
                .unwrap_or_else(|| f.name().clone()),
            data,
        })
        .collect();
    let n_rows = match columns.first() {
        Some(c) => c.len(),
        None => n_rows_meta.unwrap_or(0) as usize,
    };
    TidyTable::with_rows(columns, n_rows, provenance)
}

fn append(col: &mut ColumnData, array: &dyn Array) -> std::result::Result<(), String> {
    let any = array.as_any();
    let mismatch = || format!("unexpected array type {}", array.data_type());
    match col {
        ColumnData::Text(v) => {
            let a = any.downcast_ref::<StringArray>().ok_or_else(mismatch)?;
            v.extend(a.iter().map(|s| s.map(str::to_string)));
        }
        ColumnData::Int(v) => match any.downcast_ref::<Int64Array>() {
            Some(a) => v.extend(a.iter()),
            None => {
                let a = any
                    .downcast_ref::<arrow_array::Int32Array>()
                    .ok_or_else(mismatch)?;
                v.extend(a.iter().map(|x| x.map(i64::from)));
            }
        },
        ColumnData::Float(v) => match any.downcast_ref::<Float64Array>() {
            Some(a) => v.extend(a.iter()),
            None => {
                let a = any
                    .downcast_ref::<arrow_array::Float32Array>()
                    .ok_or_else(mismatch)?;
                v.extend(a.iter().map(|x| x.map(f64::from)));
            }
        },
        ColumnData::Bool(v) => {
            let a = any.downcast_ref::<BooleanArray>().ok_or_else(mismatch)?;
            v.extend(a.iter());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(table: &TidyTable) -> TidyTable {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.parquet");
        to_columnar(table, &path).unwrap();
        from_columnar(&path).unwrap()
    }

    #[test]
    fn mixed_table_round_trips() {
        let mut text = Column::new("lsoa_code", ColumnData::Text(vec![Some("E01000001".into()), None]));
        text.source_name = "LSOA_code".into();
        let table = TidyTable::new(
            vec![
                text,
                Column::new("i", ColumnData::Int(vec![None, Some(-99)])),
                Column::new("f", ColumnData::Float(vec![Some(240.0), Some(-0.5)])),
                Column::new("b", ColumnData::Bool(vec![Some(true), None])),
            ],
            Provenance {
                source: "https://example/jts0501.ods".into(),
                table_code: Some("JTS0501".into()),
                sheet: Some("2019".into()),
                fetched_at_ms: Some(1_700_000_000_000),
                geo_match: Some(GeoMatch { matched: 1, unmatched: 1 }),
            },
        )
        .unwrap();
        assert_eq!(round_trip(&table), table);
    }

    #[test]
    fn empty_and_all_null_tables_round_trip() {
        let empty = TidyTable::new(
            vec![
                Column::new("a", ColumnData::Int(vec![])),
                Column::new("b", ColumnData::Text(vec![])),
            ],
            Provenance::new("x"),
        )
        .unwrap();
        assert_eq!(round_trip(&empty), empty);

        let nulls = TidyTable::new(
            vec![Column::new("n", ColumnData::Float(vec![None; 3]))],
            Provenance::new("x"),
        )
        .unwrap();
        let back = round_trip(&nulls);
        assert_eq!(back, nulls);
        assert_eq!(back.columns()[0].kind(), crate::table::ColumnKind::Float);

        let no_columns = TidyTable::with_rows(vec![], 4, Provenance::new("x")).unwrap();
        assert_eq!(round_trip(&no_columns), no_columns);
    }

    #[test]
    fn corrupt_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.parquet");
        std::fs::write(&path, b"PAR1 not really").unwrap();
        assert_eq!(from_columnar(&path).unwrap_err().name(), "MalformedDocument");
    }
}
