//! OpenDocument spreadsheet reading.
//!
//! An `.ods` file is a ZIP container whose `content.xml` entry holds every
//! sheet as a `table:table` element. Rows and cells can carry repeat counts
//! (`table:number-rows-repeated`, `table:number-columns-repeated`); those are
//! expanded into logical cells here, except for the trailing empty padding
//! office suites append to reach the maximum sheet size, which is trimmed.

use std::borrow::Cow;
use std::collections::HashSet;
use std::io::{Cursor, Read, Seek};
use std::path::Path;
use std::sync::Arc;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Context, Location, PipelineError, Result};

const CONTENT_ENTRY: &str = "content.xml";
const SPREADSHEET_MIMETYPE: &str = "application/vnd.oasis.opendocument.spreadsheet";

/// Upper bound on logical cells materialised for one sheet. Real releases
/// stay well below this (an LSOA table is ~3.7M cells).
const MAX_CELLS: usize = 20_000_000;
/// Upper bound on logical columns in a row.
const MAX_WIDTH: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Empty,
    Text,
    Number,
    Boolean,
    Date,
}

/// One logical spreadsheet cell.
///
/// `text` is always present. For numbers it is the canonical shortest
/// decimal form of `number`, for booleans `TRUE`/`FALSE`, for dates the ISO
/// 8601 value, and the empty string for empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    kind: CellKind,
    text: String,
    number: Option<f64>,
}

impl Cell {
    pub const EMPTY: Cell = Cell {
        kind: CellKind::Empty,
        text: String::new(),
        number: None,
    };

    pub fn empty() -> Self {
        Cell::EMPTY
    }

    /// A text cell. Empty strings produce an empty cell.
    pub fn text(text: impl Into<String>) -> Self {
        let text = text.into();
        if text.is_empty() {
            return Cell::EMPTY;
        }
        Cell {
            kind: CellKind::Text,
            text,
            number: None,
        }
    }

    /// A number cell. Non-finite values cannot be represented in a release
    /// file and are kept as text.
    pub fn number(value: f64) -> Self {
        if !value.is_finite() {
            return Cell::text(value.to_string());
        }
        Cell {
            kind: CellKind::Number,
            text: format_number(value),
            number: Some(value),
        }
    }

    pub fn boolean(value: bool) -> Self {
        Cell {
            kind: CellKind::Boolean,
            text: if value { "TRUE" } else { "FALSE" }.to_string(),
            number: None,
        }
    }

    pub fn date(iso: impl Into<String>) -> Self {
        let iso = iso.into();
        if iso.is_empty() {
            return Cell::EMPTY;
        }
        Cell {
            kind: CellKind::Date,
            text: iso,
            number: None,
        }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn as_text(&self) -> &str {
        &self.text
    }

    pub fn as_number(&self) -> Option<f64> {
        self.number
    }

    pub fn is_empty(&self) -> bool {
        self.kind == CellKind::Empty
    }
}

pub(crate) static EMPTY_CELL: Cell = Cell::EMPTY;

/// Canonical decimal form: the shortest string that parses back to the same
/// `f64`, with no trailing `.0` and no negative zero.
pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    value.to_string()
}

/// A rectangular-ish grid of cells from one sheet. Rows never end in empty
/// cells and the grid never ends in empty rows; `width` is the longest row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    sheet_name: String,
    rows: Vec<Vec<Cell>>,
    width: usize,
}

impl CellGrid {
    /// Builds a grid, trimming trailing empty cells and trailing empty rows.
    pub fn new(sheet_name: impl Into<String>, mut rows: Vec<Vec<Cell>>) -> Self {
        for row in &mut rows {
            let keep = row.iter().rposition(|c| !c.is_empty()).map_or(0, |i| i + 1);
            row.truncate(keep);
        }
        while rows.last().is_some_and(|r| r.is_empty()) {
            rows.pop();
        }
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        CellGrid {
            sheet_name: sheet_name.into(),
            rows,
            width,
        }
    }

    /// Reads a headerless CSV into a grid of text cells. Used for releases
    /// that were already converted to CSV.
    pub fn from_csv(sheet_name: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let sheet_name = sheet_name.into();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes);
        let mut rows = Vec::new();
        for (i, record) in reader.byte_records().enumerate() {
            let record = record.map_err(|e| {
                PipelineError::MalformedDocument(Context::at(
                    format!("invalid CSV: {e}"),
                    Location::sheet(&sheet_name).with_row(i),
                ))
            })?;
            let mut row = Vec::with_capacity(record.len());
            for field in record.iter() {
                let text = std::str::from_utf8(field).map_err(|_| {
                    PipelineError::MalformedDocument(Context::at(
                        "CSV is not valid UTF-8",
                        Location::sheet(&sheet_name).with_row(i),
                    ))
                })?;
                row.push(Cell::text(text));
            }
            rows.push(row);
        }
        Ok(CellGrid::new(sheet_name, rows))
    }

    pub fn sheet_name(&self) -> &str {
        &self.sheet_name
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The cell at (row, col); positions past a row's end read as empty.
    pub fn get(&self, row: usize, col: usize) -> &Cell {
        self.rows
            .get(row)
            .and_then(|r| r.get(col))
            .unwrap_or(&EMPTY_CELL)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Serialises the grid as RFC 4180 CSV (UTF-8, LF line endings), every
    /// row padded to the grid width.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = crate::table::csv_writer(Vec::new());
        let mut record = Vec::with_capacity(self.width);
        for row in &self.rows {
            record.clear();
            record.extend(row.iter().map(|c| c.as_text()));
            record.resize(self.width, "");
            writer
                .write_record(&record)
                .expect("writing to a Vec cannot fail");
        }
        writer.into_inner().expect("writing to a Vec cannot fail")
    }
}

/// See [`CellGrid::to_csv`].
pub fn grid_to_csv(grid: &CellGrid) -> Vec<u8> {
    grid.to_csv()
}

/// An opened, validated spreadsheet. Cheap to clone; the XML content is
/// shared.
#[derive(Debug, Clone)]
pub struct OdsDocument {
    sheet_names: Vec<String>,
    source: String,
    content: Arc<str>,
}

impl OdsDocument {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| {
            PipelineError::MalformedDocument(Context::at(
                format!("cannot read file: {e}"),
                Location::file(path.display().to_string()),
            ))
        })?;
        Self::from_bytes(&bytes, path.display().to_string())
    }

    pub fn from_bytes(bytes: &[u8], source: impl Into<String>) -> Result<Self> {
        Self::from_reader(Cursor::new(bytes), source)
    }

    pub fn from_reader<R: Read + Seek>(reader: R, source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        let malformed =
            |detail: String| PipelineError::MalformedDocument(Context::at(detail, Location::file(&source)));

        let mut archive =
            zip::ZipArchive::new(reader).map_err(|e| malformed(format!("not a ZIP container: {e}")))?;

        if let Ok(mut entry) = archive.by_name("mimetype") {
            let mut mimetype = String::new();
            entry
                .read_to_string(&mut mimetype)
                .map_err(|e| malformed(format!("unreadable mimetype entry: {e}")))?;
            let mimetype = mimetype.trim();
            if mimetype != SPREADSHEET_MIMETYPE {
                return Err(malformed(format!("not a spreadsheet (mimetype {mimetype:?})")));
            }
        }

        let mut entry = archive
            .by_name(CONTENT_ENTRY)
            .map_err(|_| malformed(format!("missing {CONTENT_ENTRY} entry")))?;
        let mut raw = Vec::new();
        entry
            .read_to_end(&mut raw)
            .map_err(|e| malformed(format!("unreadable {CONTENT_ENTRY}: {e}")))?;
        let content = String::from_utf8(raw)
            .map_err(|_| malformed(format!("{CONTENT_ENTRY} is not UTF-8")))?;

        let sheet_names = scan_sheet_names(&content).map_err(malformed)?;
        Ok(OdsDocument {
            sheet_names,
            source,
            content: content.into(),
        })
    }

    pub fn sheet_names(&self) -> &[String] {
        &self.sheet_names
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Expands one sheet into a [`CellGrid`].
    pub fn parse_sheet(&self, name: &str) -> Result<CellGrid> {
        if !self.sheet_names.iter().any(|s| s == name) {
            return Err(PipelineError::UnknownSheet(Context::at(
                format!(
                    "no sheet named {name:?}; available: {}",
                    self.sheet_names.join(", ")
                ),
                Location::file(&self.source),
            )));
        }
        let rows = SheetReader::new(&self.content, name).read().map_err(|detail| {
            PipelineError::MalformedDocument(Context::at(
                detail,
                Location::file(&self.source).with_sheet(name),
            ))
        })?;
        Ok(CellGrid::new(name, rows))
    }
}

pub fn open_ods(path: impl AsRef<Path>) -> Result<OdsDocument> {
    OdsDocument::open(path)
}

pub fn parse_sheet(doc: &OdsDocument, name: &str) -> Result<CellGrid> {
    doc.parse_sheet(name)
}

fn xml_reader(content: &str) -> Reader<&[u8]> {
    let mut reader = Reader::from_str(content);
    let config = reader.config_mut();
    config.check_end_names = true;
    config.expand_empty_elements = false;
    reader
}

/// Full well-formedness pass that also collects sheet names in order.
fn scan_sheet_names(content: &str) -> Result<Vec<String>, String> {
    let mut reader = xml_reader(content);
    let mut names = Vec::new();
    let mut seen = HashSet::new();
    let mut depth = 0usize;
    let mut saw_root = false;
    loop {
        let event = reader.read_event().map_err(|e| xml_error(&reader, e))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                saw_root = true;
                if e.name().as_ref() == "table:table" {
                    let name = attr(e, "table:name")?.unwrap_or_default();
                    if name.is_empty() {
                        return Err("sheet without a name".into());
                    }
                    if !seen.insert(name.clone()) {
                        return Err(format!("duplicate sheet name {name:?}"));
                    }
                    names.push(name);
                }
                if matches!(event, Event::Start(_)) {
                    depth += 1;
                }
            }
            Event::End(_) => depth = depth.saturating_sub(1),
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_root {
        return Err("content.xml has no root element".into());
    }
    if depth != 0 {
        return Err("content.xml ends inside an open element".into());
    }
    Ok(names)
}

fn xml_error(reader: &Reader<&[u8]>, e: quick_xml::Error) -> String {
    format!("XML error at byte {}: {e}", reader.error_position())
}

fn attr(e: &BytesStart<'_>, key: &str) -> Result<Option<String>, String> {
    for a in e.attributes() {
        let a = a.map_err(|err| format!("bad attribute: {err}"))?;
        if a.key.as_ref() == key {
            let value = a
                .normalized_value(quick_xml::XmlVersion::Implicit1_0)
                .map_err(|err| format!("bad attribute value: {err}"))?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

fn repeat_attr(e: &BytesStart<'_>, key: &str) -> Result<usize, String> {
    match attr(e, key)? {
        None => Ok(1),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("invalid {key} value {v:?}")),
        },
    }
}

/// Typed attributes of a `table:table-cell` start tag.
struct CellAttrs {
    covered: bool,
    repeat: usize,
    value_type: Option<String>,
    value: Option<String>,
    boolean_value: Option<String>,
    date_value: Option<String>,
    string_value: Option<String>,
}

impl CellAttrs {
    fn read(e: &BytesStart<'_>, covered: bool) -> Result<Self, String> {
        let mut attrs = CellAttrs {
            covered,
            repeat: 1,
            value_type: None,
            value: None,
            boolean_value: None,
            date_value: None,
            string_value: None,
        };
        for a in e.attributes() {
            let a = a.map_err(|err| format!("bad attribute: {err}"))?;
            let slot = match a.key.as_ref() {
                "table:number-columns-repeated" => {
                    attrs.repeat = repeat_attr(e, "table:number-columns-repeated")?;
                    continue;
                }
                "office:value-type" => &mut attrs.value_type,
                "office:value" => &mut attrs.value,
                "office:boolean-value" => &mut attrs.boolean_value,
                "office:date-value" => &mut attrs.date_value,
                "office:string-value" => &mut attrs.string_value,
                _ => continue,
            };
            let value = a
                .normalized_value(quick_xml::XmlVersion::Implicit1_0)
                .map_err(|err| format!("bad attribute value: {err}"))?;
            *slot = Some(value.into_owned());
        }
        Ok(attrs)
    }

    fn into_cell(self, displayed: String) -> Cell {
        if self.covered {
            return Cell::EMPTY;
        }
        match self.value_type.as_deref() {
            Some("float") | Some("percentage") | Some("currency") => {
                match self.value.as_deref().map(|v| v.trim().parse::<f64>()) {
                    Some(Ok(v)) if v.is_finite() => Cell::number(v),
                    _ => Cell::text(displayed),
                }
            }
            Some("boolean") => match self.boolean_value.as_deref().map(str::trim) {
                Some("true") | Some("1") => Cell::boolean(true),
                Some("false") | Some("0") => Cell::boolean(false),
                _ => Cell::text(displayed),
            },
            Some("date") => match self.date_value {
                Some(iso) => Cell::date(iso.trim()),
                None => Cell::text(displayed),
            },
            Some("string") => Cell::text(self.string_value.unwrap_or(displayed)),
            _ => Cell::text(displayed),
        }
    }
}

/// Paragraph text accumulator applying the whitespace rules of `text:p`:
/// runs of XML whitespace collapse to one space, and whitespace at the very
/// start or end of a paragraph is dropped. Spaces from `text:s` are kept.
#[derive(Default)]
struct CellText {
    paragraphs: Vec<String>,
    current: Option<String>,
    pending_space: bool,
}

impl CellText {
    fn start_paragraph(&mut self) {
        self.end_paragraph();
        self.current = Some(String::new());
        self.pending_space = false;
    }

    fn end_paragraph(&mut self) {
        if let Some(p) = self.current.take() {
            self.paragraphs.push(p);
        }
        self.pending_space = false;
    }

    fn flush_space(&mut self) {
        if let Some(p) = self.current.as_mut() {
            if self.pending_space && !p.is_empty() {
                p.push(' ');
            }
        }
        self.pending_space = false;
    }

    fn push_chars(&mut self, text: &str) {
        if self.current.is_none() {
            return;
        }
        for ch in text.chars() {
            if matches!(ch, ' ' | '\t' | '\r' | '\n') {
                self.pending_space = true;
            } else {
                self.flush_space();
                if let Some(p) = self.current.as_mut() {
                    p.push(ch);
                }
            }
        }
    }

    fn push_literal(&mut self, literal: &str) {
        if self.current.is_none() {
            return;
        }
        self.flush_space();
        if let Some(p) = self.current.as_mut() {
            p.push_str(literal);
        }
    }

    fn finish(mut self) -> String {
        self.end_paragraph();
        self.paragraphs.join("\n")
    }
}

/// Streams one sheet's rows out of `content.xml`.
struct SheetReader<'a> {
    reader: Reader<&'a [u8]>,
    sheet: &'a str,
    rows: Vec<Vec<Cell>>,
    pending_empty_rows: usize,
    cells_total: usize,
}

impl<'a> SheetReader<'a> {
    fn new(content: &'a str, sheet: &'a str) -> Self {
        SheetReader {
            reader: xml_reader(content),
            sheet,
            rows: Vec::new(),
            pending_empty_rows: 0,
            cells_total: 0,
        }
    }

    fn next(&mut self) -> Result<Event<'a>, String> {
        self.reader
            .read_event()
            .map_err(|e| format!("XML error at byte {}: {e}", self.reader.error_position()))
    }

    fn read(mut self) -> Result<Vec<Vec<Cell>>, String> {
        // Find the sheet's opening tag.
        loop {
            match self.next()? {
                Event::Start(e) if e.name().as_ref() == "table:table" => {
                    if attr(&e, "table:name")?.as_deref() == Some(self.sheet) {
                        break;
                    }
                }
                Event::Empty(e) if e.name().as_ref() == "table:table" => {
                    if attr(&e, "table:name")?.as_deref() == Some(self.sheet) {
                        return Ok(Vec::new());
                    }
                }
                Event::Eof => return Err("sheet element not found".into()),
                _ => {}
            }
        }

        // Rows may sit directly under the table or inside row groups and
        // header-row containers; nested tables inside cells are skipped by
        // read_row.
        let mut depth = 0usize;
        loop {
            match self.next()? {
                Event::Start(e) => {
                    if e.name().as_ref() == "table:table-row" {
                        let repeat = repeat_attr(&e, "table:number-rows-repeated")?;
                        let row = self.read_row()?;
                        self.push_row(row, repeat)?;
                    } else {
                        depth += 1;
                    }
                }
                Event::Empty(e) if e.name().as_ref() == "table:table-row" => {
                    let repeat = repeat_attr(&e, "table:number-rows-repeated")?;
                    self.push_row(Vec::new(), repeat)?;
                }
                Event::End(_) => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                }
                Event::Eof => return Err("unexpected end of document inside sheet".into()),
                _ => {}
            }
        }
        Ok(self.rows)
    }

    fn push_row(&mut self, row: Vec<Cell>, repeat: usize) -> Result<(), String> {
        if row.is_empty() {
            self.pending_empty_rows = self.pending_empty_rows.saturating_add(repeat);
            return Ok(());
        }
        let added = self
            .pending_empty_rows
            .saturating_add(row.len().saturating_mul(repeat));
        self.charge(added)?;
        self.rows
            .extend(std::iter::repeat_n(Vec::new(), self.pending_empty_rows));
        self.pending_empty_rows = 0;
        for _ in 1..repeat {
            self.rows.push(row.clone());
        }
        self.rows.push(row);
        Ok(())
    }

    fn charge(&mut self, cells: usize) -> Result<(), String> {
        self.cells_total = self.cells_total.saturating_add(cells);
        if self.cells_total > MAX_CELLS {
            return Err(format!("sheet expands to more than {MAX_CELLS} cells"));
        }
        Ok(())
    }

    /// Reads cells up to the matching `</table:table-row>`.
    fn read_row(&mut self) -> Result<Vec<Cell>, String> {
        let mut cells: Vec<Cell> = Vec::new();
        let mut pending_empty = 0usize;
        let mut place = |cells: &mut Vec<Cell>, cell: Cell, repeat: usize| -> Result<(), String> {
            if cell.is_empty() {
                pending_empty = pending_empty.saturating_add(repeat);
                return Ok(());
            }
            let new_len = cells
                .len()
                .saturating_add(pending_empty)
                .saturating_add(repeat);
            if new_len > MAX_WIDTH {
                return Err(format!("row wider than {MAX_WIDTH} columns"));
            }
            cells.resize(cells.len() + pending_empty, Cell::EMPTY);
            pending_empty = 0;
            cells.extend(std::iter::repeat_n(cell, repeat));
            Ok(())
        };

        loop {
            match self.next()? {
                Event::Start(e) => {
                    let name = e.name();
                    let covered = match name.as_ref() {
                        "table:table-cell" => false,
                        "table:covered-table-cell" => true,
                        _ => {
                            self.skip_element(&e)?;
                            continue;
                        }
                    };
                    let attrs = CellAttrs::read(&e, covered)?;
                    let displayed = self.read_cell_text(name.as_ref())?;
                    let repeat = attrs.repeat;
                    place(&mut cells, attrs.into_cell(displayed), repeat)?;
                }
                Event::Empty(e) => {
                    let covered = match e.name().as_ref() {
                        "table:table-cell" => false,
                        "table:covered-table-cell" => true,
                        _ => continue,
                    };
                    let attrs = CellAttrs::read(&e, covered)?;
                    let repeat = attrs.repeat;
                    place(&mut cells, attrs.into_cell(String::new()), repeat)?;
                }
                Event::End(e) if e.name().as_ref() == "table:table-row" => break,
                Event::End(_) => {}
                Event::Eof => return Err("unexpected end of document inside row".into()),
                _ => {}
            }
        }
        Ok(cells)
    }

    fn skip_element(&mut self, start: &BytesStart<'_>) -> Result<(), String> {
        let end = start.name().as_ref().to_string();
        self.reader
            .read_to_end(quick_xml::name::QName(&end))
            .map(|_| ())
            .map_err(|e| format!("XML error at byte {}: {e}", self.reader.error_position()))
    }

    /// Collects the displayed text of a cell, stopping at its end tag.
    fn read_cell_text(&mut self, cell_tag: &str) -> Result<String, String> {
        let cell_tag = cell_tag.to_string();
        let mut text = CellText::default();
        loop {
            match self.next()? {
                Event::Start(e) => match e.name().as_ref() {
                    "text:p" | "text:h" => text.start_paragraph(),
                    "office:annotation" | "table:table" => self.skip_element(&e)?,
                    "text:s" => {
                        text.push_literal(&spaces(&e)?);
                        self.skip_element(&e)?;
                    }
                    _ => {}
                },
                Event::Empty(e) => match e.name().as_ref() {
                    "text:p" | "text:h" => {
                        text.start_paragraph();
                        text.end_paragraph();
                    }
                    "text:s" => text.push_literal(&spaces(&e)?),
                    "text:tab" => text.push_literal("\t"),
                    "text:line-break" => text.push_literal("\n"),
                    _ => {}
                },
                Event::End(e) => {
                    let name = e.name();
                    if name.as_ref() == cell_tag.as_str() {
                        break;
                    }
                    if matches!(name.as_ref(), "text:p" | "text:h") {
                        text.end_paragraph();
                    }
                }
                Event::Text(t) => text.push_chars(&t.xml10_content()),
                Event::CData(t) => {
                    let raw = t.into_inner();
                    text.push_chars(&raw);
                }
                Event::GeneralRef(r) => {
                    let resolved: Cow<'_, str> = match r.resolve_char_ref() {
                        Ok(Some(ch)) => Cow::Owned(ch.to_string()),
                        Ok(None) => match quick_xml::escape::resolve_predefined_entity(&r) {
                            Some(s) => Cow::Borrowed(s),
                            None => return Err(format!("unknown entity &{};", &*r)),
                        },
                        Err(e) => return Err(format!("bad character reference: {e}")),
                    };
                    text.push_literal(&resolved);
                }
                Event::Eof => return Err("unexpected end of document inside cell".into()),
                _ => {}
            }
        }
        Ok(text.finish())
    }
}

fn spaces(e: &BytesStart<'_>) -> Result<String, String> {
    let count = match attr(e, "text:c")? {
        None => 1,
        Some(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n <= MAX_WIDTH)
            .ok_or_else(|| format!("invalid text:c value {v:?}"))?,
    };
    Ok(" ".repeat(count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ods_with_content(body: &str) -> Vec<u8> {
        let content = format!(
            r#"<?xml version="1.0" encoding="UTF-8"?>
<office:document-content xmlns:office="urn:oasis:names:tc:opendocument:xmlns:office:1.0" xmlns:table="urn:oasis:names:tc:opendocument:xmlns:table:1.0" xmlns:text="urn:oasis:names:tc:opendocument:xmlns:text:1.0" office:version="1.2"><office:body><office:spreadsheet>{body}</office:spreadsheet></office:body></office:document-content>"#
        );
        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        let opts = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Stored);
        zip.start_file("mimetype", opts).unwrap();
        zip.write_all(SPREADSHEET_MIMETYPE.as_bytes()).unwrap();
        zip.start_file("content.xml", opts).unwrap();
        zip.write_all(content.as_bytes()).unwrap();
        zip.finish().unwrap().into_inner()
    }

    fn sheet(name: &str, rows: &str) -> String {
        format!(r#"<table:table table:name="{name}">{rows}</table:table>"#)
    }

    fn parse_one(rows: &str) -> CellGrid {
        let doc = OdsDocument::from_bytes(&ods_with_content(&sheet("S", rows)), "test").unwrap();
        doc.parse_sheet("S").unwrap()
    }

    #[test]
    fn repeated_value_cells_expand() {
        let grid = parse_one(
            r#"<table:table-row><table:table-cell table:number-columns-repeated="3" office:value-type="float" office:value="5"><text:p>5</text:p></table:table-cell></table:table-row>"#,
        );
        assert_eq!(grid.width(), 3);
        assert_eq!(grid.rows()[0], vec![Cell::number(5.0); 3]);
    }

    #[test]
    fn trailing_empty_repeat_is_trimmed() {
        let grid = parse_one(
            r#"<table:table-row><table:table-cell/><table:table-cell office:value-type="string"><text:p>a</text:p></table:table-cell><table:table-cell table:number-columns-repeated="16384"/></table:table-row><table:table-row table:number-rows-repeated="1048576"><table:table-cell table:number-columns-repeated="16384"/></table:table-row>"#,
        );
        assert_eq!(grid.n_rows(), 1);
        assert_eq!(grid.width(), 2);
        assert!(grid.get(0, 0).is_empty());
        assert_eq!(grid.get(0, 1).as_text(), "a");
    }

    #[test]
    fn interior_empty_rows_and_cells_are_kept() {
        let grid = parse_one(
            r#"<table:table-row><table:table-cell><text:p>x</text:p></table:table-cell></table:table-row><table:table-row table:number-rows-repeated="2"><table:table-cell table:number-columns-repeated="5"/></table:table-row><table:table-row><table:table-cell table:number-columns-repeated="2"/><table:table-cell><text:p>y</text:p></table:table-cell></table:table-row>"#,
        );
        assert_eq!(grid.n_rows(), 4);
        assert!(grid.rows()[1].is_empty() && grid.rows()[2].is_empty());
        assert_eq!(grid.get(3, 2).as_text(), "y");
        assert_eq!(grid.width(), 3);
    }

    #[test]
    fn single_text_cell() {
        let grid = parse_one(
            r#"<table:table-row><table:table-cell office:value-type="string"><text:p>LSOA_code</text:p></table:table-cell></table:table-row>"#,
        );
        assert_eq!((grid.n_rows(), grid.width()), (1, 1));
        assert_eq!(grid.get(0, 0).kind(), CellKind::Text);
        assert_eq!(grid.get(0, 0).as_text(), "LSOA_code");
    }

    #[test]
    fn covered_cells_read_as_empty() {
        let grid = parse_one(
            r#"<table:table-row><table:table-cell table:number-columns-spanned="2" office:value-type="string"><text:p>Title</text:p></table:table-cell><table:covered-table-cell office:value-type="string"><text:p>Title</text:p></table:covered-table-cell><table:table-cell><text:p>z</text:p></table:table-cell></table:table-row>"#,
        );
        assert_eq!(grid.rows()[0], vec![Cell::text("Title"), Cell::EMPTY, Cell::text("z")]);
    }

    #[test]
    fn cell_value_types() {
        let grid = parse_one(
            r#"<table:table-row>
<table:table-cell office:value-type="float" office:value="240"><text:p>240.00</text:p></table:table-cell>
<table:table-cell office:value-type="percentage" office:value="0.25"><text:p>25%</text:p></table:table-cell>
<table:table-cell office:value-type="boolean" office:boolean-value="true"><text:p>TRUE</text:p></table:table-cell>
<table:table-cell office:value-type="date" office:date-value="2019-10-08"><text:p>08/10/2019</text:p></table:table-cell>
<table:table-cell office:value-type="string"><text:p>a &amp; b</text:p><text:p>line<text:s text:c="3"/>two<text:tab/>x</text:p></table:table-cell>
<table:table-cell office:value-type="string"><text:p>note<office:annotation><text:p>hidden</text:p></office:annotation></text:p></table:table-cell>
</table:table-row>"#,
        );
        let row = &grid.rows()[0];
        assert_eq!(row[0].kind(), CellKind::Number);
        assert_eq!(row[0].as_text(), "240");
        assert_eq!(row[1].as_number(), Some(0.25));
        assert_eq!(row[2], Cell::boolean(true));
        assert_eq!(row[3], Cell::date("2019-10-08"));
        assert_eq!(row[4].as_text(), "a & b\nline   two\tx");
        assert_eq!(row[5].as_text(), "note");
    }

    #[test]
    fn paragraph_whitespace_collapses() {
        let grid = parse_one(
            "<table:table-row><table:table-cell><text:p>\n   a \n  b  </text:p></table:table-cell></table:table-row>",
        );
        assert_eq!(grid.get(0, 0).as_text(), "a b");
    }

    #[test]
    fn sheet_names_in_file_order() {
        let body = format!("{}{}", sheet("JTS0501", ""), sheet("Notes", ""));
        let doc = OdsDocument::from_bytes(&ods_with_content(&body), "t").unwrap();
        assert_eq!(doc.sheet_names(), ["JTS0501", "Notes"]);
        assert!(doc.parse_sheet("Notes").unwrap().is_empty());
    }

    #[test]
    fn errors_are_typed() {
        let err = OdsDocument::from_bytes(b"plain text", "x").unwrap_err();
        assert_eq!(err.name(), "MalformedDocument");

        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        zip.start_file("other.xml", zip::write::SimpleFileOptions::default())
            .unwrap();
        zip.write_all(b"<a/>").unwrap();
        let bytes = zip.finish().unwrap().into_inner();
        let err = OdsDocument::from_bytes(&bytes, "x").unwrap_err();
        assert!(err.to_string().contains("missing content.xml"), "{err}");

        let err = OdsDocument::from_bytes(&ods_with_content("<table:table table:name=\"a\">"), "x")
            .unwrap_err();
        assert_eq!(err.name(), "MalformedDocument");

        let doc = OdsDocument::from_bytes(&ods_with_content(&sheet("a", "")), "x").unwrap();
        assert_eq!(doc.parse_sheet("b").unwrap_err().name(), "UnknownSheet");

        let body = format!("{}{}", sheet("a", ""), sheet("a", ""));
        let err = OdsDocument::from_bytes(&ods_with_content(&body), "x").unwrap_err();
        assert!(err.to_string().contains("duplicate sheet"));
    }

    #[test]
    fn oversized_repeat_is_an_error_not_an_allocation() {
        let doc = OdsDocument::from_bytes(
            &ods_with_content(&sheet(
                "S",
                r#"<table:table-row table:number-rows-repeated="1000000000"><table:table-cell table:number-columns-repeated="1000"><text:p>x</text:p></table:table-cell></table:table-row>"#,
            )),
            "x",
        )
        .unwrap();
        assert_eq!(doc.parse_sheet("S").unwrap_err().name(), "MalformedDocument");
    }

    #[test]
    fn csv_output() {
        let grid = CellGrid::new(
            "s",
            vec![
                vec![Cell::text("a"), Cell::text("b")],
                vec![Cell::text("1"), Cell::text("2")],
            ],
        );
        assert_eq!(grid.to_csv(), b"a,b\n1,2\n");

        let grid = CellGrid::new(
            "s",
            vec![vec![Cell::text("x,y"), Cell::text("q\"")], vec![Cell::number(240.0)]],
        );
        assert_eq!(grid.to_csv(), b"\"x,y\",\"q\"\"\"\n240,\n");
    }

    #[test]
    fn canonical_number_text_reparses() {
        for v in [240.0, 37.2, -0.0, 1e21, 1.5e-7, 0.1 + 0.2, -99.0] {
            let text = format_number(v);
            assert_eq!(text.parse::<f64>().unwrap(), v);
            assert!(!text.ends_with(".0"));
        }
        assert_eq!(format_number(240.0), "240");
    }
}
