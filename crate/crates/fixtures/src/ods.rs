//! A small ODS writer. It shares nothing with the production parser.

use std::io::{Cursor, Write};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use crate::FixtureCell;

/// Spreadsheet applications pad sheets to these extents.
pub const PAD_COLUMNS: usize = 1024;
pub const PAD_ROWS: usize = 1_048_576;

pub struct Sheet<'a> {
    pub name: &'a str,
    pub rows: &'a [Vec<FixtureCell>],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One paragraph, with space runs, tabs and edge spaces written as ODF
/// elements so they survive whitespace collapsing.
fn paragraph(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::from("<text:p>");
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            ' ' => {
                let start = i;
                while i < chars.len() && chars[i] == ' ' {
                    i += 1;
                }
                let run = i - start;
                if start == 0 || i == chars.len() {
                    out.push_str(&format!("<text:s text:c=\"{run}\"/>"));
                } else {
                    out.push(' ');
                    if run > 1 {
                        out.push_str(&format!("<text:s text:c=\"{}\"/>", run - 1));
                    }
                }
                continue;
            }
            '\t' => out.push_str("<text:tab/>"),
            c => out.push_str(&escape(&c.to_string())),
        }
        i += 1;
    }
    out.push_str("</text:p>");
    out
}

fn cell_xml(cell: &FixtureCell, repeat: usize) -> String {
    let rep = if repeat > 1 {
        format!(" table:number-columns-repeated=\"{repeat}\"")
    } else {
        String::new()
    };
    match cell {
        FixtureCell::Empty => format!("<table:table-cell{rep}/>"),
        FixtureCell::Text(s) => {
            let paras: String = s.split('\n').map(paragraph).collect();
            format!("<table:table-cell{rep} office:value-type=\"string\">{paras}</table:table-cell>")
        }
        FixtureCell::Number(v) => {
            // Display text is deliberately rounded; readers must use the value.
            format!(
                "<table:table-cell{rep} office:value-type=\"float\" office:value=\"{v}\"><text:p>{v:.1}</text:p></table:table-cell>"
            )
        }
        FixtureCell::Percent(v) => format!(
            "<table:table-cell{rep} office:value-type=\"percentage\" office:value=\"{v}\"><text:p>{:.0}%</text:p></table:table-cell>",
            v * 100.0
        ),
        FixtureCell::Bool(b) => format!(
            "<table:table-cell{rep} office:value-type=\"boolean\" office:boolean-value=\"{b}\"><text:p>{}</text:p></table:table-cell>",
            if *b { "TRUE" } else { "FALSE" }
        ),
    }
}

fn row_xml(row: &[FixtureCell]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < row.len() {
        let mut j = i + 1;
        while j < row.len() && row[j] == row[i] {
            j += 1;
        }
        out.push_str(&cell_xml(&row[i], j - i));
        i = j;
    }
    if row.len() < PAD_COLUMNS {
        out.push_str(&cell_xml(&FixtureCell::Empty, PAD_COLUMNS - row.len()));
    }
    out
}

/// The `content.xml` document for the given sheets.
pub fn content_xml(sheets: &[Sheet<'_>]) -> String {
    let mut out = String::from(concat!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
        "<office:document-content",
        " xmlns:office=\"urn:oasis:names:tc:opendocument:xmlns:office:1.0\"",
        " xmlns:table=\"urn:oasis:names:tc:opendocument:xmlns:table:1.0\"",
        " xmlns:text=\"urn:oasis:names:tc:opendocument:xmlns:text:1.0\"",
        " office:version=\"1.2\"><office:body><office:spreadsheet>",
    ));
    for sheet in sheets {
        out.push_str(&format!(
            "<table:table table:name=\"{}\"><table:table-column table:number-columns-repeated=\"{PAD_COLUMNS}\"/>",
            escape(sheet.name)
        ));
        let mut i = 0;
        while i < sheet.rows.len() {
            let mut j = i + 1;
            while j < sheet.rows.len() && sheet.rows[j] == sheet.rows[i] {
                j += 1;
            }
            let rep = if j - i > 1 {
                format!(" table:number-rows-repeated=\"{}\"", j - i)
            } else {
                String::new()
            };
            out.push_str(&format!("<table:table-row{rep}>{}</table:table-row>", row_xml(&sheet.rows[i])));
            i = j;
        }
        if sheet.rows.len() < PAD_ROWS {
            out.push_str(&format!(
                "<table:table-row table:number-rows-repeated=\"{}\">{}</table:table-row>",
                PAD_ROWS - sheet.rows.len(),
                row_xml(&[])
            ));
        }
        out.push_str("</table:table>");
    }
    out.push_str("</office:spreadsheet></office:body></office:document-content>\n");
    out
}

const MANIFEST: &str = concat!(
    "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
    "<manifest:manifest xmlns:manifest=\"urn:oasis:names:tc:opendocument:xmlns:manifest:1.0\" manifest:version=\"1.2\">",
    "<manifest:file-entry manifest:full-path=\"/\" manifest:media-type=\"application/vnd.oasis.opendocument.spreadsheet\"/>",
    "<manifest:file-entry manifest:full-path=\"content.xml\" manifest:media-type=\"text/xml\"/>",
    "</manifest:manifest>\n",
);

/// Packs `content.xml` into an ODS archive with fixed timestamps.
pub fn package(content: &str) -> Vec<u8> {
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let stored = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .last_modified_time(DateTime::default());
    let deflated = stored.compression_method(CompressionMethod::Deflated);
    zip.start_file("mimetype", stored).unwrap();
    zip.write_all(b"application/vnd.oasis.opendocument.spreadsheet").unwrap();
    zip.start_file("META-INF/manifest.xml", deflated).unwrap();
    zip.write_all(MANIFEST.as_bytes()).unwrap();
    zip.start_file("content.xml", deflated).unwrap();
    zip.write_all(content.as_bytes()).unwrap();
    zip.finish().unwrap().into_inner()
}

pub fn write_ods(sheets: &[Sheet<'_>]) -> Vec<u8> {
    package(&content_xml(sheets))
}
