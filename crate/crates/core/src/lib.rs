//! Typed, reproducible access to the Department for Transport's Journey
//! Time Statistics.
//!
//! ```no_run
//! use jtstats::{Jts, JtsRequest};
//!
//! let jts = Jts::from_env()?;
//! let table = jts
//!     .get_jts(&JtsRequest::purpose("jts05", "employment").sheet(2019))?
//!     .into_table();
//! println!("{} rows x {} columns", table.n_rows(), table.n_cols());
//! # Ok::<(), jtstats::PipelineError>(())
//! ```

pub mod cache;
pub mod clean;
pub mod columnar;
pub mod error;
pub mod geo;
pub mod imd;
pub mod jts;
pub mod ods;
pub mod registry;
pub mod render;
pub mod table;

pub use cache::{Cache, FetchPolicy, MediaKind, SourceRef};
pub use clean::clean;
pub use columnar::{from_columnar, to_columnar};
pub use error::{Context, Location, PipelineError, Result, Shape};
pub use geo::{get_geo, join_geo, FeatureSet, GeoLevel, GeoTable};
pub use imd::{get_imd, ImdDomain};
pub use jts::{Jts, JtsData, JtsRequest};
pub use ods::{grid_to_csv, open_ods, parse_sheet, Cell, CellGrid, OdsDocument};
pub use registry::{Registry, SheetSelector, TableFilter, TableSpec};
pub use render::{choropleth, class_breaks, line_chart, ChoroplethSpec, Classing, LineChartSpec};
pub use table::{join, select, to_csv, Column, ColumnData, ColumnKind, JoinKind, Provenance, TidyTable};
