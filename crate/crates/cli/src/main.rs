//! `jtstats` command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jtstats::cache::CACHE_DIR_ENV;
use jtstats::geo::GeoLevel;
use jtstats::render::Classing;
use jtstats::{
    choropleth, from_columnar, join_geo, line_chart, to_columnar, Cache, ChoroplethSpec, FeatureSet, FetchPolicy,
    ImdDomain, JoinKind, Jts, JtsRequest, LineChartSpec, PipelineError, Registry, SheetSelector, TableFilter,
    TidyTable,
};

const EXIT_CODES: &str = "\
Exit status:
  0  success
  1  pipeline error (the error kind is printed on standard error)
  2  usage error
  3  offline and the required file is not cached";

#[derive(Parser, Debug)]
#[command(name = "jtstats", version, about = "Journey time statistics as clean, typed tables", after_help = EXIT_CODES)]
struct Cli {
    /// Download cache directory.
    #[arg(long, global = true, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    /// Never touch the network; fail with status 3 on a cache miss.
    #[arg(long, global = true)]
    offline: bool,
    /// Re-download sources even when cached.
    #[arg(long, global = true, conflicts_with = "offline")]
    refresh: bool,
    /// Catalog file to use instead of the built-in one.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Base URL for release files without an explicit source entry.
    #[arg(long, global = true, env = "JTSTATS_SOURCE_BASE")]
    source_base: Option<String>,
    /// Table output format. Defaults to columnar for `.parquet` paths, CSV otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Columnar,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List catalog tables as tab-separated code, title, family, purpose.
    List {
        /// Only tables of this family, e.g. jts05.
        #[arg(long, value_parser = parse_family, conflicts_with = "query")]
        family: Option<String>,
        /// Case-insensitive substring of code, title or purpose.
        #[arg(long)]
        query: Option<String>,
    },
    /// Retrieve and clean a table.
    Fetch {
        #[command(flatten)]
        selector: Selector,
        /// Attach boundaries; the output gains a GeoJSON `geometry` column.
        #[arg(long)]
        geo: bool,
        /// Left-join a deprivation domain on the area code.
        #[arg(long, value_name = "DOMAIN")]
        imd: Option<String>,
        #[arg(long, default_value_t = 2019)]
        imd_year: u16,
        /// Output file; CSV goes to standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a choropleth SVG.
    Map {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        boundaries: Boundaries,
        #[arg(long)]
        value_column: String,
        /// Values at or above the cap share the top class.
        #[arg(long)]
        cap: Option<f64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long, value_parser = parse_classing)]
        classing: Option<Classing>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a line chart SVG with one line per series column.
    Chart {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        x: String,
        #[arg(long, value_delimiter = ',', required = true)]
        series: Vec<String>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        x_label: Option<String>,
        #[arg(long)]
        y_label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write each sheet of an ODS file as `<sheet>.csv`.
    Convert {
        ods: PathBuf,
        /// Sheets to convert; all when omitted.
        #[arg(long)]
        sheet: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Selector {
    /// Table code, e.g. JTS0501.
    #[arg(long)]
    table: Option<String>,
    /// Table family, e.g. jts05.
    #[arg(long = "type", visible_alias = "family")]
    family: Option<String>,
    #[arg(long)]
    purpose: Option<String>,
    /// Sheet name or year.
    #[arg(long)]
    sheet: Option<String>,
}

impl Selector {
    fn is_empty(&self) -> bool {
        self.table.is_none() && self.family.is_none() && self.purpose.is_none()
    }

    fn request(&self) -> JtsRequest {
        JtsRequest {
            table_code: self.table.clone(),
            family: self.family.clone(),
            purpose: self.purpose.clone(),
            sheet: self.sheet.as_deref().map(|s| s.parse::<SheetSelector>().unwrap()),
            geo: false,
        }
    }
}

/// A table from a file or from the catalog.
#[derive(Args, Debug, Clone)]
struct Input {
    /// CSV or columnar file to read instead of a catalog table.
    #[arg(long, conflicts_with_all = ["table", "family", "purpose"])]
    input: Option<PathBuf>,
    #[command(flatten)]
    selector: Selector,
}

/// Boundaries for `map`. Catalog boundaries are used when no file is given.
#[derive(Args, Debug, Clone)]
struct Boundaries {
    /// GeoJSON FeatureCollection in WGS84.
    #[arg(long)]
    boundaries: Option<PathBuf>,
    #[arg(long, value_parser = parse_level, default_value = "lsoa")]
    level: GeoLevel,
    /// Feature property holding the area code.
    #[arg(long)]
    code_property: Option<String>,
    #[arg(long)]
    name_property: Option<String>,
    /// Table column holding the area code.
    #[arg(long)]
    key: Option<String>,
}

fn parse_family(s: &str) -> Result<String, String> {
    let f = s.trim().to_ascii_lowercase();
    let ok = f.len() == 5 && f.starts_with("jts") && f[3..].bytes().all(|b| b.is_ascii_digit());
    if ok {
        Ok(f)
    } else {
        Err(format!("expected a family like jts05, got {s:?}"))
    }
}

fn parse_classing(s: &str) -> Result<Classing, String> {
    s.parse()
}

fn parse_level(s: &str) -> Result<GeoLevel, String> {
    s.parse()
}

enum Failure {
    Usage(String),
    Pipeline(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            if matches!(e, PipelineError::CacheMiss(_)) && cli.offline {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::List { family, query } => {
            let registry = registry(cli)?;
            let filter = match (family, query) {
                (Some(f), _) => TableFilter::Family(f.clone()),
                (None, Some(q)) => TableFilter::Query(q.clone()),
                (None, None) => TableFilter::All,
            };
            let mut out = std::io::stdout().lock();
            for t in registry.list_tables(&filter) {
                let line = format!(
                    "{}\t{}\t{}\t{}\n",
                    t.table_code,
                    t.title,
                    t.family,
                    t.purpose.as_deref().unwrap_or("")
                );
                if out.write_all(line.as_bytes()).is_err() {
                    break;
                }
            }
            Ok(())
        }
        Command::Fetch { selector, geo, imd, imd_year, out } => {
            let format = output_format(cli, out.as_deref())?;
            let jts = jts(cli)?;
            let (spec, _) = jts.resolve(&selector.request())?;
            let spec = spec.clone();
            let domain = imd.as_deref().map(str::parse::<ImdDomain>).transpose()?;
            let geo_level = if *geo {
                match (spec.level, spec.key_column.as_deref()) {
                    (Some(level), Some(_)) => Some(level),
                    _ => {
                        return Err(PipelineError::MissingKeyColumn(jtstats::Context::new(format!(
                            "{} has no area code column to join boundaries on",
                            spec.table_code
                        )))
                        .into())
                    }
                }
            } else {
                None
            };
            let mut table = jts.get_jts(&selector.request())?.into_table();
            if let Some(domain) = domain {
                let key = spec.key_column.as_deref().unwrap_or("lsoa_code");
                table = attach_imd(&jts, table, *imd_year, domain, key)?;
            }
            let mut summary = String::new();
            if let Some(level) = geo_level {
                let fs = jts.geo(level, None)?;
                let gt = join_geo(table, &fs, spec.key_column.as_deref().unwrap())?;
                summary = format!(" matched={} unmatched={}", gt.matched(), gt.table.n_rows() - gt.matched());
                table = gt.into_table_with_geometry()?;
            }
            eprintln!("rows={} cols={}{summary}", table.n_rows(), table.n_cols());
            write_table(&table, out.as_deref(), format)
        }
        Command::Map {
            input,
            boundaries,
            value_column,
            cap,
            classes,
            classing,
            title,
            out,
        } => {
            let jts = jts(cli)?;
            let table = load_input(&jts, input)?;
            let key = match &boundaries.key {
                Some(k) => k.clone(),
                None => default_key(&jts, input, boundaries.level)?,
            };
            let fs = match &boundaries.boundaries {
                Some(path) => {
                    let bytes = read(path)?;
                    let prop = boundaries
                        .code_property
                        .clone()
                        .unwrap_or_else(|| boundaries.level.default_code_property().to_string());
                    FeatureSet::from_geojson(
                        &bytes,
                        boundaries.level,
                        &prop,
                        boundaries.name_property.as_deref(),
                        &path.display().to_string(),
                    )?
                }
                None => jts.geo(boundaries.level, None)?,
            };
            table.require(value_column)?;
            let gt = join_geo(table, &fs, &key)?;
            let mut spec = ChoroplethSpec::new(value_column.clone());
            if let Some(c) = cap {
                spec = spec.with_cap(*c);
            }
            if let Some(n) = classes {
                spec = spec.with_classes(*n);
            }
            if let Some(c) = classing {
                spec = spec.with_classing(*c);
            }
            spec.title = title.clone();
            let svg = choropleth(&gt, &spec)?;
            eprintln!("features={} matched={}", gt.table.n_rows(), gt.matched());
            write_file(out, &svg)
        }
        Command::Chart {
            input,
            x,
            series,
            title,
            x_label,
            y_label,
            out,
        } => {
            let jts = jts(cli)?;
            let table = load_input(&jts, input)?;
            let mut spec = LineChartSpec::new(x.clone(), series.clone());
            spec.title = title.clone();
            spec.x_label = x_label.clone();
            spec.y_label = y_label.clone();
            let svg = line_chart(&table, &spec)?;
            write_file(out, &svg)
        }
        Command::Convert { ods, sheet, out } => {
            for path in jtstats::jts::convert_ods(ods, sheet, out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn registry(cli: &Cli) -> CliResult<Registry> {
    let mut registry = match &cli.registry {
        Some(path) => Registry::from_path(path)?,
        None => Registry::builtin().clone(),
    };
    if let Some(base) = &cli.source_base {
        registry = registry.with_base_url(base.clone());
    }
    Ok(registry)
}

fn jts(cli: &Cli) -> CliResult<Jts> {
    let cache = match &cli.cache_dir {
        Some(dir) => Cache::open(dir)?,
        None => Cache::from_env()?,
    };
    let policy = if cli.offline {
        FetchPolicy::Offline
    } else if cli.refresh {
        FetchPolicy::Refresh
    } else {
        FetchPolicy::PreferCache
    };
    Ok(Jts::new(registry(cli)?, cache).with_policy(policy))
}

fn output_format(cli: &Cli, out: Option<&Path>) -> CliResult<Format> {
    let format = cli.format.unwrap_or(match out.and_then(Path::extension) {
        Some(ext) if ext.eq_ignore_ascii_case("parquet") => Format::Columnar,
        _ => Format::Csv,
    });
    if format == Format::Columnar && out.is_none() {
        return Err(Failure::Usage("columnar output needs --out".into()));
    }
    Ok(format)
}

/// Left-joins one deprivation domain as `imd_<domain>_{score,rank,decile}`.
fn attach_imd(jts: &Jts, table: TidyTable, year: u16, domain: ImdDomain, key: &str) -> CliResult<TidyTable> {
    let mut imd = jts.imd(year, domain)?;
    for col in ["score", "rank", "decile"] {
        imd.rename(col, &format!("imd_{domain}_{col}"))?;
    }
    if key != "lsoa_code" {
        imd.rename("lsoa_code", key)?;
    }
    table.require(key)?;
    Ok(table.join(&imd, key, JoinKind::Left)?)
}

fn load_input(jts: &Jts, input: &Input) -> CliResult<TidyTable> {
    if let Some(path) = &input.input {
        let bytes = read(path)?;
        return Ok(if bytes.starts_with(b"PAR1") {
            from_columnar(path)?
        } else {
            TidyTable::from_csv(&bytes, path.display().to_string())?
        });
    }
    if input.selector.is_empty() {
        return Err(Failure::Usage("give --input or a table selector (--table, or --type and --purpose)".into()));
    }
    Ok(jts.get_jts(&input.selector.request())?.into_table())
}

fn default_key(jts: &Jts, input: &Input, level: GeoLevel) -> CliResult<String> {
    if input.input.is_none() {
        let (spec, _) = jts.resolve(&input.selector.request())?;
        if let Some(k) = &spec.key_column {
            return Ok(k.clone());
        }
    }
    Ok(match level {
        GeoLevel::Lsoa => "lsoa_code",
        GeoLevel::LocalAuthority => "la_code",
    }
    .to_string())
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_table(table: &TidyTable, out: Option<&Path>, format: Format) -> CliResult<()> {
    match (format, out) {
        (Format::Columnar, Some(path)) => Ok(to_columnar(table, path)?),
        (Format::Csv, Some(path)) => write_file(path, &table.to_csv()),
        (_, None) => {
            let _ = std::io::stdout().lock().write_all(&table.to_csv());
            Ok(())
        }
    }
}
