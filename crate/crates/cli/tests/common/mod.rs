#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jtstats::{Cache, Registry};
use jtstats_fixtures::{imd_csv, jts05_ods, lsoa_geojson, ImdHeaders};

/// A temporary working directory with its own download cache.
pub struct Env {
    pub dir: tempfile::TempDir,
}

impl Env {
    pub fn new() -> Self {
        Env { dir: tempfile::tempdir().unwrap() }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.dir.path().join("cache")
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Stores `bytes` in the cache under the catalog source `name`.
    pub fn seed(&self, source_name: &str, bytes: &[u8]) {
        let registry = Registry::builtin();
        let cache = Cache::open(self.cache_dir()).unwrap();
        cache.store(&registry.source(source_name).unwrap(), bytes).unwrap();
    }

    /// Seeds the cache with a JTS05 workbook for `code` holding one sheet.
    pub fn seed_jts05(&self, code: &str, purpose: &str, sheet: &str, rows: usize) {
        let spec = Registry::builtin().lookup(code).unwrap();
        self.seed(&spec.source_ref, &jts05_ods(purpose, sheet, rows, 17));
    }

    pub fn seed_boundaries(&self, codes: &[&str]) {
        self.seed("lsoa_2011", &lsoa_geojson(codes, "LSOA11CD", "LSOA11NM"));
    }

    pub fn seed_imd(&self, n: usize) {
        let release = Registry::builtin().imd_release(2019).unwrap();
        let headers: Vec<ImdHeaders<'_>> = release
            .domains
            .values()
            .map(|d| ImdHeaders { score: &d.score, rank: &d.rank, decile: d.decile.as_deref() })
            .collect();
        self.seed(&release.source, &imd_csv(n, 23, &release.code_column, &headers));
    }

    /// Runs the binary with this environment's cache and no network.
    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_jtstats"))
            .args(args)
            .env("JTSTATS_CACHE_DIR", self.cache_dir())
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
