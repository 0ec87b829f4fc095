//! Download cache for release files.
//!
//! Layout under the cache root:
//!
//! ```text
//! content/<key>        cached bytes, key = hex SHA-256 of the URL
//! manifest.json        key -> url, fetch time, size
//! locks/<key>.lock     per-key advisory locks
//! quarantine/          files that failed checksum verification
//! ```
//!
//! Files only appear under `content/` via rename, so a path handed out by
//! [`Cache::fetch`] never refers to a partially written file.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Context, Location, PipelineError, Result};

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "JTSTATS_CACHE_DIR";

const MAX_DOWNLOAD_BYTES: u64 = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Ods,
    Csv,
    Geojson,
    Zip,
}

/// A logical data source and where to download it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRef {
    pub logical_name: String,
    pub url: String,
    /// Lowercase hex SHA-256 of the expected file contents.
    pub checksum: Option<String>,
    pub media_kind: MediaKind,
}

impl SourceRef {
    pub fn new(
        logical_name: impl Into<String>,
        url: impl Into<String>,
        media_kind: MediaKind,
        checksum: Option<String>,
    ) -> Result<Self> {
        let logical_name = logical_name.into();
        let url = url.into();
        let scheme_ok = url
            .split_once("://")
            .is_some_and(|(scheme, rest)| {
                !scheme.is_empty()
                    && scheme.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
                    && !rest.is_empty()
            });
        if !scheme_ok {
            return Err(PipelineError::malformed(format!(
                "source {logical_name:?}: URL {url:?} is not absolute"
            )));
        }
        let checksum = match checksum {
            None => None,
            Some(c) => {
                let c = c.trim().to_lowercase();
                if c.len() != 64 || !c.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(PipelineError::malformed(format!(
                        "source {logical_name:?}: checksum {c:?} is not a SHA-256 hex digest"
                    )));
                }
                Some(c)
            }
        };
        Ok(SourceRef {
            logical_name,
            url,
            checksum,
            media_kind,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FetchPolicy {
    #[default]
    PreferCache,
    Refresh,
    Offline,
}

/// One cached file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: String,
    pub url: String,
    pub path: PathBuf,
    /// Milliseconds since the Unix epoch.
    pub fetched_at_ms: u64,
    pub size_bytes: u64,
}

/// Hex SHA-256 of the URL string.
pub fn cache_key(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    entries: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    url: String,
    logical_name: String,
    fetched_at_ms: u64,
    size_bytes: u64,
}

static TEMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// A content-addressed download cache rooted at a directory.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
    agent: ureq::Agent,
}

fn cache_io(detail: impl std::fmt::Display, path: &Path) -> PipelineError {
    PipelineError::NetworkError(Context::at(
        format!("cache I/O failed: {detail}"),
        Location::file(path.display().to_string()),
    ))
}

impl Cache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["content", "locks", "quarantine"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| cache_io(e, &dir))?;
        }
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(600)))
            .max_redirects(10)
            .build();
        Ok(Cache {
            root,
            agent: ureq::Agent::new_with_config(config),
        })
    }

    /// Opens the cache named by `JTSTATS_CACHE_DIR`, falling back to the
    /// user cache directory.
    pub fn from_env() -> Result<Self> {
        Self::open(default_cache_dir())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn content_path(&self, key: &str) -> PathBuf {
        self.root.join("content").join(key)
    }

    fn quarantine_dir(&self) -> PathBuf {
        self.root.join("quarantine")
    }

    fn lock(&self, name: &str) -> Result<File> {
        let path = self.root.join("locks").join(format!("{name}.lock"));
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| cache_io(e, &path))?;
        file.lock().map_err(|e| cache_io(e, &path))?;
        Ok(file)
    }

    fn read_manifest(&self) -> Manifest {
        fs::read(self.root.join("manifest.json"))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let path = self.root.join("manifest.json");
        let bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        let tmp = self.temp_path(&self.root, "manifest");
        fs::write(&tmp, bytes).map_err(|e| cache_io(e, &tmp))?;
        fs::rename(&tmp, &path).map_err(|e| cache_io(e, &path))
    }

    fn update_manifest(&self, f: impl FnOnce(&mut Manifest)) -> Result<()> {
        let _guard = self.lock("manifest")?;
        let mut manifest = self.read_manifest();
        f(&mut manifest);
        self.write_manifest(&manifest)
    }

    fn temp_path(&self, dir: &Path, stem: &str) -> PathBuf {
        let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        dir.join(format!(".tmp-{stem}-{}-{n}", std::process::id()))
    }

    fn entry_for(&self, key: &str, e: &ManifestEntry) -> CacheEntry {
        CacheEntry {
            key: key.to_string(),
            url: e.url.clone(),
            path: self.content_path(key),
            fetched_at_ms: e.fetched_at_ms,
            size_bytes: e.size_bytes,
        }
    }

    /// All entries recorded in the manifest, ordered by key.
    pub fn entries(&self) -> Vec<CacheEntry> {
        self.read_manifest()
            .entries
            .iter()
            .map(|(k, e)| self.entry_for(k, e))
            .collect()
    }

    /// Returns a local path for the source according to `policy`.
    pub fn fetch(&self, source: &SourceRef, policy: FetchPolicy) -> Result<PathBuf> {
        self.fetch_entry(source, policy).map(|e| e.path)
    }

    pub fn fetch_entry(&self, source: &SourceRef, policy: FetchPolicy) -> Result<CacheEntry> {
        let key = cache_key(&source.url);
        let _guard = self.lock(&key)?;
        let path = self.content_path(&key);

        if policy != FetchPolicy::Refresh && path.exists() {
            match self.verify(source, &path) {
                Ok(()) => return self.record_existing(source, &key, &path),
                Err(err) if policy == FetchPolicy::Offline => return Err(err),
                Err(_) => {} // quarantined; download a fresh copy
            }
        }
        if policy == FetchPolicy::Offline {
            return Err(PipelineError::CacheMiss(Context::new(format!(
                "{} ({}) is not cached and the cache is offline",
                source.logical_name, source.url
            ))));
        }

        let tmp = self.temp_path(&self.root.join("content"), &key);
        let size = match self.download(&source.url, &tmp) {
            Ok(size) => size,
            Err(err) => {
                let _ = fs::remove_file(&tmp);
                return Err(err);
            }
        };
        self.install(source, &key, &tmp, size, now_ms())
    }

    /// Adds bytes to the cache as if they had been downloaded from
    /// `source.url` at `fetched_at`. Used to seed the cache from recorded
    /// files.
    pub fn store_at(&self, source: &SourceRef, bytes: &[u8], fetched_at: SystemTime) -> Result<CacheEntry> {
        let key = cache_key(&source.url);
        let _guard = self.lock(&key)?;
        let tmp = self.temp_path(&self.root.join("content"), &key);
        write_synced(&tmp, bytes).map_err(|e| cache_io(e, &tmp))?;
        let ms = fetched_at
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        self.install(source, &key, &tmp, bytes.len() as u64, ms)
    }

    pub fn store(&self, source: &SourceRef, bytes: &[u8]) -> Result<CacheEntry> {
        self.store_at(source, bytes, SystemTime::now())
    }

    /// Verifies and renames a fully written temp file into place.
    fn install(&self, source: &SourceRef, key: &str, tmp: &Path, size: u64, fetched_at_ms: u64) -> Result<CacheEntry> {
        if let Some(expected) = &source.checksum {
            let actual = sha256_file(tmp).map_err(|e| cache_io(e, tmp))?;
            if &actual != expected {
                let dest = self.quarantine_dir().join(format!("{key}-{fetched_at_ms}"));
                let _ = fs::rename(tmp, &dest);
                return Err(integrity_failure(source, expected, &actual));
            }
        }
        let path = self.content_path(key);
        fs::rename(tmp, &path).map_err(|e| cache_io(e, &path))?;
        let entry = ManifestEntry {
            url: source.url.clone(),
            logical_name: source.logical_name.clone(),
            fetched_at_ms,
            size_bytes: size,
        };
        self.update_manifest(|m| {
            m.entries.insert(key.to_string(), entry.clone());
        })?;
        Ok(self.entry_for(key, &entry))
    }

    fn record_existing(&self, source: &SourceRef, key: &str, path: &Path) -> Result<CacheEntry> {
        if let Some(e) = self.read_manifest().entries.get(key) {
            return Ok(self.entry_for(key, e));
        }
        // File present without a manifest record (e.g. manifest deleted).
        let size = fs::metadata(path).map_err(|e| cache_io(e, path))?.len();
        let entry = ManifestEntry {
            url: source.url.clone(),
            logical_name: source.logical_name.clone(),
            fetched_at_ms: now_ms(),
            size_bytes: size,
        };
        self.update_manifest(|m| {
            m.entries.insert(key.to_string(), entry.clone());
        })?;
        Ok(self.entry_for(key, &entry))
    }

    /// Checks a cached file against the source checksum, quarantining it on
    /// mismatch.
    fn verify(&self, source: &SourceRef, path: &Path) -> Result<()> {
        let Some(expected) = &source.checksum else {
            return Ok(());
        };
        let actual = sha256_file(path).map_err(|e| cache_io(e, path))?;
        if &actual == expected {
            return Ok(());
        }
        let key = cache_key(&source.url);
        let dest = self.quarantine_dir().join(format!("{key}-{}", now_ms()));
        let _ = fs::rename(path, &dest);
        let _ = self.update_manifest(|m| {
            m.entries.remove(&key);
        });
        Err(integrity_failure(source, expected, &actual))
    }

    fn download(&self, url: &str, dest: &Path) -> Result<u64> {
        let network = |detail: String| PipelineError::NetworkError(Context::new(detail));
        let mut file = File::create(dest).map_err(|e| cache_io(e, dest))?;
        let size = if let Some(local) = url.strip_prefix("file://") {
            let mut src = File::open(local).map_err(|e| network(format!("{url}: {e}")))?;
            io::copy(&mut src, &mut file).map_err(|e| network(format!("{url}: {e}")))?
        } else {
            let response = self
                .agent
                .get(url)
                .call()
                .map_err(|e| network(format!("GET {url}: {e}")))?;
            let mut reader = response
                .into_body()
                .into_with_config()
                .limit(MAX_DOWNLOAD_BYTES)
                .reader();
            io::copy(&mut reader, &mut file).map_err(|e| network(format!("GET {url}: {e}")))?
        };
        file.sync_all().map_err(|e| cache_io(e, dest))?;
        Ok(size)
    }

    /// Removes entries fetched at or before `now - older_than`. Returns the
    /// number removed.
    pub fn purge(&self, older_than: Duration) -> usize {
        let cutoff = now_ms().saturating_sub(older_than.as_millis() as u64);
        self.purge_before(cutoff)
    }

    fn purge_before(&self, cutoff_ms: u64) -> usize {
        let stale: Vec<String> = self
            .read_manifest()
            .entries
            .iter()
            .filter(|(_, e)| e.fetched_at_ms <= cutoff_ms)
            .map(|(k, _)| k.clone())
            .collect();
        let mut removed = 0;
        for key in stale {
            let Ok(_guard) = self.lock(&key) else { continue };
            let path = self.content_path(&key);
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(_) => continue,
            }
            if self
                .update_manifest(|m| {
                    m.entries.remove(&key);
                })
                .is_ok()
            {
                removed += 1;
            }
        }
        removed
    }
}

fn integrity_failure(source: &SourceRef, expected: &str, actual: &str) -> PipelineError {
    PipelineError::IntegrityFailure(Context::new(format!(
        "{} ({}): expected sha256 {expected}, got {actual}; copy quarantined",
        source.logical_name, source.url
    )))
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut file = File::create(path)?;
    file.write_all(bytes)?;
    file.sync_all()
}

/// `JTSTATS_CACHE_DIR`, else `$XDG_CACHE_HOME/jtstats`, else
/// `$HOME/.cache/jtstats`, else `./.jtstats-cache`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(dir).join("jtstats");
    }
    if let Some(home) = std::env::var_os("HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(home).join(".cache").join("jtstats");
    }
    PathBuf::from(".jtstats-cache")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(url: &str) -> SourceRef {
        SourceRef::new("t", url, MediaKind::Csv, None).unwrap()
    }

    #[test]
    fn source_validation() {
        assert!(SourceRef::new("a", "relative/path.ods", MediaKind::Ods, None).is_err());
        assert!(SourceRef::new("a", "https://x/y.ods", MediaKind::Ods, Some("zz".into())).is_err());
        let digest = "AB".repeat(32);
        let s = SourceRef::new("a", "https://x/y.ods", MediaKind::Ods, Some(digest)).unwrap();
        assert_eq!(s.checksum.unwrap(), "ab".repeat(32));
    }

    #[test]
    fn purge_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        assert_eq!(cache.purge(Duration::from_secs(3600)), 0);

        let day = Duration::from_secs(86_400);
        let now = SystemTime::now();
        for i in 0..3 {
            cache
                .store_at(&source(&format!("https://x/stale{i}")), b"old", now - day * 10)
                .unwrap();
        }
        cache.store_at(&source("https://x/fresh"), b"new", now).unwrap();
        assert_eq!(cache.entries().len(), 4);
        assert_eq!(cache.purge(day), 3);
        let left = cache.entries();
        assert_eq!(left.len(), 1);
        assert_eq!(left[0].url, "https://x/fresh");
        assert!(!cache.content_path(&cache_key("https://x/stale0")).exists());

        assert_eq!(cache.purge(Duration::ZERO), 1);
        assert!(cache.entries().is_empty());
    }

    #[test]
    fn offline_miss_and_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let src = source("https://example.invalid/a.csv");
        let err = cache.fetch(&src, FetchPolicy::Offline).unwrap_err();
        assert_eq!(err.name(), "CacheMiss");
        cache.store(&src, b"a,b\n").unwrap();
        let path = cache.fetch(&src, FetchPolicy::Offline).unwrap();
        assert_eq!(fs::read(path).unwrap(), b"a,b\n");
    }

    #[test]
    fn corrupt_cached_copy_is_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let plain = source("https://example.invalid/b.csv");
        cache.store(&plain, b"tampered").unwrap();
        let mut pinned = plain.clone();
        pinned.checksum = Some(hex::encode(Sha256::digest(b"original")));
        let err = cache.fetch(&pinned, FetchPolicy::Offline).unwrap_err();
        assert_eq!(err.name(), "IntegrityFailure");
        assert!(!cache.content_path(&cache_key(&plain.url)).exists());
        assert_eq!(fs::read_dir(dir.path().join("quarantine")).unwrap().count(), 1);
        assert_eq!(cache.fetch(&pinned, FetchPolicy::Offline).unwrap_err().name(), "CacheMiss");
    }

    #[test]
    fn file_urls_are_copied() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path().join("cache")).unwrap();
        let local = dir.path().join("release.csv");
        fs::write(&local, b"x\n1\n").unwrap();
        let src = source(&format!("file://{}", local.display()));
        let path = cache.fetch(&src, FetchPolicy::PreferCache).unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"x\n1\n");
        assert_eq!(path, cache.content_path(&cache_key(&src.url)));
    }
}
