//! Dataset retrieval into a local cache.
//!
//! Layout: `cache_dir/<source_id>/<filename>` plus `cache_dir/manifest.json`
//! recording the SHA-256 of every cached file. Writers hold an advisory lock
//! on `cache_dir/.lock`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{load_csv, LabelColumn, Loaded};
use crate::error::{Error, Result};

/// Where a configured dataset comes from.
#[derive(Clone, Debug)]
pub enum Origin {
    /// Pre-encoded numeric CSV compiled into the library.
    Bundled(&'static str),
    Url(&'static str),
}

/// One configured dataset identifier.
#[derive(Clone, Debug)]
pub struct DataSource {
    pub id: &'static str,
    pub origin: Origin,
    pub filename: &'static str,
    pub label_column: LabelColumn,
    pub positive_label: &'static str,
    pub sha256: Option<&'static str>,
}

macro_rules! bundled {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/", $name))
    };
}

/// The nine benchmark identifiers.
///
/// Six are bundled from the KEEL copies of the UCI sets (nominal attributes
/// index-encoded, last column `label` with positive class `1`). Trans, Page
/// and Gamma are fetched from UCI; Page is distributed compressed and must be
/// converted to CSV before loading.
pub fn registry() -> Vec<DataSource> {
    let b = |id, text, sha| DataSource {
        id,
        origin: Origin::Bundled(text),
        filename: match id {
            "haber" => "haber.csv",
            "credit" => "credit.csv",
            "acredit" => "acredit.csv",
            "diabts" => "diabts.csv",
            "mammo" => "mammo.csv",
            _ => "cmc.csv",
        },
        label_column: LabelColumn::Name("label".into()),
        positive_label: "1",
        sha256: Some(sha),
    };
    vec![
        b("haber", bundled!("haber.csv"), "6ecb096c5a86f4d5a76ab4fb4e63d41b4dbfc62760dddba2f4cb2dbcdca66d85"),
        b("credit", bundled!("credit.csv"), "ea331b84ac673c976c59cb7d3991e9162b00cd2dd098d5593a66dcc2ceed7fb6"),
        b("acredit", bundled!("acredit.csv"), "c7d31fd6fda988dadd27dcb97493935738bad51e3f34254445b5285b04ee256c"),
        b("diabts", bundled!("diabts.csv"), "f703c58e5044966deb2b91b1dc7fd7ee52c6a4b4007b341e74155f130bb4f37a"),
        b("mammo", bundled!("mammo.csv"), "358f2020028a98d58076beb96a8256ffce7496f5353b5811e531bcb79e5c5e16"),
        b("cmc", bundled!("cmc.csv"), "15641bbc078865c2439a36e2c3d5fd09e333d7ba50f14f04036581b4db0f833a"),
        DataSource {
            id: "trans",
            origin: Origin::Url(
                "https://archive.ics.uci.edu/ml/machine-learning-databases/blood-transfusion/transfusion.data",
            ),
            filename: "transfusion.data",
            label_column: LabelColumn::Last,
            positive_label: "1",
            sha256: None,
        },
        DataSource {
            id: "page",
            origin: Origin::Url(
                "https://archive.ics.uci.edu/ml/machine-learning-databases/page-blocks/page-blocks.data.Z",
            ),
            filename: "page-blocks.data.Z",
            label_column: LabelColumn::Last,
            positive_label: "1",
            sha256: None,
        },
        DataSource {
            id: "gamma",
            origin: Origin::Url(
                "https://archive.ics.uci.edu/ml/machine-learning-databases/magic/magic04.data",
            ),
            filename: "magic04.data",
            label_column: LabelColumn::Last,
            positive_label: "g",
            sha256: None,
        },
    ]
}

pub fn lookup(id: &str) -> Option<DataSource> {
    registry().into_iter().find(|s| s.id == id)
}

/// Byte source for URL downloads.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>>;
}

/// HTTP(S) via `ureq`; `file://` URLs are read from disk.
#[derive(Clone, Copy, Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>> {
        if let Some(path) = url.strip_prefix("file://") {
            return fs::read(path).map_err(|e| Error::io(path, e));
        }
        let fail = |reason: String| Error::Fetch {
            source_id: url.to_string(),
            reason,
        };
        let mut resp = ureq::get(url).call().map_err(|e| fail(e.to_string()))?;
        let mut buf = Vec::new();
        resp.body_mut()
            .as_reader()
            .read_to_end(&mut buf)
            .map_err(|e| fail(e.to_string()))?;
        Ok(buf)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct Manifest {
    entries: BTreeMap<String, ManifestEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
    origin: String,
}

/// Outcome of [`fetch`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fetched {
    pub source_id: String,
    pub path: PathBuf,
    /// True when no bytes were transferred.
    pub cached: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Resolve `source` (a configured id or a raw URL) to a cached local file.
pub fn fetch(source: &str, cache_dir: &Path) -> Result<Fetched> {
    fetch_with(source, cache_dir, &HttpTransport)
}

pub fn fetch_with(source: &str, cache_dir: &Path, transport: &dyn Transport) -> Result<Fetched> {
    let (id, filename, origin, expected) = resolve(source)?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let lock_path = cache_dir.join(".lock");
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(|e| Error::io(&lock_path, e))?;
    lock.lock().map_err(|e| Error::io(&lock_path, e))?;
    let out = fetch_locked(
        cache_dir,
        &id,
        &filename,
        &origin,
        expected.as_deref(),
        transport,
    );
    let _ = lock.unlock();
    out
}

enum ResolvedOrigin {
    Bundled(&'static str),
    Url(String),
}

fn resolve(source: &str) -> Result<(String, String, ResolvedOrigin, Option<String>)> {
    if let Some(known) = lookup(source) {
        let origin = match known.origin {
            Origin::Bundled(text) => ResolvedOrigin::Bundled(text),
            Origin::Url(u) => ResolvedOrigin::Url(u.to_string()),
        };
        return Ok((
            known.id.to_string(),
            known.filename.to_string(),
            origin,
            known.sha256.map(str::to_string),
        ));
    }
    if source.contains("://") {
        let filename = source
            .rsplit('/')
            .find(|s| !s.is_empty())
            .unwrap_or("download")
            .to_string();
        let id = format!("url-{}", &sha256_hex(source.as_bytes())[..16]);
        return Ok((id, filename, ResolvedOrigin::Url(source.to_string()), None));
    }
    Err(Error::Fetch {
        source_id: source.to_string(),
        reason: format!(
            "unknown dataset id (known: {})",
            registry()
                .iter()
                .map(|s| s.id)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    })
}

fn fetch_locked(
    cache_dir: &Path,
    id: &str,
    filename: &str,
    origin: &ResolvedOrigin,
    expected: Option<&str>,
    transport: &dyn Transport,
) -> Result<Fetched> {
    let dir = cache_dir.join(id);
    let path = dir.join(filename);
    let manifest_path = cache_dir.join("manifest.json");
    let mut manifest: Manifest = match fs::read(&manifest_path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
        Err(_) => Manifest::default(),
    };

    if let Ok(bytes) = fs::read(&path) {
        let digest = sha256_hex(&bytes);
        let recorded = manifest.entries.get(id).map(|e| e.sha256.as_str());
        let want = expected.or(recorded);
        if want.is_none_or(|w| w == digest) {
            return Ok(Fetched {
                source_id: id.to_string(),
                path,
                cached: true,
            });
        }
        log::warn!("cached {} has digest {digest}; refetching", path.display());
    }

    let (bytes, origin_desc) = match origin {
        ResolvedOrigin::Bundled(text) => (text.as_bytes().to_vec(), "bundled".to_string()),
        ResolvedOrigin::Url(url) => (
            transport.get(url).map_err(|e| Error::Fetch {
                source_id: id.to_string(),
                reason: format!("{e} (no cached copy)"),
            })?,
            url.clone(),
        ),
    };
    let digest = sha256_hex(&bytes);
    if let Some(want) = expected {
        if want != digest {
            return Err(Error::DigestMismatch {
                path,
                expected: want.to_string(),
                got: digest,
            });
        }
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let tmp = dir.join(format!(".{filename}.part"));
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    manifest.entries.insert(
        id.to_string(),
        ManifestEntry {
            file: filename.to_string(),
            sha256: digest,
            origin: origin_desc,
        },
    );
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(Fetched {
        source_id: id.to_string(),
        path,
        cached: false,
    })
}

/// Default cache directory: `$SVMLLAB_CACHE`, else `$HOME/.cache/svmllab`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("SVMLLAB_CACHE") {
        return PathBuf::from(dir);
    }
    std::env::var_os("HOME")
        .map(|h| PathBuf::from(h).join(".cache").join("svmllab"))
        .unwrap_or_else(|| PathBuf::from(".svmllab-cache"))
}

/// Parse a configured dataset straight from its bundled bytes (no cache).
pub fn load_bundled(id: &str) -> Result<Loaded> {
    let source = lookup(id).ok_or_else(|| Error::Fetch {
        source_id: id.to_string(),
        reason: "unknown dataset id".into(),
    })?;
    match source.origin {
        Origin::Bundled(text) => super::parse_csv(
            text.as_bytes(),
            &source.label_column,
            source.positive_label,
            source.id,
        ),
        Origin::Url(_) => Err(Error::Fetch {
            source_id: id.to_string(),
            reason: "not bundled; use fetch()".into(),
        }),
    }
}

/// Fetch a configured id (or URL) and load it with the registry's hints.
pub fn fetch_and_load(source: &str, cache_dir: &Path) -> Result<Loaded> {
    let fetched = fetch(source, cache_dir)?;
    let (label, positive) = match lookup(source) {
        Some(known) => (known.label_column, known.positive_label.to_string()),
        None => (LabelColumn::Last, "1".to_string()),
    };
    let mut loaded = load_csv(&fetched.path, &label, &positive)?;
    if let Some(known) = lookup(source) {
        loaded.dataset.source_id = known.id.to_string();
    }
    Ok(loaded)
}

/// Read a file fully; used for digests of training inputs.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&buf))
}
