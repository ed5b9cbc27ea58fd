//! Offline web: a directory of response bodies indexed by URL.
//!
//! `fixtures.json` maps each URL either to a body file or to an object
//! `{"body": file, "headers": {name: value}, "opaque": bool}`. A file
//! `<body>.headers` next to the body adds `name: value` header lines.
//! Opaque entries model cross-origin documents whose bodies cannot be read.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use accjs_core::measure::{ResourceFetcher, Response};
use accjs_core::url::strip_query;
use serde::Deserialize;

use crate::Error;

pub const INDEX_FILE: &str = "fixtures.json";

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum IndexEntry {
    File(String),
    Full {
        body: String,
        #[serde(default)]
        headers: BTreeMap<String, String>,
        #[serde(default)]
        opaque: bool,
    },
}

#[derive(Debug, Clone)]
struct Resource {
    body: PathBuf,
    headers: Vec<(String, String)>,
    opaque: bool,
}

#[derive(Debug, Clone, Default)]
pub struct FixtureDir {
    root: PathBuf,
    resources: BTreeMap<String, Resource>,
}

impl FixtureDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, Error> {
        let root = root.as_ref().to_path_buf();
        let index_path = root.join(INDEX_FILE);
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: BTreeMap<String, IndexEntry> =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", index_path.display())))?;
        let mut resources = BTreeMap::new();
        for (url, entry) in index {
            let (file, mut headers, opaque) = match entry {
                IndexEntry::File(f) => (f, Vec::new(), false),
                IndexEntry::Full { body, headers, opaque } => (body, headers.into_iter().collect(), opaque),
            };
            let body = root.join(&file);
            let sidecar = root.join(format!("{file}.headers"));
            if sidecar.is_file() {
                let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
                headers.extend(parse_header_lines(&text));
            }
            resources.insert(url, Resource { body, headers, opaque });
        }
        Ok(Self { root, resources })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.resources.keys().map(String::as_str)
    }

    /// Body and headers regardless of opacity, for the page being verified.
    pub fn load(&self, url: &str) -> Option<Response> {
        let r = self.resources.get(url).or_else(|| self.resources.get(strip_query(url)))?;
        let body = fs::read(&r.body).ok()?;
        Some(Response { headers: r.headers.clone(), body })
    }
}

impl ResourceFetcher for FixtureDir {
    fn fetch(&self, url: &str) -> Option<Response> {
        let r = self.resources.get(url).or_else(|| self.resources.get(strip_query(url)))?;
        if r.opaque {
            return None;
        }
        self.load(url)
    }
}

fn parse_header_lines(text: &str) -> impl Iterator<Item = (String, String)> + '_ {
    text.lines().filter_map(|l| {
        let (k, v) = l.split_once(':')?;
        let k = k.trim();
        (!k.is_empty() && !k.starts_with('#')).then(|| (k.to_ascii_lowercase(), v.trim().to_string()))
    })
}
