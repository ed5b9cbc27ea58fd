//! Standard-library companion to `accjs-core`: an html5ever-backed parser,
//! offline fixture directories, the file-backed concurrent transparency log,
//! an on-disk key store and the `accjs` command line.

pub mod casestudy;
pub mod cli;
pub mod fixtures;
pub mod html;
pub mod keystore;
pub mod store;

use std::io;
use std::path::{Path, PathBuf};

use accjs_core::crypto::CryptoError;
use accjs_core::log::LogError;

pub use fixtures::FixtureDir;
pub use html::Html5everParser;
pub use keystore::KeyStore;
pub use store::{read_log_file, LogFile, SharedLog};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }
}
