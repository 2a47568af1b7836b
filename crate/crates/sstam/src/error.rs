use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] sstam_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a Y4M stream (signature {0:?})")]
    BadSignature(String),
    #[error("unsupported colorspace {0:?}; only 8-bit 4:2:0 is accepted")]
    UnsupportedColorspace(String),
    #[error("truncated payload in frame {frame}: needed {needed} bytes, {available} left")]
    Truncated {
        frame: usize,
        needed: usize,
        available: usize,
    },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error("raw stream of {len} bytes is not a positive multiple of the {frame}-byte frame")]
    SizeMismatch { len: usize, frame: usize },
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongModel { expected: String, found: String },
    #[error("missing {0}")]
    Missing(String),
}

pub(crate) fn malformed(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Malformed {
        what,
        detail: detail.into(),
    }
}

/// Reads a whole file, tagging errors with the path.
pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: impl AsRef<std::path::Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
