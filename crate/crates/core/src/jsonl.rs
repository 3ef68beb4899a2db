//! Line-delimited JSON helpers shared by every file format in the crate.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

/// Serializes one record to a complete line, newline included.
pub fn to_line<T: Serialize>(value: &T) -> io::Result<Vec<u8>> {
    let mut buf = serde_json::to_vec(value)?;
    buf.push(b'\n');
    Ok(buf)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads every non-blank line of `path` as a `T`.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReadError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| ReadError::Parse { line: i + 1, source })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_all<'a, T: Serialize + 'a>(path: &Path, values: impl IntoIterator<Item = &'a T>) -> io::Result<()> {
    let mut out = io::BufWriter::new(File::create(path)?);
    for v in values {
        write_line(&mut out, v)?;
    }
    out.flush()
}
