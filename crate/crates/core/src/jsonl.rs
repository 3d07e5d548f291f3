//! JSON Lines reading and writing with line-numbered errors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reads every record in the file, pairing each with its 1-based line
/// number. Blank lines are rejected, not skipped: a truncated write should
/// surface, not vanish.
pub(crate) fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let record = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        records.push((line_no, record));
    }
    Ok(records)
}

pub(crate) fn write<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write(&path, &[1u32, 2, 3]).unwrap();
        let back: Vec<(usize, u32)> = read(&path).unwrap();
        assert_eq!(back, vec![(1, 1), (2, 2), (3, 3)]);

        std::fs::write(&path, "1\nnot json\n").unwrap();
        let err = read::<u32>(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
