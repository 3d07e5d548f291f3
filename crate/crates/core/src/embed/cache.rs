//! Binary cache of node embeddings, stored next to the index so reruns
//! skip re-embedding the node set. The file carries vectors only; phrases
//! come from the graph at load time, and the file name carries the
//! provider identity so switching providers cannot reuse stale rows.

use std::io::{Read, Write};
use std::path::Path;

use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 7] = b"HIPEMB1";

/// `embeddings.<provider>.bin`, with the provider name made filesystem-safe.
pub fn cache_file_name(provider_name: &str) -> String {
    let safe: String = provider_name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '-'
            }
        })
        .collect();
    format!("embeddings.{safe}.bin")
}

pub fn save(path: &Path, store: &EmbeddingStore) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let rows = store.len() as u32;
    let dimension = store.dimension() as u32;
    file.write_all(MAGIC)
        .and_then(|_| file.write_all(&rows.to_le_bytes()))
        .and_then(|_| file.write_all(&dimension.to_le_bytes()))
        .map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(store.len() * store.dimension() * 4);
    for row in 0..store.len() as u32 {
        for &x in store.row(row) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Loads a cache written by [`save`], attaching `phrases` as row labels.
/// Returns None when the file does not exist or its row count does not
/// match the phrase list (a changed node set invalidates the cache);
/// structural corruption is an error.
pub fn load(path: &Path, phrases: &[String]) -> Result<Option<EmbeddingStore>> {
    let mut file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut header = [0u8; 15];
    file.read_exact(&mut header)
        .map_err(|_| format_error(path, "file shorter than its header"))?;
    if &header[..7] != MAGIC {
        return Err(format_error(path, "bad magic bytes"));
    }
    let rows = u32::from_le_bytes(header[7..11].try_into().expect("fixed slice")) as usize;
    let dimension = u32::from_le_bytes(header[11..15].try_into().expect("fixed slice")) as usize;
    if rows != phrases.len() {
        log::info!(
            "embedding cache {} holds {rows} rows, index has {} nodes; re-embedding",
            path.display(),
            phrases.len()
        );
        return Ok(None);
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != rows * dimension * 4 {
        return Err(format_error(path, "payload length disagrees with header"));
    }
    let mut store = EmbeddingStore::new(dimension);
    for (i, phrase) in phrases.iter().enumerate() {
        let row: Vec<f32> = payload[i * dimension * 4..(i + 1) * dimension * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("chunked by 4")))
            .collect();
        store.push_raw(phrase, &row)?;
    }
    Ok(Some(store))
}

fn format_error(path: &Path, message: &str) -> Error {
    Error::IndexFormat {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}
