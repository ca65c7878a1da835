use std::fs::{self, File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

fn download(url: &str) -> Result<Vec<u8>> {
    let network = |reason: String| Error::Network {
        url: url.to_string(),
        reason,
    };
    let mut response = ureq::get(url).call().map_err(|e| network(e.to_string()))?;
    let mut body = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut body)
        .map_err(|e| network(e.to_string()))?;
    if url.ends_with(".gz") {
        let mut out = Vec::new();
        GzDecoder::new(body.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| network(format!("gunzip: {e}")))?;
        body = out;
    }
    Ok(body)
}

/// Downloads `url` to `dest`, gunzipping `.gz` URLs, and checks the SHA-256
/// of the stored (decompressed) bytes.
///
/// A `dest` that already hashes to `expected_sha256` is returned without any
/// network access. Concurrent callers for the same `dest` serialize on
/// `<dest>.lock`. On a checksum mismatch nothing is left at `dest`.
pub fn fetch_dataset(url: &str, expected_sha256: &str, dest: &Path) -> Result<PathBuf> {
    let expected = expected_sha256.to_ascii_lowercase();
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let lock_path = dest.with_extension("lock");
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(|e| Error::io(&lock_path, e))?;
    lock.lock().map_err(|e| Error::io(&lock_path, e))?;

    // The lock file stays behind: removing it would let a waiter lock an
    // orphaned inode while a newcomer locks a fresh one.
    fetch_locked(url, &expected, dest)
}

fn fetch_locked(url: &str, expected: &str, dest: &Path) -> Result<PathBuf> {
    if file_digest(dest).as_deref() == Some(expected) {
        return Ok(dest.to_path_buf());
    }
    let bytes = download(url)?;
    let actual = sha256_hex(&bytes);
    if actual != expected {
        let _ = fs::remove_file(dest);
        return Err(Error::Checksum {
            path: dest.to_path_buf(),
            expected: expected.to_string(),
            actual,
        });
    }
    let tmp = dest.with_extension("partial");
    {
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        std::io::Write::write_all(&mut f, &bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, dest).map_err(|e| Error::io(dest, e))?;
    Ok(dest.to_path_buf())
}
