//! Output files are written to a temporary sibling and renamed into place,
//! so readers never observe a partial file.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::fail::{CliResult, Context, Kind};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).or_fail(Kind::Output, format!("cannot create {}", dir.display()))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    ensure_dir(parent)?;
    let what = || format!("cannot write {}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(parent).or_fail(Kind::Output, what())?;
    tmp.write_all(bytes).or_fail(Kind::Output, what())?;
    tmp.as_file().sync_all().or_fail(Kind::Output, what())?;
    tmp.persist(path).or_fail(Kind::Output, what())?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).or_fail(Kind::Output, format!("serializing {}", path.display()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
