//! A corpus is a directory whose subdirectories are clip directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use flamestab::imaging::{read_clip_dir, Clip, CLIP_META_FILE};

/// Clip subdirectories of `dir` in name order.
pub fn clip_dirs(dir: &Path) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.join(CLIP_META_FILE).is_file() {
            let id = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            out.push((id, path));
        }
    }
    out.sort();
    if out.is_empty() {
        anyhow::bail!("{} holds no clip directories", dir.display());
    }
    Ok(out)
}

/// Loads clips one at a time, so a corpus never has to fit in memory at once.
pub fn clips(dirs: Vec<(String, PathBuf)>) -> impl Iterator<Item = flamestab::Result<(String, Clip)>> {
    dirs.into_iter().map(|(id, path)| Ok((id, read_clip_dir(&path)?)))
}
