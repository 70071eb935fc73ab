//! On-disk stack layout: `<root>/<scene>/<EV>.png`.
//!
//! The EV is the file stem, a signed decimal such as `-2.5`, `0` or `+3`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_ldr, save_ldr, EvStep, LdrStack};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files in `dir` with their parsed EVs, sorted by EV. Fails on the
/// first stem that is not an EV.
pub fn stack_files(dir: impl AsRef<Path>) -> Result<Vec<(EvStep, PathBuf)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            out.push((EvStep::from_path(&path)?, path));
        }
    }
    out.sort_by(|a, b| a.0.value().total_cmp(&b.0.value()));
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument(format!(
            "two files for EV {} in {}",
            w[0].0,
            dir.display()
        )));
    }
    Ok(out)
}

pub fn load_stack_dir(dir: impl AsRef<Path>) -> Result<LdrStack> {
    let dir = dir.as_ref();
    let files = stack_files(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no images in {}", dir.display())));
    }
    let entries = files
        .into_iter()
        .map(|(ev, p)| Ok((ev, load_ldr(&p)?)))
        .collect::<Result<Vec<_>>>()?;
    LdrStack::new(entries)
}

/// Writes each entry as `<dir>/<EV label>.png`, creating `dir`.
pub fn save_stack_dir(stack: &LdrStack, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(stack.len());
    for (ev, img) in stack.entries() {
        let path = dir.join(format!("{}.png", ev.label()));
        save_ldr(img, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Scene subdirectories of `root`, sorted by name.
pub fn scene_dirs(root: impl AsRef<Path>) -> Result<Vec<(String, PathBuf)>> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::NotFound(root.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            out.push((name, path));
        }
    }
    out.sort();
    Ok(out)
}
