//! Scene directories: `scene_<i>_<kind>.brf` files grouped by index.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use iib_core::{read_brf, Raster, SampleTriple};

use crate::error::CliError;

pub fn scene_path(dir: &Path, index: usize, kind: &str) -> PathBuf {
    dir.join(format!("scene_{index}_{kind}.brf"))
}

fn parse_name(name: &str) -> Option<(usize, &str)> {
    let rest = name.strip_prefix("scene_")?.strip_suffix(".brf")?;
    let (index, kind) = rest.split_once('_')?;
    Some((index.parse().ok()?, kind))
}

/// Scene indices present in `dir` that have every kind in `needed`, in ascending order.
pub fn scene_indices(dir: &Path, needed: &[&str]) -> Result<Vec<usize>, CliError> {
    let mut found: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name();
        if let Some((index, kind)) = name.to_str().and_then(parse_name) {
            found.entry(index).or_default().push(kind.to_string());
        }
    }
    let indices: Vec<usize> = found
        .into_iter()
        .filter(|(_, kinds)| needed.iter().all(|k| kinds.iter().any(|have| have == k)))
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(CliError::Invalid(format!(
            "no scenes with {} found in {}",
            needed.join("/"),
            dir.display()
        )));
    }
    Ok(indices)
}

pub fn read(dir: &Path, index: usize, kind: &str) -> Result<Raster, CliError> {
    let path = scene_path(dir, index, kind);
    read_brf(&path).map_err(|e| CliError::core_at(&path, e))
}

pub fn load_triples(dir: &Path) -> Result<(Vec<usize>, Vec<SampleTriple>), CliError> {
    let indices = scene_indices(dir, &["lms", "panlr", "target"])?;
    let mut triples = Vec::with_capacity(indices.len());
    for &i in &indices {
        let triple = SampleTriple::new(read(dir, i, "lms")?, read(dir, i, "panlr")?, read(dir, i, "target")?)
            .map_err(|e| CliError::core_at(&scene_path(dir, i, "target"), e))?;
        triples.push(triple);
    }
    Ok((indices, triples))
}
