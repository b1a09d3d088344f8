//! File formats: JSONL records, binary matrices, PLY clouds and sha256
//! manifests.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grasp::PointCloud;
use crate::grounding::BBox;
use crate::scene::SceneDescription;
use crate::tensor::{to_bytes, Matrix};

/// One persisted scene: the full description plus its ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    #[serde(flatten)]
    pub scene: SceneDescription,
    pub ground_truth: BBox,
}

impl From<&SceneDescription> for SceneRecord {
    fn from(scene: &SceneDescription) -> Self {
        SceneRecord {
            ground_truth: scene.ground_truth_box(),
            scene: scene.clone(),
        }
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&to_bytes(m))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    crate::tensor::from_bytes(&bytes)
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = create(path)?;
    cloud
        .write_ply(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash and size of one file, keyed by its path relative to the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Every regular file under `root`, sorted by relative path, skipping
/// `exclude`.
pub fn hash_tree(root: &Path, exclude: &[&Path]) -> Result<Vec<FileEntry>> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut out = Vec::new();
    for f in files {
        if exclude.contains(&f.as_path()) {
            continue;
        }
        let rel = f.strip_prefix(root).expect("walked under root");
        let bytes = fs::metadata(&f).map_err(|e| Error::io(&f, e))?.len();
        out.push(FileEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(&f)?,
            bytes,
        });
    }
    Ok(out)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Dataset manifest written by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    /// sha256 of the configuration in canonical TOML form.
    pub config_sha256: String,
    /// Scenes per suite file.
    pub scene_counts: BTreeMap<String, usize>,
    pub files: Vec<FileEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneParams, Split, SplitSpec};

    #[test]
    fn scene_records_survive_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/scenes.jsonl");
        let scenes: Vec<SceneRecord> = (0..3)
            .map(|s| {
                SceneRecord::from(
                    &generate_scene(s, &SplitSpec::default(), Split::Base, s == 1, &SceneParams::default()).unwrap(),
                )
            })
            .collect();
        write_jsonl(&path, &scenes).unwrap();
        let back: Vec<SceneRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, scenes);
        let first = fs::read_to_string(&path).unwrap();
        assert!(first.lines().next().unwrap().contains("\"ground_truth\":["));
    }

    #[test]
    fn tree_hashes_are_sorted_and_exclude() {
        let dir = tempfile::tempdir().unwrap();
        write_text(&dir.path().join("b.txt"), "b").unwrap();
        write_text(&dir.path().join("a/c.txt"), "c").unwrap();
        write_text(&dir.path().join("m.json"), "{}").unwrap();
        let entries = hash_tree(dir.path(), &[&dir.path().join("m.json")]).unwrap();
        let names: Vec<&str> = entries.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(names, ["a/c.txt", "b.txt"]);
        assert_eq!(
            entries[1].sha256,
            "3e23e8160039594a33894f6564e1b1348bbd7a0088d42c4acb73eeaed59c009d"
        );
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_jsonl::<SceneRecord>(Path::new("/nonexistent/x.jsonl")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.jsonl"));
    }
}
