//! Scene loading, split plans, input hashes and run-directory files.

use std::path::{Path, PathBuf};

use nap_core::dataio::{list_scenes, SceneData, SplitPlan};
use nap_core::Error;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, LEAVE_ONE_OUT};
use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// `sha256sum`-style lines for `paths`, in the given order.
pub fn hash_lines(paths: &[PathBuf]) -> CliResult<String> {
    let mut out = String::new();
    for p in paths {
        out.push_str(&format!("{}  {}\n", hash_file(p)?, p.display()));
    }
    Ok(out)
}

/// Digest of the scene files of `ids`, independent of where `dir` lives.
pub fn data_hash(dir: &Path, ids: &[String]) -> CliResult<String> {
    let mut h = Sha256::new();
    for id in ids {
        for ext in ["txt", "grid"] {
            let p = scene_file(dir, id, ext);
            h.update(format!("{id}.{ext} {}\n", hash_file(&p)?).as_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

pub fn scene_file(dir: &Path, id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{id}.{ext}"))
}

pub fn scene_files(dir: &Path, ids: &[String]) -> Vec<PathBuf> {
    ids.iter()
        .flat_map(|id| [scene_file(dir, id, "txt"), scene_file(dir, id, "grid")])
        .collect()
}

pub fn write(path: &Path, text: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_scene(cfg: &RunConfig, id: &str) -> CliResult<SceneData> {
    Ok(SceneData::load(&cfg.data, id, cfg.frame_interval)?)
}

/// Split plans requested by the config over the scenes present on disk.
pub fn plans(cfg: &RunConfig) -> CliResult<Vec<SplitPlan>> {
    let scenes = list_scenes(&cfg.data)?;
    if scenes.is_empty() {
        return Err(Error::Data(format!("no scenes (`<id>.txt` + `<id>.grid`) in {}", cfg.data.display())).into());
    }
    if cfg.split_test == LEAVE_ONE_OUT {
        return Ok(SplitPlan::leave_one_out(&scenes)?);
    }
    let test = cfg.split_test.clone();
    if !scenes.contains(&test) {
        return Err(Error::Data(format!("test scene `{test}` not found in {}", cfg.data.display())).into());
    }
    let train = if cfg.split_train.is_empty() {
        scenes.iter().filter(|s| **s != test).cloned().collect()
    } else {
        for s in &cfg.split_train {
            if !scenes.contains(s) {
                return Err(Error::Data(format!("training scene `{s}` not found in {}", cfg.data.display())).into());
            }
        }
        cfg.split_train.clone()
    };
    Ok(vec![SplitPlan::new(train, test)?])
}

/// Writes the resolved config and the hashes of `inputs` into `dir`.
pub fn describe_run(dir: &Path, cfg: &RunConfig, inputs: &[PathBuf]) -> CliResult<()> {
    write(&dir.join("config.txt"), cfg.to_text())?;
    write(&dir.join("inputs.sha256"), hash_lines(inputs)?)?;
    Ok(())
}

/// File-name friendly form of a method label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

pub fn require_meta<'a>(meta: &'a nap_core::train::CheckpointMeta, key: &str, path: &Path) -> CliResult<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Incompatible(format!("{}: checkpoint has no `{key}` entry", path.display())))
}
