use std::collections::BTreeSet;
use std::path::Path;

use crate::dataio::grid::{center_crop, crop_scene, SceneGrid};
use crate::dataio::records::{format_trajectories, parse_trajectory_file, FrameRecord};
use crate::dataio::sample::{normalize, rotate_augment, window_samples, SequenceSample, WindowSpec};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Leave-one-out split: train on `train`, evaluate on `test`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub test: String,
}

impl SplitPlan {
    pub fn new(train: Vec<String>, test: impl Into<String>) -> Result<Self> {
        let test = test.into();
        if train.is_empty() {
            return Err(Error::Split("no training scenes".into()));
        }
        if train.contains(&test) {
            return Err(Error::Split(format!("test scene `{test}` is also a training scene")));
        }
        let unique: BTreeSet<&String> = train.iter().collect();
        if unique.len() != train.len() {
            return Err(Error::Split("duplicate training scene".into()));
        }
        Ok(SplitPlan { train, test })
    }

    /// One plan per scene, each holding that scene out.
    pub fn leave_one_out(scenes: &[String]) -> Result<Vec<SplitPlan>> {
        scenes
            .iter()
            .map(|t| SplitPlan::new(scenes.iter().filter(|s| *s != t).cloned().collect(), t.clone()))
            .collect()
    }

    /// Refuses anything tagged with the held-out scene or with a scene not in
    /// the plan.
    pub fn check_train_scene(&self, scene_id: &str) -> Result<()> {
        if scene_id == self.test {
            return Err(Error::Split(format!("test scene `{scene_id}` reached training")));
        }
        if !self.train.iter().any(|s| s == scene_id) {
            return Err(Error::Split(format!("scene `{scene_id}` is not in the training set")));
        }
        Ok(())
    }
}

/// Trajectories and grid of one scene, loaded from `<dir>/<id>.txt` and
/// `<dir>/<id>.grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneData {
    pub id: String,
    pub records: Vec<FrameRecord>,
    pub grid: SceneGrid,
}

impl SceneData {
    pub fn load(dir: &Path, id: &str, frame_interval: Option<i64>) -> Result<Self> {
        let records = parse_trajectory_file(&dir.join(format!("{id}.txt")), frame_interval)?;
        let grid = SceneGrid::load(&dir.join(format!("{id}.grid")), id)?;
        Ok(SceneData {
            id: id.to_string(),
            records,
            grid,
        })
    }

    pub fn save(&self, dir: &Path, header: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tp = dir.join(format!("{}.txt", self.id));
        std::fs::write(&tp, format_trajectories(&self.records, header)).map_err(|e| Error::io(&tp, e))?;
        let gp = dir.join(format!("{}.grid", self.id));
        std::fs::write(&gp, self.grid.to_text()).map_err(|e| Error::io(&gp, e))?;
        Ok(())
    }
}

/// Scene ids in `dir` that have both a `.txt` and a `.grid` file, sorted.
pub fn list_scenes(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if dir.join(format!("{stem}.grid")).is_file() {
            out.push(stem.to_string());
        }
    }
    out.sort();
    Ok(out)
}

/// A normalized window with its scene crop. `wide` is a larger crop kept
/// only when rotations will be applied, so that rotated corners still see
/// real cells.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub sample: SequenceSample,
    pub crop: Tensor,
    pub wide: Option<Tensor>,
}

impl PreparedSample {
    /// The same window with the future cut to its first `t_pred` steps, so
    /// that different horizons are scored on identical windows.
    pub fn with_horizon(&self, t_pred: usize) -> Result<Self> {
        if t_pred == 0 || t_pred > self.sample.fut.len() {
            return Err(Error::Data(format!(
                "cannot cut a {}-step future to {t_pred} steps",
                self.sample.fut.len()
            )));
        }
        let mut out = self.clone();
        out.sample.fut.truncate(t_pred);
        Ok(out)
    }

    /// Sample and crop rotated by `angle` about the pedestrian.
    pub fn rotated(&self, angle: f64) -> Result<(SequenceSample, Tensor)> {
        if angle == 0.0 {
            return Ok((self.sample.clone(), self.crop.clone()));
        }
        let wide = self
            .wide
            .as_ref()
            .ok_or_else(|| Error::Data("sample was prepared without an augmentation margin".into()))?;
        let (s, big) = rotate_augment(&self.sample, wide, angle)?;
        let [_, h, w] = self.crop.shape() else { unreachable!() };
        Ok((s, center_crop(&big, *h, *w)?))
    }
}

/// Side of the crop that stays fully covered after any rotation of a
/// `crop`-cell square.
pub fn augment_margin(crop: usize) -> usize {
    let d = (crop as f64 * std::f64::consts::SQRT_2).ceil() as usize + 2;
    // same parity keeps the centres aligned
    d + (d + crop) % 2
}

pub fn prepare_scene(scene: &SceneData, spec: WindowSpec, crop: usize, with_margin: bool) -> Result<Vec<PreparedSample>> {
    window_samples(&scene.records, &scene.id, spec)
        .into_iter()
        .map(|raw| {
            let center = *raw.obs.last().expect("window has observations");
            let sample = normalize(&raw);
            let c = crop_scene(&scene.grid, center, crop, crop)?;
            let wide = if with_margin {
                let m = augment_margin(crop);
                Some(crop_scene(&scene.grid, center, m, m)?)
            } else {
                None
            };
            Ok(PreparedSample { sample, crop: c, wide })
        })
        .collect()
}
