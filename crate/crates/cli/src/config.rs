//! Run configuration: model and training settings, data locations, split,
//! output directory and the single seed, as `key = value` lines.

use std::path::PathBuf;

use nap_core::dataio::BehaviorMix;
use nap_core::model::NapConfig;
use nap_core::train::TrainConfig;

use crate::error::{CliError, CliResult};

/// `split.test` value selecting a leave-one-out rotation over all scenes.
pub const LEAVE_ONE_OUT: &str = "loo";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: PathBuf,
    pub out: PathBuf,
    /// Keep only frames whose id is a multiple of this.
    pub frame_interval: Option<i64>,
    /// Training scenes; empty means every scene except the test scene.
    pub split_train: Vec<String>,
    pub split_test: String,
    pub model: NapConfig,
    pub train: TrainConfig,
    pub eval_k: usize,
    pub synth_scenes: usize,
    pub synth_peds: usize,
    pub synth_mix: BehaviorMix,
    pub heatmap_cells: usize,
    pub heatmap_cell_size: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: PathBuf::from("data"),
            out: PathBuf::from("runs"),
            frame_interval: None,
            split_train: Vec::new(),
            split_test: LEAVE_ONE_OUT.into(),
            model: NapConfig::default(),
            train: TrainConfig::default(),
            eval_k: 20,
            synth_scenes: 5,
            synth_peds: 100,
            synth_mix: BehaviorMix::MIXED,
            heatmap_cells: 32,
            heatmap_cell_size: 0.25,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
}

impl RunConfig {
    /// Every setting in a fixed order. The training seed is not listed: it
    /// always equals `seed`.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("data".into(), self.data.display().to_string()),
            ("out".into(), self.out.display().to_string()),
            (
                "data.frame_interval".into(),
                self.frame_interval.map_or("none".into(), |v| v.to_string()),
            ),
            ("split.train".into(), self.split_train.join(",")),
            ("split.test".into(), self.split_test.clone()),
        ];
        for (k, v) in self.model.to_pairs() {
            out.push((format!("model.{k}"), v));
        }
        for (k, v) in self.train.to_pairs() {
            if k != "seed" {
                out.push((format!("train.{k}"), v));
            }
        }
        out.extend([
            ("eval.k".to_string(), self.eval_k.to_string()),
            ("synth.scenes".into(), self.synth_scenes.to_string()),
            ("synth.peds".into(), self.synth_peds.to_string()),
            ("synth.mix".into(), self.synth_mix.to_string()),
            ("heatmap.cells".into(), self.heatmap_cells.to_string()),
            ("heatmap.cell_size".into(), self.heatmap_cell_size.to_string()),
        ]);
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "data" => self.data = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "data.frame_interval" => {
                self.frame_interval = match v {
                    "none" | "" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "split.train" => {
                self.split_train = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "split.test" => self.split_test = v.to_string(),
            "eval.k" => self.eval_k = parse(key, v)?,
            "synth.scenes" => self.synth_scenes = parse(key, v)?,
            "synth.peds" => self.synth_peds = parse(key, v)?,
            "synth.mix" => self.synth_mix = v.parse::<BehaviorMix>()?,
            "heatmap.cells" => self.heatmap_cells = parse(key, v)?,
            "heatmap.cell_size" => self.heatmap_cell_size = parse(key, v)?,
            _ => {
                let known = if let Some(k) = key.strip_prefix("model.") {
                    self.model.set(k, v)?
                } else if let Some(k) = key.strip_prefix("train.") {
                    k != "seed" && self.train.set(k, v)?
                } else {
                    false
                };
                if !known {
                    return Err(CliError::Config(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown and repeated keys are errors.
    pub fn from_text(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(CliError::Config(format!("config line {}: `{k}` set twice", i + 1)));
            }
            cfg.set(k, v)
                .map_err(|e| CliError::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    /// Copies the seed into the training config and checks everything.
    pub fn resolve(mut self) -> CliResult<Self> {
        self.train.seed = self.seed;
        self.model.validate()?;
        self.train.validate()?;
        if self.eval_k == 0 {
            return Err(CliError::Config("`eval.k` must be positive".into()));
        }
        if self.heatmap_cells == 0 || !(self.heatmap_cell_size > 0.0) {
            return Err(CliError::Config("heatmap geometry must be positive".into()));
        }
        if self.frame_interval.is_some_and(|v| v <= 0) {
            return Err(CliError::Config("`data.frame_interval` must be positive".into()));
        }
        if self.split_test.is_empty() {
            return Err(CliError::Config("`split.test` must name a scene or be `loo`".into()));
        }
        Ok(self)
    }
}
