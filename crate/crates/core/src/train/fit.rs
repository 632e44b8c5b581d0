use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dataio::{PreparedSample, SplitPlan};
use crate::error::{Error, Result};
use crate::model::{parse_bool, ModelInput, NapModel};
use crate::numeric::{adam_step, gaussian_sample, stream_rng, AdamConfig, Gradients, Graph, Var};
use crate::train::loss::{kl_vars, mse_vars, variety_vars};

const SHUFFLE_STREAM: u64 = 0x5f;
const AUGMENT_STREAM: u64 = 0xa6;
const EPS_STREAM: u64 = 0xe9;

/// Samples per unit of parallel work. Gradients inside a chunk are summed
/// in order and chunks are reduced in order, so results do not depend on
/// the number of worker threads.
pub const CHUNK: usize = 8;

/// Augmentation rotates by a random multiple of this angle.
pub const AUGMENT_STEP_DEGREES: f64 = 15.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Samples per pedestrian for the variety loss (multimodal models).
    pub k_variety: usize,
    pub kl_weight: f64,
    /// Global gradient-norm bound; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 128,
            epochs: 50,
            seed: 0,
            k_variety: 20,
            kl_weight: 0.0,
            clip_norm: 10.0,
            augment: true,
        }
    }
}

pub const TRAIN_KEYS: [&str; 8] = [
    "lr",
    "batch_size",
    "epochs",
    "seed",
    "k_variety",
    "kl_weight",
    "clip_norm",
    "augment",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("`lr` must be a finite non-negative number".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("`batch_size` must be positive".into()));
        }
        if self.k_variety == 0 {
            return Err(Error::Config("`k_variety` must be positive".into()));
        }
        if !(self.kl_weight >= 0.0) || !self.kl_weight.is_finite() {
            return Err(Error::Config("`kl_weight` must be finite and non-negative".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("`clip_norm` must be positive".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("k_variety", self.k_variety.to_string()),
            ("kl_weight", self.kl_weight.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("augment", self.augment.to_string()),
        ]
    }

    /// Applies one `key = value` setting; `Ok(false)` for foreign keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{v}`")))
        };
        let int = |v: &str| -> Result<u64> {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("`{key}` expects a non-negative integer, got `{v}`")))
        };
        match key {
            "lr" => self.lr = num(value)?,
            "batch_size" => self.batch_size = int(value)? as usize,
            "epochs" => self.epochs = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "k_variety" => self.k_variety = int(value)? as usize,
            "kl_weight" => self.kl_weight = num(value)?,
            "clip_norm" => self.clip_norm = num(value)?,
            "augment" => self.augment = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Training items plus the split they were drawn under. Every item is
/// re-checked against the split when it enters a batch.
#[derive(Clone, Debug)]
pub struct TrainSet {
    pub items: Vec<PreparedSample>,
    pub plan: Option<SplitPlan>,
}

impl TrainSet {
    pub fn new(items: Vec<PreparedSample>, plan: Option<SplitPlan>) -> Result<Self> {
        let set = TrainSet { items, plan };
        for it in &set.items {
            set.check(it)?;
        }
        Ok(set)
    }

    fn check(&self, item: &PreparedSample) -> Result<()> {
        match &self.plan {
            Some(p) => p.check_train_scene(&item.sample.scene_id),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch.
    pub loss: f64,
    /// Mean pre-clipping global gradient norm over batches.
    pub grad_norm: f64,
    pub seconds: f64,
}

/// Per-epoch records plus a run header.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub seed: u64,
    pub config_hash: String,
    pub entries: Vec<EpochStats>,
}

impl TrainLog {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        TrainLog {
            seed,
            config_hash: config_hash.into(),
            entries: Vec::new(),
        }
    }

    pub fn header(&self) -> String {
        format!("# seed={} config={}\n# epoch loss grad_norm\n", self.seed, self.config_hash)
    }

    pub fn line(e: &EpochStats) -> String {
        format!("{} {:.9} {:.9}\n", e.epoch, e.loss, e.grad_norm)
    }

    /// Deterministic part of the log: identical runs give identical text.
    pub fn to_text(&self) -> String {
        let mut s = self.header();
        for e in &self.entries {
            s.push_str(&Self::line(e));
        }
        s
    }

    /// Wall-clock seconds per epoch, kept apart from [`TrainLog::to_text`].
    pub fn timing_text(&self) -> String {
        let mut s = String::from("# epoch seconds\n");
        for e in &self.entries {
            s.push_str(&format!("{} {:.3}\n", e.epoch, e.seconds));
        }
        s
    }
}

/// Loss of one item on `g`. `eps` holds one vector per latent draw.
pub fn sample_loss_vars(g: &mut Graph, model: &NapModel, item: &PreparedSample, angle: f64, eps: &[Vec<f64>], kl_weight: f64) -> Result<Var> {
    let (sample, crop) = item.rotated(angle)?;
    let input = ModelInput {
        obs: &sample.obs,
        neighbors: &sample.neighbors,
        crop: &crop,
    };
    let b = model.bind(g);
    let st = model.encode_vars(g, &b, &input)?;
    let heads = model.head_vars(g, &b, &st);
    let steps: Vec<usize> = (1..=model.config().t_pred).collect();
    let mut preds = Vec::with_capacity(eps.len());
    for e in eps {
        let z = model.latent_vars(g, &heads, e)?.map(|(_, z)| z);
        preds.push(model.decode_vars(g, &b, &heads, z, &steps)?);
    }
    let mut loss = if preds.len() == 1 {
        mse_vars(g, &preds[0], &sample.fut)?
    } else {
        variety_vars(g, &preds, &sample.fut)?
    };
    if kl_weight > 0.0 {
        if let (Some(mu), Some(lv)) = (heads.mu, heads.logvar) {
            let kl = kl_vars(g, mu, lv);
            let kl = g.scale(kl, kl_weight);
            loss = g.add(loss, kl);
        }
    }
    Ok(loss)
}

/// `ε` vectors for one training item: `K` draws for multimodal models, a
/// single zero vector (`z = μ`) otherwise, none without a latent path.
fn item_eps(model: &NapModel, cfg: &TrainConfig, keys: &[u64]) -> Vec<Vec<f64>> {
    let c = model.config();
    if !c.uses_latent() {
        return vec![Vec::new()];
    }
    if !c.multimodal {
        return vec![vec![0.0; c.d_z]];
    }
    let mut rng = stream_rng(cfg.seed, keys);
    (0..cfg.k_variety)
        .map(|_| gaussian_sample(&mut rng, c.d_z).into_data())
        .collect()
}

fn item_angle(cfg: &TrainConfig, keys: &[u64]) -> f64 {
    if !cfg.augment {
        return 0.0;
    }
    let steps = (360.0 / AUGMENT_STEP_DEGREES) as u32;
    let k = stream_rng(cfg.seed, keys).random_range(0..steps);
    (k as f64 * AUGMENT_STEP_DEGREES).to_radians()
}

/// Sum of losses and gradients over `idx`, visited in order.
fn chunk_grads(model: &NapModel, set: &TrainSet, cfg: &TrainConfig, epoch: usize, batch: usize, idx: &[(usize, usize)]) -> Result<(f64, Gradients)> {
    let mut grads = model.params().zero_gradients();
    let mut total = 0.0;
    for &(pos, i) in idx {
        let item = &set.items[i];
        set.check(item)?;
        let keys = [epoch as u64, batch as u64, pos as u64];
        let angle = item_angle(cfg, &[AUGMENT_STREAM, keys[0], keys[1], keys[2]]);
        let eps = item_eps(model, cfg, &[EPS_STREAM, keys[0], keys[1], keys[2]]);
        let mut g = Graph::with_params(model.params());
        let loss = sample_loss_vars(&mut g, model, item, angle, &eps, cfg.kl_weight)?;
        let v = g.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at epoch {epoch}, batch {batch}, scene `{}`, pedestrian {}",
                item.sample.scene_id, item.sample.ped_id
            )));
        }
        g.backward_into(loss, &mut grads)?;
        total += v;
    }
    Ok((total, grads))
}

/// One pass over `set` in a seeded order: per batch, mean loss gradient,
/// global-norm clipping, one Adam step.
pub fn train_epoch(model: &mut NapModel, set: &TrainSet, cfg: &TrainConfig, epoch: usize) -> Result<EpochStats> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut stream_rng(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let (mut loss_sum, mut norm_sum, mut batches) = (0.0, 0.0, 0usize);
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        let indexed: Vec<(usize, usize)> = batch.iter().copied().enumerate().collect();
        let parts: Vec<(f64, Gradients)> = indexed
            .par_chunks(CHUNK)
            .map(|c| chunk_grads(model, set, cfg, epoch, b, c))
            .collect::<Result<_>>()?;
        let mut grads = model.params().zero_gradients();
        let mut batch_loss = 0.0;
        for (l, g) in &parts {
            batch_loss += l;
            grads.add_assign(g);
        }
        grads.scale(1.0 / batch.len() as f64);
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("gradient at epoch {epoch}, batch {b}")));
        }
        let norm = grads.clip_global_norm(cfg.clip_norm);
        let store = model.params_mut();
        store.zero_grad();
        store.accumulate(&grads)?;
        adam_step(store, &adam)?;
        loss_sum += batch_loss;
        norm_sum += norm;
        batches += 1;
    }
    Ok(EpochStats {
        epoch,
        loss: loss_sum / set.len() as f64,
        grad_norm: norm_sum / batches as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `cfg.epochs` epochs, numbered from 1, calling `on_epoch` after each.
pub fn fit(model: &mut NapModel, set: &TrainSet, cfg: &TrainConfig, log: &mut TrainLog, mut on_epoch: impl FnMut(&EpochStats)) -> Result<()> {
    for epoch in 1..=cfg.epochs {
        let stats = train_epoch(model, set, cfg, epoch)?;
        on_epoch(&stats);
        log.entries.push(stats);
    }
    Ok(())
}

/// Mean loss over `set` without updating anything (no augmentation).
pub fn evaluate_loss(model: &NapModel, set: &TrainSet, cfg: &TrainConfig) -> Result<f64> {
    let plain = TrainConfig {
        augment: false,
        ..cfg.clone()
    };
    let indexed: Vec<(usize, usize)> = (0..set.len()).map(|i| (i, i)).collect();
    let parts: Vec<f64> = indexed
        .par_chunks(CHUNK)
        .map(|c| {
            let mut total = 0.0;
            for &(pos, i) in c {
                let eps = item_eps(model, &plain, &[EPS_STREAM, u64::MAX, 0, pos as u64]);
                let mut g = Graph::with_params(model.params());
                let l = sample_loss_vars(&mut g, model, &set.items[i], 0.0, &eps, plain.kl_weight)?;
                total += g.scalar(l);
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() / set.len().max(1) as f64)
}
