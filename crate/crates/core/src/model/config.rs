use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which context paths feed the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Personal and interaction contexts plus the latent variable.
    Full,
    /// Personal context only.
    P,
    /// Interaction context from trajectory, social and scene features.
    Iss,
    /// Interaction context without the scene feature.
    Isg,
    /// Interaction context without the social feature.
    Isc,
}

impl Variant {
    pub const ABLATIONS: [Variant; 4] = [Variant::P, Variant::Iss, Variant::Isg, Variant::Isc];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "NAP",
            Variant::P => "NAP-P",
            Variant::Iss => "NAP-ISS",
            Variant::Isg => "NAP-ISg",
            Variant::Isc => "NAP-ISc",
        }
    }

    pub fn uses_personal(self) -> bool {
        matches!(self, Variant::Full | Variant::P)
    }

    pub fn uses_interaction(self) -> bool {
        !matches!(self, Variant::P)
    }

    pub fn uses_social(self) -> bool {
        matches!(self, Variant::Full | Variant::Iss | Variant::Isg)
    }

    pub fn uses_scene(self) -> bool {
        matches!(self, Variant::Full | Variant::Iss | Variant::Isc)
    }

    /// Ablation variants are single-prediction models without `z`.
    pub fn uses_latent(self) -> bool {
        matches!(self, Variant::Full)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "nap" => Ok(Variant::Full),
            "p" | "nap-p" => Ok(Variant::P),
            "iss" | "nap-iss" => Ok(Variant::Iss),
            "isg" | "nap-isg" => Ok(Variant::Isg),
            "isc" | "nap-isc" => Ok(Variant::Isc),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::P => "p",
            Variant::Iss => "iss",
            Variant::Isg => "isg",
            Variant::Isc => "isc",
        })
    }
}

/// Decoder family. `Ar` is the reference recurrent decoder that feeds each
/// prediction back in as the next input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Nar,
    Ar,
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nar" => Ok(DecoderKind::Nar),
            "ar" => Ok(DecoderKind::Ar),
            other => Err(Error::Config(format!("unknown decoder `{other}`"))),
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::Nar => "nar",
            DecoderKind::Ar => "ar",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NapConfig {
    pub d_emb: usize,
    /// Trajectory LSTM hidden size.
    pub d_h: usize,
    /// Social LSTM hidden size.
    pub d_g: usize,
    /// Scene feature size.
    pub d_s: usize,
    /// Per-step interaction context size.
    pub d_c: usize,
    /// Personal context size.
    pub d_p: usize,
    pub d_z: usize,
    /// Graph convolution output size.
    pub d_gcn: usize,
    pub t_obs: usize,
    pub t_pred: usize,
    pub gcn_layers: usize,
    /// Hidden widths of the interaction MLP.
    pub mlp_b_hidden: [usize; 2],
    /// Scene crop side in cells.
    pub crop: usize,
    pub channels: usize,
    pub variant: Variant,
    pub multimodal: bool,
    pub k: usize,
    pub decoder: DecoderKind,
}

impl Default for NapConfig {
    fn default() -> Self {
        NapConfig {
            d_emb: 32,
            d_h: 32,
            d_g: 32,
            d_s: 32,
            d_c: 32,
            d_p: 32,
            d_z: 16,
            d_gcn: 32,
            t_obs: 8,
            t_pred: 12,
            gcn_layers: 1,
            mlp_b_hidden: [128, 128],
            crop: 16,
            channels: 1,
            variant: Variant::Full,
            multimodal: false,
            k: 1,
            decoder: DecoderKind::Nar,
        }
    }
}

pub const CONFIG_KEYS: [&str; 18] = [
    "d_emb",
    "d_h",
    "d_g",
    "d_s",
    "d_c",
    "d_p",
    "d_z",
    "d_gcn",
    "t_obs",
    "t_pred",
    "gcn_layers",
    "mlp_b_hidden",
    "crop",
    "channels",
    "variant",
    "multimodal",
    "k",
    "decoder",
];

fn parse_num(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` expects a non-negative integer, got `{v}`")))
}

pub(crate) fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects true/false, got `{v}`"))),
    }
}

impl NapConfig {
    /// A tiny configuration for gradient checks and unit tests.
    pub fn tiny() -> Self {
        NapConfig {
            d_emb: 3,
            d_h: 3,
            d_g: 2,
            d_s: 2,
            d_c: 2,
            d_p: 2,
            d_z: 2,
            d_gcn: 2,
            t_obs: 3,
            t_pred: 4,
            mlp_b_hidden: [4, 3],
            crop: 6,
            ..NapConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_emb", self.d_emb),
            ("d_h", self.d_h),
            ("d_g", self.d_g),
            ("d_s", self.d_s),
            ("d_c", self.d_c),
            ("d_p", self.d_p),
            ("d_z", self.d_z),
            ("d_gcn", self.d_gcn),
            ("t_obs", self.t_obs),
            ("t_pred", self.t_pred),
            ("mlp_b_hidden", self.mlp_b_hidden[0]),
            ("mlp_b_hidden", self.mlp_b_hidden[1]),
            ("crop", self.crop),
            ("channels", self.channels),
            ("k", self.k),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        if self.gcn_layers != 1 {
            return Err(Error::Config("only a single graph convolution layer is supported".into()));
        }
        if self.t_obs < 2 {
            return Err(Error::Config("`t_obs` must be at least 2".into()));
        }
        if self.multimodal && !self.variant.uses_latent() {
            return Err(Error::Config(format!(
                "variant {} has no latent variable and cannot be multimodal",
                self.variant
            )));
        }
        if !self.multimodal && self.k != 1 {
            return Err(Error::Config("`k` must be 1 in single-prediction mode".into()));
        }
        Ok(())
    }

    pub fn uses_latent(&self) -> bool {
        self.variant.uses_latent()
    }

    /// Width of `h ⊕ g ⊕ s` for this variant.
    pub fn fused_dim(&self) -> usize {
        let v = self.variant;
        self.d_h + if v.uses_social() { self.d_g } else { 0 } + if v.uses_scene() { self.d_s } else { 0 }
    }

    /// Width of the decoder input `c_t ⊕ c_p ⊕ z`.
    pub fn decoder_in_dim(&self) -> usize {
        let v = self.variant;
        (if v.uses_interaction() { self.d_c } else { 0 })
            + if v.uses_personal() { self.d_p } else { 0 }
            + if v.uses_latent() { self.d_z } else { 0 }
    }

    /// `key = value` pairs in canonical order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "d_emb" => self.d_emb.to_string(),
                    "d_h" => self.d_h.to_string(),
                    "d_g" => self.d_g.to_string(),
                    "d_s" => self.d_s.to_string(),
                    "d_c" => self.d_c.to_string(),
                    "d_p" => self.d_p.to_string(),
                    "d_z" => self.d_z.to_string(),
                    "d_gcn" => self.d_gcn.to_string(),
                    "t_obs" => self.t_obs.to_string(),
                    "t_pred" => self.t_pred.to_string(),
                    "gcn_layers" => self.gcn_layers.to_string(),
                    "mlp_b_hidden" => format!("{},{}", self.mlp_b_hidden[0], self.mlp_b_hidden[1]),
                    "crop" => self.crop.to_string(),
                    "channels" => self.channels.to_string(),
                    "variant" => self.variant.to_string(),
                    "multimodal" => self.multimodal.to_string(),
                    "k" => self.k.to_string(),
                    "decoder" => self.decoder.to_string(),
                    _ => unreachable!(),
                };
                (k, v)
            })
            .collect()
    }

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys that
    /// do not belong to the model.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "d_emb" => self.d_emb = parse_num(key, value)?,
            "d_h" => self.d_h = parse_num(key, value)?,
            "d_g" => self.d_g = parse_num(key, value)?,
            "d_s" => self.d_s = parse_num(key, value)?,
            "d_c" => self.d_c = parse_num(key, value)?,
            "d_p" => self.d_p = parse_num(key, value)?,
            "d_z" => self.d_z = parse_num(key, value)?,
            "d_gcn" => self.d_gcn = parse_num(key, value)?,
            "t_obs" => self.t_obs = parse_num(key, value)?,
            "t_pred" => self.t_pred = parse_num(key, value)?,
            "gcn_layers" => self.gcn_layers = parse_num(key, value)?,
            "mlp_b_hidden" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::Config(format!("`mlp_b_hidden` expects two widths, got `{value}`")));
                }
                self.mlp_b_hidden = [parse_num(key, parts[0])?, parse_num(key, parts[1])?];
            }
            "crop" => self.crop = parse_num(key, value)?,
            "channels" => self.channels = parse_num(key, value)?,
            "variant" => self.variant = value.parse()?,
            "multimodal" => self.multimodal = parse_bool(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "decoder" => self.decoder = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parses `key = value` lines. Unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = NapConfig::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected `key = value`, got `{line}`")))?;
            if !cfg.set(k.trim(), v.trim())? {
                return Err(Error::Config(format!("unknown model key `{}`", k.trim())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
