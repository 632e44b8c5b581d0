use rayon::prelude::*;

use crate::dataio::Point;
use crate::error::{Error, Result};
use crate::model::config::{DecoderKind, NapConfig, Variant};
use crate::numeric::layers::{conv_net_forward, graph_conv_step, lstm_step, ConvNetVars, LstmVars};
use crate::numeric::layers::{CONV1_CHANNELS, CONV2_CHANNELS, CONV_KERNEL};
use crate::numeric::{gaussian_sample, stream_rng, Graph, ParamId, ParamStore, Precision, SampleRng, Tensor, Var};

/// Stream key for weight initialisation.
const INIT_STREAM: u64 = 0x1417;

/// What the encoders see for one pedestrian: normalized observed track,
/// per-step neighbour positions in the same frame, and the scene crop.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub obs: &'a [Point],
    pub neighbors: &'a [Vec<Point>],
    pub crop: &'a Tensor,
}

/// `h`, `g`, `s` at the last observed step. Disabled features are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedState {
    pub h: Tensor,
    pub g: Tensor,
    pub s: Tensor,
}

/// Personal context and the per-step interaction contexts. Disabled parts
/// are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextSet {
    pub c_p: Tensor,
    pub c_t: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentDraw {
    pub mu: Tensor,
    pub sigma: Tensor,
    pub z: Tensor,
    pub eps: Tensor,
}

/// `K` predicted tracks for one pedestrian in its normalized frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSet {
    pub ped_id: i64,
    /// 1-based prediction steps, in the order rows appear in each sample.
    pub steps: Vec<usize>,
    pub samples: Vec<Vec<Point>>,
    /// Empty for models without a latent variable.
    pub latents: Vec<LatentDraw>,
    pub norm_offset: Point,
    pub norm_rotation: f64,
}

impl ForecastSet {
    pub fn k(&self) -> usize {
        self.samples.len()
    }

    /// Samples mapped back to world coordinates.
    pub fn world_samples(&self) -> Vec<Vec<Point>> {
        let (sin, cos) = (-self.norm_rotation).sin_cos();
        self.samples
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&p| {
                        let p = if self.norm_rotation != 0.0 {
                            [cos * p[0] - sin * p[1], sin * p[0] + cos * p[1]]
                        } else {
                            p
                        };
                        [p[0] + self.norm_offset[0], p[1] + self.norm_offset[1]]
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Lstm {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Scene {
    conv1_w: ParamId,
    conv1_b: ParamId,
    conv2_w: ParamId,
    conv2_b: ParamId,
    fc: Affine,
}

#[derive(Clone, Copy, Debug)]
struct Ar {
    emb: Affine,
    lstm: Lstm,
    init: Affine,
}

#[derive(Clone, Debug)]
struct Ids {
    emb: Affine,
    enc: Lstm,
    gcn: Option<Affine>,
    social: Option<Lstm>,
    scene: Option<Scene>,
    pcg: Option<Affine>,
    icg: Option<[Affine; 3]>,
    mu: Option<Affine>,
    logvar: Option<Affine>,
    ar: Option<Ar>,
    out: Affine,
}

/// Parameter handles bound to one graph.
#[derive(Clone, Copy, Debug)]
struct BoundAffine {
    w: Var,
    b: Var,
    rows: usize,
}

impl BoundAffine {
    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        g.affine(self.w, x, Some(self.b), self.rows)
    }
}

/// The model's parameters as graph variables.
pub struct Bound {
    emb: BoundAffine,
    enc: LstmVars,
    gcn: Option<BoundAffine>,
    social: Option<LstmVars>,
    scene: Option<ConvNetVars>,
    pcg: Option<BoundAffine>,
    icg: Option<[BoundAffine; 3]>,
    mu: Option<BoundAffine>,
    logvar: Option<BoundAffine>,
    ar: Option<(BoundAffine, LstmVars, BoundAffine)>,
    out: BoundAffine,
}

/// Graph handles for the encoder outputs.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h: Var,
    pub g: Option<Var>,
    pub s: Option<Var>,
    pub fused: Var,
}

/// Graph handles for everything computed once per pedestrian.
#[derive(Clone, Debug)]
pub struct HeadVars {
    pub c_p: Option<Var>,
    pub c_t: Vec<Var>,
    pub mu: Option<Var>,
    pub logvar: Option<Var>,
    pub ar_h0: Option<Var>,
}

/// The full network: configuration plus named parameters. Submodules that
/// the variant does not use have no parameters at all.
#[derive(Clone, Debug)]
pub struct NapModel {
    config: NapConfig,
    params: ParamStore,
    ids: Ids,
}

impl NapModel {
    /// Fresh model with seeded uniform(±1/√fan_in) weights and zero biases.
    pub fn new(config: NapConfig, seed: u64, precision: Precision) -> Result<Self> {
        config.validate()?;
        if config.decoder == DecoderKind::Ar && !config.variant.uses_interaction() {
            return Err(Error::Config("the recurrent decoder needs an interaction path".into()));
        }
        let c = &config;
        let v = c.variant;
        let mut rng = stream_rng(seed, &[INIT_STREAM]);
        let mut p = ParamStore::new(precision);
        let rng = &mut rng;

        let affine = |p: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut SampleRng| -> Result<Affine> {
            let w = p.insert_uniform(&format!("{name}.w"), &[rows, cols], cols, rng)?;
            let b = p.insert_zeros(&format!("{name}.b"), &[rows])?;
            Ok(Affine { w, b })
        };
        let lstm = |p: &mut ParamStore, name: &str, n: usize, d: usize, rng: &mut SampleRng| -> Result<Lstm> {
            Ok(Lstm {
                w_ih: p.insert_uniform(&format!("{name}.w_ih"), &[4 * d, n], n, rng)?,
                w_hh: p.insert_uniform(&format!("{name}.w_hh"), &[4 * d, d], d, rng)?,
                bias: p.insert_zeros(&format!("{name}.b"), &[4 * d])?,
            })
        };

        let emb = affine(&mut p, "traj.emb", c.d_emb, 2, rng)?;
        let enc = lstm(&mut p, "traj.lstm", c.d_emb, c.d_h, rng)?;
        let (gcn, social) = if v.uses_social() {
            (
                Some(affine(&mut p, "social.gcn", c.d_gcn, 2, rng)?),
                Some(lstm(&mut p, "social.lstm", c.d_gcn, c.d_g, rng)?),
            )
        } else {
            (None, None)
        };
        let scene = if v.uses_scene() {
            let k2 = CONV_KERNEL * CONV_KERNEL;
            let conv1_w = p.insert_uniform("scene.conv1.w", &[CONV1_CHANNELS, c.channels, CONV_KERNEL, CONV_KERNEL], c.channels * k2, rng)?;
            let conv1_b = p.insert_zeros("scene.conv1.b", &[CONV1_CHANNELS])?;
            let conv2_w = p.insert_uniform("scene.conv2.w", &[CONV2_CHANNELS, CONV1_CHANNELS, CONV_KERNEL, CONV_KERNEL], CONV1_CHANNELS * k2, rng)?;
            let conv2_b = p.insert_zeros("scene.conv2.b", &[CONV2_CHANNELS])?;
            let fc = affine(&mut p, "scene.fc", c.d_s, CONV2_CHANNELS, rng)?;
            Some(Scene {
                conv1_w,
                conv1_b,
                conv2_w,
                conv2_b,
                fc,
            })
        } else {
            None
        };
        let pcg = if v.uses_personal() {
            Some(affine(&mut p, "pcg", c.d_p, c.d_h, rng)?)
        } else {
            None
        };
        let fused = c.fused_dim();
        let icg = if v.uses_interaction() && c.decoder == DecoderKind::Nar {
            let [h1, h2] = c.mlp_b_hidden;
            Some([
                affine(&mut p, "icg.l1", h1, fused, rng)?,
                affine(&mut p, "icg.l2", h2, h1, rng)?,
                affine(&mut p, "icg.l3", c.t_pred * c.d_c, h2, rng)?,
            ])
        } else {
            None
        };
        let (mu, logvar) = if v.uses_latent() {
            (
                Some(affine(&mut p, "latent.mu", c.d_z, fused, rng)?),
                Some(affine(&mut p, "latent.logvar", c.d_z, fused, rng)?),
            )
        } else {
            (None, None)
        };
        let ar = if c.decoder == DecoderKind::Ar {
            Some(Ar {
                emb: affine(&mut p, "ar.emb", c.d_emb, 2, rng)?,
                lstm: lstm(&mut p, "ar.lstm", c.d_emb, c.d_c, rng)?,
                init: affine(&mut p, "ar.init", c.d_c, fused, rng)?,
            })
        } else {
            None
        };
        let out = affine(&mut p, "out", 2, c.decoder_in_dim(), rng)?;

        Ok(NapModel {
            config,
            params: p,
            ids: Ids {
                emb,
                enc,
                gcn,
                social,
                scene,
                pcg,
                icg,
                mu,
                logvar,
                ar,
                out,
            },
        })
    }

    /// Wraps an existing parameter store, which must hold exactly the
    /// parameters `config` calls for, with matching shapes.
    pub fn from_params(config: NapConfig, params: ParamStore) -> Result<Self> {
        let template = NapModel::new(config, 0, params.precision())?;
        if template.params.names() != params.names() {
            let want: Vec<_> = template.params.names().to_vec();
            return Err(Error::Checkpoint(format!(
                "parameter set does not match the configuration (expected {} tensors: {})",
                want.len(),
                want.join(", ")
            )));
        }
        for id in template.params.ids() {
            let (a, b) = (template.params.value(id).shape(), params.value(id).shape());
            if a != b {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {b:?}, configuration implies {a:?}",
                    params.name(id)
                )));
            }
        }
        Ok(NapModel {
            ids: template.ids,
            config: template.config,
            params,
        })
    }

    pub fn config(&self) -> &NapConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// A model of another variant. Parameters with the same name and shape
    /// are carried over; the rest are freshly initialised from `seed`.
    pub fn apply_variant(&self, variant: Variant, seed: u64) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.variant = variant;
        if !variant.uses_latent() {
            cfg.multimodal = false;
            cfg.k = 1;
        }
        let mut out = NapModel::new(cfg, seed, self.params.precision())?;
        for id in out.params.ids().collect::<Vec<_>>() {
            let name = out.params.name(id).to_string();
            if let Some(src) = self.params.id(&name) {
                let val = self.params.value(src);
                if val.shape() == out.params.value(id).shape() {
                    out.params.set_value(id, val.clone())?;
                }
            }
        }
        Ok(out)
    }

    // ---- graph level ------------------------------------------------------

    /// Registers every parameter on `g` once.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let c = &self.config;
        let aff = |g: &mut Graph, a: Affine, rows: usize| BoundAffine {
            w: g.param(a.w),
            b: g.param(a.b),
            rows,
        };
        let lstm = |g: &mut Graph, l: Lstm, hidden: usize| LstmVars {
            w_ih: g.param(l.w_ih),
            w_hh: g.param(l.w_hh),
            bias: g.param(l.bias),
            hidden,
        };
        let ids = &self.ids;
        Bound {
            emb: aff(g, ids.emb, c.d_emb),
            enc: lstm(g, ids.enc, c.d_h),
            gcn: ids.gcn.map(|a| aff(g, a, c.d_gcn)),
            social: ids.social.map(|l| lstm(g, l, c.d_g)),
            scene: ids.scene.map(|s| ConvNetVars {
                conv1_w: g.param(s.conv1_w),
                conv1_b: g.param(s.conv1_b),
                conv2_w: g.param(s.conv2_w),
                conv2_b: g.param(s.conv2_b),
                fc_w: g.param(s.fc.w),
                fc_b: g.param(s.fc.b),
                out_dim: c.d_s,
            }),
            pcg: ids.pcg.map(|a| aff(g, a, c.d_p)),
            icg: ids.icg.map(|[a, b, d]| {
                [
                    aff(g, a, c.mlp_b_hidden[0]),
                    aff(g, b, c.mlp_b_hidden[1]),
                    aff(g, d, c.t_pred * c.d_c),
                ]
            }),
            mu: ids.mu.map(|a| aff(g, a, c.d_z)),
            logvar: ids.logvar.map(|a| aff(g, a, c.d_z)),
            ar: ids
                .ar
                .map(|a| (aff(g, a.emb, c.d_emb), lstm(g, a.lstm, c.d_c), aff(g, a.init, c.d_c))),
            out: aff(g, ids.out, 2),
        }
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        let c = &self.config;
        if input.obs.len() != c.t_obs {
            return Err(Error::shape("encode", format!("{} observed steps", c.t_obs), input.obs.len().to_string()));
        }
        if input.neighbors.len() != c.t_obs {
            return Err(Error::shape(
                "encode",
                format!("{} neighbour lists", c.t_obs),
                input.neighbors.len().to_string(),
            ));
        }
        let finite = input
            .obs
            .iter()
            .chain(input.neighbors.iter().flatten())
            .all(|p| p[0].is_finite() && p[1].is_finite());
        if !finite {
            return Err(Error::NonFinite("model input coordinates".into()));
        }
        if c.variant.uses_scene() {
            let want = [c.channels, c.crop, c.crop];
            if input.crop.shape() != want {
                return Err(Error::shape("encode_scene", format!("{want:?}"), format!("{:?}", input.crop.shape())));
            }
        }
        Ok(())
    }

    fn traj_vars(&self, g: &mut Graph, b: &Bound, obs: &[Point]) -> Var {
        let d = self.config.d_h;
        let mut h = g.zeros(d);
        let mut cell = g.zeros(d);
        for p in obs {
            let x = g.input(p);
            let e = b.emb.apply(g, x);
            let e = g.relu(e);
            (h, cell) = lstm_step(g, &b.enc, h, cell, e);
        }
        h
    }

    fn social_vars(&self, g: &mut Graph, b: &Bound, neighbors: &[Vec<Point>]) -> Option<Var> {
        let (gcn, lstm) = (b.gcn?, b.social?);
        let d = self.config.d_g;
        let mut h = g.zeros(d);
        let mut cell = g.zeros(d);
        for step in neighbors {
            let feats: Vec<Var> = step.iter().map(|p| g.input(p)).collect();
            let a = graph_conv_step(g, gcn.w, gcn.b, &feats, self.config.d_gcn);
            (h, cell) = lstm_step(g, &lstm, h, cell, a);
        }
        Some(h)
    }

    fn scene_vars(&self, g: &mut Graph, b: &Bound, crop: &Tensor) -> Option<Var> {
        let net = b.scene.as_ref()?;
        let c = &self.config;
        let x = g.input(crop.data());
        Some(conv_net_forward(g, net, x, c.channels, c.crop, c.crop))
    }

    /// Encoders on the graph.
    pub fn encode_vars(&self, g: &mut Graph, b: &Bound, input: &ModelInput) -> Result<StateVars> {
        self.check_input(input)?;
        let h = self.traj_vars(g, b, input.obs);
        let gs = self.social_vars(g, b, input.neighbors);
        let s = self.scene_vars(g, b, input.crop);
        let mut parts = vec![h];
        parts.extend(gs);
        parts.extend(s);
        let fused = g.concat(&parts);
        Ok(StateVars { h, g: gs, s, fused })
    }

    /// Context generators and latent heads on the graph.
    pub fn head_vars(&self, g: &mut Graph, b: &Bound, state: &StateVars) -> HeadVars {
        let c = &self.config;
        let c_p = b.pcg.map(|a| a.apply(g, state.h));
        let c_t = match b.icg {
            Some([l1, l2, l3]) => {
                let x = l1.apply(g, state.fused);
                let x = g.relu(x);
                let x = l2.apply(g, x);
                let x = g.relu(x);
                let all = l3.apply(g, x);
                (0..c.t_pred).map(|t| g.slice(all, t * c.d_c, c.d_c)).collect()
            }
            None => Vec::new(),
        };
        let mu = b.mu.map(|a| a.apply(g, state.fused));
        let logvar = b.logvar.map(|a| a.apply(g, state.fused));
        let ar_h0 = b.ar.map(|(_, _, init)| {
            let x = init.apply(g, state.fused);
            g.tanh(x)
        });
        HeadVars {
            c_p,
            c_t,
            mu,
            logvar,
            ar_h0,
        }
    }

    /// `z = μ + exp(½·logvar) ⊙ ε`, with the `(σ, z)` pair returned.
    pub fn latent_vars(&self, g: &mut Graph, heads: &HeadVars, eps: &[f64]) -> Result<Option<(Var, Var)>> {
        let (Some(mu), Some(lv)) = (heads.mu, heads.logvar) else {
            return Ok(None);
        };
        if eps.len() != self.config.d_z {
            return Err(Error::shape("latent_draw", self.config.d_z.to_string(), eps.len().to_string()));
        }
        let half = g.scale(lv, 0.5);
        let sigma = g.exp(half);
        if g.value(sigma).iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::NonFinite("latent sigma".into()));
        }
        let e = g.input(eps);
        let noise = g.mul(sigma, e);
        let z = g.add(mu, noise);
        Ok(Some((sigma, z)))
    }

    fn out_vars(&self, g: &mut Graph, b: &Bound, c_t: Option<Var>, c_p: Option<Var>, z: Option<Var>) -> Var {
        let parts: Vec<Var> = [c_t, c_p, z].into_iter().flatten().collect();
        let x = g.concat(&parts);
        b.out.apply(g, x)
    }

    /// Decoded positions for the requested 1-based steps, in request order.
    pub fn decode_vars(&self, g: &mut Graph, b: &Bound, heads: &HeadVars, z: Option<Var>, steps: &[usize]) -> Result<Vec<Var>> {
        let t_pred = self.config.t_pred;
        if let Some(&bad) = steps.iter().find(|&&t| t == 0 || t > t_pred) {
            return Err(Error::shape("decode", format!("step in 1..={t_pred}"), bad.to_string()));
        }
        match b.ar {
            None => Ok(steps
                .iter()
                .map(|&t| {
                    let c_t = heads.c_t.get(t - 1).copied();
                    self.out_vars(g, b, c_t, heads.c_p, z)
                })
                .collect()),
            Some((emb, lstm, _)) => {
                let last = steps.iter().copied().max().unwrap_or(0);
                let mut h = heads.ar_h0.expect("recurrent decoder without initial state");
                let mut cell = g.zeros(self.config.d_c);
                let mut prev = g.zeros(2);
                let mut rows = Vec::with_capacity(last);
                for _ in 0..last {
                    let e = emb.apply(g, prev);
                    let e = g.relu(e);
                    (h, cell) = lstm_step(g, &lstm, h, cell, e);
                    prev = self.out_vars(g, b, Some(h), heads.c_p, z);
                    rows.push(prev);
                }
                Ok(steps.iter().map(|&t| rows[t - 1]).collect())
            }
        }
    }

    // ---- value level ------------------------------------------------------

    fn expect_len(op: &'static str, t: &Tensor, n: usize) -> Result<()> {
        if t.rank() == 1 && t.len() == n {
            Ok(())
        } else {
            Err(Error::shape(op, format!("[{n}]"), format!("{:?}", t.shape())))
        }
    }

    /// Embedding + trajectory LSTM; returns the final hidden state.
    pub fn encode_trajectory(&self, obs: &[Point]) -> Result<Tensor> {
        if obs.len() != self.config.t_obs {
            return Err(Error::shape("encode_trajectory", self.config.t_obs.to_string(), obs.len().to_string()));
        }
        let mut g = Graph::with_params(&self.params);
        let b = self.bind(&mut g);
        let h = self.traj_vars(&mut g, &b, obs);
        g.check_finite()?;
        Ok(g.to_tensor(h))
    }

    /// Graph convolution per step followed by the social LSTM. Zero when the
    /// variant has no social path.
    pub fn encode_social(&self, neighbors: &[Vec<Point>]) -> Result<Tensor> {
        if neighbors.len() != self.config.t_obs {
            return Err(Error::shape("encode_social", self.config.t_obs.to_string(), neighbors.len().to_string()));
        }
        let mut g = Graph::with_params(&self.params);
        let b = self.bind(&mut g);
        match self.social_vars(&mut g, &b, neighbors) {
            Some(v) => {
                g.check_finite()?;
                Ok(g.to_tensor(v))
            }
            None => Ok(Tensor::zeros(&[self.config.d_g])),
        }
    }

    /// Scene CNN feature. Zero when the variant has no scene path.
    pub fn encode_scene(&self, crop: &Tensor) -> Result<Tensor> {
        let c = &self.config;
        if !c.variant.uses_scene() {
            return Ok(Tensor::zeros(&[c.d_s]));
        }
        let want = [c.channels, c.crop, c.crop];
        if crop.shape() != want {
            return Err(Error::shape("encode_scene", format!("{want:?}"), format!("{:?}", crop.shape())));
        }
        let mut g = Graph::with_params(&self.params);
        let b = self.bind(&mut g);
        let s = self.scene_vars(&mut g, &b, crop).expect("scene path");
        g.check_finite()?;
        Ok(g.to_tensor(s))
    }

    pub fn encode(&self, input: &ModelInput) -> Result<EncodedState> {
        let mut g = Graph::with_params(&self.params);
        let b = self.bind(&mut g);
        let st = self.encode_vars(&mut g, &b, input)?;
        g.check_finite()?;
        let c = &self.config;
        Ok(EncodedState {
            h: g.to_tensor(st.h),
            g: st.g.map(|v| g.to_tensor(v)).unwrap_or_else(|| Tensor::zeros(&[c.d_g])),
            s: st.s.map(|v| g.to_tensor(v)).unwrap_or_else(|| Tensor::zeros(&[c.d_s])),
        })
    }

    fn state_inputs(&self, g: &mut Graph, state: &EncodedState) -> Result<StateVars> {
        let c = &self.config;
        Self::expect_len("state.h", &state.h, c.d_h)?;
        Self::expect_len("state.g", &state.g, c.d_g)?;
        Self::expect_len("state.s", &state.s, c.d_s)?;
        let h = g.input(state.h.data());
        let gs = c.variant.uses_social().then(|| g.input(state.g.data()));
        let s = c.variant.uses_scene().then(|| g.input(state.s.data()));
        let mut parts = vec![h];
        parts.extend(gs);
        parts.extend(s);
        let fused = g.concat(&parts);
        Ok(StateVars { h, g: gs, s, fused })
    }

    /// Personal context `MLP_A(h)`; zero when the variant has none.
    pub fn personal_context(&self, h: &Tensor) -> Result<Tensor> {
        Self::expect_len("personal_context", h, self.config.d_h)?;
        let Some(pcg) = self.ids.pcg else {
            return Ok(Tensor::zeros(&[self.config.d_p]));
        };
        let mut g = Graph::with_params(&self.params);
        let x = g.input(h.data());
        let w = g.param(pcg.w);
        let bias = g.param(pcg.b);
        let y = g.affine(w, x, Some(bias), self.config.d_p);
        g.check_finite()?;
        Ok(g.to_tensor(y))
    }

    /// The `T_pred` interaction contexts, in time order. Zero when the
    /// variant has none.
    pub fn interaction_contexts(&self, state: &EncodedState) -> Result<Vec<Tensor>> {
        let c = &self.config;
        let mut g = Graph::with_params(&self.params);
        let b = self.bind(&mut g);
        let st = self.state_inputs(&mut g, state)?;
        let heads = self.head_vars(&mut g, &b, &st);
        g.check_finite()?;
        if heads.c_t.is_empty() {
            return Ok(vec![Tensor::zeros(&[c.d_c]); c.t_pred]);
        }
        Ok(heads.c_t.iter().map(|&v| g.to_tensor(v)).collect())
    }

    pub fn contexts(&self, state: &EncodedState) -> Result<ContextSet> {
        Ok(ContextSet {
            c_p: self.personal_context(&state.h)?,
            c_t: self.interaction_contexts(state)?,
        })
    }

    /// One reparameterised draw. Fails for variants without a latent path.
    pub fn latent_draw(&self, state: &EncodedState, eps: &Tensor) -> Result<LatentDraw> {
        if !self.config.uses_latent() {
            return Err(Error::Config(format!("variant {} has no latent variable", self.config.variant)));
        }
        let mut g = Graph::with_params(&self.params);
        let b = self.bind(&mut g);
        let st = self.state_inputs(&mut g, state)?;
        let heads = self.head_vars(&mut g, &b, &st);
        let (sigma, z) = self.latent_vars(&mut g, &heads, eps.data())?.expect("latent path");
        g.check_finite()?;
        Ok(LatentDraw {
            mu: g.to_tensor(heads.mu.expect("mu")),
            sigma: g.to_tensor(sigma),
            z: g.to_tensor(z),
            eps: eps.clone(),
        })
    }

    /// `MLP_out(c_t ⊕ c_p ⊕ z)` for one step. Parts the variant does not use
    /// are ignored.
    pub fn decode_step(&self, c_t: &Tensor, c_p: &Tensor, z: &Tensor) -> Result<Point> {
        let c = &self.config;
        let v = c.variant;
        let mut g = Graph::with_params(&self.params);
        let mut parts = Vec::with_capacity(3);
        if v.uses_interaction() {
            Self::expect_len("decode_step.c_t", c_t, c.d_c)?;
            parts.push(g.input(c_t.data()));
        }
        if v.uses_personal() {
            Self::expect_len("decode_step.c_p", c_p, c.d_p)?;
            parts.push(g.input(c_p.data()));
        }
        if v.uses_latent() {
            Self::expect_len("decode_step.z", z, c.d_z)?;
            parts.push(g.input(z.data()));
        }
        let x = g.concat(&parts);
        let w = g.param(self.ids.out.w);
        let bias = g.param(self.ids.out.b);
        let y = g.affine(w, x, Some(bias), 2);
        g.check_finite()?;
        let y = g.value(y);
        Ok([y[0], y[1]])
    }

    /// Forecasts the requested steps for each supplied `ε`. Models without a
    /// latent variable take a single empty `ε`. Everything up to the decoder
    /// is computed once; non-autoregressive steps are decoded independently
    /// and in parallel.
    pub fn forecast_with_eps(&self, input: &ModelInput, eps: &[Tensor], steps: &[usize]) -> Result<(Vec<Vec<Point>>, Vec<LatentDraw>)> {
        if eps.is_empty() {
            return Err(Error::Config("forecast needs at least one sample".into()));
        }
        let c = &self.config;
        let mut g = Graph::with_params(&self.params);
        let b = self.bind(&mut g);
        let st = self.encode_vars(&mut g, &b, input)?;
        let heads = self.head_vars(&mut g, &b, &st);
        let mut latents = Vec::new();
        let mut zs = Vec::new();
        for e in eps {
            match self.latent_vars(&mut g, &heads, e.data())? {
                Some((sigma, z)) => {
                    g.check_finite()?;
                    latents.push(LatentDraw {
                        mu: g.to_tensor(heads.mu.expect("mu")),
                        sigma: g.to_tensor(sigma),
                        z: g.to_tensor(z),
                        eps: e.clone(),
                    });
                    zs.push(Some(z));
                }
                None => zs.push(None),
            }
        }
        if c.decoder == DecoderKind::Ar {
            let mut samples = Vec::with_capacity(zs.len());
            for z in zs {
                let rows = self.decode_vars(&mut g, &b, &heads, z, steps)?;
                g.check_finite()?;
                samples.push(rows.iter().map(|&r| [g.value(r)[0], g.value(r)[1]]).collect());
            }
            return Ok((samples, latents));
        }
        if let Some(&bad) = steps.iter().find(|&&t| t == 0 || t > c.t_pred) {
            return Err(Error::shape("decode", format!("step in 1..={}", c.t_pred), bad.to_string()));
        }
        g.check_finite()?;
        let empty = Tensor::zeros(&[1]);
        let c_p = heads.c_p.map(|v| g.to_tensor(v)).unwrap_or_else(|| empty.clone());
        let c_t: Vec<Tensor> = heads.c_t.iter().map(|&v| g.to_tensor(v)).collect();
        let samples = (0..eps.len())
            .map(|k| {
                let z = latents.get(k).map(|l| &l.z).unwrap_or(&empty);
                steps
                    .par_iter()
                    .map(|&t| self.decode_step(c_t.get(t - 1).unwrap_or(&empty), &c_p, z))
                    .collect::<Result<Vec<Point>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((samples, latents))
    }

    /// `K` forecasts with `ε` drawn from `rng`, or the single mean forecast
    /// (`ε = 0`, `K = 1`) when the model is not multimodal.
    pub fn forecast(&self, input: &ModelInput, k: usize, rng: &mut SampleRng) -> Result<Vec<Vec<Point>>> {
        let eps = self.draw_eps(k, rng)?;
        let steps: Vec<usize> = (1..=self.config.t_pred).collect();
        Ok(self.forecast_with_eps(input, &eps, &steps)?.0)
    }

    /// The `ε` vectors `forecast` would use.
    pub fn draw_eps(&self, k: usize, rng: &mut SampleRng) -> Result<Vec<Tensor>> {
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let c = &self.config;
        if !c.uses_latent() {
            return Ok(vec![Tensor::zeros(&[1])]);
        }
        if !c.multimodal {
            return Ok(vec![Tensor::zeros(&[c.d_z])]);
        }
        Ok((0..k).map(|_| gaussian_sample(rng, c.d_z)).collect())
    }

    /// Mean forecast (`z = μ`) of the full horizon.
    pub fn forecast_mean(&self, input: &ModelInput) -> Result<Vec<Point>> {
        let c = &self.config;
        let eps = if c.uses_latent() {
            Tensor::zeros(&[c.d_z])
        } else {
            Tensor::zeros(&[1])
        };
        let steps: Vec<usize> = (1..=c.t_pred).collect();
        Ok(self.forecast_with_eps(input, &[eps], &steps)?.0.remove(0))
    }

    /// Forecast of a normalized sample packaged with its de-normalisation
    /// fields.
    pub fn forecast_sample(
        &self,
        sample: &crate::dataio::SequenceSample,
        crop: &Tensor,
        k: usize,
        rng: &mut SampleRng,
        steps: &[usize],
    ) -> Result<ForecastSet> {
        let input = ModelInput {
            obs: &sample.obs,
            neighbors: &sample.neighbors,
            crop,
        };
        let eps = self.draw_eps(k, rng)?;
        let (samples, latents) = self.forecast_with_eps(&input, &eps, steps)?;
        Ok(ForecastSet {
            ped_id: sample.ped_id,
            steps: steps.to_vec(),
            samples,
            latents,
            norm_offset: sample.norm_offset,
            norm_rotation: sample.norm_rotation,
        })
    }
}

#[cfg(test)]
#[path = "tests.rs"]
mod tests;
