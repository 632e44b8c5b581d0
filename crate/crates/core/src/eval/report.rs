use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataio::{to_world, Point, PreparedSample};
use crate::error::{Error, Result};
use crate::model::NapModel;
use crate::numeric::stream_rng;

use super::metrics::{ade, best_of_k_points, fde};

/// Stream key for the `ε` draws of evaluation forecasts.
const EVAL_STREAM: u64 = 0xe7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Single,
    BestOfK,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::BestOfK => "best-of-K",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "best-of-K" => Ok(Mode::BestOfK),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

/// Something that forecasts a whole horizon for a prepared sample.
#[derive(Clone, Copy)]
pub enum Method<'a> {
    ConstPosition,
    ConstVelocity,
    Model { label: &'a str, model: &'a NapModel },
}

impl Method<'_> {
    pub fn label(&self) -> &str {
        match self {
            Method::ConstPosition => "CP",
            Method::ConstVelocity => "CV",
            Method::Model { label, .. } => label,
        }
    }

    /// Best-of-K only applies to multimodal models; everything else gives
    /// one forecast.
    pub fn mode(&self, k: usize) -> Mode {
        match self {
            Method::Model { model, .. } if model.config().multimodal && k > 1 => Mode::BestOfK,
            _ => Mode::Single,
        }
    }

    /// World-frame forecasts of `item`. `index` keys the `ε` stream so that
    /// results do not depend on scheduling.
    pub fn forecast(&self, item: &PreparedSample, t_pred: usize, k: usize, seed: u64, index: u64) -> Result<Vec<Vec<Point>>> {
        let s = &item.sample;
        match self {
            Method::ConstPosition => Ok(vec![const_position(&s.obs, t_pred)?
                .into_iter()
                .map(|p| to_world(s, p))
                .collect()]),
            Method::ConstVelocity => Ok(vec![const_velocity(&s.obs, t_pred)?
                .into_iter()
                .map(|p| to_world(s, p))
                .collect()]),
            Method::Model { model, .. } => {
                if model.config().t_pred != t_pred {
                    return Err(Error::Config(format!(
                        "model predicts {} steps, data has {t_pred}",
                        model.config().t_pred
                    )));
                }
                let mut rng = stream_rng(seed, &[EVAL_STREAM, index]);
                let steps: Vec<usize> = (1..=t_pred).collect();
                Ok(model.forecast_sample(s, &item.crop, k, &mut rng, &steps)?.world_samples())
            }
        }
    }
}

/// Repeats the last observed position.
pub fn const_position(obs: &[Point], t_pred: usize) -> Result<Vec<Point>> {
    let last = *obs.last().ok_or_else(|| Error::Data("empty observation".into()))?;
    Ok(vec![last; t_pred])
}

/// Extrapolates the last observed displacement.
pub fn const_velocity(obs: &[Point], t_pred: usize) -> Result<Vec<Point>> {
    let [.., a, b] = obs else {
        return Err(Error::Data("constant velocity needs two observations".into()));
    };
    let v = [b[0] - a[0], b[1] - a[1]];
    Ok((1..=t_pred).map(|t| [b[0] + v[0] * t as f64, b[1] + v[1] * t as f64]).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneScore {
    pub scene: String,
    pub ade: f64,
    pub fde: f64,
    /// Windows averaged; zero when parsed back from a report file.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodScores {
    pub method: String,
    pub mode: Mode,
    pub k: usize,
    pub t_pred: usize,
    pub scenes: Vec<SceneScore>,
}

impl MethodScores {
    /// Unweighted mean over scenes.
    pub fn average(&self) -> (f64, f64) {
        let n = self.scenes.len() as f64;
        let a = self.scenes.iter().map(|s| s.ade).sum::<f64>() / n;
        let f = self.scenes.iter().map(|s| s.fde).sum::<f64>() / n;
        (a, f)
    }

    pub fn scene(&self, id: &str) -> Option<&SceneScore> {
        self.scenes.iter().find(|s| s.scene == id)
    }

    /// Delimited form with header `scene,ade,fde,mode,K,T_pred` and a
    /// trailing `average` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,ade,fde,mode,K,T_pred\n");
        let (a, f) = self.average();
        let rows = self.scenes.iter().map(|s| (s.scene.as_str(), s.ade, s.fde));
        for (scene, a, f) in rows.chain(std::iter::once((AVERAGE, a, f))) {
            out.push_str(&format!("{scene},{a},{f},{},{},{}\n", self.mode, self.k, self.t_pred));
        }
        out
    }

    /// Parses [`MethodScores::to_csv`] output. The average row is checked
    /// against the scene rows rather than stored.
    pub fn from_csv(method: &str, text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Config(format!("report line {line}: {msg}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "scene,ade,fde,mode,K,T_pred")) => {}
            _ => return Err(bad(1, "expected header `scene,ade,fde,mode,K,T_pred`".into())),
        }
        let mut scenes = Vec::new();
        let mut meta: Option<(Mode, usize, usize)> = None;
        let mut avg = None;
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            let [scene, a, fd, mode, k, t] = f[..] else {
                return Err(bad(i + 1, format!("expected 6 fields, got {}", f.len())));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, format!("bad number `{s}`")));
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, format!("bad integer `{s}`")));
            let m = (mode.parse::<Mode>()?, int(k)?, int(t)?);
            if meta.is_some_and(|x| x != m) {
                return Err(bad(i + 1, "mode, K or T_pred changes between rows".into()));
            }
            meta = Some(m);
            if scene == AVERAGE {
                avg = Some((num(a)?, num(fd)?));
            } else {
                scenes.push(SceneScore {
                    scene: scene.to_string(),
                    ade: num(a)?,
                    fde: num(fd)?,
                    samples: 0,
                });
            }
        }
        let (mode, k, t_pred) = meta.ok_or_else(|| bad(2, "no rows".into()))?;
        let out = MethodScores {
            method: method.to_string(),
            mode,
            k,
            t_pred,
            scenes,
        };
        let (a, f) = avg.ok_or_else(|| Error::Config("report has no average row".into()))?;
        let (ca, cf) = out.average();
        if (a - ca).abs() > 1e-9 || (f - cf).abs() > 1e-9 {
            return Err(Error::Config("average row disagrees with scene rows".into()));
        }
        Ok(out)
    }
}

pub const AVERAGE: &str = "average";

/// Per-window `(ADE, FDE)` of one method on one scene, in window order.
pub fn score_windows(method: &Method, items: &[PreparedSample], t_pred: usize, k: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let s = &item.sample;
            if s.fut.len() != t_pred {
                return Err(Error::Data(format!("window has {} future steps, expected {t_pred}", s.fut.len())));
            }
            let gt: Vec<Point> = s.fut.iter().map(|&p| to_world(s, p)).collect();
            let preds = method.forecast(item, t_pred, k, seed, i as u64)?;
            if preds.len() == 1 {
                Ok((ade(&preds[0], &gt)?, fde(&preds[0], &gt)?))
            } else {
                best_of_k_points(&preds, &gt)
            }
        })
        .collect()
}

/// Scores one method on every scene, in the given scene order.
pub fn evaluate_method(method: &Method, scenes: &[(String, Vec<PreparedSample>)], t_pred: usize, k: usize, seed: u64) -> Result<MethodScores> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if scenes.is_empty() {
        return Err(Error::Data("no scenes to evaluate".into()));
    }
    let mut out = Vec::with_capacity(scenes.len());
    for (id, items) in scenes {
        if items.is_empty() {
            return Err(Error::Data(format!("scene `{id}` has no complete windows")));
        }
        let errs = score_windows(method, items, t_pred, k, seed)?;
        let n = errs.len() as f64;
        out.push(SceneScore {
            scene: id.clone(),
            ade: errs.iter().map(|e| e.0).sum::<f64>() / n,
            fde: errs.iter().map(|e| e.1).sum::<f64>() / n,
            samples: errs.len(),
        });
    }
    let mode = method.mode(k);
    Ok(MethodScores {
        method: method.label().to_string(),
        mode,
        k: if mode == Mode::Single { 1 } else { k },
        t_pred,
        scenes: out,
    })
}

/// Scores of several methods over the same scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub t_pred: usize,
    pub methods: Vec<MethodScores>,
}

impl MetricsReport {
    pub fn evaluate(methods: &[Method], scenes: &[(String, Vec<PreparedSample>)], t_pred: usize, k: usize, seed: u64) -> Result<Self> {
        let methods = methods
            .iter()
            .map(|m| evaluate_method(m, scenes, t_pred, k, seed))
            .collect::<Result<_>>()?;
        Ok(MetricsReport { t_pred, methods })
    }

    pub fn method(&self, label: &str) -> Option<&MethodScores> {
        self.methods.iter().find(|m| m.method == label)
    }

    /// Aligned text table: one row per scene plus an unweighted average
    /// row, one `ADE / FDE` column per method.
    pub fn table(&self) -> String {
        let mut header = vec!["Scene".to_string()];
        for m in &self.methods {
            header.push(match m.mode {
                Mode::Single => m.method.clone(),
                Mode::BestOfK => format!("{} (best of {})", m.method, m.k),
            });
        }
        let mut rows = vec![header];
        let scenes: Vec<&str> = self
            .methods
            .first()
            .map(|m| m.scenes.iter().map(|s| s.scene.as_str()).collect())
            .unwrap_or_default();
        for id in scenes {
            let mut row = vec![id.to_string()];
            for m in &self.methods {
                row.push(match m.scene(id) {
                    Some(s) => pair(s.ade, s.fde),
                    None => "-".into(),
                });
            }
            rows.push(row);
        }
        let mut avg = vec!["Average".to_string()];
        for m in &self.methods {
            let (a, f) = m.average();
            avg.push(pair(a, f));
        }
        rows.push(avg);
        let mut out = format!("# ADE / FDE in meters, T_pred = {}, average = unweighted scene mean\n", self.t_pred);
        out.push_str(&align(&rows));
        out
    }
}

/// `ADE / FDE` cell with two decimals.
pub fn pair(a: f64, f: f64) -> String {
    format!("{a:.2} / {f:.2}")
}

/// Left-aligns the first column and right-aligns the rest, with a rule
/// under the header.
pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
