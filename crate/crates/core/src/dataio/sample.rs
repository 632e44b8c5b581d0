use std::collections::{BTreeMap, HashMap};

use crate::dataio::grid::rotate_crop;
use crate::dataio::records::{frame_step, FrameRecord};
use crate::error::Result;
use crate::numeric::Tensor;

pub type Point = [f64; 2];

/// Upper bound on neighbours kept per observed frame (nearest first).
pub const DEFAULT_NEIGHBOR_CAP: usize = 16;

/// One pedestrian window: observed and future tracks plus the positions of
/// everybody else present at each observed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub scene_id: String,
    pub ped_id: i64,
    pub start_frame: i64,
    pub obs: Vec<Point>,
    pub fut: Vec<Point>,
    /// One list per observed step.
    pub neighbors: Vec<Vec<Point>>,
    /// Translation removed by [`normalize`].
    pub norm_offset: Point,
    /// Rotation applied by [`rotate_augment`] (radians, about the origin of
    /// the normalized frame).
    pub norm_rotation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub t_obs: usize,
    pub t_pred: usize,
    /// Spacing of window starts, in dataset steps.
    pub stride: usize,
    pub neighbor_cap: usize,
}

impl WindowSpec {
    pub fn new(t_obs: usize, t_pred: usize) -> Self {
        WindowSpec {
            t_obs,
            t_pred,
            stride: 1,
            neighbor_cap: DEFAULT_NEIGHBOR_CAP,
        }
    }

    pub fn len(&self) -> usize {
        self.t_obs + self.t_pred
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cuts every admissible window out of sorted records: a pedestrian must be
/// present in `t_obs + t_pred` consecutive dataset steps. Window starts are
/// aligned to `stride` steps counted from the first frame in the file.
pub fn window_samples(records: &[FrameRecord], scene_id: &str, spec: WindowSpec) -> Vec<SequenceSample> {
    if records.is_empty() || spec.is_empty() {
        return Vec::new();
    }
    let step = frame_step(records);
    let first_frame = records.iter().map(|r| r.frame_id).min().unwrap_or(0);
    let stride = spec.stride.max(1) as i64;

    let mut by_frame: HashMap<i64, Vec<&FrameRecord>> = HashMap::new();
    let mut by_ped: BTreeMap<i64, Vec<&FrameRecord>> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame_id).or_default().push(r);
        by_ped.entry(r.ped_id).or_default().push(r);
    }

    let mut out = Vec::new();
    for (&ped, track) in &by_ped {
        let mut track = track.clone();
        track.sort_by_key(|r| r.frame_id);
        let n = track.len();
        let need = spec.len();
        let mut run_start = 0;
        for i in 0..n {
            let run_ends = i + 1 == n || track[i + 1].frame_id - track[i].frame_id != step;
            if !run_ends {
                continue;
            }
            let run = &track[run_start..=i];
            run_start = i + 1;
            if run.len() < need {
                continue;
            }
            for s in 0..=run.len() - need {
                let f0 = run[s].frame_id;
                if (f0 - first_frame).rem_euclid(step * stride) != 0 {
                    continue;
                }
                let win = &run[s..s + need];
                let obs: Vec<Point> = win[..spec.t_obs].iter().map(|r| [r.x, r.y]).collect();
                let fut: Vec<Point> = win[spec.t_obs..].iter().map(|r| [r.x, r.y]).collect();
                let neighbors = win[..spec.t_obs]
                    .iter()
                    .map(|me| {
                        let mut others: Vec<&FrameRecord> = by_frame[&me.frame_id]
                            .iter()
                            .copied()
                            .filter(|o| o.ped_id != ped)
                            .collect();
                        if others.len() > spec.neighbor_cap {
                            others.sort_by(|a, b| {
                                let da = (a.x - me.x).hypot(a.y - me.y);
                                let db = (b.x - me.x).hypot(b.y - me.y);
                                da.total_cmp(&db).then(a.ped_id.cmp(&b.ped_id))
                            });
                            others.truncate(spec.neighbor_cap);
                            others.sort_by_key(|o| o.ped_id);
                        }
                        others.iter().map(|o| [o.x, o.y]).collect()
                    })
                    .collect();
                out.push(SequenceSample {
                    scene_id: scene_id.to_string(),
                    ped_id: ped,
                    start_frame: f0,
                    obs,
                    fut,
                    neighbors,
                    norm_offset: [0.0, 0.0],
                    norm_rotation: 0.0,
                });
            }
        }
    }
    out
}

fn map_points(s: &mut SequenceSample, f: impl Fn(Point) -> Point) {
    for p in s.obs.iter_mut().chain(s.fut.iter_mut()) {
        *p = f(*p);
    }
    for step in s.neighbors.iter_mut() {
        for p in step.iter_mut() {
            *p = f(*p);
        }
    }
}

/// Translates the whole sample so the last observed position is the origin.
/// Idempotent: the stored offset accumulates.
pub fn normalize(sample: &SequenceSample) -> SequenceSample {
    let mut s = sample.clone();
    let o = *s.obs.last().expect("sample without observations");
    map_points(&mut s, |p| [p[0] - o[0], p[1] - o[1]]);
    s.norm_offset = [sample.norm_offset[0] + o[0], sample.norm_offset[1] + o[1]];
    s
}

/// Undoes [`rotate_augment`] and [`normalize`], returning world coordinates.
pub fn denormalize(sample: &SequenceSample) -> SequenceSample {
    let mut s = sample.clone();
    if s.norm_rotation != 0.0 {
        let (sin, cos) = (-s.norm_rotation).sin_cos();
        map_points(&mut s, |p| rotate_point(p, sin, cos));
        s.norm_rotation = 0.0;
    }
    let o = s.norm_offset;
    map_points(&mut s, |p| [p[0] + o[0], p[1] + o[1]]);
    s.norm_offset = [0.0, 0.0];
    s
}

/// Maps a point from the normalized frame of `sample` back to world
/// coordinates.
pub fn to_world(sample: &SequenceSample, p: Point) -> Point {
    let p = if sample.norm_rotation != 0.0 {
        let (sin, cos) = (-sample.norm_rotation).sin_cos();
        rotate_point(p, sin, cos)
    } else {
        p
    };
    [p[0] + sample.norm_offset[0], p[1] + sample.norm_offset[1]]
}

#[inline]
pub fn rotate_point(p: Point, sin: f64, cos: f64) -> Point {
    [cos * p[0] - sin * p[1], sin * p[0] + cos * p[1]]
}

/// Rotates a normalized sample about the origin and its pedestrian-centred
/// scene crop about the crop centre by the same angle.
pub fn rotate_augment(sample: &SequenceSample, crop: &Tensor, angle: f64) -> Result<(SequenceSample, Tensor)> {
    let mut s = sample.clone();
    if angle != 0.0 {
        let (sin, cos) = angle.sin_cos();
        map_points(&mut s, |p| rotate_point(p, sin, cos));
        s.norm_rotation += angle;
    }
    Ok((s, rotate_crop(crop, angle)?))
}
