//! Seeded synthetic crowds: constant-velocity walkers, walkers that make one
//! 90° turn, and goal-seeking walkers that keep clear of each other and of a
//! rectangular obstacle.
//!
//! All positions live on a 2^-10 m lattice, so scripted walkers are exactly
//! linear in binary floating point and the emitted text is exact.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::grid::SceneGrid;
use crate::dataio::records::FrameRecord;
use crate::dataio::sample::Point;
use crate::error::{Error, Result};

/// Seconds per dataset step.
pub const STEP_SECONDS: f64 = 0.4;
/// Frame-id spacing between consecutive steps in emitted files.
pub const FRAME_GAP: i64 = 10;
/// Hard clearance kept by avoiding walkers.
pub const AVOID_RADIUS: f64 = 0.5;

const LATTICE: f64 = 1.0 / 1024.0;

fn q(v: f64) -> f64 {
    (v / LATTICE).round() * LATTICE
}

fn qp(p: Point) -> Point {
    [q(p[0]), q(p[1])]
}

/// Relative weights of the three behaviours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BehaviorMix {
    pub linear: f64,
    pub turning: f64,
    pub avoiding: f64,
}

impl BehaviorMix {
    pub const LINEAR: BehaviorMix = BehaviorMix {
        linear: 1.0,
        turning: 0.0,
        avoiding: 0.0,
    };
    pub const TURNING: BehaviorMix = BehaviorMix {
        linear: 0.0,
        turning: 1.0,
        avoiding: 0.0,
    };
    pub const AVOIDING: BehaviorMix = BehaviorMix {
        linear: 0.0,
        turning: 0.0,
        avoiding: 1.0,
    };
    pub const MIXED: BehaviorMix = BehaviorMix {
        linear: 0.4,
        turning: 0.3,
        avoiding: 0.3,
    };
}

impl FromStr for BehaviorMix {
    type Err = Error;

    /// Accepts `linear`, `turn`, `avoid`, `mixed`, or weights such as
    /// `linear=0.5,turn=0.25,avoid=0.25`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => return Ok(BehaviorMix::LINEAR),
            "turn" | "turning" => return Ok(BehaviorMix::TURNING),
            "avoid" | "avoiding" => return Ok(BehaviorMix::AVOIDING),
            "mixed" => return Ok(BehaviorMix::MIXED),
            _ => {}
        }
        let mut mix = BehaviorMix {
            linear: 0.0,
            turning: 0.0,
            avoiding: 0.0,
        };
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad behaviour mix `{s}`")))?;
            let w: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad weight in `{part}`")))?;
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("negative weight in `{part}`")));
            }
            match k.trim() {
                "linear" => mix.linear = w,
                "turn" | "turning" => mix.turning = w,
                "avoid" | "avoiding" => mix.avoiding = w,
                other => return Err(Error::Config(format!("unknown behaviour `{other}`"))),
            }
        }
        if mix.linear + mix.turning + mix.avoiding <= 0.0 {
            return Err(Error::Config("behaviour weights sum to zero".into()));
        }
        Ok(mix)
    }
}

impl fmt::Display for BehaviorMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "linear={},turn={},avoid={}",
            self.linear, self.turning, self.avoiding
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_peds: usize,
    pub mix: BehaviorMix,
    /// Side of the square world in metres.
    pub world_size: f64,
    pub cell_size: f64,
    pub n_frames: usize,
}

impl SynthConfig {
    pub fn new(seed: u64, n_peds: usize, mix: BehaviorMix) -> Self {
        SynthConfig {
            seed,
            n_peds,
            mix,
            world_size: 24.0,
            cell_size: 0.5,
            n_frames: 160,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, p: Point, margin: f64) -> bool {
        p[0] >= self.x0 - margin && p[0] <= self.x1 + margin && p[1] >= self.y0 - margin && p[1] <= self.y1 + margin
    }
}

#[derive(Clone, Debug)]
enum Script {
    Linear { p0: Point, v: Point },
    Turn { p0: Point, v: Point, v2: Point, at: usize },
    Avoid { goal: Point, speed: f64 },
}

#[derive(Clone, Debug)]
struct Walker {
    id: i64,
    spawn: usize,
    life: usize,
    script: Script,
    pos: Option<Point>,
    born: Option<usize>,
    done: bool,
}

impl Walker {
    fn scripted(&self, age: usize) -> Point {
        let k = age as f64;
        match self.script {
            Script::Linear { p0, v } => [p0[0] + k * v[0], p0[1] + k * v[1]],
            Script::Turn { p0, v, v2, at } => {
                if age <= at {
                    [p0[0] + k * v[0], p0[1] + k * v[1]]
                } else {
                    let a = at as f64;
                    let r = (age - at) as f64;
                    [p0[0] + a * v[0] + r * v2[0], p0[1] + a * v[1] + r * v2[1]]
                }
            }
            Script::Avoid { .. } => unreachable!("avoiding walkers are simulated"),
        }
    }
}

fn inside_world(p: Point, size: f64, margin: f64) -> bool {
    p[0] >= margin && p[1] >= margin && p[0] <= size - margin && p[1] <= size - margin
}

fn plan_scripted(rng: &mut ChaCha8Rng, cfg: &SynthConfig, obstacle: &Rect, turn: bool, life: usize) -> Script {
    let w = cfg.world_size;
    let mut last = None;
    for _ in 0..200 {
        let speed = rng.random_range(0.8..1.6) * STEP_SECONDS;
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let v = qp([speed * th.cos(), speed * th.sin()]);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let v2 = [-sign * v[1], sign * v[0]];
        let at = rng.random_range(4..life.saturating_sub(4).max(5));
        let mid = [rng.random_range(2.0..w - 2.0), rng.random_range(2.0..w - 2.0)];
        let half = life as f64 / 2.0;
        let p0 = qp([mid[0] - half * v[0], mid[1] - half * v[1]]);
        let script = if turn {
            Script::Turn { p0, v, v2, at }
        } else {
            Script::Linear { p0, v }
        };
        let probe = Walker {
            id: 0,
            spawn: 0,
            life,
            script: script.clone(),
            pos: None,
            born: None,
            done: false,
        };
        let ok = (0..life).all(|k| {
            let p = probe.scripted(k);
            inside_world(p, w, 0.5) && !obstacle.contains(p, 0.5)
        });
        if ok {
            return script;
        }
        last = Some(script);
    }
    last.expect("at least one attempt")
}

fn free_point(rng: &mut ChaCha8Rng, w: f64, obstacle: &Rect) -> Point {
    loop {
        let p = qp([rng.random_range(1.0..w - 1.0), rng.random_range(1.0..w - 1.0)]);
        if !obstacle.contains(p, 0.6) {
            return p;
        }
    }
}

/// Motion script of one synthetic pedestrian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Behavior {
    Linear,
    Turning,
    Avoiding,
}

/// Generates one synthetic scene. Records come back sorted by
/// `(frame_id, ped_id)`.
pub fn synth_scene(cfg: &SynthConfig, scene_id: &str) -> Result<(Vec<FrameRecord>, SceneGrid)> {
    synth_scene_labeled(cfg, scene_id).map(|(r, g, _)| (r, g))
}

/// [`synth_scene`] plus the behaviour of every pedestrian id, including
/// those that never got to walk.
pub fn synth_scene_labeled(cfg: &SynthConfig, scene_id: &str) -> Result<(Vec<FrameRecord>, SceneGrid, BTreeMap<i64, Behavior>)> {
    if cfg.n_frames < 2 || !(cfg.world_size > 4.0) || !(cfg.cell_size > 0.0) {
        return Err(Error::Config("synthetic world too small".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = cfg.world_size;

    let ow = rng.random_range(2.0..5.0);
    let oh = rng.random_range(2.0..5.0);
    let cx = rng.random_range(w * 0.35..w * 0.65);
    let cy = rng.random_range(w * 0.35..w * 0.65);
    let obstacle = Rect {
        x0: cx - ow / 2.0,
        y0: cy - oh / 2.0,
        x1: cx + ow / 2.0,
        y1: cy + oh / 2.0,
    };

    let cells = (w / cfg.cell_size).round() as usize;
    let mut grid = SceneGrid::empty(scene_id, cells, cells, cfg.cell_size, [0.0, 0.0])?;
    for r in 0..cells {
        for c in 0..cells {
            let center = [(c as f64 + 0.5) * cfg.cell_size, (r as f64 + 0.5) * cfg.cell_size];
            if obstacle.contains(center, 0.0) {
                grid.set(0, r, c, 1.0);
            }
        }
    }

    let total = cfg.mix.linear + cfg.mix.turning + cfg.mix.avoiding;
    let latest_spawn = cfg.n_frames.saturating_sub(20).max(1);
    let mut walkers = Vec::with_capacity(cfg.n_peds);
    for i in 0..cfg.n_peds {
        let u = rng.random_range(0.0..total);
        let spawn = rng.random_range(0..latest_spawn);
        let script = if u < cfg.mix.linear {
            let life = rng.random_range(20..=40);
            (plan_scripted(&mut rng, cfg, &obstacle, false, life), life)
        } else if u < cfg.mix.linear + cfg.mix.turning {
            let life = rng.random_range(20..=40);
            (plan_scripted(&mut rng, cfg, &obstacle, true, life), life)
        } else {
            let speed = rng.random_range(0.8..1.4) * STEP_SECONDS;
            let goal = free_point(&mut rng, w, &obstacle);
            (Script::Avoid { goal, speed }, 60)
        };
        let start = match script.0 {
            Script::Avoid { .. } => Some(free_point(&mut rng, w, &obstacle)),
            _ => None,
        };
        walkers.push((
            Walker {
                id: i as i64 + 1,
                spawn,
                life: script.1,
                script: script.0,
                pos: None,
                born: None,
                done: false,
            },
            start,
        ));
    }

    let mut records = Vec::new();
    for f in 0..cfg.n_frames {
        // scripted walkers
        for (wk, _) in walkers.iter_mut() {
            if let (Some(b), false) = (wk.born, wk.done) {
                if matches!(wk.script, Script::Avoid { .. }) {
                    continue;
                }
                let age = f - b;
                if age >= wk.life {
                    wk.done = true;
                    wk.pos = None;
                } else {
                    wk.pos = Some(wk.scripted(age));
                }
            }
        }
        // avoiding walkers, in id order, each against current positions
        for i in 0..walkers.len() {
            let (wk, _) = &walkers[i];
            let Script::Avoid { goal, speed } = wk.script else { continue };
            let (Some(b), false, Some(p)) = (wk.born, wk.done, wk.pos) else {
                continue;
            };
            let age = f - b;
            let to_goal = [goal[0] - p[0], goal[1] - p[1]];
            let dist = to_goal[0].hypot(to_goal[1]);
            if age >= wk.life || dist < speed {
                walkers[i].0.done = true;
                walkers[i].0.pos = None;
                continue;
            }
            let others: Vec<Point> = walkers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .filter_map(|(_, (o, _))| o.pos)
                .collect();
            let next = avoid_step(p, to_goal, speed, &others, &obstacle, w);
            walkers[i].0.pos = Some(next);
        }
        // spawns
        for i in 0..walkers.len() {
            let ready = {
                let wk = &walkers[i].0;
                wk.born.is_none() && !wk.done && wk.spawn <= f
            };
            if !ready {
                continue;
            }
            match walkers[i].0.script {
                Script::Avoid { .. } => {
                    let start = walkers[i].1.expect("avoider start");
                    let clear = walkers
                        .iter()
                        .filter_map(|(o, _)| o.pos)
                        .all(|q| (q[0] - start[0]).hypot(q[1] - start[1]) >= AVOID_RADIUS);
                    if clear {
                        walkers[i].0.pos = Some(start);
                        walkers[i].0.born = Some(f);
                    } else if f - walkers[i].0.spawn > 20 {
                        walkers[i].0.done = true;
                    }
                }
                _ => {
                    if cfg.n_frames - f < walkers[i].0.life {
                        walkers[i].0.done = true;
                        continue;
                    }
                    walkers[i].0.born = Some(f);
                    walkers[i].0.pos = Some(walkers[i].0.scripted(0));
                }
            }
        }
        for (wk, _) in &walkers {
            if let Some(p) = wk.pos {
                records.push(FrameRecord {
                    frame_id: f as i64 * FRAME_GAP,
                    ped_id: wk.id,
                    x: p[0],
                    y: p[1],
                });
            }
        }
    }
    records.sort_by_key(|r| (r.frame_id, r.ped_id));
    let labels = walkers
        .iter()
        .map(|(wk, _)| {
            let b = match wk.script {
                Script::Linear { .. } => Behavior::Linear,
                Script::Turn { .. } => Behavior::Turning,
                Script::Avoid { .. } => Behavior::Avoiding,
            };
            (wk.id, b)
        })
        .collect();
    Ok((records, grid, labels))
}

fn avoid_step(p: Point, to_goal: Point, speed: f64, others: &[Point], obstacle: &Rect, w: f64) -> Point {
    let norm = to_goal[0].hypot(to_goal[1]).max(1e-9);
    let mut dir = [to_goal[0] / norm, to_goal[1] / norm];
    // soft repulsion from nearby walkers bends the preferred heading
    for q in others {
        let d = [p[0] - q[0], p[1] - q[1]];
        let r = d[0].hypot(d[1]);
        if r > 1e-9 && r < 2.5 {
            let k = 0.6 / (r * r);
            dir[0] += k * d[0] / r;
            dir[1] += k * d[1] / r;
        }
    }
    let n = dir[0].hypot(dir[1]).max(1e-9);
    let dir = [dir[0] / n, dir[1] / n];
    const TURNS: [f64; 9] = [0.0, 0.35, -0.35, 0.8, -0.8, 1.2, -1.2, 1.57, -1.57];
    for scale in [1.0, 0.5] {
        for t in TURNS {
            let (s, c) = f64::sin_cos(t);
            let v = [(c * dir[0] - s * dir[1]) * speed * scale, (s * dir[0] + c * dir[1]) * speed * scale];
            let cand = qp([p[0] + v[0], p[1] + v[1]]);
            let ok = inside_world(cand, w, 0.25)
                && !obstacle.contains(cand, 0.3)
                && others
                    .iter()
                    .all(|q| (q[0] - cand[0]).hypot(q[1] - cand[1]) >= AVOID_RADIUS);
            if ok {
                return cand;
            }
        }
    }
    p
}

/// `synth_scene` with default world geometry.
pub fn synth_dataset(seed: u64, n_peds: usize, mix: BehaviorMix) -> Result<(Vec<FrameRecord>, SceneGrid)> {
    synth_scene(&SynthConfig::new(seed, n_peds, mix), "synth")
}
