use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nap_core::dataio::{
    crop_scene, normalize, synth_scene, window_samples, PreparedSample, SceneData, SceneGrid, SplitPlan, SynthConfig, WindowSpec,
};
use nap_core::eval::{
    heatmap, increment_table, evaluate_method, HeatmapGeometry, IncrementRow, Method, MethodScores, MetricsReport, Mode,
};
use nap_core::model::{DecoderKind, NapConfig, NapModel, Variant};
use nap_core::numeric::{stream_rng, Precision, Tensor};
use nap_core::train::{fit, load_checkpoint, save_checkpoint, CheckpointMeta, TrainLog, TrainSet};
use nap_core::Error;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::rundir::{data_hash, describe_run, require_meta, scene_files, sha256_hex, slug, write};

/// Stream key for the `ε` draws of `predict`.
const PREDICT_STREAM: u64 = 0x9d;

/// Horizons compared by the increment study.
pub const SHORT_HORIZON: usize = 8;
pub const LONG_HORIZON: usize = 12;

pub fn method_label(cfg: &NapConfig) -> &'static str {
    match cfg.decoder {
        DecoderKind::Ar => "AR-ref",
        DecoderKind::Nar => cfg.variant.label(),
    }
}

fn prepared(cfg: &RunConfig, model: &NapConfig, id: &str, window_t_pred: usize, margin: bool) -> CliResult<Vec<PreparedSample>> {
    let scene = SceneData::load(&cfg.data, id, cfg.frame_interval)?;
    let items = nap_core::dataio::prepare_scene(&scene, WindowSpec::new(model.t_obs, window_t_pred), model.crop, margin)?;
    if window_t_pred == model.t_pred {
        return Ok(items);
    }
    Ok(items.iter().map(|i| i.with_horizon(model.t_pred)).collect::<Result<_, _>>()?)
}

pub fn synth(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.data).map_err(|e| Error::io(&cfg.data, e))?;
    for i in 0..cfg.synth_scenes {
        let id = format!("synth{i}");
        let seed = cfg.seed.wrapping_add(i as u64);
        let (records, grid) = synth_scene(&SynthConfig::new(seed, cfg.synth_peds, cfg.synth_mix), &id)?;
        let peds: BTreeSet<i64> = records.iter().map(|r| r.ped_id).collect();
        let header = vec![
            format!("synthetic scene {id}"),
            format!("seed={seed} peds={} mix={}", cfg.synth_peds, cfg.synth_mix),
            "frame_id ped_id x y (meters); 10 frames = 0.4 s".to_string(),
        ];
        let scene = SceneData { id: id.clone(), records, grid };
        scene.save(&cfg.data, &header)?;
        println!("{id}: {} pedestrians, {} records", peds.len(), scene.records.len());
    }
    Ok(())
}

/// Trains one model on `plan.train` and writes its run directory.
fn train_run(cfg: &RunConfig, model_cfg: &NapConfig, plan: &SplitPlan, window_t_pred: usize, dir: &Path) -> CliResult<NapModel> {
    let start = Instant::now();
    let mut items = Vec::new();
    for id in &plan.train {
        items.extend(prepared(cfg, model_cfg, id, window_t_pred, cfg.train.augment)?);
    }
    let set = TrainSet::new(items, Some(plan.clone()))?;
    let run_cfg = RunConfig {
        model: model_cfg.clone(),
        ..cfg.clone()
    };
    let config_text = run_cfg.to_text();
    let mut model = NapModel::new(model_cfg.clone(), cfg.seed, Precision::F32)?;
    let mut log = TrainLog::new(cfg.seed, &sha256_hex(config_text.as_bytes())[..16]);
    fit(&mut model, &set, &cfg.train, &mut log, |e| {
        eprintln!("[{}] epoch {} loss {:.6}", plan.test, e.epoch, e.loss)
    })?;

    let mut all = plan.train.clone();
    all.push(plan.test.clone());
    let mut meta = CheckpointMeta::new();
    meta.insert("train_scenes".into(), plan.train.join(","));
    meta.insert("test_scene".into(), plan.test.clone());
    meta.insert("data_hash".into(), data_hash(&cfg.data, &all)?);
    meta.insert("seed".into(), cfg.seed.to_string());
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_checkpoint(&model, &meta, &dir.join("checkpoint.bin"))?;
    write(&dir.join("train_log.txt"), log.to_text())?;
    describe_run(dir, &run_cfg, &scene_files(&cfg.data, &plan.train))?;
    write(
        &dir.join("timing.log"),
        format!("{}total {:.3}\n", log.timing_text(), start.elapsed().as_secs_f64()),
    )?;
    let last = log.entries.last().map_or("-".to_string(), |e| format!("{:.6}", e.loss));
    println!("{}: {} windows, {} epochs, final loss {last}, {}", plan.test, set.len(), cfg.train.epochs, dir.display());
    Ok(model)
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    for plan in crate::rundir::plans(cfg)? {
        train_run(cfg, &cfg.model, &plan, cfg.model.t_pred, &cfg.out.join(&plan.test))?;
    }
    Ok(())
}

/// Scores of one model on its held-out scene.
fn score_model(cfg: &RunConfig, model: &NapModel, scene: &str, window_t_pred: usize) -> CliResult<MethodScores> {
    let items = prepared(cfg, model.config(), scene, window_t_pred, false)?;
    let label = method_label(model.config());
    let scenes = vec![(scene.to_string(), items)];
    Ok(evaluate_method(&Method::Model { label, model }, &scenes, model.config().t_pred, cfg.eval_k, cfg.seed)?)
}

fn merge(into: &mut Option<MethodScores>, s: MethodScores) -> CliResult<()> {
    match into {
        None => *into = Some(s),
        Some(m) => {
            if (m.mode, m.k, m.t_pred) != (s.mode, s.k, s.t_pred) {
                return Err(CliError::Incompatible(format!("`{}` runs disagree on mode, K or T_pred", m.method)));
            }
            m.scenes.extend(s.scenes);
        }
    }
    Ok(())
}

fn write_report(dir: &Path, report: &MetricsReport) -> CliResult<()> {
    write(&dir.join("metrics.txt"), report.table())?;
    for m in &report.methods {
        write(&dir.join(format!("{}.csv", slug(&m.method))), m.to_csv())?;
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, checkpoints: &[PathBuf], tpred: Option<usize>, allow_train_eval: bool) -> CliResult<()> {
    let start = Instant::now();
    let mut groups: Vec<(String, Option<MethodScores>)> = Vec::new();
    let mut scenes: BTreeSet<String> = BTreeSet::new();
    let mut horizon: Option<(usize, usize)> = None;
    let mut inputs = Vec::new();
    for path in checkpoints {
        let (model, meta) = load_checkpoint(path)?;
        let c = model.config();
        if let Some(t) = tpred {
            if t != c.t_pred {
                return Err(CliError::Incompatible(format!(
                    "{} predicts {} steps, --tpred asks for {t}",
                    path.display(),
                    c.t_pred
                )));
            }
        }
        if horizon.is_some_and(|h| h != (c.t_obs, c.t_pred)) {
            return Err(CliError::Incompatible("checkpoints use different T_obs/T_pred".into()));
        }
        horizon = Some((c.t_obs, c.t_pred));
        let test = if cfg.split_test == crate::config::LEAVE_ONE_OUT {
            require_meta(&meta, "test_scene", path)?.to_string()
        } else {
            cfg.split_test.clone()
        };
        let trained: Vec<&str> = require_meta(&meta, "train_scenes", path)?.split(',').collect();
        if trained.contains(&test.as_str()) && !allow_train_eval {
            return Err(CliError::Config(format!(
                "{} was trained on `{test}`; pass --allow-train-eval to score it anyway",
                path.display()
            )));
        }
        let scores = score_model(cfg, &model, &test, c.t_pred)?;
        let label = scores.method.clone();
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, g)) => merge(g, scores)?,
            None => groups.push((label, Some(scores))),
        }
        scenes.insert(test);
        inputs.push(path.clone());
    }
    let (t_obs, t_pred) = horizon.ok_or_else(|| CliError::Config("no checkpoint given".into()))?;
    let scene_ids: Vec<String> = scenes.into_iter().collect();
    let mut methods: Vec<MethodScores> = groups.into_iter().filter_map(|(_, g)| g).collect();
    for m in &mut methods {
        m.scenes.sort_by(|a, b| a.scene.cmp(&b.scene));
    }
    // baselines need only the tracks
    let plain = NapConfig {
        t_obs,
        t_pred,
        ..NapConfig::default()
    };
    let mut baseline_scenes = Vec::new();
    for id in &scene_ids {
        baseline_scenes.push((id.clone(), prepared(cfg, &plain, id, t_pred, false)?));
    }
    for b in [Method::ConstPosition, Method::ConstVelocity] {
        methods.push(evaluate_method(&b, &baseline_scenes, t_pred, cfg.eval_k, cfg.seed)?);
    }
    let report = MetricsReport { t_pred, methods };
    let dir = cfg.out.join("eval");
    write_report(&dir, &report)?;
    inputs.extend(scene_files(&cfg.data, &scene_ids));
    describe_run(&dir, cfg, &inputs)?;
    write(&dir.join("timing.log"), format!("total {:.3}\n", start.elapsed().as_secs_f64()))?;
    for m in &report.methods {
        let (a, f) = m.average();
        let mode = match m.mode {
            Mode::Single => "single".to_string(),
            Mode::BestOfK => format!("best-of-{}", m.k),
        };
        println!("average {} ({mode}): {}", m.method, nap_core::eval::pair(a, f));
    }
    Ok(())
}

fn parse_steps(spec: &str, t_pred: usize) -> CliResult<Vec<usize>> {
    if spec == "all" {
        return Ok((1..=t_pred).collect());
    }
    let mut out = Vec::new();
    for part in spec.split(',') {
        let s: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("--steps: `{part}` is not a step number")))?;
        if s == 0 || s > t_pred {
            return Err(CliError::Config(format!("--steps: {s} is outside 1..={t_pred}")));
        }
        out.push(s);
    }
    Ok(out)
}

pub struct PredictArgs<'a> {
    pub checkpoint: &'a Path,
    pub track: &'a Path,
    pub ped: Option<i64>,
    pub grid: Option<&'a Path>,
    pub steps: &'a str,
    pub heatmap: bool,
    pub tpred: Option<usize>,
}

pub fn predict(cfg: &RunConfig, args: &PredictArgs) -> CliResult<()> {
    let start = Instant::now();
    let (model, _) = load_checkpoint(args.checkpoint)?;
    let c = model.config().clone();
    if args.tpred.is_some_and(|t| t != c.t_pred) {
        return Err(CliError::Incompatible(format!("checkpoint predicts {} steps", c.t_pred)));
    }
    let steps = parse_steps(args.steps, c.t_pred)?;
    let records = nap_core::dataio::parse_trajectory_file(args.track, cfg.frame_interval)?;
    let ped = match args.ped {
        Some(p) => p,
        None => records
            .iter()
            .map(|r| r.ped_id)
            .min()
            .ok_or_else(|| Error::Data(format!("{}: no records", args.track.display())))?,
    };
    let windows = window_samples(&records, "track", WindowSpec::new(c.t_obs, 0));
    let raw = windows
        .into_iter()
        .filter(|w| w.ped_id == ped)
        .max_by_key(|w| w.start_frame)
        .ok_or_else(|| {
            Error::Data(format!(
                "pedestrian {ped} has fewer than {} consecutive observed points in {}",
                c.t_obs,
                args.track.display()
            ))
        })?;
    let last = *raw.obs.last().expect("observed window");
    let crop = match args.grid {
        Some(path) => {
            let grid = SceneGrid::load(path, "track")?;
            crop_scene(&grid, last, c.crop, c.crop)?
        }
        None => Tensor::zeros(&[c.channels, c.crop, c.crop]),
    };
    let sample = normalize(&raw);
    let mut rng = stream_rng(cfg.seed, &[PREDICT_STREAM]);
    let fs = model.forecast_sample(&sample, &crop, cfg.eval_k, &mut rng, &steps)?;
    let mut text = format!("# ped={ped} K={} steps={}\n# sample step x y\n", fs.k(), args.steps);
    for (k, s) in fs.world_samples().iter().enumerate() {
        for (step, p) in fs.steps.iter().zip(s) {
            text.push_str(&format!("{k} {step} {} {}\n", p[0], p[1]));
        }
    }
    let dir = cfg.out.join("predict");
    write(&dir.join("forecast.txt"), text)?;
    if args.heatmap {
        let geo = HeatmapGeometry::centered(last, cfg.heatmap_cells, cfg.heatmap_cell_size);
        write(&dir.join("heatmap.txt"), heatmap(&fs, geo)?.to_ascii())?;
    }
    let mut inputs = vec![args.checkpoint.to_path_buf(), args.track.to_path_buf()];
    inputs.extend(args.grid.map(Path::to_path_buf));
    describe_run(&dir, cfg, &inputs)?;
    write(&dir.join("timing.log"), format!("total {:.3}\n", start.elapsed().as_secs_f64()))?;
    println!("pedestrian {ped}: {} forecasts of {} steps -> {}", fs.k(), steps.len(), dir.display());
    Ok(())
}

/// The four reduced variants compared by `ablate`.
pub const ABLATED: [Variant; 4] = [Variant::P, Variant::Iss, Variant::Isg, Variant::Isc];

pub fn ablate(cfg: &RunConfig) -> CliResult<()> {
    let plans = crate::rundir::plans(cfg)?;
    let root = cfg.out.join("ablate");
    let mut methods = Vec::new();
    let mut log = String::new();
    let t_pred = cfg.model.t_pred;
    for variant in ABLATED {
        let model_cfg = NapConfig {
            variant,
            multimodal: false,
            k: 1,
            decoder: DecoderKind::Nar,
            ..cfg.model.clone()
        };
        let mut scores: Option<MethodScores> = None;
        for plan in &plans {
            let mut all = plan.train.clone();
            all.push(plan.test.clone());
            log.push_str(&format!(
                "variant={variant} test={} data_hash={}\n",
                plan.test,
                data_hash(&cfg.data, &all)?
            ));
            write(&root.join("ablate.log"), &log)?;
            let dir = root.join(variant.to_string()).join(&plan.test);
            let model = train_run(cfg, &model_cfg, plan, t_pred, &dir)?;
            merge(&mut scores, score_model(cfg, &model, &plan.test, t_pred)?)?;
        }
        methods.extend(scores);
        // partial tables survive a later failure
        write(&root.join("table.txt"), MetricsReport { t_pred, methods: methods.clone() }.table())?;
    }
    let report = MetricsReport { t_pred, methods };
    write_report(&root, &report)?;
    describe_run(&root, cfg, &scene_files(&cfg.data, &nap_core::dataio::list_scenes(&cfg.data)?))?;
    print!("{}", report.table());
    Ok(())
}

pub fn increment_study(cfg: &RunConfig) -> CliResult<()> {
    let plans = crate::rundir::plans(cfg)?;
    let root = cfg.out.join("increment");
    let mut rows = Vec::new();
    for decoder in [DecoderKind::Nar, DecoderKind::Ar] {
        let mut by_horizon = Vec::new();
        for t in [SHORT_HORIZON, LONG_HORIZON] {
            let model_cfg = NapConfig {
                t_pred: t,
                decoder,
                ..cfg.model.clone()
            };
            let label = method_label(&model_cfg);
            let mut scores: Option<MethodScores> = None;
            for plan in plans.iter() {
                let dir = root.join(format!("{}-t{t}", slug(label))).join(&plan.test);
                // both horizons use the windows long enough for the longer one
                let model = train_run(cfg, &model_cfg, plan, LONG_HORIZON, &dir)?;
                merge(&mut scores, score_model(cfg, &model, &plan.test, LONG_HORIZON)?)?;
            }
            let scores = scores.expect("at least one plan");
            write(&root.join(format!("{}-t{t}.csv", slug(label))), scores.to_csv())?;
            by_horizon.push(scores);
        }
        rows.push(IncrementRow::from_scores(&by_horizon[0], &by_horizon[1])?);
    }
    let table = increment_table(&rows, SHORT_HORIZON, LONG_HORIZON);
    write(&root.join("table.txt"), &table)?;
    describe_run(&root, cfg, &scene_files(&cfg.data, &nap_core::dataio::list_scenes(&cfg.data)?))?;
    print!("{table}");
    Ok(())
}
