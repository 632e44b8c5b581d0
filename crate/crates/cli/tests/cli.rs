use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nap")).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

struct Setup {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Setup {
    /// Three small synthetic scenes and a tiny model.
    fn new(extra: &str) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let config = root.join("run.cfg");
        let base = format!(
            "data = {data}\nout = {out}\n\
             model.d_emb = 4\nmodel.d_h = 4\nmodel.d_g = 4\nmodel.d_s = 4\nmodel.d_c = 4\n\
             model.d_p = 4\nmodel.d_z = 2\nmodel.d_gcn = 4\nmodel.mlp_b_hidden = 8,8\nmodel.crop = 6\n\
             train.epochs = 2\ntrain.batch_size = 64\n\
             synth.scenes = 3\nsynth.peds = 12\nsplit.test = synth2\neval.k = 4\n",
            data = root.join("data").display(),
            out = root.join("runs").display(),
        );
        // `extra` lines replace base lines with the same key.
        let key = |l: &str| l.split('=').next().unwrap_or("").trim().to_string();
        let overrides: Vec<&str> = extra.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut text: String = base
            .lines()
            .filter(|l| overrides.iter().all(|o| key(o) != key(l)))
            .map(|l| format!("{l}\n"))
            .collect();
        for o in overrides {
            text.push_str(o);
            text.push('\n');
        }
        std::fs::write(&config, text).unwrap();
        Setup { _tmp: tmp, root, config }
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", self.config.to_str().unwrap()];
        all.extend_from_slice(args);
        nap(&all)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

#[test]
fn synth_is_deterministic() {
    let s = Setup::new("");
    let printed = ok(s.run(&["synth"]));
    assert!(printed.contains("synth0:"));
    let a = read(s.path("data/synth1.txt"));
    let g = read(s.path("data/synth1.grid"));
    ok(s.run(&["synth"]));
    assert_eq!(read(s.path("data/synth1.txt")), a);
    assert_eq!(read(s.path("data/synth1.grid")), g);
    ok(s.run(&["synth", "--seed", "5"]));
    assert_ne!(read(s.path("data/synth1.txt")), a);
}

#[test]
fn synth_without_pedestrians_writes_header_only() {
    let s = Setup::new("");
    ok(s.run(&["synth", "--set", "synth.peds=0"]));
    let t = read(s.path("data/synth0.txt"));
    assert!(!t.is_empty());
    assert!(t.lines().all(|l| l.starts_with('#')));
}

#[test]
fn linear_data_gives_zero_constant_velocity_error() {
    let s = Setup::new("synth.mix = linear\ntrain.epochs = 0\n");
    ok(s.run(&["synth"]));
    ok(s.run(&["train"]));
    ok(s.run(&["eval", "--checkpoint", s.path("runs/synth2/checkpoint.bin").to_str().unwrap()]));
    let cv = read(s.path("runs/eval/cv.csv"));
    let avg = cv.lines().last().unwrap();
    assert!(avg.starts_with("average,0,0,single,1,12"), "{avg}");
}

#[test]
fn train_is_reproducible_and_self_describing() {
    let s = Setup::new("");
    ok(s.run(&["synth"]));
    ok(s.run(&["train"]));
    let dir = s.path("runs/synth2");
    let ckpt = std::fs::read(dir.join("checkpoint.bin")).unwrap();
    let log = read(dir.join("train_log.txt"));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 2);
    let cfg = read(dir.join("config.txt"));
    assert!(cfg.contains("seed = 0\n") && cfg.contains("model.d_h = 4\n"));
    let hashes = read(dir.join("inputs.sha256"));
    assert_eq!(hashes.lines().count(), 4);
    assert!(read(dir.join("timing.log")).contains("total"));

    ok(s.run(&["train", "--threads", "2"]));
    assert_eq!(std::fs::read(dir.join("checkpoint.bin")).unwrap(), ckpt);
    assert_eq!(read(dir.join("train_log.txt")), log);

    // the saved config reproduces the run on its own
    let again = s.path("again");
    let text = read(dir.join("config.txt")).replace(s.path("runs").to_str().unwrap(), again.to_str().unwrap());
    std::fs::write(s.path("again.cfg"), text).unwrap();
    ok(nap(&["--config", s.path("again.cfg").to_str().unwrap(), "train"]));
    assert_eq!(std::fs::read(again.join("synth2/checkpoint.bin")).unwrap(), ckpt);
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let s = Setup::new("train.epochs = 0\n");
    ok(s.run(&["synth"]));
    ok(s.run(&["train"]));
    let a = std::fs::read(s.path("runs/synth2/checkpoint.bin")).unwrap();
    ok(s.run(&["train", "--set", "split.train=synth0"]));
    let b = std::fs::read(s.path("runs/synth2/checkpoint.bin")).unwrap();
    // same weights, different recorded training scenes
    assert_ne!(a, b);
    let tail = |v: &[u8]| v[v.len() - 64..].to_vec();
    assert_eq!(tail(&a), tail(&b));
}

#[test]
fn eval_reports_and_guards() {
    let s = Setup::new("model.multimodal = true\nmodel.k = 4\ntrain.k_variety = 4\n");
    ok(s.run(&["synth"]));
    ok(s.run(&["train"]));
    let ckpt = s.path("runs/synth2/checkpoint.bin");
    let c = ckpt.to_str().unwrap();
    let printed = ok(s.run(&["eval", "--checkpoint", c]));
    assert!(printed.contains("average NAP (best-of-4):"));
    let table = read(s.path("runs/eval/metrics.txt"));
    assert!(table.lines().any(|l| l.starts_with("synth2")));
    assert!(table.lines().last().unwrap().starts_with("Average"));
    let csv = read(s.path("runs/eval/nap.csv"));
    let parsed = nap_core::eval::MethodScores::from_csv("NAP", &csv).unwrap();
    assert_eq!((parsed.k, parsed.t_pred), (4, 12));

    // best of 20 never loses to a single draw
    ok(s.run(&["eval", "--checkpoint", c, "--k", "1"]));
    let single = nap_core::eval::MethodScores::from_csv("NAP", &read(s.path("runs/eval/nap.csv"))).unwrap();
    ok(s.run(&["eval", "--checkpoint", c, "--k", "20"]));
    let best = nap_core::eval::MethodScores::from_csv("NAP", &read(s.path("runs/eval/nap.csv"))).unwrap();
    assert!(best.average().0 <= single.average().0);

    let out = s.run(&["eval", "--checkpoint", c, "--set", "split.test=synth0"]);
    assert_eq!(out.status.code(), Some(2));
    ok(s.run(&["eval", "--checkpoint", c, "--set", "split.test=synth0", "--allow-train-eval"]));

    assert_eq!(s.run(&["eval", "--checkpoint", c, "--tpred", "8"]).status.code(), Some(5));
    std::fs::write(s.path("bad.bin"), b"NAPCKPT\x01").unwrap();
    assert_eq!(s.run(&["eval", "--checkpoint", s.path("bad.bin").to_str().unwrap()]).status.code(), Some(5));
}

fn forecast_rows(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.splitn(3, ' ');
            let k = it.next().unwrap().to_string();
            let step = it.next().unwrap();
            (format!("{k} {step}"), it.next().unwrap().to_string())
        })
        .collect()
}

#[test]
fn predict_subsets_seeds_and_heatmaps() {
    let s = Setup::new("model.multimodal = true\nmodel.k = 3\ntrain.epochs = 1\ntrain.k_variety = 3\neval.k = 3\n");
    ok(s.run(&["synth"]));
    ok(s.run(&["train"]));
    let c = s.path("runs/synth2/checkpoint.bin");
    let track = s.path("data/synth2.txt");
    let grid = s.path("data/synth2.grid");
    let base = [
        "predict",
        "--checkpoint",
        c.to_str().unwrap(),
        "--track",
        track.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
    ];
    let run = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        ok(s.run(&a));
        read(s.path("runs/predict/forecast.txt"))
    };
    let all = run(&["--steps", "all", "--heatmap"]);
    let heat = read(s.path("runs/predict/heatmap.txt"));
    assert!(heat.contains("total=36"), "{heat}");
    let full = forecast_rows(&all);
    assert_eq!(full.len(), 36);

    let last = forecast_rows(&run(&["--steps", "12", "--heatmap"]));
    assert!(read(s.path("runs/predict/heatmap.txt")).contains("total=3"));
    for row in &last {
        assert!(full.contains(row), "{row:?}");
    }
    assert_eq!(last.len(), 3);
    assert_eq!(run(&["--steps", "all", "--heatmap"]), all);
    assert_ne!(run(&["--steps", "all", "--seed", "9"]), all);

    // too short a track is a data error
    std::fs::write(s.path("short.txt"), "0 1 0.0 0.0\n10 1 0.4 0.0\n").unwrap();
    let out = s.run(&["predict", "--checkpoint", c.to_str().unwrap(), "--track", s.path("short.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn ablation_table_and_scene_probe() {
    let s = Setup::new("train.epochs = 1\n");
    ok(s.run(&["synth"]));
    ok(s.run(&["ablate"]));
    let printed = read(s.path("runs/ablate/table.txt"));
    let header = printed.lines().nth(1).unwrap();
    for label in ["NAP-P", "NAP-ISS", "NAP-ISg", "NAP-ISc"] {
        assert!(header.contains(label), "{header}");
    }
    assert_eq!(header.split_whitespace().count(), 5);
    assert!(printed.lines().last().unwrap().starts_with("Average"));
    let log = read(s.path("runs/ablate/ablate.log"));
    let hashes: std::collections::BTreeSet<&str> = log.lines().map(|l| l.rsplit_once('=').unwrap().1).collect();
    assert_eq!(log.lines().count(), 4);
    assert_eq!(hashes.len(), 1);

    // NAP-ISg ignores the scene: a noise grid leaves its forecasts unchanged
    let isg = s.path("runs/ablate/isg/synth2/checkpoint.bin");
    let grid = read(s.path("data/synth2.grid"));
    let mut lines = grid.lines();
    let head = lines.next().unwrap().to_string();
    let noisy: Vec<String> = lines
        .flat_map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .enumerate()
        .map(|(i, _)| format!("{}", ((i * 37) % 11) as f64 / 10.0))
        .collect();
    std::fs::write(s.path("noise.grid"), format!("{head}\n{}\n", noisy.join(" "))).unwrap();
    let forecast = |g: &Path| {
        ok(s.run(&[
            "predict",
            "--checkpoint",
            isg.to_str().unwrap(),
            "--track",
            s.path("data/synth2.txt").to_str().unwrap(),
            "--grid",
            g.to_str().unwrap(),
        ]));
        read(s.path("runs/predict/forecast.txt"))
    };
    assert_eq!(forecast(&s.path("data/synth2.grid")), forecast(&s.path("noise.grid")));
}

#[test]
fn increment_study_table() {
    let s = Setup::new("train.epochs = 1\nsynth.peds = 8\n");
    ok(s.run(&["synth"]));
    ok(s.run(&["increment-study"]));
    let printed = read(s.path("runs/increment/table.txt"));
    let rows: Vec<&str> = printed.lines().skip(3).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("NAP") && rows[1].starts_with("AR-ref"));
    assert!(rows.iter().all(|r| r.trim_end().ends_with('%')));
    assert!(read(s.path("runs/increment/nap-t8.csv")).contains(",single,1,8\n"));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let s = Setup::new("colour = red\n");
    assert_eq!(s.run(&["synth"]).status.code(), Some(2));
    let s = Setup::new("");
    assert_eq!(s.run(&["synth", "--set", "model.variant=p", "--set", "model.multimodal=true"]).status.code(), Some(2));
    assert_eq!(s.run(&["synth", "--tpred", "10"]).status.code(), Some(2));
    // no data yet
    assert_eq!(s.run(&["train"]).status.code(), Some(3));
}
