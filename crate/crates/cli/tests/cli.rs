use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlpst::ingest::GridDataset;
use mlpst::{param_count, ModelParams, RunConfig, INFLOW, OUTFLOW};
use tempfile::TempDir;

const TINY: &str = "\
height = 4
width = 4
channels = 2
patch = 2
spatial_channels = 3
temporal_channels = 6
expansion = 4
depth = 1
trend = 0
period = 2
closeness = 3
period_interval = 6
closeness_interval = 1
batch_size = 16
max_epochs = 40
patience = 40
lr = 0.01
seed = 3
";

fn mlpst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlpst"))
        .args(args)
        .env_remove("MLPST_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn synth(&self, name: &str, kind: &str, side: usize, steps: usize) -> PathBuf {
        let out = self.path(name);
        let side = side.to_string();
        let steps = steps.to_string();
        let o = mlpst(&[
            "synth", "--kind", kind, "--height", &side, "--width", &side, "--steps", &steps,
            "--period", "6", "--seed", "5", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }
}

const SPEC: &str = r#"{"lat_min": 0.0, "lat_max": 2.0, "lon_min": 10.0, "lon_max": 12.0,
    "height": 2, "width": 2, "interval_seconds": 60,
    "start": "1970-01-01T00:00:00Z", "end": "1970-01-01T00:02:00Z"}"#;

const TRIPS: &str = "\
pickup_datetime,dropoff_datetime,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon
0,30,0.5,10.5,1.5,11.5
10,70,0.5,10.5,0.5,10.5
1970-01-01T00:01:05Z,1970-01-01 00:01:50,1.5,11.5,0.5,11.5
20,40,5.0,10.5,0.5,10.5
100,130,0.5,10.5,0.5,10.5
";

#[test]
fn ingest_fixture_matches_hand_grids() {
    let w = Work::new();
    let out = w.path("grid.stg");
    let o = mlpst(&[
        "ingest",
        "--trips",
        s(&w.write("trips.csv", TRIPS)),
        "--spec",
        s(&w.write("spec.json", SPEC)),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("out_of_box 1"), "{}", stderr(&o));
    let ds = GridDataset::read(&out).unwrap();
    assert_eq!((ds.steps(), ds.height, ds.width, ds.channels), (2, 2, 2, 2));
    let mut expect = vec![vec![0.0; 8]; 2];
    let at = |r: usize, c: usize, ch: usize| (r * 2 + c) * 2 + ch;
    expect[0][at(0, 0, OUTFLOW)] = 2.0;
    expect[0][at(1, 1, INFLOW)] = 1.0;
    expect[1][at(0, 0, INFLOW)] = 1.0;
    expect[1][at(1, 1, OUTFLOW)] = 1.0;
    expect[1][at(0, 1, INFLOW)] = 1.0;
    for (t, e) in expect.iter().enumerate() {
        assert_eq!(ds.maps[t].values(), e.as_slice(), "step {t}");
    }
}

#[test]
fn ingest_errors_map_to_exit_codes() {
    let w = Work::new();
    let spec = w.write("spec.json", SPEC);
    let out = w.path("o.stg");
    let empty = mlpst(&["ingest", "--trips", s(&w.write("e.csv", "")), "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&empty), 2, "{}", stderr(&empty));
    let header_only = w.write("h.csv", TRIPS.lines().next().unwrap());
    let o = mlpst(&["ingest", "--trips", s(&header_only), "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let bad = w.write("bad.json", r#"{"lat_min": 0, "lat_max": 1, "lon_min": 0, "lon_max": 1}"#);
    let o = mlpst(&["ingest", "--trips", s(&w.write("t.csv", TRIPS)), "--spec", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("height"), "{}", stderr(&o));
}

#[test]
fn constant_data_trains_to_zero_loss() {
    let w = Work::new();
    let data = w.synth("c.stg", "constant", 4, 60);
    let conf = w.write("tiny.conf", TINY);
    let ckpt = w.path("m.ckpt");
    let o = mlpst(&[
        "train", "--data", s(&data), "--config", s(&conf), "--set", "max_epochs=3", "--out", s(&ckpt),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("val_mae"), "{}", stdout(&o));
    let log = fs::read_to_string(w.path("m.ckpt.log")).unwrap();
    assert_eq!(log.lines().count(), 3);
    for line in log.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "epoch");
        let loss: f64 = fields[3].parse().unwrap();
        assert!(loss < 1e-6, "{line}");
    }
}

#[test]
fn bad_configs_exit_3() {
    let w = Work::new();
    let data = w.synth("c.stg", "constant", 4, 60);
    let conf = w.write("tiny.conf", TINY);
    let ckpt = w.path("m.ckpt");
    let o = mlpst(&[
        "train", "--data", s(&data), "--config", s(&conf), "--set", "input_steps=7", "--out", s(&ckpt),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("input_steps"), "{}", stderr(&o));

    let o = mlpst(&["train", "--data", s(&data), "--config", s(&conf), "--set", "patch=3", "--out", s(&ckpt)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let o = mlpst(&["train", "--data", s(&data), "--config", s(&w.path("missing.conf")), "--out", s(&ckpt)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let o = mlpst(&["inspect", "--nonsense"]);
    assert_eq!(code(&o), 3);

    let o = Command::new(env!("CARGO_BIN_EXE_mlpst"))
        .args(["inspect"])
        .env("MLPST_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn missing_or_corrupt_data_exit_2() {
    let w = Work::new();
    let conf = w.write("tiny.conf", TINY);
    let ckpt = w.path("m.ckpt");
    let o = mlpst(&["train", "--data", s(&w.path("nope.stg")), "--config", s(&conf), "--out", s(&ckpt)]);
    assert_eq!(code(&o), 2);
    let junk = w.write("junk.stg", "STGRID1 but not really");
    let o = mlpst(&["train", "--data", s(&junk), "--config", s(&conf), "--out", s(&ckpt)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("byte"), "{}", stderr(&o));
}

#[test]
fn train_evaluate_predict_round() {
    let w = Work::new();
    let data = w.synth("p.stg", "periodic", 4, 150);
    let conf = w.write("tiny.conf", TINY);
    let ckpt = w.path("m.ckpt");
    let o = mlpst(&["train", "--data", s(&data), "--config", s(&conf), "--out", s(&ckpt)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let log_a = fs::read(w.path("m.ckpt.log")).unwrap();

    // Same seed, same bytes.
    let again = w.path("n.ckpt");
    let o = mlpst(&["train", "--data", s(&data), "--config", s(&conf), "--out", s(&again)]);
    assert_eq!(code(&o), 0);
    assert_eq!(log_a, fs::read(w.path("n.ckpt.log")).unwrap());

    let o = mlpst(&["evaluate", "--data", s(&data), "--checkpoint", s(&ckpt), "--split", "train"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("model,dataset,mae,rmse,r2,params,train_s,infer_ms_per_batch"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "mlpst_full");
    let r2: f64 = row[4].parse().unwrap();
    assert!(r2 > 0.0, "r2 {r2}");

    let o = mlpst(&["evaluate", "--data", s(&data), "--baseline", "persistence", "--config", s(&conf)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("\npersistence,p,"), "{}", stdout(&o));
    let o = mlpst(&["evaluate", "--data", s(&data), "--checkpoint", s(&ckpt), "--baseline", "havg", "--period", "6"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("historical_average"));

    let pred = w.path("pred.stg");
    let o = mlpst(&["predict", "--data", s(&data), "--checkpoint", s(&ckpt), "--at", "150", "--out", s(&pred)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = fs::read(&pred).unwrap();
    let steps = u64::from_le_bytes(bytes[7 + 24..7 + 32].try_into().unwrap());
    assert_eq!(steps, 1);
    assert_eq!(GridDataset::read(&pred).unwrap().maps[0].dims(), (4, 4, 2));

    let o = mlpst(&["predict", "--data", s(&data), "--checkpoint", s(&ckpt), "--at", "5", "--out", s(&pred)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    // A checkpoint for 4x4 maps cannot score 6x6 data.
    let wide = w.synth("w.stg", "periodic", 6, 150);
    let o = mlpst(&["evaluate", "--data", s(&wide), "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let o = mlpst(&["inspect", "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("total"));
}

fn total(out: &Output) -> usize {
    let text = stdout(out);
    let line = text.lines().find(|l| l.starts_with("total")).expect("total line");
    line.split_whitespace().last().unwrap().parse().unwrap()
}

#[test]
fn inspect_counts() {
    let default = mlpst(&["inspect"]);
    assert_eq!(code(&default), 0, "{}", stderr(&default));
    let cfg = RunConfig::default();
    let expect = param_count(&ModelParams::init(&cfg.model, 0).unwrap()).total;
    assert_eq!(total(&default), expect);

    let unshared = mlpst(&["inspect", "--set", "share_layers=false"]);
    assert!(total(&default) < total(&unshared));

    let flat = mlpst(&["inspect", "--set", "depth=0"]);
    let text = stdout(&flat);
    assert!(text.contains("spatial.patch_fc"));
    assert!(!text.contains("spatial.mixer"), "{text}");
    // Per-patch FC: (P²·d)·C_S + C_S = 8·20 + 20.
    let fc: usize = text
        .lines()
        .find(|l| l.starts_with("spatial.patch_fc"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(fc, 180);
}
