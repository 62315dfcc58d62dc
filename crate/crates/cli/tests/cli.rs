use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fringeforge::classical::decode_pgm;
use fringeforge::nas::Architecture;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fringeforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
        .to_string()
}

fn dataset(root: &Path, name: &str, n: usize) -> PathBuf {
    let d = root.join(name);
    ok(&["synth", "--n", &n.to_string(), "--size", "64", "--seed", "1", "--out", p(&d)]);
    d
}

#[test]
fn synth_is_deterministic_and_writes_manifest() {
    let t = tempfile::tempdir().unwrap();
    let a = dataset(t.path(), "a", 8);
    let b = dataset(t.path(), "b", 8);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 9);
    assert_eq!(dir_bytes(&a).len(), 17);
}

#[test]
fn synth_rejects_non_power_of_two() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--n", "8", "--size", "100", "--out", p(&t.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("power of two"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let t = tempfile::tempdir().unwrap();
    let blocker = t.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&["synth", "--n", "6", "--out", p(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn classical_round_trip_reports_psnr_and_timings() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(&["classical", "--compensate", "--out", p(t.path())]);
    let timing = out.lines().find(|l| l.starts_with("timing:")).unwrap();
    assert_eq!(timing.matches(" ms").count(), 3, "{timing}");
    let psnr: f64 = value(&out, "psnr_db").parse().unwrap();
    assert!(psnr >= 40.0, "{psnr}");
    for stem in ["wrapped", "unwrapped", "compensated"] {
        let img = decode_pgm(&fs::read(t.path().join(format!("{stem}.pgm"))).unwrap()).unwrap();
        assert_eq!((img.width, img.height), (256, 256));
        assert!(img.range.is_some());
    }
}

#[test]
fn classical_without_unwrap_writes_only_wrapped_phase() {
    let t = tempfile::tempdir().unwrap();
    ok(&["classical", "--no-unwrap", "--size", "64", "--out", p(t.path())]);
    assert!(t.path().join("wrapped.qpt").exists());
    assert!(!t.path().join("unwrapped.qpt").exists());
    assert!(!t.path().join("compensated.qpt").exists());
}

#[test]
fn classical_compensation_needs_calibration() {
    let t = tempfile::tempdir().unwrap();
    ok(&["classical", "--size", "64", "--out", p(&t.path().join("scene"))]);
    let input = t.path().join("scene/interferogram.qpt");
    let o = run(&["classical", "--input", p(&input), "--compensate", "--out", p(&t.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("calibration"));

    let cal = t.path().join("scene/calibration.qpt");
    let truth = t.path().join("scene/truth.qpt");
    let out = ok(&[
        "classical", "--input", p(&input), "--calibration", p(&cal), "--truth", p(&truth), "--carrier", "8,0",
        "--compensate", "--out", p(&t.path().join("o")),
    ]);
    assert!(value(&out, "psnr_db").parse::<f64>().unwrap() > 30.0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "# toy\nn = 5\nsize = 32\nseed = 3\n").unwrap();
    let out = ok(&["synth", "--config", p(&cfg), "--n", "6", "--out", p(&t.path().join("d"))]);
    assert_eq!(value(&out, "pairs"), "6");
    assert_eq!(value(&out, "size"), "32x32");

    fs::write(&cfg, "n = 5\nbogus = 1\n").unwrap();
    let o = run(&["synth", "--config", p(&cfg), "--out", p(&t.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = run(&["synth", "--config", p(&t.path().join("missing.cfg")), "--out", p(&t.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_must_be_positive() {
    let t = tempfile::tempdir().unwrap();
    let o = bin()
        .env("FRINGEFORGE_THREADS", "0")
        .args(["synth", "--n", "6", "--out", p(t.path())])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin()
        .env("FRINGEFORGE_THREADS", "2")
        .args(["synth", "--n", "6", "--out", p(t.path())])
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn small_pipeline_end_to_end() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path(), "data", 6);
    let s = t.path().join("search");
    let out = ok(&[
        "search", "--data", p(&data), "--l-stages", "2", "--pretrain-epochs", "1", "--epochs", "1", "--sigma", "0.01",
        "--out", p(&s),
    ]);
    assert_eq!(value(&out, "status"), "ok");
    for f in ["supernet.ckpt", "architecture.txt", "weights.csv", "search_history.csv", "summary.txt"] {
        assert!(s.join(f).exists(), "{f}");
    }
    let weights = fs::read_to_string(s.join("weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 1 + 2 * 7);
    let arch = Architecture::import(&fs::read_to_string(s.join("architecture.txt")).unwrap()).unwrap();
    assert_eq!(arch.levels(), 2);

    let reprune = t.path().join("re.txt");
    ok(&["prune", "--checkpoint", p(&s.join("supernet.ckpt")), "--sigma", "0.01", "--out", p(&reprune)]);
    assert_eq!(Architecture::import(&fs::read_to_string(&reprune).unwrap()).unwrap().edges(), arch.edges());

    let m = t.path().join("model");
    ok(&["train", "--data", p(&data), "--arch", p(&s.join("architecture.txt")), "--epochs", "1", "--out", p(&m)]);
    let ckpt = m.join("model.ckpt");
    let e = t.path().join("eval");
    let out = ok(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt), "--out", p(&e)]);
    assert!(value(&out, "psnr_db").parse::<f64>().unwrap().is_finite());
    let csv = fs::read_to_string(e.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("split,n,psnr_db,mixge\ntest,"));

    let inf = t.path().join("infer");
    ok(&["infer", "--checkpoint", p(&ckpt), "--input", p(&data.join("pair_0000_input.qpt")), "--out", p(&inf)]);
    let img = decode_pgm(&fs::read(inf.join("pair_0000_input_phase.pgm")).unwrap()).unwrap();
    assert_eq!((img.width, img.height), (64, 64));
    assert_eq!(img.range, Some((0.0, 12.0)));

    let b = t.path().join("bench");
    ok(&["bench", "--checkpoint", p(&ckpt), "--size", "32,64", "--repeats", "3", "--out", p(&b)]);
    assert_eq!(fs::read_to_string(b.join("latency.csv")).unwrap().lines().count(), 3);

    ok(&["train", "--data", p(&data), "--full", "--l-stages", "2", "--epochs", "0", "--out", p(&t.path().join("f"))]);
}

#[test]
fn checkpoint_version_mismatch_is_reported() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path(), "data", 6);
    let m = t.path().join("m");
    ok(&["train", "--data", p(&data), "--full", "--l-stages", "2", "--epochs", "0", "--out", p(&m)]);
    let path = m.join("model.ckpt");
    let mut bytes = fs::read(&path).unwrap();
    let header = b"fringeforge-checkpoint 1";
    assert!(bytes.starts_with(header));
    bytes[header.len() - 1] = b'7';
    fs::write(&path, bytes).unwrap();
    let o = run(&["eval", "--data", p(&data), "--checkpoint", p(&path), "--out", p(&t.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("expected 1") && err.contains("found 7"), "{err}");
}

#[test]
fn train_needs_an_architecture_source() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path(), "data", 6);
    let o = run(&["train", "--data", p(&data), "--out", p(&t.path().join("m"))]);
    assert_eq!(o.status.code(), Some(1));
    let bad = t.path().join("bad.txt");
    fs::write(&bad, "edge D1 D2\n").unwrap();
    let o = run(&["train", "--data", p(&data), "--arch", p(&bad), "--out", p(&t.path().join("m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("acyclicity"));
}
