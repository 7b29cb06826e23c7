use std::path::{Path, PathBuf};

use airwrite::cli::run;
use airwrite::io;
use airwrite_core::dataset::SplitName;
use airwrite_core::motion::{MotionConfig, ReplayPoint};
use airwrite_core::synth;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["airwrite"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SUBCOMMANDS: [&str; 8] = ["train", "finetune", "eval", "track", "replay", "gen", "calibrate", "serve"];

#[test]
fn every_subcommand_lists_the_shared_flags() {
    for sub in SUBCOMMANDS {
        let r = cli(&[sub, "--help"]);
        assert_eq!(r.code, 0, "{sub}");
        for flag in ["--config", "--seed", "--out", "--model", "--regime", "--velocity-units", "--v-threshold"] {
            assert!(r.out.contains(flag), "{sub} --help lacks {flag}");
        }
    }
}

#[test]
fn unknown_flag_and_bad_values_exit_2() {
    for sub in SUBCOMMANDS {
        assert_eq!(cli(&[sub, "--no-such-flag"]).code, 2, "{sub}");
    }
    assert_eq!(cli(&["eval", "--regime", "5"]).code, 2);
    assert_eq!(cli(&["replay", "x.jsonl", "--v-threshold", "-1", "--model", "m"]).code, 2);
    assert_eq!(cli(&["replay", "x.jsonl", "--velocity-units", "per_minute"]).code, 2);
}

#[test]
fn config_file_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[motion]\nwindow_cap = 0\n").unwrap();
    let r = cli(&["gen", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(r.code, 2, "{}", r.err);
    std::fs::write(&cfg, "[motion\n").unwrap();
    assert_eq!(cli(&["gen", "--config", s(&cfg)]).code, 2);
}

#[test]
fn missing_idx_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let r = cli(&["train", "--regime", "2", "--mnist-dir", s(&missing), "--out", s(dir.path())]);
    assert_eq!(r.code, 3);
    assert!(r.err.contains(s(&missing)), "{}", r.err);
}

#[test]
fn gen_idx_counts() {
    let dir = tempfile::tempdir().unwrap();
    let r = cli(&["gen", "--per-class", "600", "--out", s(dir.path())]);
    assert_eq!(r.code, 0, "{}", r.err);
    let d = io::read_idx_pair(&dir.path().join("ts-a-images-idx3-ubyte"), SplitName::TsA).unwrap();
    assert_eq!(d.len(), 6000);
    assert_eq!(d.class_counts(10).unwrap(), vec![600; 10]);
    assert_eq!(d.side(), 56);
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        assert_eq!(cli(&["gen", "--split", "eval", "--per-class", "3", "--seed", seed, "--out", s(out)]).code, 0);
    }
    let read = |d: &PathBuf| std::fs::read(d.join("eval-images-idx3-ubyte")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

fn write_stream(path: &Path, points: &[ReplayPoint]) {
    io::write_replay(path, points).unwrap();
}

fn still(n: u64, start: u64) -> Vec<ReplayPoint> {
    (0..n)
        .map(|i| ReplayPoint {
            t: start + i * 33,
            x: 0.5,
            y: 0.5,
            found: true,
        })
        .collect()
}

fn tiny_model(dir: &Path) -> PathBuf {
    let model = airwrite_core::model::CnnModel::build(airwrite_core::model::ClassifierConfig::english_digits(), 3).unwrap();
    let path = dir.join("m.awnn");
    io::save_model(&path, &model).unwrap();
    path
}

#[test]
fn replay_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path());
    let quiet = dir.path().join("quiet.jsonl");
    write_stream(&quiet, &still(120, 0));
    let r = cli(&["replay", s(&quiet), "--model", s(&model)]);
    assert_eq!((r.code, r.out.trim()), (0, "no glyph detected"));

    let digit = dir.path().join("seven.jsonl");
    write_stream(&digit, &synth::held_out_streams(1, 2).unwrap()[7].points);
    let first = cli(&["replay", s(&digit), "--model", s(&model)]);
    let second = cli(&["replay", s(&digit), "--model", s(&model)]);
    assert_eq!(first.code, 0, "{}", first.err);
    assert_eq!(first.out, second.out);
    assert_eq!(first.out.lines().count(), 1);
    assert!(first.out.starts_with("glyph 1: "));
    assert_eq!(first.out.matches('(').count(), 3);
}

#[test]
fn malformed_replay_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path());
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"t\":0,\"x\":0.5,\"y\":0.5,\"found\":true}\n{\"t\":33,\"x\":\n").unwrap();
    let r = cli(&["replay", s(&bad), "--model", s(&model)]);
    assert_eq!(r.code, 3);
    assert!(r.err.contains("bad.jsonl:2"), "{}", r.err);
}

#[test]
fn calibrate_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = dir.path().join("quiet.jsonl");
    write_stream(&quiet, &still(150, 0));
    let r = cli(&["calibrate", s(&quiet)]);
    assert_eq!(r.code, 3);
    assert!(r.err.contains("no motion detected"), "{}", r.err);

    let short = dir.path().join("short.jsonl");
    write_stream(&short, &still(30, 0));
    assert_eq!(cli(&["calibrate", s(&short)]).code, 3);

    let mixed = dir.path().join("mixed.jsonl");
    let mut pts = still(60, 0);
    pts.extend(synth::held_out_streams(1, 4).unwrap()[2].points.iter().map(|p| ReplayPoint { t: p.t + 2000, ..*p }));
    write_stream(&mixed, &pts);
    let r = cli(&["calibrate", s(&mixed)]);
    assert_eq!(r.code, 0, "{}", r.err);
    let v: f64 = r.out.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(v > 0.0 && v < 1.0, "{v}");
}

fn render(dir: &Path, points: &[ReplayPoint]) {
    let frames = synth::render_synthetic_frames(points, [0, 200, 0], 6, (320, 240));
    let mut rows = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let name = io::frame_file_name(i);
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(dir.join(&name), io::encode_ppm(&f.frame)).unwrap();
        rows.push(io::ManifestRow {
            index: i,
            file: name,
            timestamp_ms: f.frame.timestamp_ms,
        });
    }
    io::write_manifest(&dir.join(io::MANIFEST_NAME), &rows).unwrap();
}

fn observations(out: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(out.join("observations.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,found,x,y,dx,dy,pen_state"));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

fn glyph_count(out: &Path) -> usize {
    std::fs::read_dir(out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("glyph_"))
        .count()
}

#[test]
fn track_rendered_digit() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    render(&frames, &synth::held_out_streams(1, 6).unwrap()[4].points);
    let out = dir.path().join("out");
    let model = tiny_model(dir.path());
    let r = cli(&["track", "--frames", s(&frames), "--out", s(&out), "--model", s(&model)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(glyph_count(&out), 1);
    assert!(observations(&out).iter().any(|row| row[6] == "down"));
    assert!(out.join("predictions.csv").exists());
}

#[test]
fn track_empty_background() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let hidden: Vec<ReplayPoint> = still(40, 0).into_iter().map(|p| ReplayPoint { found: false, ..p }).collect();
    render(&frames, &hidden);
    let out = dir.path().join("out");
    assert_eq!(cli(&["track", "--frames", s(&frames), "--out", s(&out)]).code, 0);
    assert_eq!(glyph_count(&out), 0);
    let rows = observations(&out);
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r[1] == "false"));
}

#[test]
fn track_two_digits_with_long_dwell() {
    let dir = tempfile::tempdir().unwrap();
    let streams = synth::held_out_streams(1, 8).unwrap();
    let mut pts = streams[1].points.clone();
    let offset = pts.last().unwrap().t + 33;
    let last = *pts.last().unwrap();
    // one second of holding still between the two digits
    pts.extend((0..30).map(|i| ReplayPoint { t: offset + i * 33, ..last }));
    let offset = pts.last().unwrap().t + 33;
    pts.extend(streams[7].points.iter().map(|p| ReplayPoint { t: p.t + offset, ..*p }));
    let frames = dir.path().join("frames");
    render(&frames, &pts);
    let out = dir.path().join("out");
    assert_eq!(cli(&["track", "--frames", s(&frames), "--out", s(&out)]).code, 0);
    assert_eq!(glyph_count(&out), 2);
}

#[test]
fn track_manifest_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    render(&frames, &still(5, 0));
    std::fs::remove_file(frames.join(io::frame_file_name(4))).unwrap();
    assert_eq!(cli(&["track", "--frames", s(&frames), "--out", s(dir.path())]).code, 3);
}

/// Small TS-B stand-in and a config pointing at it, for fast training runs.
fn tiny_setup(dir: &Path) -> PathBuf {
    let ts_b = synth::air_split(SplitName::TsA, 4, &MotionConfig::default(), 99).unwrap();
    let images = dir.join("tsb-images-idx3-ubyte");
    io::write_idx_pair(&images, &ts_b).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[paths]\nts_b = {:?}\n\n[data]\nts_a_per_class = 3\neval_per_class = 2\n\n[optimizer]\nepochs = 2\nbatch_size = 8\n",
            s(&images)
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn eval_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = cli(&["eval", "--config", s(&cfg), "--regime", "4", "--seed", "7", "--out", s(out)]);
        assert_eq!(r.code, 0, "{}", r.err);
    }
    for name in ["report.json", "confusion.csv", "model.awnn", "misclassified/index.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let report: airwrite_core::eval::EvalReport =
        serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.row_sums(), vec![2; 10]);
    let index = std::fs::read_to_string(a.join("misclassified/index.csv")).unwrap();
    assert!(index.starts_with("file,actual,predicted,confidence"));
    assert_eq!(index.lines().count() - 1, report.misclassified.len().min(20));
}

#[test]
fn two_step_training_equals_regime_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let (one, two, fine) = (dir.path().join("one"), dir.path().join("two"), dir.path().join("fine"));
    assert_eq!(cli(&["train", "--config", s(&cfg), "--regime", "4", "--seed", "5", "--out", s(&one)]).code, 0);
    assert_eq!(cli(&["train", "--config", s(&cfg), "--regime", "2", "--seed", "5", "--out", s(&two)]).code, 0);
    let r = cli(&[
        "finetune",
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--from",
        s(&two.join("model.awnn")),
        "--out",
        s(&fine),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let a = io::load_model(&one.join("model.awnn")).unwrap();
    let b = io::load_model(&fine.join("model.awnn")).unwrap();
    assert_eq!(a.network(), b.network());
}

#[test]
fn freezing_keeps_the_convolutions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let start = tiny_model(dir.path());
    let out = dir.path().join("frozen");
    let r = cli(&["finetune", "--config", s(&cfg), "--from", s(&start), "--freeze-features", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.err);
    let before = io::load_model(&start).unwrap();
    let after = io::load_model(&out.join("model.awnn")).unwrap();
    let layers = |m: &airwrite_core::model::CnnModel, i: usize| m.network().layers()[i].params().to_vec();
    assert_eq!(layers(&before, 0), layers(&after, 0));
    assert_eq!(layers(&before, 3), layers(&after, 3));
    assert_ne!(layers(&before, 8), layers(&after, 8));
}
