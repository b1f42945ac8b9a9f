#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cwseg_core::io::{self, Palette, SequenceEntry, SequenceManifest};
use cwseg_core::{LabelMask, NetConfig, Tensor};
use serde_json::Value;

pub fn cwseg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cwseg"))
}

pub fn run(args: &[&str]) -> Output {
    cwseg().args(args).output().expect("spawn cwseg")
}

/// Runs `cwseg` and returns stdout, panicking with stderr on failure.
pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "cwseg {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn run_json(args: &[&str]) -> Value {
    serde_json::from_str(&run_ok(args)).expect("json report")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn default_weights(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("w{seed}.cwfcn"));
    let cfg = NetConfig::default();
    io::write_weights(&io::gen_weights(&cfg, seed).unwrap(), &path).unwrap();
    path
}

/// Writes frames (and optional truth masks) under `dir` and returns the
/// manifest path.
pub fn write_sequence(
    dir: &Path,
    frames: &[Tensor],
    truth: Option<(&[LabelMask], &Palette)>,
) -> PathBuf {
    std::fs::create_dir_all(dir.join("frames")).unwrap();
    let mut m = SequenceManifest {
        entries: Vec::new(),
        palette: truth.map(|(_, pal)| pal.clone()),
    };
    for (i, f) in frames.iter().enumerate() {
        let frame = PathBuf::from(format!("frames/f{i:03}.ppm"));
        io::write_image(f, dir.join(&frame)).unwrap();
        let truth = truth.map(|(masks, pal)| {
            std::fs::create_dir_all(dir.join("gt")).unwrap();
            let t = PathBuf::from(format!("gt/f{i:03}.ppm"));
            io::write_mask(&masks[i], pal, dir.join(&t)).unwrap();
            t
        });
        m.entries.push(SequenceEntry { frame, truth });
    }
    let path = dir.join("sequence.txt");
    std::fs::write(&path, m.to_text()).unwrap();
    path
}

/// Writes masks as `<out>/f{i:03}.ppm`, matching [`write_sequence`] stems.
pub fn write_predictions(out: &Path, masks: &[LabelMask], pal: &Palette) {
    std::fs::create_dir_all(out).unwrap();
    for (i, m) in masks.iter().enumerate() {
        io::write_mask(m, pal, out.join(format!("f{i:03}.ppm"))).unwrap();
    }
}

pub fn read_trace(out: &Path) -> Vec<Value> {
    std::fs::read_to_string(out.join("trace.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("trace record"))
        .collect()
}

pub fn fired(record: &Value, stage: &str) -> bool {
    record["fired"]
        .as_array()
        .expect("fired array")
        .iter()
        .any(|s| s == stage)
}

/// Frame indices at which `stage` fired.
pub fn firing_frames(trace: &[Value], stage: &str) -> Vec<u64> {
    trace
        .iter()
        .filter(|r| fired(r, stage))
        .map(|r| r["frame"].as_u64().unwrap())
        .collect()
}

pub fn mask_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

pub fn f(v: &Value, key: &str) -> f64 {
    v[key]
        .as_f64()
        .unwrap_or_else(|| panic!("missing numeric {key} in {v}"))
}
