mod common;

use common::*;
use cwseg_core::io::{self, Palette};
use cwseg_core::{synth, LabelMask};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn always_writes_one_mask_and_full_trace_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let w = default_weights(dir.path(), 42);
    let m = write_sequence(dir.path(), &synth::random_sequence(3, 64, 64, 3, 5), None);
    let out = dir.path().join("out");
    run_ok(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--schedule",
        "always",
        "--out",
        p(&out),
    ]);
    assert_eq!(mask_files(&out).len(), 3);
    let trace = read_trace(&out);
    assert_eq!(trace.len(), 3);
    for (i, r) in trace.iter().enumerate() {
        assert_eq!(r["frame"].as_u64(), Some(i as u64));
        assert_eq!(r["fired"].as_array().unwrap().len(), 3);
        for s in ["stage1", "stage2", "stage3"] {
            assert!(r["elapsed_us"][s].as_f64().is_some());
        }
    }
    assert!(trace[0]["change"].is_null());
}

#[test]
fn negative_theta_masks_are_byte_identical_to_always() {
    let dir = tempfile::tempdir().unwrap();
    let w = default_weights(dir.path(), 42);
    let m = write_sequence(
        dir.path(),
        &synth::drifting_sequence(3, 64, 64, 5, 0.2, 9),
        None,
    );
    let a = dir.path().join("always");
    let b = dir.path().join("adaptive");
    run_ok(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--schedule",
        "always",
        "--out",
        p(&a),
    ]);
    run_ok(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--schedule",
        "adaptive",
        "--theta",
        "-1",
        "--out",
        p(&b),
    ]);
    let (ma, mb) = (mask_files(&a), mask_files(&b));
    assert_eq!(ma.len(), 5);
    assert_eq!(ma, mb);
}

#[test]
fn fixed_schedule_trace_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let w = default_weights(dir.path(), 42);
    let m = write_sequence(dir.path(), &synth::random_sequence(3, 64, 64, 8, 3), None);
    let out = dir.path().join("out");
    run_ok(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--schedule",
        "fixed",
        "--period2",
        "2",
        "--period3",
        "4",
        "--out",
        p(&out),
    ]);
    let trace = read_trace(&out);
    assert_eq!(firing_frames(&trace, "stage1"), (0..8).collect::<Vec<_>>());
    assert_eq!(firing_frames(&trace, "stage2"), vec![0, 2, 4, 6]);
    assert_eq!(firing_frames(&trace, "stage3"), vec![0, 4]);
    for r in &trace {
        if !fired(r, "stage3") {
            assert_eq!(r["macs"]["stage3"].as_u64(), Some(0));
            assert!(r["elapsed_us"]["stage3"].is_null());
        }
    }
}

#[test]
fn eval_of_identical_masks_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let pal = Palette::kitti_road();
    let frames = synth::random_sequence(3, 16, 16, 3, 1);
    let masks: Vec<LabelMask> = (0..3u64)
        .map(|s| {
            let labels = (0..256)
                .map(|i| (i as u64 * 7 + s).is_multiple_of(3) as u16)
                .collect();
            LabelMask::new(16, 16, labels).unwrap()
        })
        .collect();
    let m = write_sequence(dir.path(), &frames, Some((&masks, &pal)));
    let pred = dir.path().join("pred");
    write_predictions(&pred, &masks, &pal);
    let r = run_json(&["eval", "--pred-dir", p(&pred), "--manifest", p(&m)]);
    for k in ["acc", "cl_acc", "miu", "fwiu", "precision", "recall", "f1"] {
        assert_eq!(f(&r, k), 1.0, "{k}");
    }
    assert_eq!(f(&r, "fpr"), 0.0);
    assert_eq!(f(&r, "fnr"), 0.0);
    assert_eq!(r["pixels"].as_u64(), Some(768));
    assert!(r["avg_precision"].is_null());
}

#[test]
fn eval_hand_built_two_by_two() {
    // truth [[0,1],[1,1]], pred [[0,0],[1,1]]: counts [[1,0],[1,2]]
    let dir = tempfile::tempdir().unwrap();
    let pal = Palette::kitti_road();
    let truth = LabelMask::new(2, 2, vec![0, 1, 1, 1]).unwrap();
    let pred = LabelMask::new(2, 2, vec![0, 0, 1, 1]).unwrap();
    let m = write_sequence(
        dir.path(),
        &[synth::random_frame(3, 2, 2, 0)],
        Some((&[truth], &pal)),
    );
    let pd = dir.path().join("pred");
    write_predictions(&pd, &[pred], &pal);
    let r = run_json(&[
        "eval",
        "--pred-dir",
        p(&pd),
        "--manifest",
        p(&m),
        "--positive-class",
        "1",
    ]);
    assert!(close(f(&r, "acc"), 0.75));
    assert!(close(f(&r, "cl_acc"), (1.0 + 2.0 / 3.0) / 2.0));
    assert!(close(f(&r, "miu"), (0.5 + 2.0 / 3.0) / 2.0));
    assert!(close(f(&r, "fwiu"), 0.25 * 0.5 + 0.75 * (2.0 / 3.0)));
    assert!(close(f(&r, "precision"), 1.0));
    assert!(close(f(&r, "recall"), 2.0 / 3.0));
    assert!(close(f(&r, "f1"), 0.8));
    assert!(close(f(&r, "fpr"), 0.0));
    assert!(close(f(&r, "fnr"), 1.0 / 3.0));
    let iu = r["per_class_iu"].as_array().unwrap();
    assert!(close(iu[0].as_f64().unwrap(), 0.5));
    assert!(close(iu[1].as_f64().unwrap(), 2.0 / 3.0));
}

#[test]
fn eval_reproduces_shared_confusion_example() {
    // counts [[3,1],[2,4]] laid out on a 2x5 image
    let dir = tempfile::tempdir().unwrap();
    let pal = Palette::kitti_road();
    let truth = LabelMask::new(2, 5, vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1]).unwrap();
    let pred = LabelMask::new(2, 5, vec![0, 0, 0, 1, 0, 0, 1, 1, 1, 1]).unwrap();
    let m = write_sequence(
        dir.path(),
        &[synth::random_frame(3, 2, 5, 0)],
        Some((&[truth], &pal)),
    );
    let pd = dir.path().join("pred");
    write_predictions(&pd, &[pred], &pal);
    let r = run_json(&["eval", "--pred-dir", p(&pd), "--manifest", p(&m)]);
    assert!(close(f(&r, "acc"), 0.7));
    assert!(close(f(&r, "cl_acc"), (0.75 + 4.0 / 6.0) / 2.0));
    assert!(close(f(&r, "miu"), (0.5 + 4.0 / 7.0) / 2.0));
    assert!(close(f(&r, "fwiu"), 0.4 * 0.5 + 0.6 * 4.0 / 7.0));
}

#[test]
fn eval_missing_prediction_names_the_frame() {
    let dir = tempfile::tempdir().unwrap();
    let pal = Palette::kitti_road();
    let masks = vec![LabelMask::filled(4, 4, 1); 3];
    let m = write_sequence(
        dir.path(),
        &synth::random_sequence(3, 4, 4, 3, 2),
        Some((&masks, &pal)),
    );
    let pd = dir.path().join("pred");
    write_predictions(&pd, &masks, &pal);
    std::fs::remove_file(pd.join("f001.ppm")).unwrap();
    let out = run(&["eval", "--pred-dir", p(&pd), "--manifest", p(&m)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("f001"), "{err}");
}

#[test]
fn eval_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let pal = Palette::default_for(3);
    let mk = |s: u64| {
        let mut g = cwseg_core::rng::SplitMix64::new(s);
        LabelMask::new(8, 8, (0..64).map(|_| g.below(3) as u16).collect()).unwrap()
    };
    let truth: Vec<_> = (0..6).map(mk).collect();
    let pred: Vec<_> = (10..16).map(mk).collect();
    let m = write_sequence(
        dir.path(),
        &synth::random_sequence(3, 8, 8, 6, 2),
        Some((&truth, &pal)),
    );
    let pd = dir.path().join("pred");
    write_predictions(&pd, &pred, &pal);
    let args = ["eval", "--pred-dir", p(&pd), "--manifest", p(&m)];
    let one = cwseg()
        .args(args)
        .env("CWSEG_THREADS", "1")
        .output()
        .unwrap();
    let many = cwseg()
        .args(args)
        .env("CWSEG_THREADS", "4")
        .output()
        .unwrap();
    assert!(one.status.success() && many.status.success());
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn scores_feed_average_precision() {
    let dir = tempfile::tempdir().unwrap();
    let w = default_weights(dir.path(), 42);
    let seq = dir.path().join("seq");
    run_ok(&[
        "synth",
        "--out",
        p(&seq),
        "--scenes",
        "2",
        "--per-scene",
        "2",
        "--truth-weights",
        p(&w),
    ]);
    let m = seq.join("sequence.txt");
    let out = dir.path().join("out");
    run_ok(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--schedule",
        "always",
        "--scores-class",
        "1",
        "--out",
        p(&out),
    ]);
    let r = run_json(&[
        "eval",
        "--pred-dir",
        p(&out),
        "--manifest",
        p(&m),
        "--scores-dir",
        p(&out),
    ]);
    assert_eq!(f(&r, "acc"), 1.0);
    let probs = io::read_pfm(out.join("00000.pfm")).unwrap();
    assert!(probs.data().iter().all(|v| (0.0..=1.0).contains(v)));
    // argmax class-1 pixels have probability above 1/2, so ranking is perfect
    assert_eq!(f(&r, "avg_precision"), 1.0);
}

#[test]
fn bench_static_sequence_fires_deep_stage_once() {
    let dir = tempfile::tempdir().unwrap();
    let w = default_weights(dir.path(), 42);
    let frames = synth::static_scenes(3, 64, 64, 1, 16, 11);
    let m = write_sequence(dir.path(), &frames, None);
    let r = run_json(&[
        "bench",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--schedule",
        "adaptive",
        "--theta",
        "1e-9",
        "--repeat",
        "1",
    ]);
    assert_eq!(r["frames"].as_u64(), Some(16));
    assert_eq!(r["clockwork"]["firings"]["stage3"].as_u64(), Some(1));
    assert_eq!(r["full"]["firings"]["stage3"].as_u64(), Some(16));
    assert!(f(&r, "speedup_work") > 1.0);
    assert!(f(&r, "speedup_wall") > 1.0);
}

#[test]
fn bench_firing_count_matches_segment_trace() {
    let dir = tempfile::tempdir().unwrap();
    let w = default_weights(dir.path(), 42);
    let frames = synth::static_scenes(3, 64, 64, 3, 3, 4);
    let m = write_sequence(dir.path(), &frames, None);
    let sched = ["--schedule", "adaptive", "--theta", "1e-6"];
    let mut args = vec![
        "bench",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--repeat",
        "1",
    ];
    args.extend(sched);
    let r = run_json(&args);
    let out = dir.path().join("out");
    let mut args = vec![
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--out",
        p(&out),
    ];
    args.extend(sched);
    run_ok(&args);
    let trace = read_trace(&out);
    for s in ["stage1", "stage2", "stage3"] {
        assert_eq!(
            r["clockwork"]["firings"][s].as_u64(),
            Some(firing_frames(&trace, s).len() as u64),
            "{s}"
        );
    }
    assert_eq!(firing_frames(&trace, "stage3"), vec![0, 3, 6]);
}

#[test]
fn gen_weights_is_deterministic_in_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run_ok(&[
        "gen-weights",
        "--seed",
        "5",
        "--classes",
        "3",
        "--base-width",
        "4",
        "--out",
        p(&a),
    ]);
    run_ok(&[
        "gen-weights",
        "--seed",
        "5",
        "--classes",
        "3",
        "--base-width",
        "4",
        "--out",
        p(&b),
    ]);
    run_ok(&[
        "gen-weights",
        "--seed",
        "6",
        "--classes",
        "3",
        "--base-width",
        "4",
        "--out",
        p(&c),
    ]);
    let (ba, bb, bc) = (
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        std::fs::read(&c).unwrap(),
    );
    assert_eq!(ba, bb);
    assert_ne!(ba, bc);
    let cfg = cwseg_core::NetConfig::infer_from(&io::read_weights(&a).unwrap()).unwrap();
    assert_eq!(cfg, cwseg_core::NetConfig::new(3, 3, 4));
}

#[test]
fn exit_codes_distinguish_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_sequence(dir.path(), &synth::random_sequence(3, 64, 64, 1, 1), None);
    let out = dir.path().join("out");

    let usage = run(&["segment", "--manifest", p(&m), "--bogus"]);
    assert_eq!(usage.status.code(), Some(2));

    let missing = dir.path().join("nope.cwfcn");
    let io_err = run(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&missing),
        "--out",
        p(&out),
    ]);
    assert_eq!(io_err.status.code(), Some(3));

    let corrupt = dir.path().join("bad.cwfcn");
    std::fs::write(&corrupt, b"CWFCN1garbage").unwrap();
    let data = run(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&corrupt),
        "--out",
        p(&out),
    ]);
    assert_eq!(data.status.code(), Some(4));

    let w = default_weights(dir.path(), 1);
    let bad_period = run(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--schedule",
        "fixed",
        "--period2",
        "0",
        "--out",
        p(&out),
    ]);
    assert_eq!(bad_period.status.code(), Some(4));
}

#[test]
fn resolution_change_mid_sequence_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let w = default_weights(dir.path(), 42);
    let frames = [
        synth::random_frame(3, 64, 64, 1),
        synth::random_frame(3, 32, 32, 2),
    ];
    let m = write_sequence(dir.path(), &frames, None);
    let out = run(&[
        "segment",
        "--manifest",
        p(&m),
        "--weights",
        p(&w),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolution changed"));
}

#[test]
fn eval_out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let pal = Palette::kitti_road();
    let masks = vec![LabelMask::new(2, 2, vec![0, 1, 1, 0]).unwrap()];
    let m = write_sequence(dir.path(), &[synth::random_frame(3, 2, 2, 0)], Some((&masks, &pal)));
    let pd = dir.path().join("pred");
    write_predictions(&pd, &masks, &pal);
    let report = dir.path().join("report.json");
    let stdout = run_ok(&["eval", "--pred-dir", p(&pd), "--manifest", p(&m), "--out", p(&report)]);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), stdout);
}
