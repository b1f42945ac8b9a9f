//! JSON rendering of traces and reports.

use std::time::Duration;

use cwseg_core::bench::{BenchReport, ModeTiming};
use cwseg_core::net::StageId;
use cwseg_core::{MetricsReport, StageTrace};
use serde_json::{json, Map, Value};

fn per_stage<T>(f: impl Fn(usize) -> T) -> Value
where
    T: Into<Value>,
{
    let mut m = Map::new();
    for s in StageId::ALL {
        m.insert(s.name().to_string(), f(s.index()).into());
    }
    Value::Object(m)
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

/// One line of `trace.jsonl`.
pub fn trace_line(t: &StageTrace) -> String {
    let v = json!({
        "frame": t.frame_index,
        "fired": t.fired.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "change": t.change,
        "elapsed_us": per_stage(|i| t.elapsed[i].map(micros)),
        "fuse_us": micros(t.fuse_elapsed),
        "convs": per_stage(|i| t.work[i].convs),
        "macs": per_stage(|i| t.work[i].macs),
    });
    v.to_string()
}

pub fn metrics(r: &MetricsReport, frames: usize) -> Value {
    let pct = |v: f64| (v * 1e4).round() / 1e2;
    json!({
        "frames": frames,
        "pixels": r.pixels,
        "positive_class": r.positive_class,
        "acc": r.acc,
        "cl_acc": r.cl_acc,
        "miu": r.miu,
        "fwiu": r.fwiu,
        "per_class_iu": r.per_class_iu,
        "precision": r.precision,
        "recall": r.recall,
        "f1": r.f1,
        "fpr": r.fpr,
        "fnr": r.fnr,
        "avg_precision": r.average_precision,
        "binary_undefined": r.binary_undefined,
        "percent": {
            "acc": pct(r.acc),
            "cl_acc": pct(r.cl_acc),
            "miu": pct(r.miu),
            "fwiu": pct(r.fwiu),
            "f1": pct(r.f1),
            "avg_precision": r.average_precision.map(pct),
            "precision": pct(r.precision),
            "recall": pct(r.recall),
            "false_positive": pct(r.fpr),
            "false_negative": pct(r.fnr),
        },
    })
}

fn mode(m: &ModeTiming) -> Value {
    json!({
        "schedule": m.schedule.to_string(),
        "wall_best_s": m.wall_best.as_secs_f64(),
        "wall_mean_s": m.wall_mean.as_secs_f64(),
        "stage_elapsed_s": per_stage(|i| m.stage_elapsed[i].as_secs_f64()),
        "fuse_s": m.fuse_elapsed.as_secs_f64(),
        "firings": per_stage(|i| m.firings[i]),
        "convs": per_stage(|i| m.work[i].convs),
        "macs": per_stage(|i| m.work[i].macs),
        "total_macs": m.total_work().macs,
    })
}

pub fn bench(r: &BenchReport) -> Value {
    json!({
        "frames": r.frames,
        "repeat": r.repeat,
        "skip_policy": r.policy.name(),
        "full": mode(&r.full),
        "clockwork": mode(&r.clockwork),
        "work_ratio": r.work_ratio,
        "wall_ratio": r.wall_ratio,
        "speedup_work": r.speedup_work,
        "speedup_wall": r.speedup_wall,
    })
}
