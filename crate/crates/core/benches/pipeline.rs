use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gaitway_core::exec::Exec;
use gaitway_core::pressure::{analyze_frames, AnalyticsConfig};
use gaitway_core::sim::{GaitPlan, Scenario, SimContext, WalkerParams};
use gaitway_core::walkway::{PressureFrame, WalkwayConfig};
use gaitway_core::wire::{aggregate, Aggregation};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn setup() -> (GaitPlan, WalkwayConfig, Vec<PressureFrame>) {
    let walkway = WalkwayConfig::new(20).expect("20 tiles");
    let ctx = SimContext {
        walkway,
        duration_s: 60.0,
        obstacles: vec![],
        sentences: None,
    };
    let plan = GaitPlan::new(&WalkerParams::default(), &Scenario::Clean, &ctx).expect("plan");
    let frames = (0..plan.frame_count() as u32).map(|seq| plan.render_frame(&walkway, seq)).collect();
    (plan, walkway, frames)
}

fn pipeline(c: &mut Criterion) {
    let (plan, walkway, frames) = setup();
    let cfg = AnalyticsConfig::default();
    let n = plan.frame_count() as u32;

    let mut g = c.benchmark_group("render");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gaitway_core::exec::map_range(exec, n as usize, |seq| plan.render_frame(&walkway, seq as u32)))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("analyze_frames");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| analyze_frames(black_box(&frames), &cfg, exec)));
    }
    g.finish();

    let mut g = c.benchmark_group("aggregate_mean");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| aggregate(black_box(&frames), Aggregation::Mean, exec).expect("frames"))
        });
    }
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
