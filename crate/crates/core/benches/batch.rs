use armtwin_core::batch::{round_trip, Execution, RoundTripSettings};
use armtwin_core::ik::IkConfig;
use armtwin_core::kinematics::KinematicChain;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn round_trip_batch(c: &mut Criterion) {
    let chain = KinematicChain::reference_6dof();
    let cfg = IkConfig::default();
    let mut group = c.benchmark_group("round_trip");
    group.sample_size(10);
    for targets in [32usize, 128] {
        let settings = RoundTripSettings {
            targets,
            max_frames: 10,
            ..RoundTripSettings::default()
        };
        for (name, exec) in [
            ("sequential", Execution::Sequential),
            ("parallel", Execution::Parallel),
        ] {
            group.bench_with_input(BenchmarkId::new(name, targets), &settings, |b, s| {
                b.iter(|| round_trip(&chain, &cfg, s, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, round_trip_batch);
criterion_main!(benches);
