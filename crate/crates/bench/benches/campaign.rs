//! Hot-path benchmarks: the per-shot costs that dominate campaign runtime.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DMatrix;

use stabwit_core::calib::pair_generator_from_lambda;
use stabwit_core::mitigate::CtmpMitigator;
use stabwit_core::noise::{ReadoutNoiseModel, SynthRanges};
use stabwit_core::tableau::{sample_witness_setting, SettingSampler, StabilizerTableau};
use stabwit_core::{BitString, GraphSpec};

fn setting_pipeline(c: &mut Criterion) {
    let graph = GraphSpec::chain(95);
    let tableau = StabilizerTableau::cluster(&graph).unwrap();
    let mut rng = stabwit_core::rng::master(11);

    c.bench_function("chain95_setting_compile", |b| {
        b.iter(|| {
            let setting = sample_witness_setting(&tableau, &mut rng).unwrap();
            SettingSampler::compile(&tableau, &setting.per_qubit_basis).unwrap()
        })
    });

    let setting = sample_witness_setting(&tableau, &mut rng).unwrap();
    let sampler = SettingSampler::compile(&tableau, &setting.per_qubit_basis).unwrap();
    let mut outcome = BitString::zeros(graph.n());
    c.bench_function("chain95_shot_sample", |b| {
        b.iter(|| {
            sampler.sample_into(&mut outcome, &mut rng);
            setting.shot_value(&outcome)
        })
    });
}

fn noisy_model(n: usize) -> ReadoutNoiseModel {
    let ranges = SynthRanges {
        pair_rate: (0.01, 0.03),
        pairs: (0..n - 1).map(|j| (j, j + 1)).collect(),
        ..SynthRanges::default()
    };
    ReadoutNoiseModel::synth_device(n, 5, &ranges).unwrap()
}

fn ctmp_paths(c: &mut Criterion) {
    let model = noisy_model(10);
    let rates = model.build_rate_set().unwrap();
    let mut rng = stabwit_core::rng::master(7);

    let gillespie_rates = model.build_rate_set().unwrap();
    c.bench_function("gillespie_n10", |b| {
        b.iter_batched(
            || BitString::zeros(10),
            |mut s| {
                gillespie_rates.gillespie(&mut s, &mut rng);
                s
            },
            BatchSize::SmallInput,
        )
    });

    let mitigator = CtmpMitigator::new(rates, 7);
    let observed = BitString::zeros(10);
    c.bench_function("ctmp_walk_shot", |b| {
        b.iter(|| {
            mitigator
                .shot_value(&observed, 1, |s| if s.count_ones() % 2 == 0 { 1.0 } else { -1.0 }, &mut rng)
                .unwrap()
        })
    });
}

fn pair_log(c: &mut Criterion) {
    // A diagonally dominant stochastic 4x4, the shape calibration feeds in.
    let lambda = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.94, 0.02, 0.03, 0.01, //
            0.02, 0.93, 0.01, 0.03, //
            0.03, 0.01, 0.94, 0.02, //
            0.01, 0.04, 0.02, 0.94,
        ],
    );
    c.bench_function("pair_generator_log", |b| {
        b.iter(|| pair_generator_from_lambda(&lambda).unwrap())
    });
}

criterion_group!(benches, setting_pipeline, ctmp_paths, pair_log);
criterion_main!(benches);
