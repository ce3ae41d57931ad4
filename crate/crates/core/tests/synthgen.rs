use std::collections::BTreeSet;

use cass_core::synthgen::{
    make_ecg_dataset, make_harmonic_dataset, make_ppg_dataset, split_indices, Dataset, DatasetKind, EcgParamSampler,
    HarmonicSampler, PpgParamSampler,
};
use cass_core::MixtureExample;
use proptest::prelude::*;

fn bits(data: &[MixtureExample]) -> Vec<Vec<u64>> {
    data.iter()
        .map(|ex| {
            ex.components
                .iter()
                .chain(Some(&ex.mixture))
                .chain(ex.noise.as_ref())
                .flat_map(|w| w.samples().iter().map(|v| v.to_bits()))
                .collect()
        })
        .collect()
}

/// Local maxima above half the trace's peak, at least a refractory period apart.
fn beat_times(x: &[f64], fs: f64) -> Vec<f64> {
    let peak = x.iter().cloned().fold(0.0, f64::max);
    let refractory = (0.25 * fs) as usize;
    let mut out: Vec<usize> = Vec::new();
    for i in 1..x.len() - 1 {
        if x[i] > 0.5 * peak && x[i] >= x[i - 1] && x[i] > x[i + 1] {
            match out.last() {
                Some(&j) if i - j < refractory => {}
                _ => out.push(i),
            }
        }
    }
    out.into_iter().map(|i| i as f64 / fs).collect()
}

#[test]
fn thousand_ecg_records_satisfy_the_generator_contract() {
    let sampler = EcgParamSampler::default();
    let data = make_ecg_dataset(1000, &sampler, 2024).unwrap();
    assert_eq!(data.len(), 1000);
    let mut seeds = BTreeSet::new();
    for ex in &data {
        let m = &ex.meta;
        let (mbpm, fbpm, ratio) = (
            m.get("maternal_bpm").unwrap(),
            m.get("fetal_bpm").unwrap(),
            m.get("amplitude_ratio").unwrap(),
        );
        assert!((80.0..=90.0).contains(&mbpm), "{mbpm}");
        assert!((120.0..=160.0).contains(&fbpm), "{fbpm}");
        assert!((2.0..=10.0).contains(&ratio), "{ratio}");
        assert!(ex.additivity_residual() <= 1e-9);
        assert_eq!(ex.k(), 2);
        assert!(seeds.insert(m.seed), "record seeds are distinct");

        // The traces themselves carry the sampled parameters.
        let [maternal, fetal] = [&ex.components[0], &ex.components[1]];
        let realized = maternal.peak() / fetal.peak();
        assert!((realized / ratio - 1.0).abs() < 0.05, "ratio {ratio} realized as {realized}");
        let fs = ex.sample_rate();
        for (trace, bpm) in [(maternal, mbpm), (fetal, fbpm)] {
            let t = beat_times(trace.samples(), fs);
            let intervals: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(!intervals.is_empty());
            for dt in intervals {
                assert!((60.0 / dt - bpm).abs() < 0.03 * bpm, "interval {dt} for {bpm} bpm");
            }
        }
    }
}

#[test]
fn regeneration_is_bit_identical() {
    let sampler = EcgParamSampler::default();
    let a = make_ecg_dataset(50, &sampler, 9).unwrap();
    let b = make_ecg_dataset(50, &sampler, 9).unwrap();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&make_ecg_dataset(50, &sampler, 10).unwrap()));

    // A record depends only on its own index: a longer dataset extends a shorter one.
    let longer = make_ecg_dataset(60, &sampler, 9).unwrap();
    assert_eq!(bits(&a), bits(&longer[..50]));

    let p = PpgParamSampler::default();
    assert_eq!(bits(&make_ppg_dataset(5, &p, 1).unwrap()), bits(&make_ppg_dataset(5, &p, 1).unwrap()));
    let h = HarmonicSampler::default();
    assert_eq!(
        bits(&make_harmonic_dataset(5, &h, 1).unwrap()),
        bits(&make_harmonic_dataset(5, &h, 1).unwrap())
    );
}

#[test]
fn every_generator_is_additive() {
    let data: Vec<MixtureExample> = [
        make_ppg_dataset(20, &PpgParamSampler::default(), 3).unwrap(),
        make_harmonic_dataset(20, &HarmonicSampler::default(), 3).unwrap(),
    ]
    .concat();
    for ex in &data {
        assert!(ex.additivity_residual() <= 1e-9);
        assert!(ex.components.iter().all(|c| c.samples().iter().all(|v| v.is_finite())));
    }
}

#[test]
fn out_of_contract_samplers_are_rejected() {
    let mut s = EcgParamSampler::default();
    s.fetal_bpm = (110.0, 150.0);
    assert!(make_ecg_dataset(3, &s, 0).is_err());
    let mut s = EcgParamSampler::default();
    s.amplitude_ratio = (1.0, 3.0);
    assert!(make_ecg_dataset(3, &s, 0).is_err());
    assert!(make_ecg_dataset(0, &EcgParamSampler::default(), 0).is_err());
    let mut h = HarmonicSampler::default();
    h.high_harmonics = 0;
    assert!(make_harmonic_dataset(2, &h, 0).is_err());
}

#[test]
fn saved_datasets_reload_to_float32_precision() {
    let tmp = tempfile::tempdir().unwrap();
    let examples = make_ecg_dataset(12, &EcgParamSampler::default(), 4).unwrap();
    let ds = Dataset::new(DatasetKind::Ecg, DatasetKind::Ecg.default_component_names(), 4, examples, 0.25).unwrap();
    ds.save(tmp.path()).unwrap();
    let back = Dataset::load(tmp.path()).unwrap();
    assert_eq!(back.split, ds.split);
    assert_eq!(back.component_names, ds.component_names);
    for (a, b) in ds.examples.iter().zip(&back.examples) {
        assert_eq!(a.meta, b.meta);
        for (x, y) in a.mixture.samples().iter().zip(b.mixture.samples()) {
            assert_eq!(*y, *x as f32 as f64);
        }
    }
}

proptest! {
    #[test]
    fn splits_partition_the_records(n in 2usize..400, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let s = split_indices(n, frac, seed).unwrap();
        prop_assert!(!s.train.is_empty() && !s.test.is_empty());
        let expected = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
        prop_assert_eq!(s.test.len(), expected);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, frac, seed).unwrap(), s);
    }
}
