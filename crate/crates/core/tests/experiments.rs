use std::fs;
use std::sync::Arc;

use oas_core::chain::{Chain, SamplerKind, SamplerSettings};
use oas_core::diagnostics::iat;
use oas_core::diagnostics::stats::ks_one_sample;
use oas_core::diagnostics::GaussianMixture;
use oas_core::experiments::{
    generate_dataset, read_summary, read_trace, run_experiment, DatasetSpec, ExperimentConfig,
    NamedMixture,
};
use oas_core::model::{Allocation, MixingPrior, Model, NormalGammaBase};
use oas_core::Error;

fn config(dir: &std::path::Path, iterations: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSpec::named(NamedMixture::Bimodal, 40, 3),
        iterations,
        burn_in: 50,
        output: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn zero_iterations_write_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&config(dir.path(), 0)).unwrap();
    assert_eq!(
        fs::read_to_string(dir.path().join("trace.csv")).unwrap(),
        "iter,k_n,deviance,partition,wall_ns\n"
    );
    assert!(s.tau_k.is_none() && s.iat_note.is_some());
    assert_eq!(read_summary(dir.path().join("summary.json")).unwrap(), s);
}

#[test]
fn marginal_sampler_rejects_general_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 10);
    c.sampler = SamplerKind::Marginal;
    c.prior = MixingPrior::Gp { a: 1.0, b: 1.0 };
    let e = run_experiment(&c).unwrap_err();
    assert!(matches!(e, Error::Incompatible { .. }), "{e}");
    assert_eq!(e.code(), "incompatible");
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    for sampler in [
        SamplerKind::Oas,
        SamplerKind::Ooas,
        SamplerKind::OasWithSplitmerge,
    ] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut c = config(a.path(), 500);
        c.sampler = sampler;
        c.prior = MixingPrior::Gp { a: 1.0, b: 1.0 };
        run_experiment(&c).unwrap();
        c.output = b.path().to_path_buf();
        run_experiment(&c).unwrap();
        let read = |d: &tempfile::TempDir| fs::read(d.path().join("trace.csv")).unwrap();
        assert_eq!(read(&a), read(&b), "{}", sampler.name());
    }
}

#[test]
fn trace_round_trips_to_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 3_000);
    c.record_timing = true;
    let s = run_experiment(&c).unwrap();
    let rows = read_trace(dir.path().join("trace.csv")).unwrap();
    assert_eq!(rows.len(), 3_000);
    assert_eq!(rows[0].iter, 51);
    for r in &rows {
        let alloc = Allocation::from_signature(&r.partition).unwrap();
        assert_eq!((alloc.k(), alloc.n()), (r.k_n, 40));
        assert!(r.deviance.is_finite());
    }
    assert!(rows.iter().any(|r| r.wall_ns > 0));
    let k: Vec<f64> = rows.iter().map(|r| r.k_n as f64).collect();
    assert_eq!(iat(&k).unwrap(), s.tau_k.unwrap());
}

#[test]
fn efficiency_against_a_reference_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let reference = config(a.path(), 2_000);
    run_experiment(&reference).unwrap();
    let mut c = config(b.path(), 2_000);
    c.sampler = SamplerKind::Ooas;
    c.reference = Some(a.path().join("summary.json"));
    let s = run_experiment(&c).unwrap();
    assert!(s.efficiency_k.unwrap() > 0.0);
}

#[test]
fn config_files_fill_missing_fields_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(
        &path,
        r#"{"prior": {"type": "py", "sigma": 0.25, "beta": 2.0}, "dataset": {"kind": "named", "name": "mix", "n": 30}}"#,
    )
    .unwrap();
    let c = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(
        c.prior,
        MixingPrior::Py {
            sigma: 0.25,
            beta: 2.0
        }
    );
    assert_eq!(c.iterations, ExperimentConfig::default().iterations);
    assert_eq!(c.model().unwrap().n(), 30);
    fs::write(&path, "{ nope").unwrap();
    assert_eq!(
        ExperimentConfig::from_file(&path).unwrap_err().code(),
        "parse"
    );
}

#[test]
fn chains_are_reproducible_from_seed() {
    let data = generate_dataset(&NamedMixture::Mix.mixture(), "mix", 50, 4).unwrap();
    for prior in [
        MixingPrior::Dp { beta: 1.0 },
        MixingPrior::Esb { a: 1.0, b: 1.0 },
    ] {
        let model =
            Arc::new(Model::new(&data, NormalGammaBase::default_for(&data), prior).unwrap());
        for kind in SamplerKind::ALL
            .into_iter()
            .filter(|k| k.check_prior(&prior).is_ok())
        {
            let trace = |seed| {
                let mut c =
                    Chain::new(Arc::clone(&model), kind, SamplerSettings::default(), seed).unwrap();
                (0..200)
                    .map(|_| {
                        c.step().unwrap();
                        c.trace_row(0)
                    })
                    .collect::<Vec<_>>()
            };
            assert_eq!(trace(9), trace(9), "{}", kind.name());
        }
    }
}

#[test]
fn leptokurtic_mixture_has_heavy_tails() {
    let data = generate_dataset(&NamedMixture::Lepto.mixture(), "lepto", 100_000, 1).unwrap();
    let y = data.values();
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let m2 = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = y.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    assert!(m4 / (m2 * m2) > 3.0);
}

#[test]
fn single_component_mixture_is_standard_normal() {
    let mix = GaussianMixture::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
    let data = generate_dataset(&mix, "normal", 5_000, 2).unwrap();
    let ks = ks_one_sample(data.values(), |x| mix.cdf(x)).unwrap();
    assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
}
