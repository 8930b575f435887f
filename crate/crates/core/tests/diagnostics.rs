use std::sync::Arc;

use oas_core::chain::{Chain, SamplerKind, SamplerSettings};
use oas_core::diagnostics::{
    iat, total_variation, DensityAccumulator, DensityEstimate, GaussianMixture, Grid,
};
use oas_core::experiments::{generate_dataset, NamedMixture};
use oas_core::model::{MixingPrior, Model, NormalGammaBase};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(mu: f64) -> GaussianMixture {
    GaussianMixture::new(vec![1.0], vec![mu], vec![1.0]).unwrap()
}

#[test]
fn shifted_normals_match_fine_quadrature() {
    let (f, g) = (normal(0.0), normal(0.1));
    let steps = 2_000_000;
    let h = 24.0 / steps as f64;
    let reference: f64 = 0.5
        * (0..steps)
            .map(|t| {
                let x = -12.0 + (t as f64 + 0.5) * h;
                (f.pdf(x) - g.pdf(x)).abs() * h
            })
            .sum::<f64>();
    let tv = total_variation(&f, &DensityEstimate::from_mixture(Grid::covering(&f), &g)).unwrap();
    assert!((tv - reference).abs() < 1e-4, "{tv} vs {reference}");
}

#[test]
fn iat_is_affine_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = vec![0.0f64; 20_000];
    for t in 1..x.len() {
        let e: f64 = StandardNormal.sample(&mut rng);
        x[t] = 0.7 * x[t - 1] + e;
    }
    let base = iat(&x).unwrap().tau;
    for (a, b) in [(3.0, -2.0), (-0.5, 10.0)] {
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        assert!((iat(&y).unwrap().tau - base).abs() < 1e-9 * base);
    }
}

#[test]
fn long_dp_run_recovers_bimodal_density() {
    let truth = NamedMixture::Bimodal.mixture();
    let data = generate_dataset(&truth, "bimodal", 100, 5).unwrap();
    let model = Arc::new(
        Model::new(
            &data,
            NormalGammaBase::default_for(&data),
            MixingPrior::Dp { beta: 1.0 },
        )
        .unwrap(),
    );
    let mut chain = Chain::new(model, SamplerKind::Oas, SamplerSettings::default(), 5).unwrap();
    chain.run(1_000).unwrap();
    let mut acc = DensityAccumulator::new(Grid::covering(&truth));
    for _ in 0..5_000 {
        chain.step().unwrap();
        acc.add(chain.allocation(), chain.components());
    }
    let tv = total_variation(&truth, &acc.finish().unwrap()).unwrap();
    assert!(tv < 0.15, "TV = {tv}");
}
