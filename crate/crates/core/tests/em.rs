use fchmrf::em::{em_fit, optimize_w, q2_gradient, q2_loss, sample_labels, AdamW, EmConfig};
use fchmrf::meanfield::{
    kernel_positions, run_mean_field, FieldLattices, FieldWeights, KernelBandwidths, UnaryField,
};
use fchmrf::pipeline::run_pipeline;
use fchmrf::sim::{generate_delta_mu, generate_signal_mask, generate_statistics};
use fchmrf::volume::{voxel_coordinates, GridDims, LabelVolume, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cube(n: usize) -> (GridDims, Vec<[usize; 3]>) {
    let dims = GridDims::cube(n).unwrap();
    (dims, voxel_coordinates(&Mask::full(dims)).unwrap())
}

fn synthetic(n: usize, seed: u64) -> (Vec<[usize; 3]>, Vec<f64>, Vec<f64>) {
    let (dims, coords) = cube(n);
    let h = generate_signal_mask(dims, 0.2, seed).unwrap();
    let x = generate_statistics(&h, -2.0, 1.0, seed + 1).unwrap();
    let dm = generate_delta_mu(&h, seed + 2).unwrap();
    (coords, x.into_values(), dm.into_values())
}

fn short_config(seed: u64) -> EmConfig {
    EmConfig {
        max_iterations: 4,
        samples: 20,
        seed,
        ..EmConfig::default()
    }
}

#[test]
fn em_fit_is_deterministic() {
    let (coords, x, dm) = synthetic(10, 3);
    let a = em_fit(&x, &coords, Some(&dm), &short_config(5)).unwrap();
    let b = em_fit(&x, &coords, Some(&dm), &short_config(5)).unwrap();
    assert_eq!(
        a.weights.to_array().map(f64::to_bits),
        b.weights.to_array().map(f64::to_bits)
    );
    assert_eq!(a.density, b.density);
    assert_eq!(a.state.loss_history, b.state.loss_history);
}

#[test]
fn em_bookkeeping_and_density_mass() {
    let (coords, x, dm) = synthetic(10, 7);
    let fit = em_fit(&x, &coords, Some(&dm), &short_config(1)).unwrap();
    let s = &fit.state;
    assert!(s.iteration >= 1 && s.iteration <= 4);
    assert_eq!(s.loss_history.len(), s.iteration);
    let best = s.loss_history.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(s.best_loss, best);
    assert_eq!(s.loss_history[s.best_iteration - 1], best);
    assert_eq!(s.weights, fit.weights);
    assert!((fit.density.integral() - 1.0).abs() < 1e-3);
    assert!(fit.weights.w1 >= 0.0 && fit.weights.w2 >= 0.0);
}

#[test]
fn patience_stops_early() {
    let (coords, x, dm) = synthetic(8, 9);
    let config = EmConfig {
        max_iterations: 25,
        patience: 1,
        samples: 10,
        ..short_config(2)
    };
    let fit = em_fit(&x, &coords, Some(&dm), &config).unwrap();
    assert!(fit.state.iteration <= 25);
    if fit.state.iteration < 25 {
        assert_eq!(fit.state.patience_counter, 1);
    }
}

#[test]
fn pure_null_gives_few_rejections() {
    let (dims, coords) = cube(12);
    let h = LabelVolume::zeros(dims);
    let x = generate_statistics(&h, -2.0, 1.0, 40).unwrap();
    let dm = generate_delta_mu(&h, 41).unwrap();
    let r = run_pipeline(
        x.values(),
        &coords,
        Some(dm.values()),
        &short_config(3),
        0.05,
    )
    .unwrap();
    assert!(
        r.outcome.k as f64 <= 0.01 * coords.len() as f64,
        "k = {}",
        r.outcome.k
    );
}

fn random_problem(seed: u64) -> (FieldLattices, fchmrf::em::MonteCarloLabels) {
    let (_, coords) = cube(5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dm: Vec<f64> = coords
        .iter()
        .map(|c| -0.5 * f64::from(c[0] < 2) + 0.05 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let bw = KernelBandwidths::new([2.0; 3], 0.2, [2.0; 3]).unwrap();
    let kernels =
        FieldLattices::build(&kernel_positions(&coords, Some(&dm), &bw).unwrap()).unwrap();
    let unary = UnaryField::new(
        (0..coords.len())
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect(),
    )
    .unwrap();
    let w = FieldWeights::new(0.0, rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
    let q = run_mean_field(&unary, &kernels, &w, 5).unwrap();
    let labels = sample_labels(&q, 50, seed).unwrap();
    (kernels, labels)
}

#[test]
fn optimizer_descends_on_most_seeds() {
    let opt = AdamW {
        lr: 1e-2,
        ..AdamW::default()
    };
    let mut improved = 0;
    for seed in 0..20 {
        let (kernels, labels) = random_problem(seed);
        let w0 = FieldWeights::new(0.5, 1.0, 1.0);
        let before = q2_loss(&w0, &labels, &kernels, 5).unwrap();
        let w = optimize_w(w0, &labels, &kernels, 5, 5, &opt).unwrap();
        let after = q2_loss(&w, &labels, &kernels, 5).unwrap();
        improved += usize::from(after <= before);
    }
    assert!(improved >= 18, "{improved}/20");
}

#[test]
fn inactive_smoothness_kernel_has_flat_gradient() {
    // Voxels far apart in smoothness units never interact.
    let (_, coords) = cube(4);
    let dm: Vec<f64> = coords.iter().map(|c| c[0] as f64 * 0.1).collect();
    let bw = KernelBandwidths::new([1.5; 3], 0.2, [0.01; 3]).unwrap();
    let kernels =
        FieldLattices::build(&kernel_positions(&coords, Some(&dm), &bw).unwrap()).unwrap();
    let unary = UnaryField::new(coords.iter().map(|c| c[1] as f64 - 1.5).collect()).unwrap();
    let w = FieldWeights::new(0.2, 1.5, 0.5);
    let q = run_mean_field(&unary, &kernels, &w, 5).unwrap();
    let labels = sample_labels(&q, 40, 8).unwrap();
    let g = q2_gradient(&w, &labels, &kernels, 5).unwrap();
    assert!(g[2].abs() < 1e-6, "{g:?}");
    assert!(g[1].abs() > 1e-3, "{g:?}");
}
