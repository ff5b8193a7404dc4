//! Linear special case of the mode-aware model and truncated HOSVD oracles.

use ntae::datagen::{orthonormal_factor, synth_tucker_batch, SynthConfig};
use ntae::metrics::nmse;
use ntae::models::{hosvd, tucker_reconstruct, Activation, MaNtae, ModePlan, TuckerFactors};
use ntae::rng::SeededRng;
use ntae::DenseTensor;

/// Random sample shape, mode order and reduction factor.
fn random_config(rng: &mut SeededRng) -> (Vec<usize>, Vec<usize>, f64) {
    let sample_modes = 1 + rng.below(3);
    let shape: Vec<usize> = (0..sample_modes).map(|_| 3 + rng.below(6)).collect();
    let mut modes: Vec<usize> = (1..=sample_modes).collect();
    rng.shuffle(&mut modes);
    modes.truncate(1 + rng.below(sample_modes));
    let alpha = 0.3 + 0.5 * rng.uniform();
    (shape, modes, alpha)
}

#[test]
fn identity_activation_encoder_is_a_chain_of_mode_products() {
    let mut rng = SeededRng::new(2024);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let (shape, modes, alpha) = random_config(&mut rng);
        let plan = ModePlan::with_alpha(&shape, &modes, alpha).unwrap();
        let mut m = MaNtae::new(&shape, plan.clone(), case).unwrap();
        m.set_activation(Activation::Identity);
        m.set_skip_connections(false);

        let mut batch = vec![2 + rng.below(3)];
        batch.extend(&shape);
        let x = DenseTensor::random_normal(&batch, 1000 + case).unwrap();
        let core = m.encode(&x).unwrap().core;

        let mut expected = x.clone();
        for (l, s) in plan.stages().iter().enumerate() {
            expected = expected.mode_product(&m.encoder_product(l).unwrap(), s.mode).unwrap();
        }
        assert_eq!(core.shape(), expected.shape(), "case {case}");
        let rel = core.sub(&expected).unwrap().frobenius_norm() / expected.frobenius_norm();
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-12, "worst relative error {worst:e}");
}

#[test]
fn exact_rank_tensors_reconstruct() {
    for (seed, (shape, ranks)) in [
        (vec![10, 8, 6], vec![3, 2, 4]),
        (vec![12, 12], vec![5, 5]),
        (vec![6, 7, 5, 4], vec![2, 3, 2, 2]),
        (vec![9, 9, 9], vec![9, 4, 1]),
    ]
    .into_iter()
    .enumerate()
    {
        let seed = seed as u64;
        let core = DenseTensor::random_normal(&ranks, seed).unwrap();
        let factors: Vec<DenseTensor> = shape
            .iter()
            .zip(&ranks)
            .enumerate()
            .map(|(n, (&i, &r))| orthonormal_factor(i, r, seed * 10 + n as u64).unwrap())
            .collect();
        let x = tucker_reconstruct(&TuckerFactors { core, factors }).unwrap();
        let approx = tucker_reconstruct(&hosvd(&x, &ranks).unwrap()).unwrap();
        let err = nmse(&approx, &x).unwrap();
        assert!(err <= 1e-10, "{shape:?} at {ranks:?}: nmse {err:e}");
    }
}

#[test]
fn hosvd_factors_are_orthonormal() {
    let x = DenseTensor::random_normal(&[7, 6, 5], 3).unwrap();
    let t = hosvd(&x, &[3, 6, 2]).unwrap();
    for u in &t.factors {
        let gram = u.transpose().unwrap().matmul(u).unwrap();
        let eye = DenseTensor::identity(u.shape()[1]).unwrap();
        assert!(gram.sub(&eye).unwrap().frobenius_norm() < 1e-12);
    }
    assert_eq!(t.core.shape(), &[3, 6, 2]);
}

#[test]
fn noisy_benchmark_data_is_close_to_rank_five() {
    // I = 20, core extent 5, factor perturbation 0.05, 30 dB noise.
    let cfg = SynthConfig {
        batch: 64,
        ..SynthConfig::new(3, 20, 77)
    };
    assert_eq!(cfg.core_dim(), 5);
    let data = synth_tucker_batch(&cfg).unwrap();
    let clean = data.clean.as_ref().unwrap();
    let approx = tucker_reconstruct(&hosvd(&data.noisy, &[64, 5, 5]).unwrap()).unwrap();
    let err = nmse(&approx, clean).unwrap();
    assert!(err <= 5e-2, "nmse vs clean {err:e}");
    // Truncation removes most of the white noise, so the fit beats the raw input.
    assert!(err < nmse(&data.noisy, clean).unwrap());
}

#[test]
fn rank_errors() {
    let x = DenseTensor::random_normal(&[4, 4], 1).unwrap();
    assert!(hosvd(&x, &[5, 2]).is_err());
    assert!(hosvd(&x, &[0, 2]).is_err());
    assert!(hosvd(&x, &[2]).is_err());
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(a: &DenseTensor) -> f64 {
    let n = a.shape()[0];
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.data()[i * n..(i + 1) * n].to_vec()).collect();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= m[c][c];
        let pivot = m[c].clone();
        for row in m.iter_mut().skip(c + 1) {
            let f = row[c] / pivot[c];
            for (x, p) in row.iter_mut().zip(&pivot).skip(c) {
                *x -= f * p;
            }
        }
    }
    d
}

#[test]
fn square_and_single_column_factors() {
    for seed in 0..20 {
        let q = orthonormal_factor(9, 9, seed).unwrap();
        assert!((det(&q).abs() - 1.0).abs() <= 1e-8, "seed {seed}");
        let v = orthonormal_factor(7, 1, seed).unwrap();
        assert!((v.frobenius_norm() - 1.0).abs() <= 1e-12);
    }
}
