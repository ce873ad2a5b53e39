use nalgebra::DMatrix;

use osc_core::spectral::eigendecompose_symmetric;
use osc_core::theorem::{error_decay_study, generate, generate_trial, validate, SubspaceModel};

#[test]
fn generator_signal_covariance_meets_its_floor() {
    let model = SubspaceModel::three_cluster_reference(42);
    let dims = &model.subspace_dims;
    let mut cov: Vec<DMatrix<f64>> = dims.iter().map(|&m| DMatrix::zeros(m, m)).collect();
    let trials = 50;
    for t in 0..trials {
        let sample = generate_trial(&model, t).unwrap();
        let mut start = 0;
        for (i, &size) in model.cluster_sizes.iter().enumerate() {
            let signal = sample.signal.columns(start, size);
            let coords = sample.bases[i].tr_mul(&signal);
            let mean = coords.column_mean();
            let mut centred = coords.clone();
            for mut c in centred.column_iter_mut() {
                c -= &mean;
            }
            cov[i] += &centred * centred.transpose() / (size as f64 - 1.0);
            start += size;
        }
    }
    for (i, c) in cov.iter().enumerate() {
        let avg = c / trials as f64;
        let dec = eigendecompose_symmetric(&((&avg + avg.transpose()) * 0.5)).unwrap();
        let min = dec.raw_lambda[dims[i] - 1];
        assert!(min >= 0.9 * model.signal_min_eig[i], "cluster {i}: {min}");
    }
    let v = validate(&model, model.m_union(), 1).unwrap();
    assert!(v.delta_hat > 0.0);
}

#[test]
fn signal_lies_in_its_subspace_and_noise_has_requested_scale() {
    let model = SubspaceModel::three_cluster_reference(8);
    let sample = generate(&model).unwrap();
    let mut start = 0;
    for (i, &size) in model.cluster_sizes.iter().enumerate() {
        let b = &sample.bases[i];
        let z = sample.signal.columns(start, size).into_owned();
        assert!((&z - b * b.tr_mul(&z)).amax() < 1e-12);
        let e = sample.y.columns(start, size) - &z;
        let var = e.iter().map(|v| v * v).sum::<f64>() / (e.len() as f64);
        let target = model.noise_sigmas[i].powi(2);
        assert!((var / target - 1.0).abs() < 0.05, "cluster {i}: {var} vs {target}");
        start += size;
    }
}

#[test]
fn same_seed_same_sample() {
    let model = SubspaceModel::three_cluster_reference(1);
    let a = generate_trial(&model, 4).unwrap();
    let b = generate_trial(&model, 4).unwrap();
    assert_eq!(a.y, b.y);
    let c = generate_trial(&model, 5).unwrap();
    assert_ne!(a.y, c.y);
    assert_eq!(a.bases, c.bases);
}

#[test]
fn noiseless_residual_vanishes() {
    let mut model = SubspaceModel::three_cluster_reference(2);
    model.noise_sigmas = vec![0.0; 3];
    model.cluster_sizes = vec![30, 30, 30];
    let v = validate(&model, 9, 3).unwrap();
    assert!(v.residual_fro_max < 1e-9);
    assert!(v.within_diag_obs.iter().all(|&d| d < 1e-18));
}

#[test]
fn estimated_projector_is_idempotent() {
    let mut model = SubspaceModel::three_cluster_reference(3);
    model.cluster_sizes = vec![40, 40, 40];
    let v = validate(&model, 12, 3).unwrap();
    assert!(v.projector_idempotence_err < 1e-10);
    assert!(v.orthonormality_err < 1e-10);
    assert!(v.residual_orth_err < 1e-10);
}

#[test]
fn cross_blocks_shrink_with_more_trials() {
    let mut model = SubspaceModel::three_cluster_reference(4);
    model.cluster_sizes = vec![40, 40, 40];
    let few = validate(&model, 9, 4).unwrap();
    let many = validate(&model, 9, 64).unwrap();
    // Standard-error scaling predicts a factor of 4 between 4 and 64 trials.
    let ratio = few.cross_entry_rms / many.cross_entry_rms;
    assert!(ratio > 2.5 && ratio < 6.0, "ratio {ratio}");
}

#[test]
fn verdict_does_not_depend_on_thread_count() {
    let mut model = SubspaceModel::three_cluster_reference(6);
    model.cluster_sizes = vec![20, 20, 20];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| validate(&model, 9, 7).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.within_diag_obs, b.within_diag_obs);
    assert_eq!(a.cross_block_max.to_bits(), b.cross_block_max.to_bits());
    assert_eq!(a.within_offdiag_max.to_bits(), b.within_offdiag_max.to_bits());
}

#[test]
fn overlapping_subspaces_reduce_separation() {
    let mut model = SubspaceModel::three_cluster_reference(5);
    model.cluster_sizes = vec![20, 20, 20];
    model.overlap = 0.6;
    let v = validate(&model, 9, 2).unwrap();
    let phi = 0.6 * std::f64::consts::FRAC_PI_2;
    assert!((v.delta_hat - phi.cos()).abs() < 1e-9);
}

#[test]
fn off_diagonal_error_decreases_with_sample_size() {
    let mut model = SubspaceModel::three_cluster_reference(7);
    model.p = 60;
    let study = error_decay_study(&model, &[90, 180, 360], 20).unwrap();
    let rows = &study.rows;
    assert_eq!(rows[0].cluster_sizes, vec![30, 30, 30]);
    for w in rows.windows(2) {
        assert!(w[1].within_offdiag_rms < w[0].within_offdiag_rms);
    }
    assert!(study.slope_rms < 0.0);
    assert!(error_decay_study(&model, &[100], 2).is_err());
}
