use super::*;
use crate::kernel::EmbeddingConfig;

fn zero_shadow_cfg() -> FieldConfig<f64> {
    FieldConfig {
        sigma_shadow: 0.0,
        ..FieldConfig::default()
    }
}

#[test]
fn field_generation_is_deterministic() {
    let cfg = FieldConfig::default();
    let a = generate_field(&cfg, 7).unwrap();
    let b = generate_field(&cfg, 7).unwrap();
    for (ta, tb) in a.transmitters.iter().zip(&b.transmitters) {
        assert_eq!(ta.position, tb.position);
        assert_eq!(ta.power, tb.power);
    }
    let x = [12.0, 81.0];
    assert_eq!(field_value(&a, x), field_value(&b, x));
}

#[test]
fn zero_shadowing_depends_only_on_transmitters() {
    let m = generate_field(&zero_shadow_cfg(), 3).unwrap();
    assert_eq!(m.shadowing.value([10.0, 10.0]), 0.0);
    // Value at a transmitter with a single source: 10 log10(P).
    let single = RadioFieldModel {
        transmitters: vec![Transmitter {
            position: [50.0, 50.0],
            power: 1e-3,
        }],
        shadowing: m.shadowing.clone(),
        path_loss_exponent: 2.5,
    };
    let at_tx = field_value(&single, [50.0, 50.0]);
    assert!((at_tx - 10.0 * 1e-3f64.log10()).abs() < 1e-12);

    // Monotone decay away from the transmitter.
    let mut prev = at_tx;
    for d in [1.0, 5.0, 10.0, 25.0, 49.0] {
        let v = field_value(&single, [50.0 + d, 50.0]);
        assert!(v < prev, "field must decay with distance");
        prev = v;
    }
}

#[test]
fn superposition_dominates_single_transmitter_fields() {
    let two = generate_field(
        &FieldConfig {
            transmitter_count: 2,
            sigma_shadow: 0.0,
            ..FieldConfig::default()
        },
        11,
    )
    .unwrap();
    let first = RadioFieldModel {
        transmitters: vec![two.transmitters[0].clone()],
        shadowing: two.shadowing.clone(),
        path_loss_exponent: two.path_loss_exponent,
    };
    let second = RadioFieldModel {
        transmitters: vec![two.transmitters[1].clone()],
        shadowing: two.shadowing.clone(),
        path_loss_exponent: two.path_loss_exponent,
    };
    for r in 0..10 {
        for c in 0..10 {
            let x = [r as f64 * 11.0, c as f64 * 11.0];
            let v = field_value(&two, x);
            assert!(v >= field_value(&first, x) - 1e-12);
            assert!(v >= field_value(&second, x) - 1e-12);
        }
    }
}

#[test]
fn default_field_has_wide_dynamic_range() {
    for seed in 0..3u64 {
        let model = generate_field(&FieldConfig::default(), seed).unwrap();
        let map = RadioMap::of_field(&model, GridSpec::default());
        let max = map.values.iter().cloned().fold(f64::MIN, f64::max);
        let min = map.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            max - min >= 20.0,
            "seed {seed}: dynamic range {} dB",
            max - min
        );
    }
}

#[test]
fn measurements_match_field_without_noise() {
    let model = generate_field(&FieldConfig::default(), 5).unwrap();
    let ms = sample_measurements(&model, 20, 0.0, 9).unwrap();
    for (p, &v) in ms.positions.points().iter().zip(&ms.values) {
        assert_eq!(v, field_value(&model, *p));
    }
    let ms2 = sample_measurements(&model, 20, 0.0, 9).unwrap();
    assert_eq!(ms.values, ms2.values);
}

#[test]
fn measurement_noise_has_configured_scale() {
    let model = generate_field(&FieldConfig::default(), 2).unwrap();
    let ms = sample_measurements(&model, 10_000, 1.5, 31).unwrap();
    let devs: Vec<f64> = ms
        .positions
        .points()
        .iter()
        .zip(&ms.values)
        .map(|(p, &v)| v - field_value(&model, *p))
        .collect();
    let mean = devs.iter().sum::<f64>() / devs.len() as f64;
    let var = devs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / devs.len() as f64;
    let std = var.sqrt();
    assert!((1.45..=1.55).contains(&std), "sample std {std}");
}

#[test]
fn reconstruction_consistency_at_training_points() {
    let model = generate_field(&FieldConfig::<f64>::default(), 8).unwrap();
    let ms = sample_measurements(&model, 40, 1.5, 12).unwrap();
    let cfg = EmbeddingConfig {
        seed: 4,
        ..EmbeddingConfig::default()
    };
    let e = embed_positions(&ms.positions, &cfg).unwrap();
    let sys = AttentionKernelSystem::from_embedding(&e, 1e-2).unwrap();
    let alpha = crate::solve::reference_solve(&sys, &ms.values).unwrap();

    // Predicting at the training positions reproduces G·alpha.
    let preds = predict_at(&e, &alpha, &ms.positions).unwrap();
    let g_alpha = sys.kernel().matvec(&alpha);
    for (p, g) in preds.iter().zip(&g_alpha) {
        assert!((p - g).abs() <= 1e-9 * (1.0 + g.abs()));
    }

    // Zero coefficients give the zero map.
    let zero_map = reconstruct_map(&e, &vec![0.0; 40], GridSpec { rows: 5, cols: 5 }).unwrap();
    assert!(zero_map.values.iter().all(|&v| v == 0.0));
}

#[test]
fn gprt_limits_and_invariances() {
    let pts = PositionSet::<f64>::new(vec![
        [5.0, 5.0],
        [50.0, 10.0],
        [90.0, 80.0],
        [20.0, 70.0],
        [70.0, 30.0],
    ])
    .unwrap();
    let y = vec![-60.0, -70.0, -55.0, -65.0, -62.0];
    let grid = GridSpec { rows: 4, cols: 4 };

    // Huge noise shrinks predictions toward zero.
    let flat = gprt_fit_predict(
        &pts,
        &y,
        grid,
        &GprtConfig {
            noise_var: 1e12,
            ..GprtConfig::default()
        },
    )
    .unwrap();
    let max_y = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    assert!(flat.values.iter().all(|v| v.abs() <= max_y * 1e-6));

    // Near-interpolation at a training point with tiny noise.
    let cfg = GprtConfig {
        noise_var: 1e-8,
        ..GprtConfig::default()
    };
    let k = DenseSymMatrix::from_fn(5, |i, j| {
        rq_kernel(pts.point(i), pts.point(j), &cfg) + if i == j { 1e-8 } else { 0.0 }
    })
    .unwrap();
    let beta = chol_solve(&k, &y).unwrap();
    let pred0: f64 = (0..5)
        .map(|i| rq_kernel(pts.point(0), pts.point(i), &cfg) * beta[i])
        .sum();
    assert!((pred0 - y[0]).abs() <= 1e-3 * y[0].abs());

    // Large shape parameter approaches the squared-exponential kernel.
    let cfg_inf = GprtConfig {
        rq_alpha: 1e4,
        length_scale: 20.0,
        noise_var: 1.0,
    };
    for d in [5.0f64, 20.0, 60.0] {
        let rq = rq_kernel([0.0, 0.0], [d, 0.0], &cfg_inf);
        let se = (-d * d / (2.0 * 20.0 * 20.0)).exp();
        assert!((rq - se).abs() <= 1e-3, "d={d}: rq {rq} vs se {se}");
    }

    // Permutation invariance of the fitted map.
    let perm = [3usize, 0, 4, 1, 2];
    let pts_perm =
        PositionSet::new(perm.iter().map(|&i| pts.point(i)).collect::<Vec<_>>()).unwrap();
    let y_perm: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let base = gprt_fit_predict(&pts, &y, grid, &GprtConfig::default()).unwrap();
    let permuted = gprt_fit_predict(&pts_perm, &y_perm, grid, &GprtConfig::default()).unwrap();
    for (a, b) in base.values.iter().zip(&permuted.values) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn evaluate_trivial_and_hand_cases() {
    let n = 2;
    let sys = AttentionKernelSystem::new(DenseSymMatrix::<f64>::identity(n), 1.0).unwrap();
    let y = vec![2.0, 0.0];
    let alpha_ref = vec![1.0, 0.0];
    let grid = GridSpec { rows: 2, cols: 2 };
    let truth = RadioMap {
        grid,
        values: vec![1.0, 2.0, 3.0, 4.0],
    };
    let same = RadioMap {
        grid,
        values: truth.values.clone(),
    };

    let m = evaluate(
        &sys,
        &alpha_ref,
        &alpha_ref,
        &y,
        &same,
        &truth,
        EvalContext::default(),
    )
    .unwrap();
    assert_eq!(m.obj_gap, 0.0);
    assert_eq!(m.pred_disc, 0.0);
    assert_eq!(m.rmse, 0.0);
    assert_eq!(m.nmse, 0.0);
    assert_eq!(m.residual, 0.0);

    // Perturbed coefficients: residual = ‖(2.2,0)−(2,0)‖/‖(2,0)‖ = 0.1.
    let m2 = evaluate(
        &sys,
        &[1.1, 0.0],
        &alpha_ref,
        &y,
        &same,
        &truth,
        EvalContext::default(),
    )
    .unwrap();
    assert!((m2.residual - 0.1).abs() <= 1e-12);

    // NMSE identity: nmse = rmse² · M / Σ r².
    let map_hat = RadioMap {
        grid,
        values: vec![1.5, 2.5, 2.0, 4.5],
    };
    let m3 = evaluate(
        &sys,
        &alpha_ref,
        &alpha_ref,
        &y,
        &map_hat,
        &truth,
        EvalContext::default(),
    )
    .unwrap();
    let sum_truth_sq: f64 = truth.values.iter().map(|v| v * v).sum();
    let identity = m3.rmse * m3.rmse * 4.0 / sum_truth_sq;
    assert!((m3.nmse - identity).abs() <= 1e-12 * identity);
}

#[test]
fn evaluate_rejects_zero_denominators() {
    let sys = AttentionKernelSystem::new(DenseSymMatrix::<f64>::identity(2), 1.0).unwrap();
    let grid = GridSpec { rows: 2, cols: 1 };
    let truth = RadioMap {
        grid,
        values: vec![1.0, 1.0],
    };
    let zero_truth = RadioMap {
        grid,
        values: vec![0.0, 0.0],
    };
    let map = truth.clone();
    assert!(matches!(
        evaluate(
            &sys,
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &map,
            &truth,
            EvalContext::default()
        ),
        Err(Error::ZeroDenominator(_))
    ));
    assert!(matches!(
        evaluate(
            &sys,
            &[1.0, 0.0],
            &[1.0, 0.0],
            &[2.0, 0.0],
            &map,
            &zero_truth,
            EvalContext::default()
        ),
        Err(Error::ZeroDenominator(_))
    ));
}

#[test]
fn radio_map_csv_round_trip_shape() {
    let grid = GridSpec { rows: 2, cols: 3 };
    let map = RadioMap {
        grid,
        values: vec![-60.0, -61.5, -62.0, -63.0, -64.0, -65.0],
    };
    let csv = map.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "row,col,x,y,value_dbm");
    assert_eq!(csv.lines().count(), 1 + 6);
    let first = lines.next().unwrap();
    assert_eq!(first, "0,0,0,0,-60");
    // Last grid point sits at the far corner.
    let last = csv.lines().last().unwrap();
    assert_eq!(last, "1,2,100,100,-65");
}
