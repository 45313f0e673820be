use layerlr::nn::LayerGradients;
use layerlr::optim::{layer_multiplier, make_optimizer, Hyperparams, OptimizerKind, OptimizerState, DEFAULT_EPSILON_NORM};
use layerlr::Tensor;
use proptest::prelude::*;

fn params_from(values: &[Vec<f64>]) -> Vec<Vec<Tensor>> {
    values.iter().map(|v| vec![Tensor::vector(v.clone())]).collect()
}

fn grads_from(values: &[Vec<f64>]) -> LayerGradients {
    LayerGradients::new(params_from(values))
}

fn bits(params: &[Vec<Tensor>]) -> Vec<u64> {
    params
        .iter()
        .flat_map(|g| g.iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())))
        .collect()
}

/// Two layers with 3 and 2 parameters.
fn gradient_sequence(steps: usize) -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    prop::collection::vec(
        (prop::collection::vec(-5.0..5.0f64, 3), prop::collection::vec(-1e-3..1e-3f64, 2))
            .prop_map(|(a, b)| vec![a, b]),
        steps,
    )
}

fn run(opt: &mut OptimizerState, start: &[Vec<f64>], grads: &[Vec<Vec<f64>>], lr: f64) -> Vec<Vec<Tensor>> {
    let mut p = params_from(start);
    for g in grads {
        opt.step(&mut p, &grads_from(g), lr).unwrap();
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forcing_multiplier_to_one_recovers_base_optimizer(grads in gradient_sequence(100), lr in 1e-3..0.5f64) {
        let start = vec![vec![0.5, -1.0, 2.0], vec![0.1, 0.2]];
        for kind in OptimizerKind::ALL {
            let mut plain = make_optimizer(kind, Hyperparams::default(), false).unwrap();
            let mut hooked = make_optimizer(kind, Hyperparams::default(), true).unwrap();
            hooked.set_multiplier_fn(|_, _| 1.0);
            let a = run(&mut plain, &start, &grads, lr);
            let b = run(&mut hooked, &start, &grads, lr);
            for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
                for (u, v) in x.data().iter().zip(y.data()) {
                    prop_assert!((u - v).abs() <= 1e-12, "{kind}: {u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn momentum_with_zero_mu_is_bitwise_sgd(grads in gradient_sequence(40), lr in 1e-3..0.5f64, layerwise: bool) {
        let start = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.0]];
        let hp = Hyperparams { mu: 0.0, ..Hyperparams::default() };
        let mut sgd = make_optimizer(OptimizerKind::Sgd, hp, layerwise).unwrap();
        let mut mom = make_optimizer(OptimizerKind::Momentum, hp, layerwise).unwrap();
        prop_assert_eq!(bits(&run(&mut sgd, &start, &grads, lr)), bits(&run(&mut mom, &start, &grads, lr)));
    }

    #[test]
    fn layerwise_sgd_preserves_direction(g in prop::collection::vec(-10.0..10.0f64, 1..20), lr in 1e-3..1.0f64) {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > DEFAULT_EPSILON_NORM);
        let start = vec![vec![0.0; g.len()]];
        let mut plain = make_optimizer(OptimizerKind::Sgd, Hyperparams::default(), false).unwrap();
        let mut ours = make_optimizer(OptimizerKind::Sgd, Hyperparams::default(), true).unwrap();
        let a = run(&mut plain, &start, &[vec![g.clone()]], lr);
        let b = run(&mut ours, &start, &[vec![g.clone()]], lr);
        let (u, v) = (a[0][0].data(), b[0][0].data());
        let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
        let cos = dot / (a[0][0].l2_norm() * b[0][0].l2_norm());
        prop_assert!((cos - 1.0).abs() < 1e-12, "cos {cos}");
        let ratio = b[0][0].l2_norm() / a[0][0].l2_norm();
        prop_assert!((ratio - layer_multiplier(norm, DEFAULT_EPSILON_NORM)).abs() < 1e-12 * ratio);
    }

    #[test]
    fn adagrad_accumulator_never_decreases(grads in gradient_sequence(30), layerwise: bool) {
        let mut opt = make_optimizer(OptimizerKind::Adagrad, Hyperparams::default(), layerwise).unwrap();
        let mut p = params_from(&[vec![0.0; 3], vec![0.0; 2]]);
        let mut prev: Option<Vec<f64>> = None;
        for (k, g) in grads.iter().enumerate() {
            opt.step(&mut p, &grads_from(g), 0.1).unwrap();
            prop_assert_eq!(opt.iteration(), k as u64 + 1);
            let acc: Vec<f64> = opt.accumulator().iter().flatten().flat_map(|t| t.data().to_vec()).collect();
            if let Some(prev) = &prev {
                prop_assert!(acc.iter().zip(prev).all(|(a, b)| a >= b));
            }
            prev = Some(acc);
        }
    }
}

#[test]
fn multiplier_monotone_over_log_grid() {
    let values: Vec<f64> = (-8..=8)
        .map(|i| layer_multiplier(10f64.powi(i), DEFAULT_EPSILON_NORM))
        .collect();
    assert!(values.iter().all(|&m| m > 1.0));
    assert!(values.windows(2).all(|w| w[0] > w[1]));
    assert!((values[16] - 1.0).abs() < 1e-7);
}

#[test]
fn smaller_gradient_layer_gets_larger_step() {
    // same direction, norms n and 100n
    let dir = [0.6, -0.8];
    for n in [1e-4, 1e-2, 1.0, 10.0] {
        let g = vec![dir.map(|d| d * n).to_vec(), dir.map(|d| d * 100.0 * n).to_vec()];
        let mut opt = make_optimizer(OptimizerKind::Sgd, Hyperparams::default(), true).unwrap();
        let lr = 0.01;
        let p = run(&mut opt, &[vec![0.0; 2], vec![0.0; 2]], &[g], lr);
        let rate0 = p[0][0].l2_norm() / n / lr;
        let rate1 = p[1][0].l2_norm() / (100.0 * n) / lr;
        let want = layer_multiplier(n, DEFAULT_EPSILON_NORM) / layer_multiplier(100.0 * n, DEFAULT_EPSILON_NORM);
        assert!(((rate0 / rate1) - want).abs() < 1e-12 * want);
        assert!(want > 1.0);
    }
}

#[test]
fn iteration_counter_increments_once_per_step() {
    for kind in OptimizerKind::ALL {
        let mut opt = make_optimizer(kind, Hyperparams::default(), true).unwrap();
        let mut p = params_from(&[vec![1.0]]);
        for k in 1..=5 {
            opt.step(&mut p, &grads_from(&[vec![0.5]]), 0.1).unwrap();
            assert_eq!(opt.iteration(), k);
        }
    }
}
