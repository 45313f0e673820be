use layerlr::nn::{
    build_cifar_quick, build_lenet, build_mlp, check_gradients, check_gradients_with, finite_difference_gradient,
    one_hot, softmax_rows, Activation, LayerKind, Loss, Network, NetworkBuilder, DEFAULT_EPS, RELATIVE_ERROR_FLOOR,
};
use layerlr::{rng, Error, Tensor};

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng::symmetric(&mut r, 1.0)).collect()).unwrap()
}

fn linear_net(w: &[f64], b: f64) -> Network {
    let mut net = NetworkBuilder::new(&[2]).dense(1).build(Loss::SquaredError, 0).unwrap();
    net.set_params(vec![vec![Tensor::new(vec![1, 2], w.to_vec()).unwrap(), Tensor::vector(vec![b])]])
        .unwrap();
    net
}

#[test]
fn least_squares_solution_has_zero_loss_and_gradient() {
    // 2w1 + w2 = 3, w1 + 3w2 = 5
    let net = linear_net(&[0.8, 1.4], 0.0);
    let a = Tensor::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
    let b = Tensor::from_rows(&[vec![3.0], vec![5.0]]).unwrap();
    let (loss, cache) = net.forward(&a, &b).unwrap();
    assert!(loss < 1e-28, "{loss}");
    let g = net.backward(&cache, &b).unwrap();
    for t in &g.layers()[0] {
        assert!(t.data().iter().all(|v| v.abs() < 1e-14), "{t:?}");
    }
}

#[test]
fn squared_error_gradient_matches_hand_formula() {
    let w = [0.3, -1.2];
    let bias = 0.5;
    let net = linear_net(&w, bias);
    let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25], vec![3.0, -1.0]]).unwrap();
    let t = Tensor::from_rows(&[vec![1.0], vec![0.0], vec![-2.0]]).unwrap();
    let (loss, cache) = net.forward(&a, &t).unwrap();
    let g = net.backward(&cache, &t).unwrap();
    // loss = (1/n) Σ (w·a_s + b − t_s)², dW = (2/n) Σ r_s a_s, db = (2/n) Σ r_s
    let n = 3.0;
    let mut want_loss = 0.0;
    let mut dw = [0.0; 2];
    let mut db = 0.0;
    for s in 0..3 {
        let row = &a.data()[2 * s..2 * s + 2];
        let r = w[0] * row[0] + w[1] * row[1] + bias - t.data()[s];
        want_loss += r * r / n;
        dw[0] += 2.0 * r * row[0] / n;
        dw[1] += 2.0 * r * row[1] / n;
        db += 2.0 * r / n;
    }
    assert!((loss - want_loss).abs() < 1e-12);
    let got = &g.layers()[0];
    assert!((got[0].data()[0] - dw[0]).abs() < 1e-12);
    assert!((got[0].data()[1] - dw[1]).abs() < 1e-12);
    assert!((got[1].data()[0] - db).abs() < 1e-12);
}

#[test]
fn sigmoid_of_zero_is_half() {
    let mut net = NetworkBuilder::new(&[3]).dense(3).sigmoid().build(Loss::SquaredError, 0).unwrap();
    net.set_params(vec![vec![Tensor::identity(3), Tensor::zeros(&[3])], vec![]]).unwrap();
    let out = net.predict(&Tensor::zeros(&[2, 3])).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.5));
}

#[test]
fn forward_matches_direct_composition() {
    let net = build_mlp(&[5, 7, 3], Activation::Relu, Loss::SoftmaxCrossEntropy, 17).unwrap();
    let x = random_tensor(&[4, 5], 99);
    let labels = [0, 2, 1, 2];
    let targets = one_hot(&labels, 3);
    let (loss, _) = net.forward(&x, &targets).unwrap();

    let p = net.params();
    let (w1, b1) = (p[0][0].data(), p[0][1].data());
    let (w2, b2) = (p[2][0].data(), p[2][1].data());
    let mut want = 0.0;
    for s in 0..4 {
        let xs = &x.data()[5 * s..5 * s + 5];
        let h: Vec<f64> = (0..7)
            .map(|j| (b1[j] + (0..5).map(|i| w1[j * 5 + i] * xs[i]).sum::<f64>()).max(0.0))
            .collect();
        let z: Vec<f64> = (0..3)
            .map(|k| b2[k] + (0..7).map(|j| w2[k * 7 + j] * h[j]).sum::<f64>())
            .collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln();
        want += (lse - z[labels[s]]) / 4.0;
    }
    assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
}

#[test]
fn finite_difference_on_quadratic_is_exact_to_second_order() {
    let net = linear_net(&[0.7, -0.2], 0.1);
    let a = Tensor::from_rows(&[vec![1.5, -2.0]]).unwrap();
    let t = Tensor::from_rows(&[vec![0.3]]).unwrap();
    let fd = finite_difference_gradient(&net, &a, &t, DEFAULT_EPS).unwrap();
    let (_, cache) = net.forward(&a, &t).unwrap();
    let g = net.backward(&cache, &t).unwrap();
    for (x, y) in fd.layers()[0].iter().zip(&g.layers()[0]) {
        for (u, v) in x.data().iter().zip(y.data()) {
            assert!((u - v).abs() < 1e-8, "{u} vs {v}");
        }
    }
}

#[test]
fn zero_input_gives_zero_first_layer_weight_gradient() {
    let net = build_mlp(&[4, 6, 2], Activation::Relu, Loss::SquaredError, 3).unwrap();
    let x = Tensor::zeros(&[3, 4]);
    let t = random_tensor(&[3, 2], 5);
    let fd = finite_difference_gradient(&net, &x, &t, DEFAULT_EPS).unwrap();
    assert!(fd.layers()[0][0].data().iter().all(|&v| v == 0.0));
    let (_, cache) = net.forward(&x, &t).unwrap();
    let g = net.backward(&cache, &t).unwrap();
    assert!(g.layers()[0][0].data().iter().all(|&v| v == 0.0));
}

fn assert_gradcheck(net: &Network, batch: usize, seed: u64, stride: usize) -> f64 {
    let mut shape = vec![batch];
    shape.extend_from_slice(net.input_shape());
    let x = random_tensor(&shape, seed);
    let labels: Vec<usize> = (0..batch).map(|i| (i + seed as usize) % net.output_width()).collect();
    let t = match net.loss_kind() {
        Loss::SoftmaxCrossEntropy => one_hot(&labels, net.output_width()),
        Loss::SquaredError => random_tensor(&[batch, net.output_width()], seed + 1),
    };
    let report = check_gradients_with(net, &x, &t, DEFAULT_EPS, stride, RELATIVE_ERROR_FLOOR).unwrap();
    assert!(report.checked > 0);
    assert!(
        report.max_rel_error < 1e-5,
        "seed {seed}: max relative error {} at {:?}",
        report.max_rel_error,
        report.worst
    );
    report.max_rel_error
}

#[test]
fn gradcheck_mlps_over_20_seeds() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        for (act, loss) in [
            (Activation::Relu, Loss::SoftmaxCrossEntropy),
            (Activation::Sigmoid, Loss::SquaredError),
            (Activation::Tanh, Loss::SoftmaxCrossEntropy),
        ] {
            let net = build_mlp(&[6, 9, 7, 4], act, loss, seed).unwrap();
            worst = worst.max(assert_gradcheck(&net, 3, seed, 1));
        }
    }
    println!("mlp worst relative error {worst:.3e}");
}

#[test]
fn gradcheck_small_convnet_over_20_seeds() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let net = NetworkBuilder::new(&[2, 9, 9])
            .conv(3, 3, 1, 1)
            .relu()
            .max_pool(3, 2)
            .conv(4, 2, 2, 0)
            .tanh()
            .dense(5)
            .softmax()
            .build(Loss::SquaredError, seed)
            .unwrap();
        worst = worst.max(assert_gradcheck(&net, 2, seed, 1));
    }
    println!("convnet worst relative error {worst:.3e}");
}

#[test]
fn gradcheck_lenet_and_cifar_quick_sampled_over_20_seeds() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        worst = worst.max(assert_gradcheck(&build_lenet(seed).unwrap(), 1, seed, 211));
        worst = worst.max(assert_gradcheck(&build_cifar_quick(seed).unwrap(), 1, seed, 211));
    }
    println!("lenet/cifar-quick worst relative error {worst:.3e}");
}

#[test]
fn full_gradcheck_reports_kinks_separately() {
    let net = build_mlp(&[3, 5, 2], Activation::Relu, Loss::SoftmaxCrossEntropy, 8).unwrap();
    let x = random_tensor(&[2, 3], 1);
    let t = one_hot(&[1, 0], 2);
    let r = check_gradients(&net, &x, &t, DEFAULT_EPS).unwrap();
    assert_eq!(r.checked + r.skipped_kinks, net.param_count());
}

#[test]
fn softmax_rows_sum_to_one() {
    let x = random_tensor(&[6, 10], 4).scale(30.0);
    let s = softmax_rows(&x);
    for row in s.data().chunks(10) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let net = NetworkBuilder::new(&[10]).softmax().build(Loss::SquaredError, 0).unwrap();
    let out = net.predict(&x).unwrap();
    for row in out.data().chunks(10) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn loss_is_invariant_to_batch_order() {
    let net = build_mlp(&[4, 8, 3], Activation::Tanh, Loss::SoftmaxCrossEntropy, 2).unwrap();
    let x = random_tensor(&[7, 4], 3);
    let labels = [0, 1, 2, 2, 1, 0, 1];
    let loss = net.loss(&x, &one_hot(&labels, 3)).unwrap();
    let perm = [6, 2, 0, 5, 1, 3, 4];
    let xp: Vec<f64> = perm.iter().flat_map(|&i| x.data()[4 * i..4 * i + 4].to_vec()).collect();
    let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
    let permuted = net
        .loss(&Tensor::new(vec![7, 4], xp).unwrap(), &one_hot(&lp, 3))
        .unwrap();
    assert!((loss - permuted).abs() < 1e-12);
}

#[test]
fn lenet_golden() {
    let net = build_lenet(0).unwrap();
    assert_eq!(net.output_width(), 10);
    assert_eq!(net.param_count(), 431_080);
    let x = Tensor::zeros(&[1, 1, 28, 28]);
    let (loss, cache) = net.forward(&x, &one_hot(&[3], 10)).unwrap();
    assert!(loss.is_finite());
    // zero image: conv outputs equal the zero biases, so every logit is 0
    let p = softmax_rows(&cache.output());
    assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-12));
    assert!((loss - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn cifar_quick_golden() {
    let net = build_cifar_quick(0).unwrap();
    assert_eq!(net.param_count(), 89_578);
    let convs: Vec<usize> = net
        .layers()
        .iter()
        .filter_map(|l| match l.kind() {
            LayerKind::Conv2d { out_channels, .. } => Some(out_channels),
            _ => None,
        })
        .collect();
    assert_eq!(convs, vec![32, 32, 64]);
    let shapes: Vec<Vec<usize>> = net.layers().iter().map(|l| l.output_shape().to_vec()).collect();
    assert_eq!(
        shapes,
        vec![
            vec![32, 32, 32],
            vec![32, 32, 32],
            vec![32, 16, 16],
            vec![32, 16, 16],
            vec![32, 16, 16],
            vec![32, 8, 8],
            vec![64, 8, 8],
            vec![64, 8, 8],
            vec![64, 4, 4],
            vec![10],
        ]
    );
    let x = random_tensor(&[2, 3, 32, 32], 1);
    assert!(net.forward(&x, &one_hot(&[0, 9], 10)).is_ok());
}

#[test]
fn stale_cache_is_usage_error() {
    let mut net = build_mlp(&[2, 3, 2], Activation::Relu, Loss::SquaredError, 1).unwrap();
    let x = random_tensor(&[1, 2], 1);
    let t = random_tensor(&[1, 2], 2);
    let (_, cache) = net.forward(&x, &t).unwrap();
    net.params_mut()[0][1].data_mut()[0] += 1.0;
    assert!(matches!(net.backward(&cache, &t), Err(Error::Usage(_))));
}

#[test]
fn gradient_shapes_mirror_parameters() {
    let net = build_lenet(4).unwrap();
    let x = random_tensor(&[2, 1, 28, 28], 4);
    let t = one_hot(&[1, 7], 10);
    let (_, cache) = net.forward(&x, &t).unwrap();
    let g = net.backward(&cache, &t).unwrap();
    for (gl, pl) in g.layers().iter().zip(net.params()) {
        let gs: Vec<&[usize]> = gl.iter().map(Tensor::shape).collect();
        let ps: Vec<&[usize]> = pl.iter().map(Tensor::shape).collect();
        assert_eq!(gs, ps);
    }
    for l in 0..g.num_layers() {
        assert_eq!(g.flattened(l).len(), net.layers()[l].param_count());
    }
}
