use maplur_core::autodiff::{
    decode_checkpoint, encode_checkpoint, mse_loss, Adam, AdamConfig, Affine, BatchNorm2d, Conv2d, ConvGeometry,
    Flatten, Layer, Linear, MaxPool2d, Mode, Relu, Sequential, Tensor,
};
use maplur_core::rng::seeded;
use maplur_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn loss_of(net: &mut Sequential<f64>, x: &Tensor<f64>, w: &[f64]) -> f64 {
    let y = net.forward(x.clone(), Mode::Train).unwrap();
    net.clear_caches();
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    // Gradients that vanish analytically (a bias feeding batch norm) leave
    // only rounding noise in the numeric estimate; floor the denominator.
    diff / scale.max(1e-3)
}

/// Compares analytic input and parameter gradients of `Σ w·net(x)` against
/// central differences with step `h`; returns the worst relative error.
fn gradient_check(net: &mut Sequential<f64>, x: &Tensor<f64>, seed: u64) -> f64 {
    let h = 1e-5;
    let mut rng = seeded(seed);
    let y = net.forward(x.clone(), Mode::Train).unwrap();
    let w: Vec<f64> = (0..y.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    net.zero_grad();
    let dy = Tensor::from_vec(y.shape(), w.clone()).unwrap();
    let dx = net.backward(dy, true).unwrap().unwrap();

    let mut numeric = vec![0.0; x.numel()];
    for i in 0..x.numel() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        numeric[i] = (loss_of(net, &xp, &w) - loss_of(net, &xm, &w)) / (2.0 * h);
    }
    let mut worst = rel_err(dx.data(), &numeric);

    let analytic: Vec<Vec<f64>> =
        net.parameters().iter().filter_map(|p| p.grad().map(|g| g.to_vec())).collect();
    let count = analytic.len();
    for k in 0..count {
        let len = analytic[k].len();
        let mut numeric = vec![0.0; len];
        for i in 0..len {
            let orig = param_value(net, k, i);
            set_param(net, k, i, orig + h);
            let lp = loss_of(net, x, &w);
            set_param(net, k, i, orig - h);
            let lm = loss_of(net, x, &w);
            set_param(net, k, i, orig);
            numeric[i] = (lp - lm) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic[k], &numeric));
    }
    worst
}

fn trainable(net: &mut Sequential<f64>) -> Vec<&mut Tensor<f64>> {
    net.parameters_mut().into_iter().filter(|p| p.requires_grad()).collect()
}

fn param_value(net: &mut Sequential<f64>, k: usize, i: usize) -> f64 {
    trainable(net)[k].data()[i]
}

fn set_param(net: &mut Sequential<f64>, k: usize, i: usize, v: f64) {
    trainable(net)[k].data_mut()[i] = v;
}

fn init(mut net: Sequential<f64>, seed: u64) -> Sequential<f64> {
    net.init(&mut seeded(seed));
    for p in net.parameters_mut() {
        if p.requires_grad() {
            let mut rng = seeded(seed ^ 0x55);
            for v in p.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    net
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut net = init(Sequential::new(vec![Layer::Conv2d(Conv2d::new(1, 2, ConvGeometry::SAME3))]), seed);
        let x = random_tensor(&[2, 1, 5, 5], &mut seeded(100 + seed));
        let err = gradient_check(&mut net, &x, seed);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn strided_dilated_conv_gradients_match() {
    let geometry = ConvGeometry { kernel: 3, stride: 2, pad: 2, dilation: 2 };
    for seed in 0..5 {
        let mut net = init(Sequential::new(vec![Layer::Conv2d(Conv2d::new(2, 3, geometry))]), seed);
        let x = random_tensor(&[2, 2, 7, 6], &mut seeded(200 + seed));
        let err = gradient_check(&mut net, &x, seed);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn batchnorm_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut net = init(Sequential::new(vec![Layer::BatchNorm2d(BatchNorm2d::new(3))]), seed);
        let x = random_tensor(&[3, 3, 4, 4], &mut seeded(300 + seed));
        let err = gradient_check(&mut net, &x, seed);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn eval_mode_batchnorm_gradient_is_affine() {
    let mut bn = BatchNorm2d::<f64>::new(2);
    bn.set_running_stats(vec![0.5, -1.0], vec![4.0, 0.25]).unwrap();
    bn.gamma.data_mut().copy_from_slice(&[2.0, -3.0]);
    let x = random_tensor(&[1, 2, 2, 2], &mut seeded(7));
    bn.forward(x, Mode::Eval).unwrap();
    let dx = bn.backward(Tensor::from_vec(&[1, 2, 2, 2], vec![1.0; 8]).unwrap(), true).unwrap().unwrap();
    let s0 = 2.0 / (4.0 + BatchNorm2d::<f64>::EPS).sqrt();
    let s1 = -3.0 / (0.25 + BatchNorm2d::<f64>::EPS).sqrt();
    for (i, v) in dx.data().iter().enumerate() {
        let want = if i < 4 { s0 } else { s1 };
        assert!((v - want).abs() < 1e-12);
    }
}

#[test]
fn relu_pool_linear_stack_gradients_match() {
    for seed in 0..5 {
        let layers = vec![
            Layer::Conv2d(Conv2d::new(2, 3, ConvGeometry::SAME3)),
            Layer::Relu(Relu::new()),
            Layer::MaxPool2d(MaxPool2d::new(2, 2)),
            Layer::Flatten(Flatten::new()),
            Layer::Linear(Linear::new(3 * 3 * 3, 4)),
            Layer::Relu(Relu::new()),
            Layer::Linear(Linear::new(4, 1)),
            Layer::Affine(Affine::new(1.7, 3.0)),
        ];
        let mut net = init(Sequential::new(layers), seed);
        let x = random_tensor(&[2, 2, 7, 7], &mut seeded(400 + seed));
        let err = gradient_check(&mut net, &x, seed);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn full_block_gradients_match() {
    for seed in 0..5 {
        let layers = vec![
            Layer::Conv2d(Conv2d::new(1, 2, ConvGeometry::SAME3)),
            Layer::BatchNorm2d(BatchNorm2d::new(2)),
            Layer::Relu(Relu::new()),
            Layer::MaxPool2d(MaxPool2d::new(2, 2)),
            Layer::Flatten(Flatten::new()),
            Layer::Linear(Linear::new(8, 1)),
        ];
        let mut net = init(Sequential::new(layers), seed);
        let x = random_tensor(&[3, 1, 4, 4], &mut seeded(500 + seed));
        let err = gradient_check(&mut net, &x, seed);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn identity_kernel_reproduces_input() {
    let mut conv = Conv2d::<f64>::new(1, 1, ConvGeometry::SAME3);
    conv.weight.data_mut()[4] = 1.0;
    let x = random_tensor(&[1, 1, 5, 6], &mut seeded(1));
    let y = conv.infer(x.clone()).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn all_ones_kernel_sums_neighbourhood() {
    let mut conv = Conv2d::<f64>::new(1, 1, ConvGeometry::SAME3);
    conv.weight.data_mut().fill(1.0);
    conv.bias.data_mut()[0] = 0.5;
    let x = Tensor::from_vec(&[1, 1, 4, 4], vec![2.0; 16]).unwrap();
    let y = conv.infer(x).unwrap();
    assert_eq!(y.data()[5], 9.0 * 2.0 + 0.5);
    assert_eq!(y.data()[0], 4.0 * 2.0 + 0.5);
}

#[test]
fn conv_channel_mismatch_is_a_shape_error() {
    let conv = Conv2d::<f64>::new(3, 4, ConvGeometry::SAME3);
    let err = conv.infer(Tensor::zeros(&[1, 2, 4, 4])).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

#[test]
fn batchnorm_train_standardizes_each_channel() {
    let mut bn = BatchNorm2d::<f64>::new(2);
    let mut x = random_tensor(&[4, 2, 3, 3], &mut seeded(11));
    x.data_mut().iter_mut().for_each(|v| *v = *v * 5.0 + 2.0);
    let y = bn.forward(x, Mode::Train).unwrap();
    for c in 0..2 {
        let vals: Vec<f64> =
            (0..4).flat_map(|n| y.data()[(n * 2 + c) * 9..(n * 2 + c + 1) * 9].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }
}

#[test]
fn batchnorm_affine_sets_mean_and_std() {
    let mut bn = BatchNorm2d::<f64>::new(1);
    bn.gamma.data_mut()[0] = 2.0;
    bn.beta.data_mut()[0] = 3.0;
    let x = random_tensor(&[8, 1, 4, 4], &mut seeded(12));
    let y = bn.forward(x, Mode::Train).unwrap();
    let n = y.numel() as f64;
    let mean = y.data().iter().sum::<f64>() / n;
    let sd = (y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((mean - 3.0).abs() < 1e-6);
    assert!((sd - 2.0).abs() < 1e-3);
}

#[test]
fn batchnorm_eval_requires_statistics() {
    let bn = BatchNorm2d::<f64>::new(1);
    assert!(matches!(bn.infer(Tensor::zeros(&[1, 1, 2, 2])), Err(Error::UninitializedStats)));
}

#[test]
fn batchnorm_running_statistics_follow_momentum() {
    let mut bn = BatchNorm2d::<f64>::new(1);
    let x = Tensor::from_vec(&[1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    bn.forward(x, Mode::Train).unwrap();
    assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
    let unbiased = 5.0 / 3.0;
    assert!((bn.running_var[0] - (0.9 + 0.1 * unbiased)).abs() < 1e-12);
}

#[test]
fn relu_values() {
    let relu = Relu::<f64>::new();
    let y = relu.infer(Tensor::from_vec(&[2], vec![-1.5, 2.5]).unwrap());
    assert_eq!(y.data(), &[0.0, 2.5]);
}

fn gate(forward_in: f64, grad_out: f64, guided: bool) -> f64 {
    let mut relu = Relu::<f64>::new();
    relu.guided = guided;
    relu.forward(Tensor::from_vec(&[1], vec![forward_in]).unwrap());
    relu.backward(Tensor::from_vec(&[1], vec![grad_out]).unwrap()).unwrap().data()[0]
}

#[test]
fn guided_gate_truth_table() {
    assert_eq!(gate(-2.0, 5.0, true), 0.0);
    assert_eq!(gate(3.0, -4.0, true), 0.0);
    assert_eq!(gate(3.0, 4.0, true), 4.0);
    assert_eq!(gate(0.0, 4.0, true), 0.0);
    assert_eq!(gate(3.0, 0.0, true), 0.0);
    assert_eq!(gate(3.0, -4.0, false), -4.0);
    assert_eq!(gate(-2.0, 5.0, false), 0.0);
}

#[test]
fn maxpool_routes_gradient_to_maximum() {
    let mut pool = MaxPool2d::new(2, 2);
    let y = pool.forward(Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[4.0]);
    let dx = pool.backward(Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap()).unwrap();
    assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn maxpool_ties_pick_first_in_row_major_order() {
    let mut pool = MaxPool2d::new(2, 2);
    pool.forward(Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 5.0, 5.0, 5.0]).unwrap()).unwrap();
    let dx = pool.backward(Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap()).unwrap();
    assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);

    let mut general = MaxPool2d::new(3, 1);
    general.forward(Tensor::<f64>::from_vec(&[1, 1, 3, 3], vec![7.0; 9]).unwrap()).unwrap();
    let dx = general.backward(Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap()).unwrap();
    assert_eq!(dx.data()[0], 1.0);
    assert_eq!(dx.data().iter().sum::<f64>(), 1.0);
}

#[test]
fn maxpool_floors_odd_extents() {
    let pool = MaxPool2d::new(2, 2);
    let y = pool.infer(Tensor::<f64>::zeros(&[1, 1, 7, 7])).unwrap();
    assert_eq!(y.shape(), &[1, 1, 3, 3]);
}

#[test]
fn mse_loss_examples() {
    let (l, g) = mse_loss(&[0.0f64], &[3.0]).unwrap();
    assert_eq!(l, 9.0);
    assert_eq!(g, vec![-6.0]);
    let (l, _) = mse_loss(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap();
    assert_eq!(l, 0.0);
    assert!(matches!(mse_loss::<f64>(&[], &[]), Err(Error::InvalidArgument(_))));
    assert!(matches!(mse_loss(&[1.0f64], &[1.0, 2.0]), Err(Error::Shape(_))));
}

#[test]
fn mse_loss_matches_brute_force() {
    let mut rng = seeded(3);
    for _ in 0..20 {
        let n = rng.random_range(1..50);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (l, g) = mse_loss(&p, &t).unwrap();
        let mut brute = 0.0;
        for i in 0..n {
            brute += (p[i] - t[i]) * (p[i] - t[i]);
        }
        brute /= n as f64;
        assert!((l - brute).abs() <= 1e-12 * brute.max(1.0));
        for i in 0..n {
            assert!((g[i] - 2.0 * (p[i] - t[i]) / n as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn adam_first_step_has_learning_rate_magnitude() {
    let mut p = Tensor::<f64>::parameter(&[1], vec![0.0]).unwrap();
    p.grad_mut().unwrap()[0] = 1.0;
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut [&mut p]).unwrap();
    let expected = -1e-4 / (1.0 + 1e-8);
    assert!((p.data()[0] - expected).abs() < 1e-15);

    let mut q = Tensor::<f64>::parameter(&[2], vec![1.0, -1.0]).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut [&mut q]).unwrap();
    assert_eq!(q.data(), &[1.0, -1.0]);
}

#[test]
fn adam_descends_a_quadratic() {
    let mut theta = Tensor::<f64>::parameter(&[1], vec![1.0]).unwrap();
    let mut adam = Adam::new(AdamConfig { lr: 1e-2, ..AdamConfig::default() });
    let mut prev = 1.0f64;
    for _ in 0..100 {
        theta.zero_grad();
        let t = theta.data()[0];
        theta.grad_mut().unwrap()[0] = 2.0 * t;
        adam.step(&mut [&mut theta]).unwrap();
        let now = theta.data()[0].abs();
        assert!(now < prev);
        prev = now;
        let (_, v) = adam.moments(0).unwrap();
        assert!(v.iter().all(|v| *v >= 0.0));
    }
}

fn small_net(seed: u64) -> Sequential<f64> {
    init(
        Sequential::new(vec![
            Layer::Conv2d(Conv2d::new(1, 2, ConvGeometry::SAME3)),
            Layer::BatchNorm2d(BatchNorm2d::new(2)),
            Layer::Relu(Relu::new()),
            Layer::Flatten(Flatten::new()),
            Layer::Linear(Linear::new(2 * 4 * 4, 1)),
        ]),
        seed,
    )
}

#[test]
fn gradients_accumulate_additively() {
    let mut net = small_net(9);
    let x = random_tensor(&[2, 1, 4, 4], &mut seeded(10));
    let dy = Tensor::from_vec(&[2, 1], vec![0.3, -1.1]).unwrap();
    net.zero_grad();
    net.forward(x.clone(), Mode::Train).unwrap();
    net.backward(dy.clone(), false).unwrap();
    let once: Vec<Vec<f64>> = net.parameters().iter().filter_map(|p| p.grad().map(|g| g.to_vec())).collect();
    net.forward(x, Mode::Train).unwrap();
    net.backward(dy, false).unwrap();
    let twice: Vec<Vec<f64>> = net.parameters().iter().filter_map(|p| p.grad().map(|g| g.to_vec())).collect();
    for (a, b) in once.iter().zip(&twice) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(2.0 * x, *y);
        }
    }
}

#[test]
fn guided_mode_leaves_forward_bit_identical() {
    let mut net = small_net(4);
    let x = random_tensor(&[3, 1, 4, 4], &mut seeded(5));
    net.forward(x.clone(), Mode::Train).unwrap();
    net.clear_caches();
    let off = net.infer(x.clone()).unwrap();
    net.set_guided_mode(true);
    assert!(net.guided_mode());
    let on = net.infer(x).unwrap();
    assert_eq!(off.data(), on.data());
}

#[test]
fn backward_clears_caches() {
    let mut net = small_net(2);
    let x = random_tensor(&[2, 1, 4, 4], &mut seeded(3));
    net.forward(x, Mode::Train).unwrap();
    net.backward(Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap(), true).unwrap();
    let again = net.backward(Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap(), true);
    assert!(again.is_err());
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let mut net = small_net(8);
    let x = random_tensor(&[2, 1, 4, 4], &mut seeded(1));
    net.forward(x.clone(), Mode::Train).unwrap();
    net.clear_caches();
    let bytes = encode_checkpoint(&net);
    assert_eq!(&bytes[..8], b"MLURCKPT");
    let restored: Sequential<f64> = decode_checkpoint(&bytes).unwrap();
    assert_eq!(encode_checkpoint(&restored), bytes);
    let a = net.infer(x.clone()).unwrap();
    let b = restored.infer(x).unwrap();
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-5 * u.abs().max(1.0));
    }
}

#[test]
fn checkpoint_rejects_corruption() {
    let bytes = encode_checkpoint(&small_net(1));
    assert!(matches!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 1]), Err(Error::Checkpoint(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_checkpoint::<f64>(&extra), Err(Error::Checkpoint(_))));
    let mut bad = bytes;
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::Checkpoint(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_padding_conv_preserves_extent(h in 1usize..12, w in 1usize..12) {
        let conv = Conv2d::<f64>::new(1, 2, ConvGeometry::SAME3);
        let y = conv.infer(Tensor::zeros(&[1, 1, h, w])).unwrap();
        prop_assert_eq!(y.shape(), &[1, 2, h, w]);
    }

    #[test]
    fn relu_backward_masks_by_input_sign(vals in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let mut relu = Relu::<f64>::new();
        let n = vals.len();
        relu.forward(Tensor::from_vec(&[n], vals.clone()).unwrap());
        let g = relu.backward(Tensor::from_vec(&[n], vec![1.0; n]).unwrap()).unwrap();
        for (v, d) in vals.iter().zip(g.data()) {
            prop_assert_eq!(*d, if *v > 0.0 { 1.0 } else { 0.0 });
        }
    }
}

