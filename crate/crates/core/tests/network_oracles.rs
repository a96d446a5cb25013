mod common;

use common::forward_loops;
use mcm_core::nn::network::leaky_relu;
use mcm_core::{Arch, Network, NetworkSpec, SeedStreams};
use ndarray::Array2;
use rand::Rng;

fn two_head_spec() -> NetworkSpec {
    Arch::default().multi(9, &[4, 8], &[0, 18])
}

#[test]
fn forward_matches_scalar_loops() {
    let mut rng = SeedStreams::new(1).stream(0);
    for spec in [NetworkSpec::single(7, 5), two_head_spec()] {
        let mut net = Network::init(spec.clone(), &mut rng).unwrap();
        for layer in net.params_mut().layers_mut() {
            layer.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        for _ in 0..20 {
            let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let extras: Vec<Vec<f64>> = spec
                .head_extra_input_dims
                .iter()
                .map(|&e| (0..e).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let views: Vec<&[f64]> = extras.iter().map(|e| e.as_slice()).collect();
            let fast = net.predict_one(&x, &views).unwrap();
            let slow = forward_loops(&net, &x, &views);
            for (f, s) in fast.iter().flatten().zip(slow.iter().flatten()) {
                assert!((f - s).abs() <= 1e-12 * s.abs().max(1.0), "{f} vs {s}");
            }
        }
    }
}

#[test]
fn init_keeps_layer_variance_in_range() {
    let mut rng = SeedStreams::new(2).stream(0);
    let net = Network::init(NetworkSpec::single(16, 5), &mut rng).unwrap();
    let x = Array2::from_shape_simple_fn((1000, 16), || rng.gen_range(-1.0..1.0));
    let var = |a: &Array2<f64>| {
        let m = a.mean().unwrap();
        a.mapv(|v| (v - m).powi(2)).mean().unwrap()
    };
    let slope = net.spec().leaky_slope;
    let mut h = x;
    for layer in net.params().layers() {
        let pre = h.dot(&layer.weight) + &layer.bias;
        let ratio = var(&pre) / var(&h);
        assert!((0.1..=10.0).contains(&ratio), "ratio {ratio}");
        h = pre.mapv(|z| leaky_relu(z, slope));
    }
}

#[test]
fn heads_share_the_trunk_and_gradients_add() {
    let mut rng = SeedStreams::new(3).stream(0);
    let net = Network::init(two_head_spec(), &mut rng).unwrap();
    let x = Array2::from_shape_simple_fn((3, 9), || rng.gen_range(-1.0..1.0));
    let extra = Array2::from_shape_simple_fn((3, 18), || rng.gen_range(-1.0..1.0));
    let empty = Array2::<f64>::zeros((3, 0));
    let (out, cache) = net.forward(x.view(), &[empty.view(), extra.view()]).unwrap();
    let g1 = Array2::from_shape_simple_fn(out[0].dim(), || rng.gen_range(-1.0..1.0));
    let g2 = Array2::from_shape_simple_fn(out[1].dim(), || rng.gen_range(-1.0..1.0));
    let z1 = Array2::zeros(out[0].dim());
    let z2 = Array2::zeros(out[1].dim());
    let both = net.backward(&cache, &[g1.view(), g2.view()]).unwrap();
    let mut sum = net.backward(&cache, &[g1.view(), z2.view()]).unwrap();
    sum.add_assign(&net.backward(&cache, &[z1.view(), g2.view()]).unwrap());
    for t in 0..both.0.num_tensors() {
        for (a, b) in both.0.tensor(t).iter().zip(sum.0.tensor(t)) {
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }
}

#[test]
fn same_seed_same_parameters() {
    let a = Network::init(two_head_spec(), &mut SeedStreams::new(4).stream(7)).unwrap();
    let b = Network::init(two_head_spec(), &mut SeedStreams::new(4).stream(7)).unwrap();
    let c = Network::init(two_head_spec(), &mut SeedStreams::new(4).stream(8)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
