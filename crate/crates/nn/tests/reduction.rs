//! Complex layers fed zero imaginary parts reproduce the real layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smsnet_nn::*;
use smsnet_tensor::{Graph, Tensor};

const TOL: f64 = 1e-14;

fn real(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64) -> Tensor {
    let n: usize = dims.iter().product();
    Tensor::real(dims.to_vec(), (0..n).map(|_| rng.random_range(lo..1.0)).collect()).unwrap()
}

/// Same values, complex-flagged with an all-zero imaginary plane.
fn lift(t: &Tensor) -> Tensor {
    t.to_complex()
}

fn assert_reduces(name: &str, complex: &Tensor, real: &Tensor) {
    assert!(!complex.is_real(), "{name}: complex path should stay complex");
    assert!(real.is_real(), "{name}: real path should stay real");
    let err = complex.real_part().max_abs_diff(real);
    let leak = complex.imag_part().max_abs();
    assert!(err <= TOL && leak <= TOL, "{name}: err {err:e} imag {leak:e}");
}

#[test]
fn twenty_cases_per_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    for case in 0..20 {
        let g = Graph::new();
        let c = |t: Tensor| g.constant(t);
        let cin = rng.random_range(1..=3);
        let cout = rng.random_range(1..=3);
        let x = real(&mut rng, &[2, cin, 4, 6], -1.0);

        let spec = ConvSpec::same(cin, cout, &[3, 3]);
        let w = real(&mut rng, spec.weight_shape().dims(), -1.0);
        let b = real(&mut rng, &[cout], -1.0);
        let yc = conv(c(lift(&x)), c(lift(&w)), Some(c(lift(&b))), &spec).unwrap();
        let yr = conv(c(x.clone()), c(w.clone()), Some(c(b.clone())), &spec).unwrap();
        assert_reduces(&format!("conv {case}"), &yc.value(), &yr.value());

        let tspec = ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: vec![2, 2],
            stride: vec![2, 2],
            padding: vec![0, 0],
        };
        let tw = real(&mut rng, tspec.transpose_weight_shape().dims(), -1.0);
        let yc = transpose_conv(c(lift(&x)), c(lift(&tw)), Some(c(lift(&b))), &tspec).unwrap();
        let yr = transpose_conv(c(x.clone()), c(tw.clone()), Some(c(b.clone())), &tspec).unwrap();
        assert_reduces(&format!("transpose_conv {case}"), &yc.value(), &yr.value());

        let gamma = real(&mut rng, &[cin], 0.5);
        let beta = real(&mut rng, &[cin], -1.0);
        let (yc, sc) = batch_norm(c(lift(&x)), c(lift(&gamma)), c(lift(&beta)), Mode::Train, 1e-5).unwrap();
        let (yr, sr) = batch_norm(c(x.clone()), c(gamma.clone()), c(beta.clone()), Mode::Train, 1e-5).unwrap();
        assert_reduces(&format!("batch_norm {case}"), &yc.value(), &yr.value());
        let (sc, sr) = (sc.unwrap(), sr.unwrap());
        assert_reduces(&format!("batch_norm mean {case}"), &sc.mean, &sr.mean);
        assert_eq!(sc.var, sr.var);

        assert_reduces(
            &format!("relu {case}"),
            &relu(c(lift(&x))).unwrap().value(),
            &relu(c(x.clone())).unwrap().value(),
        );
        assert_reduces(
            &format!("split_sigmoid {case}"),
            &split_sigmoid(c(lift(&x))).unwrap().value().sub(&Tensor::from_parts(
                x.shape().clone(),
                vec![0.0; x.numel()],
                Some(vec![0.5; x.numel()]),
            ).unwrap()).unwrap(),
            &sigmoid(c(x.clone())).unwrap().value(),
        );

        // on non-negative inputs modReLU is ReLU(x + b) and magnitude pooling is max pooling
        let xp = real(&mut rng, &[2, cin, 4, 6], 0.0);
        let mb = real(&mut rng, &[cin], -0.5);
        let yc = mod_relu(c(lift(&xp)), c(mb.clone())).unwrap();
        let shifted = xp.add(&mb.reshape([1, cin, 1, 1]).unwrap()).unwrap();
        let yr = relu(c(shifted)).unwrap();
        assert_reduces(&format!("mod_relu {case}"), &yc.value(), &yr.value());

        let ps = PoolSpec::new(&[2, 2]);
        assert_reduces(
            &format!("magnitude_max_pool {case}"),
            &magnitude_max_pool(c(lift(&xp)), &ps).unwrap().value(),
            &max_pool(c(xp.clone()), &ps).unwrap().value(),
        );
        assert_reduces(
            &format!("avg_pool {case}"),
            &avg_pool(c(lift(&x)), &ps).unwrap().value(),
            &avg_pool(c(x.clone()), &ps).unwrap().value(),
        );

        let t = real(&mut rng, &[2, cin, 4, 6], -1.0);
        let lc = l1(c(lift(&x)), c(lift(&t))).unwrap().value().item();
        let lr = l1(c(x.clone()), c(t.clone())).unwrap().value().item();
        assert!((lc.re - lr.re).abs() <= TOL && lc.im == 0.0, "l1 {case}");
    }
}
