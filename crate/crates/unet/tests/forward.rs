//! Residual identity, shapes, determinism, checkpoints and model gradients.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smsnet_tensor::gradcheck::{Coord, GradCheck};
use smsnet_tensor::{Graph, Tensor};
use smsnet_unet::{checkpoint, ModelConfig, Network};

fn input(c: &ModelConfig, rng: &mut ChaCha8Rng, batch: usize, h: usize, w: usize) -> Tensor {
    let dims = c.input_shape(batch, h, w);
    let n: usize = dims.iter().product();
    let re = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let im = c.is_complex().then(|| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    Tensor::from_parts(dims.into(), re, im).unwrap()
}

fn small(name: &str, base: usize, depth: usize) -> ModelConfig {
    let mut c: ModelConfig = name.parse().unwrap();
    c.base_channels = base;
    c.depth = depth;
    c
}

/// Replace every parameter by a random value of the same shape and flag.
fn randomize(net: &mut Network, rng: &mut ChaCha8Rng, scale: f64) {
    let values = net
        .param_values()
        .iter()
        .map(|p| {
            let n = p.numel();
            let re = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
            let im = (!p.is_real()).then(|| (0..n).map(|_| rng.random_range(-scale..scale)).collect());
            Tensor::from_parts(p.shape().clone(), re, im).unwrap()
        })
        .collect();
    net.set_param_values(values).unwrap();
}

#[test]
fn fresh_network_is_identity_for_all_twelve() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in ModelConfig::all().iter().map(ModelConfig::name) {
        let c = small(&name, 4, 3);
        let net = Network::build(&c, &mut rng).unwrap();
        let x = input(&c, &mut rng, 2, 12, 10);
        let y = net.predict(&x).unwrap();
        assert!(y.bit_eq(&x), "{name}");
        // training mode too
        let g = Graph::new();
        let p = net.bind(&g);
        let f = net.forward(&p, g.constant(x.clone()), true, &mut rng).unwrap();
        assert!(f.prediction.value().bit_eq(&x), "{name}");
        assert_eq!(f.batch_stats.len(), net.running_stats().len());
    }
}

#[test]
fn default_depth_aligns_at_96() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut c: ModelConfig = "2D-All-Mag".parse().unwrap();
    c.base_channels = 2;
    let mut net = Network::build(&c, &mut rng).unwrap();
    randomize(&mut net, &mut rng, 0.3);
    let x = input(&c, &mut rng, 1, 96, 96);
    let y = net.predict(&x).unwrap();
    assert_eq!(y.dims(), x.dims());
    assert!(!y.bit_eq(&x));
}

#[test]
fn shape_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = small("3D-All-Comp", 2, 2);
    let net = Network::build(&c, &mut rng).unwrap();
    assert!(net.predict(&Tensor::zeros_complex([1, 1, 8, 8])).is_err());
    assert!(net.predict(&Tensor::zeros_complex([1, 1, 3, 8, 8])).is_err());
    assert!(net.predict(&Tensor::zeros([1, 1, 2, 8, 8])).is_err());
    assert!(net.predict(&Tensor::zeros_complex([1, 1, 2, 8, 8])).is_ok());
}

#[test]
fn same_seed_same_network_and_output() {
    let c = small("2D-All-Comp", 3, 3);
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut net = Network::build(&c, &mut rng).unwrap();
        randomize(&mut net, &mut rng, 0.5);
        net
    };
    let (a, b) = (build(), build());
    let x = input(&c, &mut ChaCha8Rng::seed_from_u64(5), 2, 8, 8);
    assert!(a.predict(&x).unwrap().bit_eq(&b.predict(&x).unwrap()));
    for (p, q) in a.params().iter().zip(b.params()) {
        assert!(p.value.bit_eq(&q.value));
    }
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = small("3D-All-MagPhs", 2, 3);
    let mut net = Network::build(&c, &mut rng).unwrap();
    randomize(&mut net, &mut rng, 0.5);
    let x = input(&c, &mut rng, 2, 8, 8);
    // move running stats away from their defaults
    let g = Graph::new();
    let p = net.bind(&g);
    let stats = net.forward(&p, g.constant(x.clone()), true, &mut rng).unwrap().batch_stats;
    net.update_running_stats(&stats).unwrap();

    let dir = tempfile::tempdir().unwrap();
    checkpoint::save(dir.path(), &net, 7, 0.125).unwrap();
    let (loaded, manifest) = checkpoint::load(dir.path()).unwrap();
    assert_eq!(manifest.epoch, 7);
    assert_eq!(manifest.val_mae, 0.125);
    assert_eq!(loaded.config(), &c);
    assert!(loaded.predict(&x).unwrap().bit_eq(&net.predict(&x).unwrap()));
}

#[test]
fn dropout_switch_only_acts_in_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut c = small("2D-All-Comp", 2, 2);
    c.dropout = 0.5;
    let mut net = Network::build(&c, &mut rng).unwrap();
    randomize(&mut net, &mut rng, 0.5);
    let x = input(&c, &mut rng, 2, 4, 4);
    assert!(net.predict(&x).unwrap().bit_eq(&net.predict(&x).unwrap()));
    c.dropout = 1.0;
    assert!(Network::build(&c, &mut rng).is_err());
}

#[test]
fn gradients_of_every_model_config() {
    // ten random parameter/input draws per variant, 25 random coordinates each
    let check = GradCheck::default();
    for (i, name) in ModelConfig::all().iter().map(ModelConfig::name).enumerate() {
        let c = small(&name, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        for point in 0..10 {
            let mut net = Network::build(&c, &mut rng).unwrap();
            randomize(&mut net, &mut rng, 0.6);
            let x = input(&c, &mut rng, 2, 4, 4);
            let target = input(&c, &mut rng, 2, 4, 4);
            let params = net.param_values();
            let coords: Vec<Coord> = (0..25)
                .map(|_| {
                    let param = rng.random_range(0..params.len());
                    Coord {
                        param,
                        index: rng.random_range(0..params[param].numel()),
                        imag: !params[param].is_real() && rng.random_bool(0.5),
                    }
                })
                .collect();
            let report = check
                .run(&params, &coords, |g, v| {
                    let mut unused = ChaCha8Rng::seed_from_u64(0);
                    let f = net
                        .forward(v, g.constant(x.clone()), true, &mut unused)
                        .map_err(|e| smsnet_tensor::TensorError::Contract(e.to_string()))?;
                    smsnet_nn::l2(f.prediction, g.constant(target.clone()))
                })
                .unwrap();
            assert!(report.passed(), "{name} point {point}: {:?}", report.failures);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn output_shape_equals_input_shape(h in 1usize..13, w in 1usize..13, idx in 0usize..12, batch in 1usize..3) {
        let name = ModelConfig::all()[idx].name();
        let c = small(&name, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(h as u64 * 31 + w as u64);
        let mut net = Network::build(&c, &mut rng).unwrap();
        randomize(&mut net, &mut rng, 0.5);
        let x = input(&c, &mut rng, batch, h, w);
        let y = net.predict(&x).unwrap();
        prop_assert_eq!(y.dims(), x.dims());
        prop_assert!(y.all_finite());
    }
}
