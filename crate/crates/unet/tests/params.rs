//! Parameter budget: analytic layer-by-layer count and frozen fixtures.

use smsnet_unet::{count_parameters, DataMode, Dim, ModelConfig, Network};

/// Independent closed-form count for the architecture: per level one
/// conv(k)+bias, batch-norm scale+shift (and modReLU bias when complex);
/// one transpose conv+bias per upsampling; a 1x1 output conv+bias.
fn analytic(c: &ModelConfig) -> usize {
    let taps = if c.dim == Dim::D2 { 9 } else { 27 };
    let up_taps = if c.dim == Dim::D2 { 4 } else { 12 };
    let cx = if c.is_complex() { 2 } else { 1 };
    let act = usize::from(c.is_complex());
    let ch = |k: usize| c.base_channels << k;
    let unit = |i: usize, o: usize| cx * (taps * i * o + o + 2 * o) + act * o;
    let mut n = 0;
    for k in 0..c.depth {
        n += unit(if k == 0 { c.input_channels() } else { ch(k - 1) }, ch(k));
    }
    for k in 0..c.depth - 1 {
        n += cx * (up_taps * ch(k + 1) * ch(k) + ch(k));
        n += unit(2 * ch(k), ch(k));
    }
    n + cx * (ch(0) * c.input_channels() + c.input_channels())
}

/// Exact counts of the default configurations (regression fixtures).
const FIXTURES: [(&str, usize); 12] = [
    ("2D-All-Mag", 2_937_006),
    ("2D-All-Comp", 2_999_844),
    ("2D-All-MagPhs", 2_937_568),
    ("3D-All-Mag", 2_875_217),
    ("3D-All-Comp", 2_719_730),
    ("3D-All-MagPhs", 2_875_666),
    ("2D-Single-Mag", 2_936_725),
    ("2D-Single-Comp", 2_999_442),
    ("2D-Single-MagPhs", 2_937_006),
    ("3D-Single-Mag", 2_875_217),
    ("3D-Single-Comp", 2_719_730),
    ("3D-Single-MagPhs", 2_875_666),
];

#[test]
fn counts_match_closed_form_and_fixtures() {
    for (name, fixed) in FIXTURES {
        let c: ModelConfig = name.parse().unwrap();
        let n = count_parameters(&c).unwrap();
        assert_eq!(n, analytic(&c), "{name}");
        assert_eq!(n, fixed, "{name}");
    }
}

#[test]
fn canonical_base_channels_fit_the_budget() {
    for (dim, data, base) in [
        (Dim::D2, DataMode::Mag, 28),
        (Dim::D2, DataMode::MagPhs, 28),
        (Dim::D3, DataMode::Mag, 16),
        (Dim::D3, DataMode::MagPhs, 16),
        (Dim::D2, DataMode::Comp, 20),
        (Dim::D3, DataMode::Comp, 11),
    ] {
        let c = ModelConfig::new(dim, data, smsnet_unet::SliceMode::All);
        assert_eq!(c.base_channels, base);
        let n = count_parameters(&c).unwrap() as f64;
        assert!((n - 3e6).abs() / 3e6 <= 0.10, "{} has {n}", c.name());
    }
}

#[test]
fn doubling_base_channels_roughly_quadruples() {
    let mut c: ModelConfig = "2D-All-Mag".parse().unwrap();
    c.depth = 2;
    c.base_channels = 16;
    let a = count_parameters(&c).unwrap() as f64;
    c.base_channels = 32;
    let b = count_parameters(&c).unwrap() as f64;
    assert!((b / a - 4.0).abs() < 0.2, "ratio {}", b / a);
}

#[test]
fn complex_entries_count_twice() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let net = Network::build(&"2D-All-Comp".parse().unwrap(), &mut rng).unwrap();
    let w = net.params().iter().find(|p| p.name == "enc0.conv.w").unwrap();
    assert_eq!(w.value.dims(), &[20, 2, 3, 3]);
    assert!(!w.value.is_real());
    let act = net.params().iter().find(|p| p.name == "enc0.act.b").unwrap();
    assert!(act.value.is_real());
}

#[test]
fn single_conv_with_bias() {
    // 2 -> 4 channels, 3x3, with bias: 2*4*9 + 4
    let spec = smsnet_nn::ConvSpec::same(2, 4, &[3, 3]);
    assert_eq!(spec.weight_shape().numel() + spec.out_channels, 76);
}
