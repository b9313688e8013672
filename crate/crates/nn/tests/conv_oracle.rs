//! Convolution layers against direct complex sliding-window sums.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smsnet_nn::{complex_conv, complex_transpose_conv, ComplexKernel, ConvSpec};
use smsnet_tensor::{Complex64, Tensor};

struct Case {
    spec: ConvSpec,
    batch: usize,
    spatial: Vec<usize>,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let nsp = rng.random_range(1..=3);
    let mut kernel = Vec::new();
    let mut stride = Vec::new();
    let mut padding = Vec::new();
    let mut spatial = Vec::new();
    for _ in 0..nsp {
        let k = rng.random_range(1..=3);
        kernel.push(k);
        stride.push(rng.random_range(1..=2));
        padding.push(rng.random_range(0..k));
        spatial.push(rng.random_range(k..k + 4));
    }
    Case {
        spec: ConvSpec {
            in_channels: rng.random_range(1..=3),
            out_channels: rng.random_range(1..=3),
            kernel,
            stride,
            padding,
        },
        batch: rng.random_range(1..=2),
        spatial,
    }
}

fn random_complex(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let n: usize = dims.iter().product();
    let v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    Tensor::from_complex(dims.to_vec(), &v).unwrap()
}

/// Row-major multi-index helpers over up to three spatial dims.
fn unravel(mut i: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for d in (0..dims.len()).rev() {
        out[d] = i % dims[d];
        i /= dims[d];
    }
    out
}

fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// y[b, o, p] = sum_{c, k} w[o, c, k] x[b, c, p*s - pad + k]
fn conv_oracle(x: &[Complex64], w: &[Complex64], case: &Case, out_sp: &[usize]) -> Vec<Complex64> {
    let s = &case.spec;
    let in_px: usize = case.spatial.iter().product();
    let out_px: usize = out_sp.iter().product();
    let taps: usize = s.kernel.iter().product();
    let mut y = vec![Complex64::new(0.0, 0.0); case.batch * s.out_channels * out_px];
    for b in 0..case.batch {
        for o in 0..s.out_channels {
            for p in 0..out_px {
                let pi = unravel(p, out_sp);
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..s.in_channels {
                    for t in 0..taps {
                        let ki = unravel(t, &s.kernel);
                        let pos: Vec<isize> = (0..pi.len())
                            .map(|d| (pi[d] * s.stride[d] + ki[d]) as isize - s.padding[d] as isize)
                            .collect();
                        if pos.iter().zip(&case.spatial).any(|(&q, &n)| q < 0 || q >= n as isize) {
                            continue;
                        }
                        let q: Vec<usize> = pos.iter().map(|&q| q as usize).collect();
                        let xi = (b * s.in_channels + c) * in_px + ravel(&q, &case.spatial);
                        let wi = (o * s.in_channels + c) * taps + t;
                        acc += w[wi] * x[xi];
                    }
                }
                y[(b * s.out_channels + o) * out_px + p] = acc;
            }
        }
    }
    y
}

/// Scatter form: every input pixel i adds w[c, o, k] conj(x[b, c, i]) at
/// output position i*s - pad + k.
fn transpose_oracle(x: &[Complex64], w: &[Complex64], case: &Case, out_sp: &[usize]) -> Vec<Complex64> {
    let s = &case.spec;
    let in_px: usize = case.spatial.iter().product();
    let out_px: usize = out_sp.iter().product();
    let taps: usize = s.kernel.iter().product();
    let mut y = vec![Complex64::new(0.0, 0.0); case.batch * s.out_channels * out_px];
    for b in 0..case.batch {
        for c in 0..s.in_channels {
            for i in 0..in_px {
                let ii = unravel(i, &case.spatial);
                let xv = x[(b * s.in_channels + c) * in_px + i].conj();
                for o in 0..s.out_channels {
                    for t in 0..taps {
                        let ki = unravel(t, &s.kernel);
                        let pos: Vec<isize> = (0..ii.len())
                            .map(|d| (ii[d] * s.stride[d] + ki[d]) as isize - s.padding[d] as isize)
                            .collect();
                        if pos.iter().zip(out_sp).any(|(&q, &n)| q < 0 || q >= n as isize) {
                            continue;
                        }
                        let q: Vec<usize> = pos.iter().map(|&q| q as usize).collect();
                        let wv = w[(c * s.out_channels + o) * taps + t];
                        y[(b * s.out_channels + o) * out_px + ravel(&q, out_sp)] += wv * xv;
                    }
                }
            }
        }
    }
    y
}

fn rel_error(got: &Tensor, want: &[Complex64]) -> f64 {
    let got = got.to_complex_vec();
    assert_eq!(got.len(), want.len());
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

#[test]
fn fifty_random_convolutions_match_sliding_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = std::time::Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let case = random_case(&mut rng);
        let mut xd = vec![case.batch, case.spec.in_channels];
        xd.extend(&case.spatial);
        let x = random_complex(&mut rng, &xd);
        let w = random_complex(&mut rng, case.spec.weight_shape().dims());
        let out_sp = case.spec.output_extent(&case.spatial).unwrap();
        let got = complex_conv(&x, &ComplexKernel::from_tensor(&w), &case.spec).unwrap();
        let want = conv_oracle(&x.to_complex_vec(), &w.to_complex_vec(), &case, &out_sp);
        worst = worst.max(rel_error(&got, &want));
    }
    assert!(worst < 1e-12, "worst relative error {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn fifty_random_transpose_convolutions_match_scatter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let case = random_case(&mut rng);
        let Ok(out_sp) = case.spec.transpose_output_extent(&case.spatial) else {
            continue;
        };
        let mut xd = vec![case.batch, case.spec.in_channels];
        xd.extend(&case.spatial);
        let x = random_complex(&mut rng, &xd);
        let w = random_complex(&mut rng, case.spec.transpose_weight_shape().dims());
        let got = complex_transpose_conv(&x, &ComplexKernel::from_tensor(&w), &case.spec).unwrap();
        let want = transpose_oracle(&x.to_complex_vec(), &w.to_complex_vec(), &case, &out_sp);
        worst = worst.max(rel_error(&got, &want));
    }
    assert!(worst < 1e-12, "worst relative error {worst:e}");
}

#[test]
fn transpose_is_the_printed_real_combination() {
    // tc_r(a) + tc_i(b) + i (tc_i(a) - tc_r(b)) assembled from real-only passes
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = ConvSpec {
        in_channels: 2,
        out_channels: 3,
        kernel: vec![2, 2],
        stride: vec![2, 2],
        padding: vec![0, 0],
    };
    let x = random_complex(&mut rng, &[1, 2, 3, 4]);
    let w = random_complex(&mut rng, spec.transpose_weight_shape().dims());
    let real_tc = |input: &Tensor, kernel: &Tensor| {
        let k = ComplexKernel::new(kernel.clone(), Tensor::zeros_like(kernel)).unwrap();
        complex_transpose_conv(input, &k, &spec).unwrap()
    };
    let (a, b) = (x.real_part(), x.imag_part());
    let (wr, wi) = (w.real_part(), w.imag_part());
    let re = real_tc(&a, &wr).add(&real_tc(&b, &wi)).unwrap();
    let im = real_tc(&a, &wi).sub(&real_tc(&b, &wr)).unwrap();
    let got = complex_transpose_conv(&x, &ComplexKernel::from_tensor(&w), &spec).unwrap();
    assert!(got.real_part().max_abs_diff(&re) < 1e-13);
    assert!(got.imag_part().max_abs_diff(&im) < 1e-13);
}
