use nalgebra::{Matrix3, SymmetricEigen};
use proptest::prelude::*;
use smsnet_dti::eigen::{jacobi, to_matrix};
use smsnet_dti::maps::{e2_angle, fa, helix_angle, md};
use smsnet_dti::*;

fn protocol() -> DiffusionProtocol {
    DiffusionProtocol::hemisphere(6, 1000.0).unwrap()
}

/// Tensor `sum_k l_k e_k e_kᵀ` from an orthonormal frame.
fn from_frame(l: [f64; 3], e: [[f64; 3]; 3]) -> [f64; 6] {
    let m = |r: usize, c: usize| (0..3).map(|k| l[k] * e[k][r] * e[k][c]).sum::<f64>();
    [m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2)]
}

fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let m = nalgebra::Rotation3::from_euler_angles(a, b, c);
    let m = m.matrix();
    [0, 1, 2].map(|k| [m[(0, k)], m[(1, k)], m[(2, k)]])
}

fn fit_one(d: &[f64; 6], p: &DiffusionProtocol) -> TensorField {
    let signals = simulate_signals(d, 1.0, p);
    let images: Vec<[f64; 1]> = signals.iter().map(|&s| [s]).collect();
    let refs: Vec<&[f64]> = images.iter().map(|i| &i[..]).collect();
    fit_tensors(&refs, 1, 1, p).unwrap()
}

#[test]
fn noiseless_fits_are_exact() {
    let p = protocol();
    for d in [[1e-3, 1e-3, 1e-3, 0.0, 0.0, 0.0], [2e-3, 1e-3, 1e-3, 0.0, 0.0, 0.0]] {
        let f = fit_one(&d, &p);
        assert!(f.valid[0]);
        for (a, b) in f.tensors[0].iter().zip(&d) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((f.s0[0] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn zero_signal_voxel_is_invalid() {
    let p = protocol();
    let mut images: Vec<Vec<f64>> = simulate_signals(&[1e-3, 1e-3, 1e-3, 0.0, 0.0, 0.0], 1.0, &p)
        .into_iter()
        .map(|s| vec![s, s])
        .collect();
    images[3][1] = 0.0;
    let refs: Vec<&[f64]> = images.iter().map(|v| &v[..]).collect();
    let f = fit_tensors(&refs, 1, 2, &p).unwrap();
    assert_eq!(f.valid, vec![true, false]);
    let maps = compute_maps(&f, &[true, true], [0.0, 0.0, 1.0]).unwrap();
    assert!(maps.md[1].is_nan() && maps.fa[1].is_nan());
}

#[test]
fn image_count_must_match_protocol() {
    let p = protocol();
    let img = [1.0];
    assert!(fit_tensors(&[&img[..]; 3], 1, 1, &p).is_err());
}

#[test]
fn basis_is_orthonormal_and_rotates_with_the_mask() {
    let n = 21;
    let mask: Vec<bool> = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64 - 10.0, (i % n) as f64 - 10.0);
            let r = (x * x + y * y).sqrt();
            (5.0..9.0).contains(&r)
        })
        .collect();
    let b = local_basis(&mask, n, n, [0.0, 0.0, 1.0]).unwrap();
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    for t in b.triads.iter().flatten() {
        for v in [&t.radial, &t.circumferential, &t.longitudinal] {
            assert!((dot(v, v) - 1.0).abs() < 1e-9);
        }
        assert!(dot(&t.radial, &t.circumferential).abs() < 1e-9);
        assert!(dot(&t.radial, &t.longitudinal).abs() < 1e-9);
        assert!(dot(&t.circumferential, &t.longitudinal).abs() < 1e-9);
    }
    // (row, col) -> (col, n-1-row) maps (x, y) offsets to (-y, x)
    let mut rot = vec![false; n * n];
    for i in 0..n * n {
        let (r, c) = (i / n, i % n);
        rot[c * n + (n - 1 - r)] = mask[i];
    }
    let br = local_basis(&rot, n, n, [0.0, 0.0, 1.0]).unwrap();
    let mut compared = 0;
    for i in 0..n * n {
        let (r, c) = (i / n, i % n);
        let (Some(t), Some(u)) = (b.triads[i], br.triads[c * n + (n - 1 - r)]) else {
            continue;
        };
        let rotv = |v: [f64; 3]| [-v[1], v[0], v[2]];
        for (a, b) in [(t.radial, u.radial), (t.circumferential, u.circumferential)] {
            let a = rotv(a);
            assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-9));
        }
        compared += 1;
    }
    assert!(compared > 100);
}

#[test]
fn degenerate_tensors_have_no_angles() {
    let mask = vec![true; 9];
    let mut tensors = vec![[1e-3, 1e-3, 0.5e-3, 0.0, 0.0, 0.0]; 9];
    // prolate: HA defined, e2/e3 unresolved
    tensors[0] = [1e-3, 0.5e-3, 0.5e-3, 0.0, 0.0, 0.0];
    let f = TensorField::from_tensors(3, 3, tensors).unwrap();
    let m = compute_maps(&f, &mask, [0.0, 0.0, 1.0]).unwrap();
    assert!(m.ha[0].is_finite() && m.e2a[0].is_nan());
    assert!(m.ha[1].is_nan() && m.e2a[1].is_nan());
    assert!(m.ha[4].is_nan(), "centroid voxel has no radial direction");
    assert!(m.md[4].is_finite());
}

#[test]
fn export_writes_tensors_and_pngs() {
    let f = TensorField::from_tensors(2, 2, vec![[1.2e-3, 0.6e-3, 0.4e-3, 0.0, 0.0, 0.0]; 4]).unwrap();
    let m = compute_maps(&f, &[true, true, true, false], [0.0, 0.0, 1.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export::export_maps(dir.path(), "slice0", &m).unwrap();
    for k in ["md", "fa", "ha", "e2a"] {
        let t = smsnet_tensor::io::load(&dir.path().join(format!("slice0_{k}.cdti"))).unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        assert!(dir.path().join(format!("slice0_{k}.png")).exists());
    }
}

proptest! {
    #[test]
    fn jacobi_matches_reference_solver(
        l in prop::array::uniform3(-2.0f64..3.0),
        a in -3.2f64..3.2, b in -1.5f64..1.5, c in -3.2f64..3.2,
    ) {
        let d = from_frame(l, rotation(a, b, c));
        let e = jacobi(&d);
        let m = to_matrix(&d);
        let reference = SymmetricEigen::new(Matrix3::from_fn(|r, c| m[r][c]));
        let mut want: Vec<f64> = reference.eigenvalues.iter().copied().collect();
        want.sort_by(|x, y| y.total_cmp(x));
        for k in 0..3 {
            prop_assert!((e.values[k] - want[k]).abs() < 1e-12);
        }
        prop_assert!((md(&d) - e.values.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn psd_round_trip_recovers_md_and_fa(
        l in prop::array::uniform3(0.05e-3f64..3e-3),
        a in -3.2f64..3.2, b in -1.5f64..1.5, c in -3.2f64..3.2,
    ) {
        let p = DiffusionProtocol::hemisphere(11, 1000.0).unwrap();
        let d = from_frame(l, rotation(a, b, c));
        let f = fit_one(&d, &p);
        let got = &f.tensors[0];
        prop_assert!((md(got) - md(&d)).abs() < 1e-8);
        prop_assert!((fa(got) - fa(&d)).abs() < 1e-8);
        prop_assert!((0.0..=1.0).contains(&fa(got)));
    }

    #[test]
    fn angles_ignore_eigenvector_sign(
        h in -1.5f64..1.5, s1 in prop::bool::ANY, s2 in prop::bool::ANY,
    ) {
        let t = Triad { radial: [1.0, 0.0, 0.0], circumferential: [0.0, 1.0, 0.0], longitudinal: [0.0, 0.0, 1.0] };
        let e1 = [0.0, h.cos(), h.sin()];
        let e2 = [0.6, -0.8 * h.sin(), 0.8 * h.cos()];
        let f = |v: [f64; 3], s: bool| if s { v.map(|x| -x) } else { v };
        let ha = helix_angle(&e1, &t);
        prop_assert!((helix_angle(&f(e1, s1), &t) - ha).abs() < 1e-9);
        prop_assert!((-90.0..90.0).contains(&ha));
        let e2a = e2_angle(&e1, &e2, &t).unwrap();
        let flipped = e2_angle(&f(e1, s1), &f(e2, s2), &t).unwrap();
        prop_assert!((flipped - e2a).abs() < 1e-9);
        prop_assert!((-90.0..90.0).contains(&e2a));
    }
}
