use crate::eigen::{jacobi, Eigen};
use crate::fit::TensorField;
use crate::{DtiError, Result};

/// Relative eigenvalue gap below which eigenvectors are not identifiable.
pub const DEGENERACY_GAP: f64 = 1e-6;

pub fn md(d: &[f64; 6]) -> f64 {
    (d[0] + d[1] + d[2]) / 3.0
}

/// `sqrt(3/2) |λ - mean λ| / |λ|` from eigenvalues, negatives clamped to 0.
pub fn fa_from_eigenvalues(values: [f64; 3]) -> f64 {
    let l = values.map(|v| v.max(0.0));
    let norm = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let mean = (l[0] + l[1] + l[2]) / 3.0;
    let dev = ((l[0] - mean).powi(2) + (l[1] - mean).powi(2) + (l[2] - mean).powi(2)).sqrt();
    ((1.5f64).sqrt() * dev / norm).clamp(0.0, 1.0)
}

pub fn fa(d: &[f64; 6]) -> f64 {
    fa_from_eigenvalues(jacobi(d).values)
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(&a, &a).sqrt();
    (n > 1e-12).then(|| a.map(|x| x / n))
}

/// Wrap degrees into `[-90, 90)`; axes are 180°-periodic.
pub fn wrap_axis_angle(deg: f64) -> f64 {
    (deg + 90.0).rem_euclid(180.0) - 90.0
}

/// Radial, circumferential and longitudinal unit vectors of one voxel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triad {
    pub radial: [f64; 3],
    pub circumferential: [f64; 3],
    pub longitudinal: [f64; 3],
}

/// Per-voxel local frames of one slice; `None` outside the mask or at the
/// centroid.
#[derive(Clone, Debug)]
pub struct LocalBasis {
    pub height: usize,
    pub width: usize,
    pub triads: Vec<Option<Triad>>,
}

/// In-plane coordinates: x along columns, y along rows, z through the slice.
pub fn local_basis(mask: &[bool], height: usize, width: usize, long_axis: [f64; 3]) -> Result<LocalBasis> {
    if mask.len() != height * width {
        return Err(DtiError::Shape(format!("mask of {} voxels for {height}x{width}", mask.len())));
    }
    let l = normalized(long_axis).ok_or_else(|| DtiError::Shape("zero long axis".into()))?;
    let count = mask.iter().filter(|&&m| m).count();
    let mut triads = vec![None; mask.len()];
    if count == 0 {
        return Ok(LocalBasis { height, width, triads });
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        cx += (i % width) as f64;
        cy += (i / width) as f64;
    }
    cx /= count as f64;
    cy /= count as f64;
    for (i, t) in triads.iter_mut().enumerate() {
        if !mask[i] {
            continue;
        }
        let p = [(i % width) as f64 - cx, (i / width) as f64 - cy, 0.0];
        let along = dot(&p, &l);
        let Some(r) = normalized([p[0] - along * l[0], p[1] - along * l[1], p[2] - along * l[2]]) else {
            continue;
        };
        *t = Some(Triad {
            radial: r,
            circumferential: cross(&l, &r),
            longitudinal: l,
        });
    }
    Ok(LocalBasis { height, width, triads })
}

/// Helix angle of the primary eigenvector: elevation of its tangent-plane
/// projection from the circumferential direction, positive towards the
/// longitudinal axis.
pub fn helix_angle(e1: &[f64; 3], t: &Triad) -> f64 {
    wrap_axis_angle(dot(e1, &t.longitudinal).atan2(dot(e1, &t.circumferential)).to_degrees())
}

/// Angle of the second eigenvector within the cross-myocyte plane, measured
/// from the radial direction towards `radial × m`, where `m` is the
/// tangent-plane projection of the primary eigenvector.
pub fn e2_angle(e1: &[f64; 3], e2: &[f64; 3], t: &Triad) -> Option<f64> {
    let m = normalized([
        dot(e1, &t.circumferential) * t.circumferential[0] + dot(e1, &t.longitudinal) * t.longitudinal[0],
        dot(e1, &t.circumferential) * t.circumferential[1] + dot(e1, &t.longitudinal) * t.longitudinal[1],
        dot(e1, &t.circumferential) * t.circumferential[2] + dot(e1, &t.longitudinal) * t.longitudinal[2],
    ])?;
    // e1 is an axis, so fix the sign of m before building the reference frame
    let flip = dot(&m, &t.circumferential) < 0.0
        || (dot(&m, &t.circumferential) == 0.0 && dot(&m, &t.longitudinal) < 0.0);
    let m = if flip { m.map(|x| -x) } else { m };
    let cross_dir = cross(&t.radial, &m);
    Some(wrap_axis_angle(dot(e2, &cross_dir).atan2(dot(e2, &t.radial)).to_degrees()))
}

/// MD, FA, HA and E2A of one slice. Voxels outside the mask, with invalid
/// fits or with unidentifiable eigenvectors hold NaN.
#[derive(Clone, Debug)]
pub struct MapSet {
    pub height: usize,
    pub width: usize,
    pub md: Vec<f64>,
    pub fa: Vec<f64>,
    pub ha: Vec<f64>,
    pub e2a: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn compute_maps(field: &TensorField, mask: &[bool], long_axis: [f64; 3]) -> Result<MapSet> {
    let basis = local_basis(mask, field.height, field.width, long_axis)?;
    let n = field.len();
    let mut out = MapSet {
        height: field.height,
        width: field.width,
        md: vec![f64::NAN; n],
        fa: vec![f64::NAN; n],
        ha: vec![f64::NAN; n],
        e2a: vec![f64::NAN; n],
        mask: mask.to_vec(),
    };
    for v in 0..n {
        if !mask[v] || !field.valid[v] {
            continue;
        }
        let d = &field.tensors[v];
        let Eigen { values, vectors } = jacobi(d);
        out.md[v] = md(d).max(0.0);
        out.fa[v] = fa_from_eigenvalues(values);
        let Some(t) = &basis.triads[v] else { continue };
        let scale = values[0].abs().max(f64::MIN_POSITIVE);
        if (values[0] - values[1]) / scale < DEGENERACY_GAP {
            continue;
        }
        out.ha[v] = helix_angle(&vectors[0], t);
        if (values[1] - values[2]) / scale >= DEGENERACY_GAP {
            out.e2a[v] = e2_angle(&vectors[0], &vectors[1], t).unwrap_or(f64::NAN);
        }
    }
    Ok(out)
}
