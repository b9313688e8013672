//! Real N-d convolution kernels (1 to 3 spatial dims) via im2col and GEMM.
//!
//! Every routine accumulates `alpha * result` into its output buffer so that
//! complex operators can be assembled from real passes without temporaries.

/// Upper bound, in elements, on the im2col buffer for one batch chunk.
const COL_BUDGET: usize = 1 << 22;

/// Geometry of a real convolution mapping `[batch, cin, input..]` to
/// `[batch, cout, output..]`, with spatial dims left-padded to three.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub input: [usize; 3],
    pub output: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Geometry {
    pub fn in_px(&self) -> usize {
        self.input.iter().product()
    }

    pub fn out_px(&self) -> usize {
        self.output.iter().product()
    }

    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    fn rows(&self) -> usize {
        self.cin * self.taps()
    }

    fn chunk(&self) -> usize {
        let per_item = (self.rows() * self.out_px()).max(1);
        (COL_BUDGET / per_item).clamp(1, self.batch.max(1))
    }

    pub fn input_len(&self) -> usize {
        self.batch * self.cin * self.in_px()
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.cout * self.out_px()
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.rows()
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`, row-major, `op(a)` is m x k.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn offset(o: usize, s: usize, k: usize, p: usize, extent: usize) -> Option<usize> {
    let i = (o * s + k) as isize - p as isize;
    (i >= 0 && (i as usize) < extent).then_some(i as usize)
}

/// Calls `f(col, src_index)` for every (output pixel, tap) of one input plane.
#[inline]
fn for_each_tap(geo: &Geometry, tap: [usize; 3], mut f: impl FnMut(usize, Option<usize>)) {
    let [d_in, h_in, w_in] = geo.input;
    let [d_out, h_out, w_out] = geo.output;
    let mut col = 0;
    for od in 0..d_out {
        let id = offset(od, geo.stride[0], tap[0], geo.pad[0], d_in);
        for oh in 0..h_out {
            let ih = id.and_then(|id| {
                offset(oh, geo.stride[1], tap[1], geo.pad[1], h_in).map(|ih| id * h_in + ih)
            });
            match ih {
                None => {
                    for _ in 0..w_out {
                        f(col, None);
                        col += 1;
                    }
                }
                Some(row) => {
                    for ow in 0..w_out {
                        f(
                            col,
                            offset(ow, geo.stride[2], tap[2], geo.pad[2], w_in).map(|iw| row * w_in + iw),
                        );
                        col += 1;
                    }
                }
            }
        }
    }
}

fn taps(geo: &Geometry) -> impl Iterator<Item = [usize; 3]> + '_ {
    let [kd, kh, kw] = geo.kernel;
    (0..kd).flat_map(move |a| (0..kh).flat_map(move |b| (0..kw).map(move |c| [a, b, c])))
}

fn im2col(geo: &Geometry, x: &[f64], b0: usize, n: usize, cols: &mut [f64]) {
    let p = geo.out_px();
    let ncols = n * p;
    let in_px = geo.in_px();
    for ci in 0..geo.cin {
        for (t, tap) in taps(geo).enumerate() {
            let row = ci * geo.taps() + t;
            let dst = &mut cols[row * ncols..(row + 1) * ncols];
            for bi in 0..n {
                let src = &x[((b0 + bi) * geo.cin + ci) * in_px..][..in_px];
                let dst = &mut dst[bi * p..(bi + 1) * p];
                for_each_tap(geo, tap, |col, s| dst[col] = s.map_or(0.0, |s| src[s]));
            }
        }
    }
}

fn col2im(geo: &Geometry, cols: &[f64], alpha: f64, b0: usize, n: usize, dx: &mut [f64]) {
    let p = geo.out_px();
    let ncols = n * p;
    let in_px = geo.in_px();
    for ci in 0..geo.cin {
        for (t, tap) in taps(geo).enumerate() {
            let row = ci * geo.taps() + t;
            let src = &cols[row * ncols..(row + 1) * ncols];
            for bi in 0..n {
                let dst = &mut dx[((b0 + bi) * geo.cin + ci) * in_px..][..in_px];
                let src = &src[bi * p..(bi + 1) * p];
                for_each_tap(geo, tap, |col, s| {
                    if let Some(s) = s {
                        dst[s] += alpha * src[col];
                    }
                });
            }
        }
    }
}

/// Gather `[n items, cout, p]` into a `[cout, n * p]` matrix.
fn gather(geo: &Geometry, g: &[f64], b0: usize, n: usize, out: &mut [f64]) {
    let p = geo.out_px();
    for bi in 0..n {
        for co in 0..geo.cout {
            let src = &g[((b0 + bi) * geo.cout + co) * p..][..p];
            out[co * n * p + bi * p..][..p].copy_from_slice(src);
        }
    }
}

/// `y += alpha * conv(x, w)`.
pub(crate) fn forward(geo: &Geometry, x: &[f64], w: &[f64], alpha: f64, y: &mut [f64]) {
    debug_assert_eq!(x.len(), geo.input_len());
    debug_assert_eq!(w.len(), geo.weight_len());
    debug_assert_eq!(y.len(), geo.output_len());
    let p = geo.out_px();
    let rows = geo.rows();
    let chunk = geo.chunk();
    let mut cols = vec![0.0; rows * chunk * p];
    let mut tmp = vec![0.0; geo.cout * chunk * p];
    let mut b0 = 0;
    while b0 < geo.batch {
        let n = chunk.min(geo.batch - b0);
        let ncols = n * p;
        im2col(geo, x, b0, n, &mut cols[..rows * ncols]);
        gemm(
            geo.cout,
            rows,
            ncols,
            alpha,
            w,
            false,
            &cols[..rows * ncols],
            false,
            0.0,
            &mut tmp[..geo.cout * ncols],
        );
        for bi in 0..n {
            for co in 0..geo.cout {
                let dst = &mut y[((b0 + bi) * geo.cout + co) * p..][..p];
                let src = &tmp[co * ncols + bi * p..][..p];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        b0 += n;
    }
}

/// `dx += alpha * conv^T(g, w)`: the adjoint of [`forward`] with respect to x.
pub(crate) fn backward_data(geo: &Geometry, g: &[f64], w: &[f64], alpha: f64, dx: &mut [f64]) {
    debug_assert_eq!(g.len(), geo.output_len());
    debug_assert_eq!(dx.len(), geo.input_len());
    let p = geo.out_px();
    let rows = geo.rows();
    let chunk = geo.chunk();
    let mut gm = vec![0.0; geo.cout * chunk * p];
    let mut dcols = vec![0.0; rows * chunk * p];
    let mut b0 = 0;
    while b0 < geo.batch {
        let n = chunk.min(geo.batch - b0);
        let ncols = n * p;
        gather(geo, g, b0, n, &mut gm[..geo.cout * ncols]);
        gemm(
            rows,
            geo.cout,
            ncols,
            1.0,
            w,
            true,
            &gm[..geo.cout * ncols],
            false,
            0.0,
            &mut dcols[..rows * ncols],
        );
        col2im(geo, &dcols[..rows * ncols], alpha, b0, n, dx);
        b0 += n;
    }
}

/// `dw += alpha * d<g, conv(x, w)>/dw`.
pub(crate) fn backward_weight(geo: &Geometry, x: &[f64], g: &[f64], alpha: f64, dw: &mut [f64]) {
    debug_assert_eq!(x.len(), geo.input_len());
    debug_assert_eq!(g.len(), geo.output_len());
    debug_assert_eq!(dw.len(), geo.weight_len());
    let p = geo.out_px();
    let rows = geo.rows();
    let chunk = geo.chunk();
    let mut cols = vec![0.0; rows * chunk * p];
    let mut gm = vec![0.0; geo.cout * chunk * p];
    let mut b0 = 0;
    while b0 < geo.batch {
        let n = chunk.min(geo.batch - b0);
        let ncols = n * p;
        im2col(geo, x, b0, n, &mut cols[..rows * ncols]);
        gather(geo, g, b0, n, &mut gm[..geo.cout * ncols]);
        gemm(
            geo.cout,
            ncols,
            rows,
            alpha,
            &gm[..geo.cout * ncols],
            false,
            &cols[..rows * ncols],
            true,
            1.0,
            dw,
        );
        b0 += n;
    }
}
