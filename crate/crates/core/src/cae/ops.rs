//! Per-sample tensor kernels. Tensors are channel-planar `c × h × w`.

use super::real::{matmul, matmul_at, matmul_bt, Real};

/// Valid output column range for kernel column `kx`: `(ox_lo, ox_hi, ix_lo)`.
fn col_span(w: usize, kx: usize, pad: usize) -> Option<(usize, usize, usize)> {
    let lo = pad.saturating_sub(kx);
    let hi = (w + pad).saturating_sub(kx).min(w);
    (lo < hi).then(|| (lo, hi, lo + kx - pad))
}

/// Unfolds a same-padded `k × k` neighbourhood of every pixel into the
/// columns of a `(c·k·k) × (h·w)` matrix.
pub(crate) fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let Some((lo, hi, ix)) = col_span(w, kx, pad) else {
                    row.fill(T::zero());
                    continue;
                };
                for oy in 0..h {
                    let dst = &mut row[oy * w..(oy + 1) * w];
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h {
                        dst.fill(T::zero());
                        continue;
                    }
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let src = (iy - pad) * w + ix;
                    dst[lo..hi].copy_from_slice(&plane[src..src + hi - lo]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `dx`.
pub(crate) fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let Some((lo, hi, ix)) = col_span(w, kx, pad) else { continue };
                for oy in 0..h {
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let dst = (iy - pad) * w + ix;
                    plane[dst..dst + hi - lo]
                        .iter_mut()
                        .zip(&row[oy * w + lo..oy * w + hi])
                        .for_each(|(d, &v)| *d += v);
                }
            }
        }
    }
}

/// Sum of `f(v)` over `v` in double precision, with lane-wise partial sums.
pub(crate) fn lane_sum<T: Real>(v: &[T], f: impl Fn(T) -> f64) -> f64 {
    const L: usize = 8;
    let mut acc = [0.0f64; L];
    let chunks = v.chunks_exact(L);
    let rest = chunks.remainder();
    for c in chunks {
        for i in 0..L {
            acc[i] += f(c[i]);
        }
    }
    acc.iter().sum::<f64>() + rest.iter().map(|&x| f(x)).sum::<f64>()
}

/// Dot product with lane-wise partial sums so it vectorises.
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    const L: usize = 16;
    let mut acc = [T::zero(); L];
    let (ca, cb) = (a.chunks_exact(L), b.chunks_exact(L));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..L {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ra.iter().zip(rb).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for v in acc {
        s += v;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    pub fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }
}

/// Output channel count up to which direct convolution beats im2col.
const DIRECT_MAX_COUT: usize = 4;

pub(crate) fn conv_forward<T: Real>(s: ConvShape, x: &[T], weight: &[T], bias: Option<&[T]>, y: &mut [T]) {
    if s.cout <= DIRECT_MAX_COUT {
        conv_direct_forward(s, x, weight, bias, y)
    } else {
        conv_gemm_forward(s, x, weight, bias, y)
    }
}

/// Weight (and bias) gradient of one sample, plus the input gradient when
/// `dx` is given.
pub(crate) fn conv_backward<T: Real>(
    s: ConvShape,
    x: &[T],
    weight: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    dx: Option<&mut [T]>,
) {
    if s.cout <= DIRECT_MAX_COUT {
        conv_direct_backward(s, x, weight, dy, dweight, dbias, dx)
    } else {
        conv_gemm_backward(s, x, weight, dy, dweight, dbias, dx)
    }
}

fn conv_gemm_forward<T: Real>(s: ConvShape, x: &[T], weight: &[T], bias: Option<&[T]>, y: &mut [T]) {
    let mut col = vec![T::zero(); s.col_rows() * s.hw()];
    im2col(x, s.cin, s.h, s.w, s.k, &mut col);
    matmul(s.cout, s.col_rows(), s.hw(), weight, &col, y, false);
    if let Some(b) = bias {
        for (plane, &bv) in y.chunks_exact_mut(s.hw()).zip(b) {
            plane.iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn conv_gemm_backward<T: Real>(
    s: ConvShape,
    x: &[T],
    weight: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    dx: Option<&mut [T]>,
) {
    let mut col = vec![T::zero(); s.col_rows() * s.hw()];
    im2col(x, s.cin, s.h, s.w, s.k, &mut col);
    matmul_bt(s.cout, s.hw(), s.col_rows(), dy, &col, dweight, false);
    if let Some(db) = dbias {
        for (d, plane) in db.iter_mut().zip(dy.chunks_exact(s.hw())) {
            *d = plane.iter().copied().sum();
        }
    }
    if let Some(dx) = dx {
        matmul_at(s.col_rows(), s.cout, s.hw(), weight, dy, &mut col, false);
        dx.fill(T::zero());
        col2im(&col, s.cin, s.h, s.w, s.k, dx);
    }
}

/// Direct same-padded convolution without an unfolded matrix; faster than
/// GEMM when the output has very few channels.
fn conv_direct_forward<T: Real>(s: ConvShape, x: &[T], weight: &[T], bias: Option<&[T]>, y: &mut [T]) {
    let (h, w, k, pad, hw) = (s.h, s.w, s.k, s.k / 2, s.hw());
    for co in 0..s.cout {
        let yp = &mut y[co * hw..(co + 1) * hw];
        yp.fill(bias.map_or(T::zero(), |b| b[co]));
        for ci in 0..s.cin {
            let xp = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((co * s.cin + ci) * k + ky) * k + kx];
                    let Some((lo, hi, ix)) = col_span(w, kx, pad) else { continue };
                    let n = hi - lo;
                    for oy in 0..h {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let src = &xp[(iy - pad) * w + ix..][..n];
                        let dst = &mut yp[oy * w + lo..][..n];
                        dst.iter_mut().zip(src).for_each(|(d, &v)| *d += wv * v);
                    }
                }
            }
        }
    }
}

/// Direct counterpart of [`conv_gemm_backward`].
fn conv_direct_backward<T: Real>(
    s: ConvShape,
    x: &[T],
    weight: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    mut dx: Option<&mut [T]>,
) {
    let (h, w, k, pad, hw) = (s.h, s.w, s.k, s.k / 2, s.hw());
    if let Some(d) = dx.as_deref_mut() {
        d.fill(T::zero());
    }
    if let Some(db) = dbias {
        for (d, plane) in db.iter_mut().zip(dy.chunks_exact(hw)) {
            *d = plane.iter().copied().sum();
        }
    }
    for co in 0..s.cout {
        let gp = &dy[co * hw..(co + 1) * hw];
        for ci in 0..s.cin {
            let xp = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((co * s.cin + ci) * k + ky) * k + kx;
                    let Some((lo, hi, ix)) = col_span(w, kx, pad) else {
                        dweight[widx] = T::zero();
                        continue;
                    };
                    let n = hi - lo;
                    let wv = weight[widx];
                    let mut acc = T::zero();
                    for oy in 0..h {
                        let iy = oy + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let src = (iy - pad) * w + ix;
                        let g = &gp[oy * w + lo..][..n];
                        acc += dot(g, &xp[src..src + n]);
                        if let Some(d) = dx.as_deref_mut() {
                            let dst = &mut d[ci * hw + src..][..n];
                            dst.iter_mut().zip(g).for_each(|(d, &v)| *d += wv * v);
                        }
                    }
                    dweight[widx] = acc;
                }
            }
        }
    }
}

/// 2×2 max-pool; records the flat input index of each maximum (first in
/// scan order on ties).
pub(crate) fn maxpool_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize, y: &mut [T], arg: &mut [u32]) {
    let (oh, ow) = (h / 2, w / 2);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ci * h * w + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ci * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                let o = (ci * oh + oy) * ow + ox;
                y[o] = x[best];
                arg[o] = best as u32;
            }
        }
    }
}

pub(crate) fn maxpool_backward<T: Real>(dy: &[T], arg: &[u32], dx: &mut [T]) {
    dx.fill(T::zero());
    for (&g, &i) in dy.iter().zip(arg) {
        dx[i as usize] += g;
    }
}

/// Nearest-neighbour 2× upsampling.
pub(crate) fn upsample_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize, y: &mut [T]) {
    let ow = 2 * w;
    for ci in 0..c {
        for iy in 0..h {
            for ix in 0..w {
                let v = x[(ci * h + iy) * w + ix];
                let base = (ci * 2 * h + 2 * iy) * ow + 2 * ix;
                y[base] = v;
                y[base + 1] = v;
                y[base + ow] = v;
                y[base + ow + 1] = v;
            }
        }
    }
}

pub(crate) fn upsample_backward<T: Real>(dy: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let ow = 2 * w;
    for ci in 0..c {
        for iy in 0..h {
            for ix in 0..w {
                let base = (ci * 2 * h + 2 * iy) * ow + 2 * ix;
                dx[(ci * h + iy) * w + ix] = dy[base] + dy[base + 1] + dy[base + ow] + dy[base + ow + 1];
            }
        }
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for arbitrary x and c.
        let (c, h, w, k) = (2, 5, 4, 3);
        let x: Vec<f64> = (0..c * h * w).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let n = c * k * k * h * w;
        let cv: Vec<f64> = (0..n).map(|i| ((i * 3) % 13) as f64 - 6.0).collect();
        let mut col = vec![0.0; n];
        im2col(&x, c, h, w, k, &mut col);
        let mut back = vec![0.0; c * h * w];
        col2im(&cv, c, h, w, k, &mut back);
        let lhs: f64 = col.iter().zip(&cv).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn identity_kernel_copies_input() {
        let s = ConvShape { cin: 1, cout: 1, k: 3, h: 4, w: 4 };
        let x: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let mut wt = vec![0.0f32; 9];
        wt[4] = 1.0;
        let mut y = vec![0.0; 16];
        conv_forward(s, &x, &wt, Some(&[0.5]), &mut y);
        assert!(y.iter().zip(&x).all(|(a, b)| *a == b + 0.5));
    }

    #[test]
    fn direct_matches_gemm() {
        let s = ConvShape { cin: 3, cout: 2, k: 5, h: 6, w: 7 };
        let x: Vec<f64> = (0..s.cin * s.hw()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let wt: Vec<f64> = (0..s.cout * s.col_rows()).map(|i| ((i * 5) % 9) as f64 - 4.0).collect();
        let dy: Vec<f64> = (0..s.cout * s.hw()).map(|i| ((i * 3) % 5) as f64 - 2.0).collect();
        let b = [0.5, -1.0];
        let (mut y1, mut y2) = (vec![0.0; dy.len()], vec![0.0; dy.len()]);
        conv_gemm_forward(s, &x, &wt, Some(&b), &mut y1);
        conv_direct_forward(s, &x, &wt, Some(&b), &mut y2);
        assert_eq!(y1, y2);
        let (mut w1, mut w2) = (vec![0.0; wt.len()], vec![0.0; wt.len()]);
        let (mut b1, mut b2) = ([0.0; 2], [0.0; 2]);
        let (mut d1, mut d2) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        conv_gemm_backward(s, &x, &wt, &dy, &mut w1, Some(&mut b1), Some(&mut d1));
        conv_direct_backward(s, &x, &wt, &dy, &mut w2, Some(&mut b2), Some(&mut d2));
        assert_eq!((w1, b1, d1), (w2, b2, d2));
    }

    #[test]
    fn pool_and_upsample() {
        let x = [1.0f32, 5.0, 2.0, 0.0, 3.0, 3.0, 4.0, 9.0, 0.0, 0.0, 1.0, 1.0, 0.0, 7.0, 1.0, 1.0];
        let mut y = [0.0; 4];
        let mut arg = [0u32; 4];
        maxpool_forward(&x, 1, 4, 4, &mut y, &mut arg);
        assert_eq!(y, [5.0, 9.0, 7.0, 1.0]);
        assert_eq!(arg, [1, 7, 13, 10]);
        let mut up = [0.0; 16];
        upsample_forward(&y, 1, 2, 2, &mut up);
        assert_eq!(&up[..4], &[5.0, 5.0, 9.0, 9.0]);
        let mut back = [0.0; 4];
        upsample_backward(&up, 1, 2, 2, &mut back);
        assert_eq!(back, [20.0, 36.0, 28.0, 4.0]);
    }
}
