//! Raw convolution and matmul kernels behind the taped ops.
//!
//! Parallel loops are arranged so every output element is written by exactly
//! one task with a fixed sequential reduction order; results are bit-identical
//! for any rayon worker count.

use rayon::prelude::*;

/// `dst[y][x] += a * src[y+dy][x+dx]` over all in-bounds positions.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize, a: f64) {
    let y0 = (-dy).max(0) as usize;
    let y1 = ((h as isize - dy).max(0) as usize).min(h);
    let x0 = (-dx).max(0) as usize;
    let x1 = ((w as isize - dx).max(0) as usize).min(w);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx = (x0 as isize + dx) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s = &src[sy * w + sx..sy * w + sx + d.len()];
        for (dv, sv) in d.iter_mut().zip(s) {
            *dv += a * *sv;
        }
    }
}

/// Receptive-field gather: `cols[(ci, ky, kx)][y*w + x] = in[ci][y+ky-p][x+kx-p]`
/// with zeros where the field leaves the image.
fn im2col(input: &[f64], ci: usize, h: usize, w: usize, kh: usize, kw: usize, cols: &mut [f64]) {
    let plane = h * w;
    let py = (kh / 2) as isize;
    let px = (kw / 2) as isize;
    cols.fill(0.0);
    for cii in 0..ci {
        let ip = &input[cii * plane..(cii + 1) * plane];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((cii * kh + ky) * kw + kx) * plane;
                let dy = ky as isize - py;
                let dx = kx as isize - px;
                let y0 = (-dy).max(0) as usize;
                let y1 = ((h as isize - dy).max(0) as usize).min(h);
                let x0 = (-dx).max(0) as usize;
                let x1 = ((w as isize - dx).max(0) as usize).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx = (x0 as isize + dx) as usize;
                    cols[row + y * w + x0..row + y * w + x1]
                        .copy_from_slice(&ip[sy * w + sx..sy * w + sx + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add the rows back into image planes.
fn col2im_add(cols: &[f64], ci: usize, h: usize, w: usize, kh: usize, kw: usize, out: &mut [f64]) {
    let plane = h * w;
    let py = (kh / 2) as isize;
    let px = (kw / 2) as isize;
    for cii in 0..ci {
        let op = &mut out[cii * plane..(cii + 1) * plane];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((cii * kh + ky) * kw + kx) * plane;
                // entries at column (y, x) came from pixel (y+ky-p, x+kx-p)
                shifted_axpy(op, &cols[row..row + plane], h, w, py - ky as isize, px - kx as isize, 1.0);
            }
        }
    }
}

/// Stride-1 "same" convolution. Input `[n, ci, h, w]`, kernel `[co, ci, kh, kw]`
/// (odd kh/kw), optional bias `[co]`, output `[n, co, h, w]`. Evaluated as a
/// matmul over the im2col gather, parallel across the batch.
pub fn conv2d_forward(
    input: &[f64],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    co: usize,
    kh: usize,
    kw: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let plane = h * w;
    let k = ci * kh * kw;
    let mut out = vec![0.0; n * co * plane];
    out.par_chunks_mut(co * plane).enumerate().for_each(|(ni, sample_out)| {
        let mut cols = vec![0.0; k * plane];
        im2col(&input[ni * ci * plane..(ni + 1) * ci * plane], ci, h, w, kh, kw, &mut cols);
        if let Some(b) = bias {
            for (coi, op) in sample_out.chunks_exact_mut(plane).enumerate() {
                op.fill(b[coi]);
            }
        }
        // out[co][yx] += kernel[co][k] * cols[k][yx]
        matmul_into(kernel, &cols, co, k, plane, sample_out);
    });
    out
}

/// Gradient of the convolution with respect to its input:
/// `kernel^T x d_out`, scattered back through col2im.
pub fn conv2d_backward_input(
    d_out: &[f64],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    co: usize,
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let plane = h * w;
    let k = ci * kh * kw;
    let mut d_in = vec![0.0; n * ci * plane];
    d_in.par_chunks_mut(ci * plane).enumerate().for_each(|(ni, sample_din)| {
        let dout_sample = &d_out[ni * co * plane..(ni + 1) * co * plane];
        let d_cols = matmul_at_b(kernel, dout_sample, co, k, plane);
        col2im_add(&d_cols, ci, h, w, kh, kw, sample_din);
    });
    d_in
}

/// Gradient of the convolution with respect to its kernel:
/// `d_out x cols^T`, accumulated over the batch in index order.
pub fn conv2d_backward_kernel(
    d_out: &[f64],
    input: &[f64],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let plane = h * w;
    let k = ci * kh * kw;
    let partials: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|ni| {
            let mut cols = vec![0.0; k * plane];
            im2col(&input[ni * ci * plane..(ni + 1) * ci * plane], ci, h, w, kh, kw, &mut cols);
            matmul_a_bt(&d_out[ni * co * plane..(ni + 1) * co * plane], &cols, co, plane, k)
        })
        .collect();
    let mut d_k = vec![0.0; co * k];
    for partial in partials {
        for (d, p) in d_k.iter_mut().zip(&partial) {
            *d += p;
        }
    }
    d_k
}

/// Gradient of the convolution with respect to its bias: sum over batch and space.
pub fn conv2d_backward_bias(d_out: &[f64], n: usize, co: usize, plane: usize) -> Vec<f64> {
    let mut d_b = vec![0.0; co];
    for ni in 0..n {
        for (coi, db) in d_b.iter_mut().enumerate() {
            let dop = &d_out[(ni * co + coi) * plane..(ni * co + coi + 1) * plane];
            *db += dop.iter().sum::<f64>();
        }
    }
    d_b
}

/// `[m,k] x [k,n] -> [m,n]` row-major matrix product. The k loop is unrolled
/// four wide so each output-row pass does four fused multiply-adds per load.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_into(a, b, m, k, n, &mut c);
    c
}

fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        let mut kk = 0;
        while kk + 4 <= k {
            let (a0, a1, a2, a3) = (arow[kk], arow[kk + 1], arow[kk + 2], arow[kk + 3]);
            let b0 = &b[kk * n..(kk + 1) * n];
            let b1 = &b[(kk + 1) * n..(kk + 2) * n];
            let b2 = &b[(kk + 2) * n..(kk + 3) * n];
            let b3 = &b[(kk + 3) * n..(kk + 4) * n];
            for (j, cv) in crow.iter_mut().enumerate() {
                *cv += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            kk += 4;
        }
        while kk < k {
            let aik = arow[kk];
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aik * *bv;
            }
            kk += 1;
        }
    }
}

/// `[k,m]^T x [k,n]` without materializing the transpose.
pub fn matmul_at_b(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &aki) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aki * *bv;
            }
        }
    }
    c
}

/// `[m,k] x [n,k]^T` without materializing the transpose. Four output columns
/// share each `a` load.
pub fn matmul_a_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        let mut j = 0;
        while j + 4 <= n {
            let b0 = &b[j * k..(j + 1) * k];
            let b1 = &b[(j + 1) * k..(j + 2) * k];
            let b2 = &b[(j + 2) * k..(j + 3) * k];
            let b3 = &b[(j + 3) * k..(j + 4) * k];
            let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for (kk, av) in arow.iter().enumerate() {
                s0 += av * b0[kk];
                s1 += av * b1[kk];
                s2 += av * b2[kk];
                s3 += av * b3[kk];
            }
            crow[j] = s0;
            crow[j + 1] = s1;
            crow[j + 2] = s2;
            crow[j + 3] = s3;
            j += 4;
        }
        while j < n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            crow[j] = acc;
            j += 1;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_passes_input_through() {
        let input: Vec<f64> = (0..2 * 3 * 4 * 4).map(|i| i as f64 * 0.01).collect();
        // 1x1 kernel mapping 3 channels to 3 channels as identity
        let mut kernel = vec![0.0; 3 * 3];
        for c in 0..3 {
            kernel[c * 3 + c] = 1.0;
        }
        let out = conv2d_forward(&input, 2, 3, 4, 4, &kernel, 3, 1, 1, None);
        assert_eq!(out, input);
    }

    #[test]
    fn conv_matches_direct_summation() {
        // brute-force reference with explicit zero padding
        let (n, ci, h, w, co, kh, kw) = (2, 3, 5, 4, 2, 3, 3);
        let input: Vec<f64> = (0..n * ci * h * w).map(|i| ((i * 37 % 101) as f64 - 50.0) * 0.02).collect();
        let kernel: Vec<f64> = (0..co * ci * kh * kw).map(|i| ((i * 53 % 97) as f64 - 48.0) * 0.01).collect();
        let bias = vec![0.3, -0.2];
        let out = conv2d_forward(&input, n, ci, h, w, &kernel, co, kh, kw, Some(&bias));
        let p = kh as isize / 2;
        for ni in 0..n {
            for coi in 0..co {
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        let mut acc = bias[coi];
                        for cii in 0..ci {
                            for ky in 0..kh as isize {
                                for kx in 0..kw as isize {
                                    let iy = y + ky - p;
                                    let ix = x + kx - p;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        acc += input
                                            [((ni * ci + cii) * h + iy as usize) * w + ix as usize]
                                            * kernel[((coi * ci + cii) * kh + ky as usize) * kw
                                                + kx as usize];
                                    }
                                }
                            }
                        }
                        let got = out[((ni * co + coi) * h + y as usize) * w + x as usize];
                        assert!((got - acc).abs() < 1e-12, "mismatch at {ni},{coi},{y},{x}");
                    }
                }
            }
        }
    }

    #[test]
    fn matmul_small_case() {
        // [2,3] x [3,2]
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let c = matmul(&a, &b, 2, 3, 2);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);
    }
}
