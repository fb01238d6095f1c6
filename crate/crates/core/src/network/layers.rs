//! Convolution kernels over channel-major `C x H x W` buffers.
//!
//! 3x3 convolutions use zero padding so spatial size is preserved. Weights are
//! laid out `[out][in][ky][kx]`.

#![allow(clippy::too_many_arguments)]

use super::Real;

// Channel planes copied into a zero border one cell wide, row stride w + 2.
fn pad<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (pw, ph) = (w + 2, h + 2);
    let mut out = vec![T::zero(); c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let dst = ch * ph * pw + (y + 1) * pw + 1;
            out[dst..dst + w].copy_from_slice(&x[(ch * h + y) * w..(ch * h + y + 1) * w]);
        }
    }
    out
}

// Output is computed in the padded row stride: frame index y * (w + 2) + x
// for x < w is pixel (y, x); the two extra columns per row are scratch. Tap
// (ky, kx) of a frame index i reads padded index i + ky * (w + 2) + kx.
fn frame_len(h: usize, w: usize) -> usize {
    (h - 1) * (w + 2) + w
}

pub(crate) fn conv3x3_forward<T: Real>(
    input: &[T],
    in_c: usize,
    weights: &[T],
    bias: &[T],
    out_c: usize,
    h: usize,
    w: usize,
    out: &mut [T],
) {
    let (pw, plane) = (w + 2, (h + 2) * (w + 2));
    let len = frame_len(h, w);
    let padded = pad(input, in_c, h, w);
    let mut frame = vec![T::zero(); len];
    for oc in 0..out_c {
        frame.fill(bias[oc]);
        for ic in 0..in_c {
            let inp = &padded[ic * plane..(ic + 1) * plane];
            let kbase = (oc * in_c + ic) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weights[kbase + ky * 3 + kx];
                    let off = ky * pw + kx;
                    for (a, &b) in frame.iter_mut().zip(&inp[off..off + len]) {
                        *a += wv * b;
                    }
                }
            }
        }
        for y in 0..h {
            out[(oc * h + y) * w..(oc * h + y + 1) * w].copy_from_slice(&frame[y * pw..y * pw + w]);
        }
    }
}

/// Accumulates weight/bias gradients and, when `d_input` is given, the input
/// gradient.
pub(crate) fn conv3x3_backward<T: Real>(
    input: &[T],
    in_c: usize,
    weights: &[T],
    d_out: &[T],
    out_c: usize,
    h: usize,
    w: usize,
    d_weights: &mut [T],
    d_bias: &mut [T],
    d_input: Option<&mut [T]>,
) {
    let (pw, plane) = (w + 2, (h + 2) * (w + 2));
    let len = frame_len(h, w);
    let padded = pad(input, in_c, h, w);
    // upstream gradient in frame layout, zero on the scratch columns
    let mut go = vec![T::zero(); len];
    let mut d_padded = d_input.as_ref().map(|_| vec![T::zero(); in_c * plane]);
    for oc in 0..out_c {
        let g = &d_out[oc * h * w..(oc + 1) * h * w];
        d_bias[oc] += g.iter().copied().sum::<T>();
        for y in 0..h {
            go[y * pw..y * pw + w].copy_from_slice(&g[y * w..(y + 1) * w]);
        }
        for ic in 0..in_c {
            let inp = &padded[ic * plane..(ic + 1) * plane];
            let kbase = (oc * in_c + ic) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let off = ky * pw + kx;
                    let mut acc = T::zero();
                    for (&a, &b) in go.iter().zip(&inp[off..off + len]) {
                        acc += a * b;
                    }
                    d_weights[kbase + ky * 3 + kx] += acc;
                    if let Some(dp) = d_padded.as_mut() {
                        let wv = weights[kbase + ky * 3 + kx];
                        let dst = &mut dp[ic * plane + off..ic * plane + off + len];
                        for (d, &a) in dst.iter_mut().zip(&go) {
                            *d += wv * a;
                        }
                    }
                }
            }
        }
    }
    if let (Some(di), Some(dp)) = (d_input, d_padded) {
        for ic in 0..in_c {
            for y in 0..h {
                let src = ic * plane + (y + 1) * pw + 1;
                for (d, &v) in di[(ic * h + y) * w..(ic * h + y + 1) * w]
                    .iter_mut()
                    .zip(&dp[src..src + w])
                {
                    *d += v;
                }
            }
        }
    }
}

/// 1x1 convolution: `out[o][i] = b[o] + sum_c w[o][c] * in[c][i]`.
pub(crate) fn conv1x1_forward<T: Real>(
    input: &[T],
    in_c: usize,
    weights: &[T],
    bias: &[T],
    out_c: usize,
    hw: usize,
    out: &mut [T],
) {
    for oc in 0..out_c {
        let o = &mut out[oc * hw..(oc + 1) * hw];
        o.fill(bias[oc]);
        for ic in 0..in_c {
            let wv = weights[oc * in_c + ic];
            for (a, &b) in o.iter_mut().zip(&input[ic * hw..(ic + 1) * hw]) {
                *a += wv * b;
            }
        }
    }
}

pub(crate) fn conv1x1_backward<T: Real>(
    input: &[T],
    in_c: usize,
    weights: &[T],
    d_out: &[T],
    out_c: usize,
    hw: usize,
    d_weights: &mut [T],
    d_bias: &mut [T],
    d_input: &mut [T],
) {
    for oc in 0..out_c {
        let go = &d_out[oc * hw..(oc + 1) * hw];
        d_bias[oc] += go.iter().copied().sum::<T>();
        for ic in 0..in_c {
            let inp = &input[ic * hw..(ic + 1) * hw];
            let mut acc = T::zero();
            for (&g, &x) in go.iter().zip(inp) {
                acc += g * x;
            }
            d_weights[oc * in_c + ic] += acc;
            let wv = weights[oc * in_c + ic];
            for (d, &g) in d_input[ic * hw..(ic + 1) * hw].iter_mut().zip(go) {
                *d += wv * g;
            }
        }
    }
}

pub(crate) fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` where the rectified activation was not positive.
pub(crate) fn relu_backward<T: Real>(activation: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct definition of a zero-padded 3x3 cross-correlation.
    fn naive(
        input: &[f64],
        in_c: usize,
        wts: &[f64],
        bias: &[f64],
        out_c: usize,
        h: usize,
        w: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; out_c * h * w];
        for oc in 0..out_c {
            for y in 0..h {
                for x in 0..w {
                    let mut s = bias[oc];
                    for ic in 0..in_c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = x as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                s += wts[((oc * in_c + ic) * 3 + ky) * 3 + kx]
                                    * input[ic * h * w + sy as usize * w + sx as usize];
                            }
                        }
                    }
                    out[oc * h * w + y * w + x] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv3x3_matches_naive() {
        let (in_c, out_c, h, w) = (2, 3, 4, 5);
        let input: Vec<f64> = (0..in_c * h * w)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let wts: Vec<f64> = (0..out_c * in_c * 9)
            .map(|i| ((i * 5 % 13) as f64 - 6.0) / 7.0)
            .collect();
        let bias = vec![0.1, -0.2, 0.3];
        let mut out = vec![0.0; out_c * h * w];
        conv3x3_forward(&input, in_c, &wts, &bias, out_c, h, w, &mut out);
        let expect = naive(&input, in_c, &wts, &bias, out_c, h, w);
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv3x3_input_grad_is_adjoint() {
        // <conv(x), g> == <x, conv^T(g)> for zero bias
        let (in_c, out_c, h, w) = (3, 2, 5, 4);
        let x: Vec<f64> = (0..in_c * h * w)
            .map(|i| ((i * 3 % 17) as f64) / 9.0 - 0.8)
            .collect();
        let g: Vec<f64> = (0..out_c * h * w)
            .map(|i| ((i * 11 % 19) as f64) / 10.0 - 0.9)
            .collect();
        let wts: Vec<f64> = (0..out_c * in_c * 9)
            .map(|i| ((i * 5 % 13) as f64 - 6.0) / 7.0)
            .collect();
        let mut y = vec![0.0; out_c * h * w];
        conv3x3_forward(&x, in_c, &wts, &[0.0, 0.0], out_c, h, w, &mut y);
        let mut dx = vec![0.0; in_c * h * w];
        let mut dw = vec![0.0; wts.len()];
        let mut db = vec![0.0; out_c];
        conv3x3_backward(
            &x,
            in_c,
            &wts,
            &g,
            out_c,
            h,
            w,
            &mut dw,
            &mut db,
            Some(&mut dx),
        );
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // the same bilinear form through the weights
        let rhs_w: f64 = wts.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-10);
    }
}
