//! Dense f64 compute kernels for the network layers.
//!
//! Everything runs on NCHW `Array4<f64>`. Parallelism is over disjoint
//! output slices with serial inner reductions, so results are bitwise
//! reproducible regardless of thread count.

use ndarray::{Array1, Array2, Array4};
use rayon::prelude::*;

#[inline]
fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Cross-correlation forward pass: `x` (N,C_in,H,W) with `w`
/// (C_out,C_in,kh,kw) at the given stride and symmetric zero padding.
pub fn conv2d_forward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    bias: Option<&Array1<f64>>,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (n, c_in, h, wd) = x.dim();
    let (c_out, c_in_w, kh, kw) = w.dim();
    assert_eq!(c_in, c_in_w, "channel mismatch");
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(wd, kw, stride, pad);

    let xs = x.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");
    let mut out = vec![0.0f64; n * c_out * oh * ow];

    out.par_chunks_mut(oh * ow).enumerate().for_each(|(plane, dst)| {
        let ni = plane / c_out;
        let oc = plane % c_out;
        let b = bias.map_or(0.0, |b| b[oc]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b;
                for ic in 0..c_in {
                    let x_base = (ni * c_in + ic) * h * wd;
                    let w_base = ((oc * c_in + ic) * kh) * kw;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * wd;
                        let w_row = w_base + ky * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc += xs[x_row + ix as usize] * ws[w_row + kx];
                        }
                    }
                }
                dst[oy * ow + ox] = acc;
            }
        }
    });
    Array4::from_shape_vec((n, c_out, oh, ow), out).unwrap()
}

/// Gradient of the convolution with respect to its input. Also serves as the
/// transposed-convolution forward pass (the two are adjoint).
pub fn conv2d_backward_input(
    dy: &Array4<f64>,
    w: &Array4<f64>,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
) -> Array4<f64> {
    let (n, c_out, oh, ow) = dy.dim();
    let (c_out_w, c_in, kh, kw) = w.dim();
    assert_eq!(c_out, c_out_w, "channel mismatch");

    let dys = dy.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");
    let mut out = vec![0.0f64; n * c_in * in_h * in_w];

    out.par_chunks_mut(in_h * in_w).enumerate().for_each(|(plane, dst)| {
        let ni = plane / c_in;
        let ic = plane % c_in;
        for oc in 0..c_out {
            let dy_base = (ni * c_out + oc) * oh * ow;
            let w_base = (oc * c_in + ic) * kh * kw;
            for oy in 0..oh {
                let dy_row = dy_base + oy * ow;
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= in_h as isize {
                        continue;
                    }
                    let dst_row = iy as usize * in_w;
                    let w_row = w_base + ky * kw;
                    for ox in 0..ow {
                        let g = dys[dy_row + ox];
                        if g == 0.0 {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            dst[dst_row + ix as usize] += g * ws[w_row + kx];
                        }
                    }
                }
            }
        }
    });
    Array4::from_shape_vec((n, c_in, in_h, in_w), out).unwrap()
}

/// Gradients of the convolution with respect to weights and bias.
pub fn conv2d_backward_weights(
    x: &Array4<f64>,
    dy: &Array4<f64>,
    stride: usize,
    pad: usize,
    kh: usize,
    kw: usize,
) -> (Array4<f64>, Array1<f64>) {
    let (n, c_in, h, wd) = x.dim();
    let (n_dy, c_out, oh, ow) = dy.dim();
    assert_eq!(n, n_dy, "batch mismatch");

    let xs = x.as_slice().expect("standard layout");
    let dys = dy.as_slice().expect("standard layout");
    let mut dw = vec![0.0f64; c_out * c_in * kh * kw];
    let mut db = vec![0.0f64; c_out];

    dw.par_chunks_mut(c_in * kh * kw)
        .zip(db.par_iter_mut())
        .enumerate()
        .for_each(|(oc, (dw_oc, db_oc))| {
            for ni in 0..n {
                let dy_base = (ni * c_out + oc) * oh * ow;
                for oy in 0..oh {
                    let dy_row = dy_base + oy * ow;
                    for ox in 0..ow {
                        let g = dys[dy_row + ox];
                        if g == 0.0 {
                            continue;
                        }
                        *db_oc += g;
                        for ic in 0..c_in {
                            let x_base = (ni * c_in + ic) * h * wd;
                            let dw_base = ic * kh * kw;
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let x_row = x_base + iy as usize * wd;
                                let dw_row = dw_base + ky * kw;
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    dw_oc[dw_row + kx] += g * xs[x_row + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        });
    (
        Array4::from_shape_vec((c_out, c_in, kh, kw), dw).unwrap(),
        Array1::from_vec(db),
    )
}

/// Max pooling with argmax cache for the backward pass.
pub fn maxpool2d_forward(
    x: &Array4<f64>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> (Array4<f64>, Vec<usize>) {
    let (n, c, h, w) = x.dim();
    let oh = conv_out_dim(h, kernel, stride, pad);
    let ow = conv_out_dim(w, kernel, stride, pad);
    let xs = x.as_slice().expect("standard layout");
    let mut out = vec![f64::NEG_INFINITY; n * c * oh * ow];
    let mut argmax = vec![0usize; n * c * oh * ow];
    for plane in 0..n * c {
        let x_base = plane * h * w;
        let o_base = plane * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for ky in 0..kernel {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = x_base + iy as usize * w + ix as usize;
                        // strict comparison keeps the first (scan-order) max on ties
                        if xs[idx] > best {
                            best = xs[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[o_base + oy * ow + ox] = best;
                argmax[o_base + oy * ow + ox] = best_idx;
            }
        }
    }
    (Array4::from_shape_vec((n, c, oh, ow), out).unwrap(), argmax)
}

pub fn maxpool2d_backward(dy: &Array4<f64>, argmax: &[usize], in_dim: (usize, usize, usize, usize)) -> Array4<f64> {
    let mut dx = vec![0.0f64; in_dim.0 * in_dim.1 * in_dim.2 * in_dim.3];
    for (g, &idx) in dy.iter().zip(argmax) {
        dx[idx] += g;
    }
    Array4::from_shape_vec(in_dim, dx).unwrap()
}

/// 2x2 stride-2 average pooling with ceil-mode output and border windows
/// averaged over their actual pixel count, so odd (even 1x1) inputs survive.
pub fn avgpool2_ceil_forward(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let oh = h.div_ceil(2);
    let ow = w.div_ceil(2);
    let xs = x.as_slice().expect("standard layout");
    let mut out = vec![0.0f64; n * c * oh * ow];
    for plane in 0..n * c {
        let x_base = plane * h * w;
        let o_base = plane * oh * ow;
        for oy in 0..oh {
            let y1 = (2 * oy + 2).min(h);
            for ox in 0..ow {
                let x1 = (2 * ox + 2).min(w);
                let mut acc = 0.0;
                let mut count = 0.0;
                for iy in 2 * oy..y1 {
                    for ix in 2 * ox..x1 {
                        acc += xs[x_base + iy * w + ix];
                        count += 1.0;
                    }
                }
                out[o_base + oy * ow + ox] = acc / count;
            }
        }
    }
    Array4::from_shape_vec((n, c, oh, ow), out).unwrap()
}

pub fn avgpool2_ceil_backward(dy: &Array4<f64>, in_dim: (usize, usize, usize, usize)) -> Array4<f64> {
    let (n, c, h, w) = in_dim;
    let (_, _, oh, ow) = dy.dim();
    let dys = dy.as_slice().expect("standard layout");
    let mut dx = vec![0.0f64; n * c * h * w];
    for plane in 0..n * c {
        let o_base = plane * oh * ow;
        let x_base = plane * h * w;
        for oy in 0..oh {
            let y1 = (2 * oy + 2).min(h);
            for ox in 0..ow {
                let x1 = (2 * ox + 2).min(w);
                let count = ((y1 - 2 * oy) * (x1 - 2 * ox)) as f64;
                let g = dys[o_base + oy * ow + ox] / count;
                for iy in 2 * oy..y1 {
                    for ix in 2 * ox..x1 {
                        dx[x_base + iy * w + ix] += g;
                    }
                }
            }
        }
    }
    Array4::from_shape_vec(in_dim, dx).unwrap()
}

/// Spatial mean per (sample, channel).
pub fn global_avgpool_forward(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let area = (h * w) as f64;
    let xs = x.as_slice().expect("standard layout");
    let mut out = vec![0.0f64; n * c];
    for plane in 0..n * c {
        out[plane] = xs[plane * h * w..(plane + 1) * h * w].iter().sum::<f64>() / area;
    }
    Array2::from_shape_vec((n, c), out).unwrap()
}

pub fn global_avgpool_backward(dy: &Array2<f64>, in_dim: (usize, usize, usize, usize)) -> Array4<f64> {
    let (n, c, h, w) = in_dim;
    let area = (h * w) as f64;
    let mut dx = vec![0.0f64; n * c * h * w];
    for plane in 0..n * c {
        let g = dy.as_slice().unwrap()[plane] / area;
        dx[plane * h * w..(plane + 1) * h * w].fill(g);
    }
    Array4::from_shape_vec(in_dim, dx).unwrap()
}

/// Concatenates feature maps along the channel axis.
pub fn concat_channels(parts: &[&Array4<f64>]) -> Array4<f64> {
    let (n, _, h, w) = parts[0].dim();
    let c_total: usize = parts.iter().map(|p| p.dim().1).sum();
    let mut out = Array4::zeros((n, c_total, h, w));
    let mut offset = 0;
    for part in parts {
        let c = part.dim().1;
        out.slice_mut(ndarray::s![.., offset..offset + c, .., ..])
            .assign(part);
        offset += c;
    }
    out
}

/// Splits a channel-gradient back into the concatenated parts' shapes.
pub fn split_channels(dy: &Array4<f64>, channel_counts: &[usize]) -> Vec<Array4<f64>> {
    let mut out = Vec::with_capacity(channel_counts.len());
    let mut offset = 0;
    for &c in channel_counts {
        out.push(dy.slice(ndarray::s![.., offset..offset + c, .., ..]).to_owned());
        offset += c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn conv_identity_kernel() {
        // 1x1 kernel with weight 1 reproduces the input
        let x = Array4::from_shape_fn((1, 1, 3, 3), |(_, _, y, x)| (y * 3 + x) as f64);
        let w = Array4::from_elem((1, 1, 1, 1), 1.0);
        let y = conv2d_forward(&x, &w, None, 1, 0);
        assert_eq!(y, x);
    }

    #[test]
    fn conv_known_3x3_sum() {
        // all-ones 3x3 kernel, pad 1: output at center = sum of neighbourhood
        let x = Array4::from_shape_fn((1, 1, 3, 3), |(_, _, y, x)| (y * 3 + x) as f64);
        let w = Array4::from_elem((1, 1, 3, 3), 1.0);
        let y = conv2d_forward(&x, &w, None, 1, 1);
        assert_eq!(y[[0, 0, 1, 1]], 36.0); // 0+..+8
        assert_eq!(y[[0, 0, 0, 0]], 0.0 + 1.0 + 3.0 + 4.0);
    }

    #[test]
    fn conv_stride2_shape() {
        let x = Array4::zeros((2, 3, 8, 8));
        let w = Array4::zeros((5, 3, 4, 4));
        let y = conv2d_forward(&x, &w, None, 2, 1);
        assert_eq!(y.dim(), (2, 5, 4, 4));
    }

    #[test]
    fn backward_input_is_adjoint_of_forward() {
        // <conv(x), dy> == <x, conv_bwd_input(dy)> for random-ish tensors
        let x = Array4::from_shape_fn((1, 2, 5, 5), |(_, c, y, x)| ((c * 25 + y * 5 + x) % 7) as f64 - 3.0);
        let w = Array4::from_shape_fn((3, 2, 3, 3), |(o, i, ky, kx)| ((o + i + ky + kx) % 5) as f64 - 2.0);
        let y = conv2d_forward(&x, &w, None, 2, 1);
        let dy = Array4::from_shape_fn(y.raw_dim().into_pattern(), |(_, c, yy, xx)| {
            ((c * 9 + yy * 3 + xx) % 4) as f64 - 1.5
        });
        let dx = conv2d_backward_input(&dy, &w, 2, 1, 5, 5);
        let lhs: f64 = y.iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn maxpool_tracks_argmax() {
        let x = Array4::from_shape_vec(
            (1, 1, 2, 2),
            vec![1.0, 5.0, 3.0, 2.0],
        )
        .unwrap();
        let (y, argmax) = maxpool2d_forward(&x, 2, 2, 0);
        assert_eq!(y[[0, 0, 0, 0]], 5.0);
        assert_eq!(argmax[0], 1);
        let dy = Array4::from_elem((1, 1, 1, 1), 2.0);
        let dx = maxpool2d_backward(&dy, &argmax, (1, 1, 2, 2));
        let expected = Array4::from_shape_vec((1, 1, 2, 2), vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(dx, expected);
    }

    #[test]
    fn avgpool_ceil_handles_odd_and_unit_sizes() {
        let x = Array4::from_shape_fn((1, 1, 3, 3), |(_, _, y, x)| (y * 3 + x) as f64);
        let y = avgpool2_ceil_forward(&x);
        assert_eq!(y.dim(), (1, 1, 2, 2));
        assert_eq!(y[[0, 0, 0, 0]], (0.0 + 1.0 + 3.0 + 4.0) / 4.0);
        assert_eq!(y[[0, 0, 0, 1]], (2.0 + 5.0) / 2.0);
        assert_eq!(y[[0, 0, 1, 1]], 8.0);
        let one = Array4::from_elem((1, 1, 1, 1), 4.2);
        assert_eq!(avgpool2_ceil_forward(&one)[[0, 0, 0, 0]], 4.2);
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Array4::from_elem((1, 2, 2, 2), 1.0);
        let b = Array4::from_elem((1, 3, 2, 2), 2.0);
        let cat = concat_channels(&[&a, &b]);
        assert_eq!(cat.dim(), (1, 5, 2, 2));
        let parts = split_channels(&cat, &[2, 3]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
