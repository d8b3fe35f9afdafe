//! Per-layer forward and backward kernels. All loops are plain and
//! deterministic; out-of-bounds taps of a padded convolution read zero.

use crate::tensor::Tensor;

#[allow(clippy::too_many_arguments)]
pub(super) fn conv_forward(
    input: &Tensor,
    w: &[f64],
    b: &[f64],
    filters: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out: &mut Tensor,
) {
    let (cin, hin, win) = input.dims();
    let (_, hout, wout) = out.dims();
    let x = input.data();
    let o = out.data_mut();
    for f in 0..filters {
        let obase = f * hout * wout;
        for oy in 0..hout {
            let iy0 = (oy * stride) as isize - pad as isize;
            for ox in 0..wout {
                let ix0 = (ox * stride) as isize - pad as isize;
                let mut acc = b[f];
                for c in 0..cin {
                    let wbase = (f * cin + c) * kernel * kernel;
                    for ky in 0..kernel {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= hin as isize {
                            continue;
                        }
                        let irow = (c * hin + iy as usize) * win;
                        let wrow = wbase + ky * kernel;
                        for kx in 0..kernel {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= win as isize {
                                continue;
                            }
                            acc += x[irow + ix as usize] * w[wrow + kx];
                        }
                    }
                }
                o[obase + oy * wout + ox] = acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn conv_backward(
    input: &Tensor,
    w: &[f64],
    filters: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    gout: &Tensor,
    gw: &mut [f64],
    gb: &mut [f64],
    gin: &mut Tensor,
) {
    let (cin, hin, win) = input.dims();
    let (_, hout, wout) = gout.dims();
    let x = input.data();
    let g = gout.data();
    let gi = gin.data_mut();
    for f in 0..filters {
        let obase = f * hout * wout;
        for oy in 0..hout {
            let iy0 = (oy * stride) as isize - pad as isize;
            for ox in 0..wout {
                let ix0 = (ox * stride) as isize - pad as isize;
                let go = g[obase + oy * wout + ox];
                gb[f] += go;
                for c in 0..cin {
                    let wbase = (f * cin + c) * kernel * kernel;
                    for ky in 0..kernel {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= hin as isize {
                            continue;
                        }
                        let irow = (c * hin + iy as usize) * win;
                        let wrow = wbase + ky * kernel;
                        for kx in 0..kernel {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= win as isize {
                                continue;
                            }
                            gw[wrow + kx] += go * x[irow + ix as usize];
                            gi[irow + ix as usize] += go * w[wrow + kx];
                        }
                    }
                }
            }
        }
    }
}

/// Returns the active mask (pre-activation > 0) for the backward pass.
pub(super) fn relu_forward(input: &Tensor, out: &mut Tensor) -> Vec<bool> {
    let x = input.data();
    let o = out.data_mut();
    let mut active = vec![false; x.len()];
    for i in 0..x.len() {
        if x[i] > 0.0 {
            o[i] = x[i];
            active[i] = true;
        } else {
            o[i] = 0.0;
        }
    }
    active
}

pub(super) fn relu_backward(active: &[bool], gout: &Tensor, gin: &mut Tensor) {
    let g = gout.data();
    let gi = gin.data_mut();
    for i in 0..g.len() {
        gi[i] = if active[i] { g[i] } else { 0.0 };
    }
}

/// Returns the flat input index of each window maximum. Ties keep the
/// first position in (dy, dx) scan order, so routing is deterministic.
pub(super) fn maxpool_forward(
    input: &Tensor,
    window: usize,
    stride: usize,
    out: &mut Tensor,
) -> Vec<usize> {
    let (cin, hin, win) = input.dims();
    let (_, hout, wout) = out.dims();
    let x = input.data();
    let o = out.data_mut();
    let mut argmax = vec![0usize; cin * hout * wout];
    for c in 0..cin {
        for oy in 0..hout {
            for ox in 0..wout {
                let iy0 = oy * stride;
                let ix0 = ox * stride;
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for dy in 0..window {
                    let irow = (c * hin + iy0 + dy) * win + ix0;
                    for dx in 0..window {
                        let v = x[irow + dx];
                        if v > best {
                            best = v;
                            best_idx = irow + dx;
                        }
                    }
                }
                let oi = (c * hout + oy) * wout + ox;
                o[oi] = best;
                argmax[oi] = best_idx;
            }
        }
    }
    argmax
}

pub(super) fn maxpool_backward(argmax: &[usize], gout: &Tensor, gin: &mut Tensor) {
    let g = gout.data();
    let gi = gin.data_mut();
    for (oi, &ii) in argmax.iter().enumerate() {
        gi[ii] += g[oi];
    }
}

/// Across-channel normalization. Returns the per-element scale base
/// `s_c = 1 + (alpha/span) * sum_{c' in window} x_{c'}^2` for backward.
pub(super) fn contrast_norm_forward(
    input: &Tensor,
    span: usize,
    alpha: f64,
    beta: f64,
    out: &mut Tensor,
) -> Vec<f64> {
    let (cin, h, w) = input.dims();
    let x = input.data();
    let o = out.data_mut();
    let mut scale = vec![0.0f64; x.len()];
    let lo = span / 2;
    let hi = span - 1 - lo;
    let plane = h * w;
    for p in 0..plane {
        for c in 0..cin {
            let c0 = c.saturating_sub(lo);
            let c1 = (c + hi).min(cin - 1);
            let mut sum = 0.0;
            for cc in c0..=c1 {
                let v = x[cc * plane + p];
                sum += v * v;
            }
            let s = 1.0 + alpha / span as f64 * sum;
            let i = c * plane + p;
            scale[i] = s;
            o[i] = x[i] * s.powf(-beta);
        }
    }
    scale
}

pub(super) fn contrast_norm_backward(
    input: &Tensor,
    scale: &[f64],
    span: usize,
    alpha: f64,
    beta: f64,
    gout: &Tensor,
    gin: &mut Tensor,
) {
    let (cin, h, w) = input.dims();
    let x = input.data();
    let g = gout.data();
    let gi = gin.data_mut();
    let lo = span / 2;
    let hi = span - 1 - lo;
    let plane = h * w;
    // d out_c / d x_j has a direct term at c == j and a cross term for
    // every c whose window contains j (the reflected window of j).
    for p in 0..plane {
        for j in 0..cin {
            let i = j * plane + p;
            let mut grad = g[i] * scale[i].powf(-beta);
            let c0 = j.saturating_sub(hi);
            let c1 = (j + lo).min(cin - 1);
            let mut cross = 0.0;
            for c in c0..=c1 {
                let ic = c * plane + p;
                cross += g[ic] * x[ic] * scale[ic].powf(-beta - 1.0);
            }
            grad -= 2.0 * alpha * beta / span as f64 * x[i] * cross;
            gi[i] = grad;
        }
    }
}

pub(super) fn fc_forward(input: &Tensor, w: &[f64], b: &[f64], out: &mut Tensor) {
    let x = input.data();
    let o = out.data_mut();
    let n_in = x.len();
    for (oi, ov) in o.iter_mut().enumerate() {
        let row = &w[oi * n_in..(oi + 1) * n_in];
        let mut acc = b[oi];
        for i in 0..n_in {
            acc += row[i] * x[i];
        }
        *ov = acc;
    }
}

pub(super) fn fc_backward(
    input: &Tensor,
    w: &[f64],
    gout: &Tensor,
    gw: &mut [f64],
    gb: &mut [f64],
    gin: &mut Tensor,
) {
    let x = input.data();
    let g = gout.data();
    let gi = gin.data_mut();
    let n_in = x.len();
    for (oi, &go) in g.iter().enumerate() {
        gb[oi] += go;
        let wrow = &w[oi * n_in..(oi + 1) * n_in];
        let gwrow = &mut gw[oi * n_in..(oi + 1) * n_in];
        for i in 0..n_in {
            gwrow[i] += go * x[i];
            gi[i] += go * wrow[i];
        }
    }
}
