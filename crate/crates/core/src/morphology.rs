//! Binary erosion and dilation with a square structuring element,
//! implemented as separable sliding-window min/max passes.
//!
//! Both operations scan the same window: offsets `[-floor(s/2), s-1-floor(s/2)]`
//! along each axis. Out-of-frame pixels count as absent (false) for
//! erosion and as present (true) for dilation, which makes the two exact
//! duals: `erode(m) == !dilate(!m)` including all border effects.

/// Sliding window bounds for structuring element size `s`.
#[inline]
pub fn window_offsets(size: usize) -> (isize, isize) {
    let lo = (size / 2) as isize;
    (-lo, size as isize - 1 - lo)
}

fn sliding_1d(src: &[bool], out: &mut [bool], size: usize, oob: bool, take_min: bool) {
    let n = src.len() as isize;
    let (lo, hi) = window_offsets(size);
    for i in 0..n {
        // Windows are tiny (10 px); a direct scan beats deque bookkeeping
        // at these sizes and is trivially correct.
        let mut acc = if take_min { true } else { false };
        for d in lo..=hi {
            let j = i + d;
            let v = if j < 0 || j >= n { oob } else { src[j as usize] };
            if take_min {
                acc &= v;
                if !acc {
                    break;
                }
            } else {
                acc |= v;
                if acc {
                    break;
                }
            }
        }
        out[i as usize] = acc;
    }
}

fn separable(mask: &[bool], width: usize, height: usize, size: usize, oob: bool, take_min: bool) -> Vec<bool> {
    assert_eq!(mask.len(), width * height);
    let mut rows = vec![false; width * height];
    let mut row_out = vec![false; width];
    for y in 0..height {
        sliding_1d(&mask[y * width..(y + 1) * width], &mut row_out, size, oob, take_min);
        rows[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    let mut out = vec![false; width * height];
    let mut col_in = vec![false; height];
    let mut col_out = vec![false; height];
    for x in 0..width {
        for y in 0..height {
            col_in[y] = rows[y * width + x];
        }
        sliding_1d(&col_in, &mut col_out, size, oob, take_min);
        for y in 0..height {
            out[y * width + x] = col_out[y];
        }
    }
    out
}

/// True where the whole `size x size` window is inside the mask;
/// out-of-frame counts as background.
pub fn erode(mask: &[bool], width: usize, height: usize, size: usize) -> Vec<bool> {
    separable(mask, width, height, size, false, true)
}

/// True where any pixel of the `size x size` window is set;
/// out-of-frame counts as set, making this the exact dual of `erode`.
pub fn dilate(mask: &[bool], width: usize, height: usize, size: usize) -> Vec<bool> {
    separable(mask, width, height, size, true, false)
}
