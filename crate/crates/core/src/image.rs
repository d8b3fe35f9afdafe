//! Shared raster and geometry primitives: interleaved RGB images,
//! per-pixel label maps, float rectangles, and the resampling kernels the
//! rest of the pipeline builds on.

use crate::error::{Error, Result};

/// 8-bit RGB image, interleaved, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            rgb: vec![0; width * height * 3],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.rgb[i] = c[0];
        self.rgb[i + 1] = c[1];
        self.rgb[i + 2] = c[2];
    }
}

/// Per-pixel label indices, 0 = background.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Self {
        LabelMap {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.values[y * self.width + x] = v;
    }

    pub fn max_label(&self) -> u8 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn check_labels(&self, k: usize) -> Result<()> {
        if let Some(&bad) = self.values.iter().find(|&&v| v as usize > k) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                k,
            });
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in pixel coordinates; top-left origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Scales width and height by `factor` about the rectangle center.
    pub fn enlarge(&self, factor: f64) -> Rect {
        let cx = self.x + self.w / 2.0;
        let cy = self.y + self.h / 2.0;
        Rect {
            x: cx - self.w * factor / 2.0,
            y: cy - self.h * factor / 2.0,
            w: self.w * factor,
            h: self.h * factor,
        }
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        Rect {
            x: x0,
            y: y0,
            w: (x1 - x0).max(0.0),
            h: (y1 - y0).max(0.0),
        }
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersect(other).area();
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clips to the frame `[0,w) x [0,h)` and rounds to whole pixels.
    /// Returns None when nothing remains.
    pub fn clip_to_frame(&self, fw: usize, fh: usize) -> Option<(usize, usize, usize, usize)> {
        let x0 = self.x.max(0.0).round() as isize;
        let y0 = self.y.max(0.0).round() as isize;
        let x1 = ((self.x + self.w).min(fw as f64)).round() as isize;
        let y1 = ((self.y + self.h).min(fh as f64)).round() as isize;
        if x1 <= x0 || y1 <= y0 || x0 >= fw as isize || y0 >= fh as isize {
            return None;
        }
        Some((
            x0 as usize,
            y0 as usize,
            (x1 - x0) as usize,
            (y1 - y0) as usize,
        ))
    }

    /// Translates the rectangle so it lies inside the frame where it fits;
    /// oversized rectangles are pinned to the origin edge.
    pub fn clamp_into(&self, fw: usize, fh: usize) -> Rect {
        let x = if self.w >= fw as f64 {
            0.0
        } else {
            self.x.clamp(0.0, fw as f64 - self.w)
        };
        let y = if self.h >= fh as f64 {
            0.0
        } else {
            self.y.clamp(0.0, fh as f64 - self.h)
        };
        Rect {
            x,
            y,
            w: self.w.min(fw as f64),
            h: self.h.min(fh as f64),
        }
    }
}

/// Source coordinate of destination pixel `d` under the half-pixel-center
/// convention used by every resampler in this crate.
#[inline]
fn src_coord(d: usize, scale: f64) -> f64 {
    (d as f64 + 0.5) * scale - 0.5
}

/// Bilinear resize of a scalar grid. Constant grids stay exactly constant
/// because the four tap weights always sum to one.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh);
    assert!(sw > 0 && sh > 0 && dw > 0 && dh > 0);
    let mut out = vec![0.0f64; dw * dh];
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    for dy in 0..dh {
        let fy = src_coord(dy, sy);
        let y0 = fy.floor() as isize;
        let ty = fy - y0 as f64;
        let y0c = y0.clamp(0, sh as isize - 1) as usize;
        let y1c = (y0 + 1).clamp(0, sh as isize - 1) as usize;
        for dx in 0..dw {
            let fx = src_coord(dx, sx);
            let x0 = fx.floor() as isize;
            let tx = fx - x0 as f64;
            let x0c = x0.clamp(0, sw as isize - 1) as usize;
            let x1c = (x0 + 1).clamp(0, sw as isize - 1) as usize;
            let v00 = src[y0c * sw + x0c];
            let v01 = src[y0c * sw + x1c];
            let v10 = src[y1c * sw + x0c];
            let v11 = src[y1c * sw + x1c];
            let top = v00 * (1.0 - tx) + v01 * tx;
            let bot = v10 * (1.0 - tx) + v11 * tx;
            out[dy * dw + dx] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

pub fn resize_bilinear_rgb(img: &Image, dw: usize, dh: usize) -> Image {
    let mut out = Image::new(dw, dh);
    let n = img.width * img.height;
    let mut plane = vec![0.0f64; n];
    for ch in 0..3 {
        for i in 0..n {
            plane[i] = img.rgb[i * 3 + ch] as f64;
        }
        let resized = resize_bilinear(&plane, img.width, img.height, dw, dh);
        for (i, v) in resized.iter().enumerate() {
            out.rgb[i * 3 + ch] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Nearest-neighbor resize for label maps; never invents new labels.
pub fn resize_nearest_labels(map: &LabelMap, dw: usize, dh: usize) -> LabelMap {
    let mut out = LabelMap::new(dw, dh);
    let sx = map.width as f64 / dw as f64;
    let sy = map.height as f64 / dh as f64;
    for dy in 0..dh {
        let syi = (src_coord(dy, sy).round().max(0.0) as usize).min(map.height - 1);
        for dx in 0..dw {
            let sxi = (src_coord(dx, sx).round().max(0.0) as usize).min(map.width - 1);
            out.set(dx, dy, map.get(sxi, syi));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_resizes_to_constant() {
        let src = vec![1.0; 9];
        let out = resize_bilinear(&src, 3, 3, 7, 5);
        assert!(out.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn checkerboard_upscale_matches_hand_bilinear() {
        // 2x2 checkerboard [[1,0],[0,1]] doubled to 4x4. Axis weights at
        // destinations 0..3 are (1,0), (.75,.25), (.25,.75), (0,1) under
        // the half-pixel-center convention; out = wy0*wx0 + wy1*wx1.
        let src = vec![1.0, 0.0, 0.0, 1.0];
        let out = resize_bilinear(&src, 2, 2, 4, 4);
        #[rustfmt::skip]
        let want = [
            1.0,   0.75,  0.25,  0.0,
            0.75,  0.625, 0.375, 0.25,
            0.25,  0.375, 0.625, 0.75,
            0.0,   0.25,  0.75,  1.0,
        ];
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{out:?}");
        }
    }

    #[test]
    fn iou_of_disjoint_boxes_is_zero() {
        let a = Rect::new(0.0, 0.0, 10.0, 10.0);
        let b = Rect::new(20.0, 20.0, 10.0, 10.0);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn iou_of_identical_boxes_is_one() {
        let a = Rect::new(3.0, 4.0, 10.0, 20.0);
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_into_keeps_box_inside() {
        let r = Rect::new(-5.0, 90.0, 20.0, 20.0).clamp_into(100, 100);
        assert_eq!(r, Rect::new(0.0, 80.0, 20.0, 20.0));
    }
}
