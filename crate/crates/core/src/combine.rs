//! Fusion of the two structure outputs into per-label confidence maps:
//! visibility-gated morphing of reconstructed masks into image
//! coordinates, seed generation by erosion/dilation of the thresholded
//! foreground, and a seeded color-histogram background model.

use crate::dict::NormMask;
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, Image};
use crate::morphology::{dilate, erode};
use crate::regression::ShapeParams;

/// Dense per-label probability field over the parsed image, values in
/// [0,1]. Label 0 is the background map.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    pub label: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn zero(label: usize, width: usize, height: usize) -> Self {
        ConfidenceMap {
            label,
            width,
            height,
            values: vec![0.0; width * height],
        }
    }
}

/// High-confidence foreground and background pixels; always disjoint.
#[derive(Clone, Debug)]
pub struct SeedSet {
    pub width: usize,
    pub height: usize,
    pub fg: Vec<bool>,
    pub bg: Vec<bool>,
}

impl SeedSet {
    pub fn fg_count(&self) -> usize {
        self.fg.iter().filter(|&&v| v).count()
    }

    pub fn bg_count(&self) -> usize {
        self.bg.iter().filter(|&&v| v).count()
    }
}

/// Places a normalized mask into image coordinates: gated off below a 0.5
/// visibility, bilinearly resized to the predicted box, clipped to the
/// frame. Returns the map and a degenerate-box diagnostic, raised when a
/// visible label arrives with a non-positive width or height.
pub fn morph_mask(
    mask: &NormMask,
    shape: &ShapeParams,
    width: usize,
    height: usize,
) -> (ConfidenceMap, bool) {
    let map = ConfidenceMap::zero(shape.label, width, height);
    if shape.v < 0.5 {
        return (map, false);
    }
    if shape.w <= 0.0 || shape.h <= 0.0 {
        return (map, true);
    }
    let bw = (shape.w.round() as usize).max(1);
    let bh = (shape.h.round() as usize).max(1);
    let x0 = shape.x.round() as isize;
    let y0 = shape.y.round() as isize;
    let resized = resize_bilinear(&mask.values, mask.width, mask.height, bw, bh);
    let mut map = map;
    for ry in 0..bh {
        let y = y0 + ry as isize;
        if y < 0 || y >= height as isize {
            continue;
        }
        for rx in 0..bw {
            let x = x0 + rx as isize;
            if x < 0 || x >= width as isize {
                continue;
            }
            map.values[y as usize * width + x as usize] =
                resized[ry * bw + rx].clamp(0.0, 1.0);
        }
    }
    (map, false)
}

/// Pixel-wise maximum over the foreground label maps.
pub fn foreground_confidence(maps: &[ConfidenceMap]) -> Result<ConfidenceMap> {
    let first = maps.first().ok_or(Error::EmptyInput("no confidence maps"))?;
    let (w, h) = (first.width, first.height);
    let mut out = ConfidenceMap::zero(0, w, h);
    for m in maps {
        if (m.width, m.height) != (w, h) {
            return Err(Error::DimMismatch(format!(
                "map {}x{} vs {w}x{h}",
                m.width, m.height
            )));
        }
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            if *v > *o {
                *o = *v;
            }
        }
    }
    Ok(out)
}

/// Seed size used for both the erosion and the dilation.
pub const SEED_FILTER_SIZE: usize = 10;

/// Foreground seeds are the eroded thresholded foreground; background
/// seeds are the dilated inverse minus the foreground mask, which keeps
/// the two sets disjoint by construction.
pub fn generate_seeds(cf: &ConfidenceMap) -> SeedSet {
    let (w, h) = (cf.width, cf.height);
    let fg_mask: Vec<bool> = cf.values.iter().map(|&v| v > 0.5).collect();
    let fg = erode(&fg_mask, w, h, SEED_FILTER_SIZE);
    let inv: Vec<bool> = fg_mask.iter().map(|v| !v).collect();
    let mut bg = dilate(&inv, w, h, SEED_FILTER_SIZE);
    for (b, m) in bg.iter_mut().zip(&fg_mask) {
        *b &= !m;
    }
    SeedSet {
        width: w,
        height: h,
        fg,
        bg,
    }
}

const HIST_BINS: usize = 16;

#[inline]
fn color_bin(rgb: [u8; 3]) -> usize {
    let r = (rgb[0] >> 4) as usize;
    let g = (rgb[1] >> 4) as usize;
    let b = (rgb[2] >> 4) as usize;
    (r * HIST_BINS + g) * HIST_BINS + b
}

/// Background confidence from a seeded color model: joint 16^3-bin RGB
/// histograms over the two seed sets with add-one smoothing, evaluated
/// per pixel as `P_bg / (P_bg + P_fg)`. Degenerate seed sets still yield
/// a defined map: no foreground seeds means everything is background and
/// vice versa.
pub fn background_confidence(image: &Image, seeds: &SeedSet) -> Result<ConfidenceMap> {
    if (image.width, image.height) != (seeds.width, seeds.height) {
        return Err(Error::DimMismatch(format!(
            "image {}x{} vs seeds {}x{}",
            image.width, image.height, seeds.width, seeds.height
        )));
    }
    let (w, h) = (image.width, image.height);
    let mut out = ConfidenceMap::zero(0, w, h);
    let n_fg = seeds.fg_count();
    let n_bg = seeds.bg_count();
    if n_fg == 0 {
        out.values.iter_mut().for_each(|v| *v = 1.0);
        return Ok(out);
    }
    if n_bg == 0 {
        return Ok(out);
    }
    let bins = HIST_BINS * HIST_BINS * HIST_BINS;
    let mut fg_hist = vec![0u64; bins];
    let mut bg_hist = vec![0u64; bins];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let bin = color_bin(image.pixel(x, y));
            if seeds.fg[i] {
                fg_hist[bin] += 1;
            } else if seeds.bg[i] {
                bg_hist[bin] += 1;
            }
        }
    }
    let fg_total = (n_fg + bins) as f64;
    let bg_total = (n_bg + bins) as f64;
    let lut: Vec<f64> = (0..bins)
        .map(|b| {
            let p_fg = (fg_hist[b] + 1) as f64 / fg_total;
            let p_bg = (bg_hist[b] + 1) as f64 / bg_total;
            p_bg / (p_bg + p_fg)
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            out.values[y * w + x] = lut[color_bin(image.pixel(x, y))];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::window_offsets;

    fn flat_mask(width: usize, height: usize, values: Vec<f64>) -> NormMask {
        NormMask {
            width,
            height,
            values,
        }
    }

    fn shape(label: usize, x: f64, y: f64, w: f64, h: f64, v: f64) -> ShapeParams {
        ShapeParams::raw(label, x, y, w, h, v)
    }

    #[test]
    fn low_visibility_gates_to_zero() {
        let mask = flat_mask(4, 4, vec![1.0; 16]);
        let (map, degenerate) = morph_mask(&mask, &shape(1, 2.0, 2.0, 8.0, 8.0, 0.3), 20, 20);
        assert!(!degenerate);
        assert!(map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_ones_mask_fills_exact_rectangle() {
        let mask = flat_mask(4, 4, vec![1.0; 16]);
        let (map, degenerate) =
            morph_mask(&mask, &shape(2, 10.0, 20.0, 50.0, 80.0, 1.0), 200, 200);
        assert!(!degenerate);
        for y in 0..200 {
            for x in 0..200 {
                let inside = (10..60).contains(&x) && (20..100).contains(&y);
                let v = map.values[y * 200 + x];
                assert_eq!(v, if inside { 1.0 } else { 0.0 }, "at {x},{y}");
            }
        }
    }

    #[test]
    fn degenerate_box_flags_and_zeroes() {
        let mask = flat_mask(4, 4, vec![1.0; 16]);
        let (map, degenerate) = morph_mask(&mask, &shape(1, 5.0, 5.0, 0.0, 8.0, 0.9), 20, 20);
        assert!(degenerate);
        assert!(map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_frame_mass_is_discarded_inside_unchanged() {
        let mask = flat_mask(2, 2, vec![0.2, 0.4, 0.6, 0.8]);
        let sp = shape(1, -4.0, 6.0, 10.0, 10.0, 1.0);
        let (map, _) = morph_mask(&mask, &sp, 12, 12);
        // Oracle: place into an unclipped 10x10 canvas, then crop.
        let unclipped = resize_bilinear(&mask.values, 2, 2, 10, 10);
        let mut want = vec![0.0f64; 12 * 12];
        for ry in 0..10usize {
            for rx in 0..10usize {
                let (x, y) = (rx as isize - 4, ry as isize + 6);
                if x >= 0 && x < 12 && y >= 0 && y < 12 {
                    want[y as usize * 12 + x as usize] = unclipped[ry * 10 + rx];
                }
            }
        }
        assert_eq!(map.values, want);
    }

    #[test]
    fn scaling_masks_preserves_argmax() {
        let mask = flat_mask(3, 3, vec![0.1, 0.9, 0.3, 0.5, 1.0, 0.2, 0.6, 0.4, 0.7]);
        let sp = shape(1, 2.0, 2.0, 9.0, 9.0, 1.0);
        let (full, _) = morph_mask(&mask, &sp, 16, 16);
        let t = 0.35;
        let scaled_mask = flat_mask(3, 3, mask.values.iter().map(|v| v * t).collect());
        let (scaled, _) = morph_mask(&scaled_mask, &sp, 16, 16);
        for (a, b) in full.values.iter().zip(&scaled.values) {
            assert!((a * t - b).abs() < 1e-12);
        }
    }

    #[test]
    fn foreground_confidence_is_pixelwise_max() {
        let mut a = ConfidenceMap::zero(1, 3, 2);
        let mut b = ConfidenceMap::zero(2, 3, 2);
        a.values = vec![0.1, 0.9, 0.0, 0.5, 0.2, 0.3];
        b.values = vec![0.4, 0.1, 0.0, 0.6, 0.2, 0.8];
        let cf = foreground_confidence(&[a.clone(), b.clone()]).unwrap();
        // Brute-force per-pixel loop oracle.
        for i in 0..6 {
            assert_eq!(cf.values[i], a.values[i].max(b.values[i]));
        }
        let single = foreground_confidence(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.values, a.values);
        assert!(foreground_confidence(&[]).is_err());
    }

    #[test]
    fn zero_confidence_means_all_background_seeds() {
        let cf = ConfidenceMap::zero(0, 30, 20);
        let seeds = generate_seeds(&cf);
        assert_eq!(seeds.fg_count(), 0);
        assert_eq!(seeds.bg_count(), 30 * 20);
    }

    #[test]
    fn full_confidence_means_no_background_seeds() {
        let mut cf = ConfidenceMap::zero(0, 30, 20);
        cf.values.iter_mut().for_each(|v| *v = 1.0);
        let seeds = generate_seeds(&cf);
        let (lo, hi) = window_offsets(SEED_FILTER_SIZE);
        let (ew, eh) = (
            30 - (hi - lo) as usize,
            20 - (hi - lo) as usize,
        );
        assert_eq!(seeds.fg_count(), ew * eh, "eroded full frame");
        assert_eq!(seeds.bg_count(), 0);
    }

    #[test]
    fn solid_square_erodes_to_inner_square_and_stays_disjoint() {
        let mut cf = ConfidenceMap::zero(0, 100, 100);
        for y in 30..70 {
            for x in 30..70 {
                cf.values[y * 100 + x] = 1.0;
            }
        }
        let seeds = generate_seeds(&cf);
        assert_eq!(seeds.fg_count(), 31 * 31);
        for i in 0..seeds.fg.len() {
            assert!(!(seeds.fg[i] && seeds.bg[i]), "seed sets overlap at {i}");
        }
    }

    #[test]
    fn color_model_separates_red_from_blue() {
        // 100+ seed pixels per side so the smoothed posterior clears 0.99.
        let (w, h) = (30, 20);
        let mut img = Image::new(w, h);
        let mut seeds = SeedSet {
            width: w,
            height: h,
            fg: vec![false; w * h],
            bg: vec![false; w * h],
        };
        for y in 0..h {
            for x in 0..w {
                if y < 8 {
                    img.set_pixel(x, y, [255, 0, 0]);
                    seeds.fg[y * w + x] = true;
                } else if y >= 12 {
                    img.set_pixel(x, y, [0, 0, 255]);
                    seeds.bg[y * w + x] = true;
                } else {
                    img.set_pixel(x, y, [0, 0, 255]);
                }
            }
        }
        let c0 = background_confidence(&img, &seeds).unwrap();
        // A pure-blue query pixel outside both seed sets.
        let probe = c0.values[10 * w + 5];
        assert!(probe > 0.99, "background posterior {probe}");
        let red_probe = c0.values[3 * w + 5];
        assert!(red_probe < 0.01, "foreground pixel got {red_probe}");
    }

    #[test]
    fn identical_seed_distributions_give_half() {
        let (w, h) = (16, 16);
        let mut img = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(x, y, [100, 150, 200]);
            }
        }
        let mut seeds = SeedSet {
            width: w,
            height: h,
            fg: vec![false; w * h],
            bg: vec![false; w * h],
        };
        for i in 0..w * h {
            if i % 2 == 0 {
                seeds.fg[i] = true;
            } else {
                seeds.bg[i] = true;
            }
        }
        let c0 = background_confidence(&img, &seeds).unwrap();
        for &v in &c0.values {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_seed_sets_degenerate_but_defined() {
        let img = Image::new(8, 8);
        let empty = SeedSet {
            width: 8,
            height: 8,
            fg: vec![false; 64],
            bg: vec![false; 64],
        };
        let c0 = background_confidence(&img, &empty).unwrap();
        assert!(c0.values.iter().all(|&v| v == 1.0), "no fg seeds: all bg");
        let mut fg_only = empty.clone();
        fg_only.fg.iter_mut().for_each(|v| *v = true);
        let c0 = background_confidence(&img, &fg_only).unwrap();
        assert!(c0.values.iter().all(|&v| v == 0.0), "no bg seeds: all fg");
    }
}
