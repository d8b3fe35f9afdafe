//! Procedural articulated-figure generator: the desk-scale stand-in for
//! a real annotated corpus. Figures are stacks of ellipses and convex
//! quads drawn in painter order with randomized position, scale, lean,
//! limb angles and colors; the label map is emitted pixel-exactly
//! alongside the rendered image. Everything is deterministic per seed.

use super::{hsv_to_rgb, foreground_bbox, Sample};
use crate::image::{Image, LabelMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const FACE: usize = 1;
const HAT: usize = 3;
const HAIR: usize = 5;
const UPPER: usize = 6;
const LEFT_ARM: usize = 7;
const RIGHT_ARM: usize = 8;
const PANTS: usize = 10;
const LEFT_LEG: usize = 11;
const RIGHT_LEG: usize = 12;
const SKIRT: usize = 13;
const LEFT_SHOE: usize = 14;
const RIGHT_SHOE: usize = 15;
const BAG: usize = 16;

const P_HAT: f64 = 0.3;
const P_PANTS: f64 = 0.55;
const P_SHOE: f64 = 0.95;
const P_BAG: f64 = 0.35;

/// Configured marginal probability of each label appearing in a sample.
/// Pants and skirt are complementary; all other draws are independent.
pub fn occurrence_probabilities() -> Vec<(usize, f64)> {
    vec![
        (FACE, 1.0),
        (HAT, P_HAT),
        (HAIR, 1.0),
        (UPPER, 1.0),
        (LEFT_ARM, 1.0),
        (RIGHT_ARM, 1.0),
        (PANTS, P_PANTS),
        (LEFT_LEG, 1.0),
        (RIGHT_LEG, 1.0),
        (SKIRT, 1.0 - P_PANTS),
        (LEFT_SHOE, P_SHOE),
        (RIGHT_SHOE, P_SHOE),
        (BAG, P_BAG),
    ]
}

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 128,
            height: 128,
        }
    }
}

fn fill_ellipse(map: &mut LabelMap, label: usize, cx: f64, cy: f64, rx: f64, ry: f64) {
    let x0 = ((cx - rx).floor().max(0.0)) as usize;
    let x1 = ((cx + rx).ceil().min(map.width as f64 - 1.0)) as usize;
    let y0 = ((cy - ry).floor().max(0.0)) as usize;
    let y1 = ((cy + ry).ceil().min(map.height as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                map.set(x, y, label as u8);
            }
        }
    }
}

fn fill_quad(map: &mut LabelMap, label: usize, corners: [(f64, f64); 4]) {
    let xs: Vec<f64> = corners.iter().map(|c| c.0).collect();
    let ys: Vec<f64> = corners.iter().map(|c| c.1).collect();
    let x0 = xs.iter().fold(f64::MAX, |a, &b| a.min(b)).floor().max(0.0) as usize;
    let x1 = (xs.iter().fold(f64::MIN, |a, &b| a.max(b)).ceil()).min(map.width as f64 - 1.0) as usize;
    let y0 = ys.iter().fold(f64::MAX, |a, &b| a.min(b)).floor().max(0.0) as usize;
    let y1 = (ys.iter().fold(f64::MIN, |a, &b| a.max(b)).ceil()).min(map.height as f64 - 1.0) as usize;
    if x0 > x1 || y0 > y1 {
        return;
    }
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut pos = 0;
            let mut neg = 0;
            for i in 0..4 {
                let (ax, ay) = corners[i];
                let (bx, by) = corners[(i + 1) % 4];
                let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
                if cross >= 0.0 {
                    pos += 1;
                }
                if cross <= 0.0 {
                    neg += 1;
                }
            }
            if pos == 4 || neg == 4 {
                map.set(x, y, label as u8);
            }
        }
    }
}

/// Rectangle from an anchor point along a direction: used for limbs.
fn limb(px: f64, py: f64, dx: f64, dy: f64, len: f64, width: f64) -> [(f64, f64); 4] {
    let (nx, ny) = (-dy, dx); // unit normal
    let hw = width / 2.0;
    [
        (px - nx * hw, py - ny * hw),
        (px + nx * hw, py + ny * hw),
        (px + dx * len + nx * hw, py + dy * len + ny * hw),
        (px + dx * len - nx * hw, py + dy * len - ny * hw),
    ]
}

struct Figure {
    labels: LabelMap,
    present: Vec<usize>,
}

fn draw_figure(rng: &mut ChaCha20Rng, w: usize, h: usize) -> Figure {
    let mut map = LabelMap::new(w, h);
    let hf = rng.random_range(0.55..0.88) * h as f64;
    let cx = rng.random_range(0.40..0.60) * w as f64;
    let max_top = (h as f64 - hf - 2.0).max(1.0);
    let top = rng.random_range(0.02 * h as f64..max_top.max(0.021 * h as f64));
    let lean = rng.random_range(-0.05..0.05f64);

    let mut present = Vec::new();
    let head_cx = cx + lean * 0.3 * hf;
    let head_cy = top + 0.10 * hf;

    // hair first; the face then covers its lower center, leaving a crown
    fill_ellipse(&mut map, HAIR, head_cx, head_cy - 0.015 * hf, 0.105 * hf, 0.095 * hf);
    present.push(HAIR);
    fill_ellipse(&mut map, FACE, head_cx, head_cy + 0.012 * hf, 0.065 * hf, 0.075 * hf);
    present.push(FACE);
    if rng.random_bool(P_HAT) {
        fill_ellipse(&mut map, HAT, head_cx, head_cy - 0.095 * hf, 0.12 * hf, 0.045 * hf);
        present.push(HAT);
    }

    let shoulders_y = top + 0.21 * hf;
    let hips_y = top + 0.52 * hf;
    let shoulder_w = 0.26 * hf;
    let hip_w = 0.20 * hf;
    let shear = |y: f64| lean * (y - top - 0.5 * hf);
    fill_quad(
        &mut map,
        UPPER,
        [
            (cx - shoulder_w / 2.0 + shear(shoulders_y), shoulders_y),
            (cx + shoulder_w / 2.0 + shear(shoulders_y), shoulders_y),
            (cx + hip_w / 2.0 + shear(hips_y), hips_y),
            (cx - hip_w / 2.0 + shear(hips_y), hips_y),
        ],
    );
    present.push(UPPER);

    // arms, drawn over the torso edges
    for (side, label) in [(-1.0f64, LEFT_ARM), (1.0, RIGHT_ARM)] {
        let phi = rng.random_range(0.08..0.45f64);
        let (dx, dy) = (side * phi.sin(), phi.cos());
        let sx = cx + side * shoulder_w / 2.0 + shear(shoulders_y);
        let sy = shoulders_y + 0.02 * hf;
        fill_quad(
            &mut map,
            label,
            limb(sx, sy, dx, dy, 0.30 * hf, 0.050 * hf),
        );
        present.push(label);
    }

    // legs; lower garment overwrites their upper parts afterwards
    let leg_len = top + hf - hips_y;
    let mut leg_ends = Vec::new();
    for (side, label) in [(-1.0f64, LEFT_LEG), (1.0, RIGHT_LEG)] {
        let psi = rng.random_range(0.0..0.07f64);
        let (dx, dy) = (side * psi.sin(), psi.cos());
        let px = cx + side * 0.055 * hf + shear(hips_y);
        fill_quad(
            &mut map,
            label,
            limb(px, hips_y, dx, dy, leg_len - 0.03 * hf, 0.075 * hf),
        );
        leg_ends.push((px + dx * (leg_len - 0.03 * hf), hips_y + dy * (leg_len - 0.03 * hf)));
        present.push(label);
    }

    if rng.random_bool(P_PANTS) {
        // hip block plus pant legs over the top 70% of each leg
        fill_quad(
            &mut map,
            PANTS,
            [
                (cx - hip_w / 2.0 + shear(hips_y - 0.02 * hf), hips_y - 0.02 * hf),
                (cx + hip_w / 2.0 + shear(hips_y - 0.02 * hf), hips_y - 0.02 * hf),
                (cx + hip_w / 2.0 + shear(hips_y + 0.08 * hf), hips_y + 0.08 * hf),
                (cx - hip_w / 2.0 + shear(hips_y + 0.08 * hf), hips_y + 0.08 * hf),
            ],
        );
        for (side, _) in [(-1.0f64, LEFT_LEG), (1.0, RIGHT_LEG)] {
            let px = cx + side * 0.055 * hf + shear(hips_y);
            fill_quad(
                &mut map,
                PANTS,
                limb(px, hips_y, side * 0.01, 1.0, 0.70 * leg_len, 0.095 * hf),
            );
        }
        present.push(PANTS);
    } else {
        fill_quad(
            &mut map,
            SKIRT,
            [
                (cx - hip_w * 0.55 + shear(hips_y - 0.02 * hf), hips_y - 0.02 * hf),
                (cx + hip_w * 0.55 + shear(hips_y - 0.02 * hf), hips_y - 0.02 * hf),
                (cx + 0.17 * hf + shear(hips_y + 0.24 * hf), hips_y + 0.24 * hf),
                (cx - 0.17 * hf + shear(hips_y + 0.24 * hf), hips_y + 0.24 * hf),
            ],
        );
        present.push(SKIRT);
    }

    for ((end, side), label) in leg_ends
        .iter()
        .zip([-1.0f64, 1.0])
        .zip([LEFT_SHOE, RIGHT_SHOE])
    {
        if rng.random_bool(P_SHOE) {
            fill_ellipse(
                &mut map,
                label,
                end.0 + side * 0.012 * hf,
                end.1 + 0.012 * hf,
                0.055 * hf,
                0.030 * hf,
            );
            present.push(label);
        }
    }

    if rng.random_bool(P_BAG) {
        let side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let bx = cx + side * 0.20 * hf;
        let by = hips_y - 0.05 * hf;
        fill_quad(
            &mut map,
            BAG,
            [
                (bx - 0.055 * hf, by - 0.075 * hf),
                (bx + 0.055 * hf, by - 0.075 * hf),
                (bx + 0.055 * hf, by + 0.075 * hf),
                (bx - 0.055 * hf, by + 0.075 * hf),
            ],
        );
        present.push(BAG);
    }

    Figure {
        labels: map,
        present,
    }
}

fn render(rng: &mut ChaCha20Rng, labels: &LabelMap, present: &[usize]) -> Image {
    let (w, h) = (labels.width, labels.height);
    let bg_hue = rng.random_range(0.0..1.0f64);
    let bg_sat = rng.random_range(0.05..0.25f64);
    let bg_val = rng.random_range(0.35..0.80f64);
    let mut colors = vec![[0u8; 3]; 18];
    for &label in present {
        // keep foreground hues away from the background hue so the seeded
        // color model has signal to work with
        let mut hue = rng.random_range(0.0..1.0f64);
        for _ in 0..10 {
            let d = (hue - bg_hue).abs();
            if d.min(1.0 - d) > 0.06 {
                break;
            }
            hue = rng.random_range(0.0..1.0);
        }
        colors[label] = hsv_to_rgb(
            hue,
            rng.random_range(0.55..0.95),
            rng.random_range(0.45..0.95),
        );
    }
    let mut img = Image::new(w, h);
    for y in 0..h {
        let grad = 0.12 * (y as f64 / h as f64 - 0.5);
        let bg = hsv_to_rgb(bg_hue, bg_sat, (bg_val + grad).clamp(0.0, 1.0));
        for x in 0..w {
            let label = labels.get(x, y) as usize;
            let base = if label == 0 { bg } else { colors[label] };
            let mut px = [0u8; 3];
            for c in 0..3 {
                let noise = rng.random_range(-4.0..4.0f64);
                px[c] = (base[c] as f64 + noise).round().clamp(0.0, 255.0) as u8;
            }
            img.set_pixel(x, y, px);
        }
    }
    img
}

/// Generates `n` figure samples with pixel-exact label maps and tight
/// person boxes. Identical (seed, n, dims) reproduce identical samples.
pub fn synth_generate(seed: u64, n: usize, cfg: &SynthConfig) -> Vec<Sample> {
    let mut master = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let sample_seed = master.random::<u64>();
        let mut rng = ChaCha20Rng::seed_from_u64(sample_seed);
        let fig = draw_figure(&mut rng, cfg.width, cfg.height);
        let image = render(&mut rng, &fig.labels, &fig.present);
        let person_box = foreground_bbox(&fig.labels);
        samples.push(Sample {
            image,
            labels: fig.labels,
            person_box,
        });
    }
    samples
}
