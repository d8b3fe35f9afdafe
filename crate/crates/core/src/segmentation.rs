//! Graph-based over-segmentation and the per-segment confidence smoothing
//! that produces the final label map.
//!
//! Over-segmentation follows the classic efficient graph-based scheme:
//! Gaussian pre-smoothing, an 8-connected grid graph weighted by RGB
//! distance, merging in ascending weight order under the
//! `Int(C) + k/|C|` criterion, then a minimum-size merge pass. Runs are
//! deterministic: edges sort by (weight, index) and ids compact in
//! row-major first-visit order.

use crate::combine::ConfidenceMap;
use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};

/// A partition of the frame into 4-connected segments with compact ids.
#[derive(Clone, Debug)]
pub struct SuperPixelMap {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
    pub count: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FhParams {
    pub k: f64,
    pub min_size: usize,
    pub sigma: f64,
}

impl Default for FhParams {
    fn default() -> Self {
        FhParams {
            k: 100.0,
            min_size: 20,
            sigma: 0.8,
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
    /// Internal difference threshold `Int(C) + k/|C|` per root.
    threshold: Vec<f32>,
}

impl DisjointSet {
    fn new(n: usize, k: f64) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            threshold: vec![k as f32; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Links two roots; the larger component (lower index on ties)
    /// becomes the new root, keeping merges deterministic.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (win, lose) = if self.size[a as usize] > self.size[b as usize]
            || (self.size[a as usize] == self.size[b as usize] && a < b)
        {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[lose as usize] = win;
        self.size[win as usize] += self.size[lose as usize];
        win
    }
}

fn gaussian_smooth(img: &Image, sigma: f64) -> Vec<f32> {
    let n = img.width * img.height;
    let mut out = vec![0.0f32; n * 3];
    if sigma <= 0.0 {
        for i in 0..n {
            out[i * 3] = img.rgb[i * 3] as f32;
            out[i * 3 + 1] = img.rgb[i * 3 + 1] as f32;
            out[i * 3 + 2] = img.rgb[i * 3 + 2] as f32;
        }
        return out;
    }
    let radius = (sigma * 4.0).ceil() as isize;
    let mut kernel = Vec::with_capacity(radius as usize + 1);
    for i in 0..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
    let kernel: Vec<f64> = kernel.into_iter().map(|v| v / sum).collect();

    let (w, h) = (img.width as isize, img.height as isize);
    let mut tmp = vec![0.0f64; n * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = kernel[0] * img.rgb[((y * w + x) * 3) as usize + c] as f64;
                for (i, kv) in kernel.iter().enumerate().skip(1) {
                    let xl = (x - i as isize).clamp(0, w - 1);
                    let xr = (x + i as isize).clamp(0, w - 1);
                    acc += kv
                        * (img.rgb[((y * w + xl) * 3) as usize + c] as f64
                            + img.rgb[((y * w + xr) * 3) as usize + c] as f64);
                }
                tmp[((y * w + x) * 3) as usize + c] = acc;
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = kernel[0] * tmp[((y * w + x) * 3) as usize + c];
                for (i, kv) in kernel.iter().enumerate().skip(1) {
                    let yu = (y - i as isize).clamp(0, h - 1);
                    let yd = (y + i as isize).clamp(0, h - 1);
                    acc += kv
                        * (tmp[((yu * w + x) * 3) as usize + c]
                            + tmp[((yd * w + x) * 3) as usize + c]);
                }
                out[((y * w + x) * 3) as usize + c] = acc as f32;
            }
        }
    }
    out
}

#[inline]
fn color_dist(smoothed: &[f32], a: usize, b: usize) -> f32 {
    let (pa, pb) = (&smoothed[a * 3..a * 3 + 3], &smoothed[b * 3..b * 3 + 3]);
    let dr = pa[0] - pb[0];
    let dg = pa[1] - pb[1];
    let db = pa[2] - pb[2];
    (dr * dr + dg * dg + db * db).sqrt()
}

/// Over-segments an image. Segment ids form a partition; every segment
/// reaches at least `min_size` pixels after the final merge pass.
pub fn felzenszwalb_segment(image: &Image, params: &FhParams) -> Result<SuperPixelMap> {
    let (w, h) = (image.width, image.height);
    if w == 0 || h == 0 {
        return Err(Error::EmptyInput("image"));
    }
    let n = w * h;
    let smoothed = gaussian_smooth(image, params.sigma);

    // 8-connected edges: E, S, SE, SW from each pixel, built in row-major
    // order so the (weight, index) sort is reproducible.
    let mut edges: Vec<(f32, u32, u32)> = Vec::with_capacity(4 * n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push((color_dist(&smoothed, i, i + 1), i as u32, (i + 1) as u32));
            }
            if y + 1 < h {
                edges.push((color_dist(&smoothed, i, i + w), i as u32, (i + w) as u32));
            }
            if x + 1 < w && y + 1 < h {
                edges.push((
                    color_dist(&smoothed, i, i + w + 1),
                    i as u32,
                    (i + w + 1) as u32,
                ));
            }
            if x > 0 && y + 1 < h {
                edges.push((
                    color_dist(&smoothed, i, i + w - 1),
                    i as u32,
                    (i + w - 1) as u32,
                ));
            }
        }
    }
    let mut order: Vec<u32> = (0..edges.len() as u32).collect();
    order.sort_by(|&a, &b| {
        let (wa, wb) = (edges[a as usize].0, edges[b as usize].0);
        wa.partial_cmp(&wb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut ds = DisjointSet::new(n, params.k);
    for &ei in &order {
        let (wgt, a, b) = edges[ei as usize];
        let ra = ds.find(a);
        let rb = ds.find(b);
        if ra == rb {
            continue;
        }
        if wgt <= ds.threshold[ra as usize] && wgt <= ds.threshold[rb as usize] {
            let r = ds.union(ra, rb);
            ds.threshold[r as usize] = wgt + (params.k / ds.size[r as usize] as f64) as f32;
        }
    }
    // Minimum-size pass in the same edge order.
    for &ei in &order {
        let (_, a, b) = edges[ei as usize];
        let ra = ds.find(a);
        let rb = ds.find(b);
        if ra != rb
            && ((ds.size[ra as usize] as usize) < params.min_size
                || (ds.size[rb as usize] as usize) < params.min_size)
        {
            ds.union(ra, rb);
        }
    }

    // Compact ids by first visit in row-major order.
    let mut remap: Vec<u32> = vec![u32::MAX; n];
    let mut ids = vec![0u32; n];
    let mut count = 0u32;
    for i in 0..n {
        let root = ds.find(i as u32);
        if remap[root as usize] == u32::MAX {
            remap[root as usize] = count;
            count += 1;
        }
        ids[i] = remap[root as usize];
    }
    Ok(SuperPixelMap {
        width: w,
        height: h,
        ids,
        count: count as usize,
    })
}

/// Per-segment confidence accumulation: every pixel of a segment gets the
/// label whose summed confidence over the segment is largest; ties go to
/// the lowest label index. The map set must cover labels 0..=K in order,
/// background first.
pub fn superpixel_smooth(maps: &[ConfidenceMap], spmap: &SuperPixelMap) -> Result<LabelMap> {
    if maps.is_empty() || maps[0].label != 0 {
        return Err(Error::Missing("background confidence map (label 0)".into()));
    }
    for (i, m) in maps.iter().enumerate() {
        if m.label != i {
            return Err(Error::InvalidConfig(format!(
                "confidence maps must be ordered by label; slot {i} holds label {}",
                m.label
            )));
        }
        if (m.width, m.height) != (spmap.width, spmap.height) {
            return Err(Error::DimMismatch(format!(
                "map {}x{} vs segmentation {}x{}",
                m.width, m.height, spmap.width, spmap.height
            )));
        }
    }
    let n_labels = maps.len();
    let mut scores = vec![0.0f64; spmap.count * n_labels];
    for (pix, &seg) in spmap.ids.iter().enumerate() {
        let row = &mut scores[seg as usize * n_labels..(seg as usize + 1) * n_labels];
        for (l, m) in maps.iter().enumerate() {
            row[l] += m.values[pix];
        }
    }
    let mut winners = vec![0u8; spmap.count];
    for seg in 0..spmap.count {
        let row = &scores[seg * n_labels..(seg + 1) * n_labels];
        let mut best = 0usize;
        for (l, &s) in row.iter().enumerate() {
            if s > row[best] {
                best = l;
            }
        }
        winners[seg] = best as u8;
    }
    let mut out = LabelMap::new(spmap.width, spmap.height);
    for (pix, &seg) in spmap.ids.iter().enumerate() {
        out.values[pix] = winners[seg as usize];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn flat_image(w: usize, h: usize, color: [u8; 3]) -> Image {
        let mut img = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(x, y, color);
            }
        }
        img
    }

    #[test]
    fn constant_image_is_one_segment() {
        let img = flat_image(16, 12, [120, 80, 40]);
        let sp = felzenszwalb_segment(&img, &FhParams::default()).unwrap();
        assert_eq!(sp.count, 1);
        assert!(sp.ids.iter().all(|&v| v == 0));
    }

    #[test]
    fn two_flat_halves_make_two_segments() {
        // 4x2 frame, left half black, right half white, no smoothing.
        // Hand trace: intra-half edges weigh 0 and merge each half at
        // threshold k/|C| >= 25; the cheapest crossing edge weighs
        // sqrt(3 * 255^2) ~ 441.7 > min(0 + 100/4, 0 + 100/4) = 25, so
        // the halves never merge; min_size 2 forces nothing.
        let mut img = Image::new(4, 2);
        for y in 0..2 {
            for x in 0..4 {
                img.set_pixel(x, y, if x < 2 { [0, 0, 0] } else { [255, 255, 255] });
            }
        }
        let params = FhParams {
            k: 100.0,
            min_size: 2,
            sigma: 0.0,
        };
        let sp = felzenszwalb_segment(&img, &params).unwrap();
        assert_eq!(sp.count, 2);
        assert_eq!(sp.ids[0], sp.ids[1]);
        assert_eq!(sp.ids[2], sp.ids[3]);
        assert_ne!(sp.ids[1], sp.ids[2]);
    }

    #[test]
    fn partition_and_min_size_contract() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut img = Image::new(40, 30);
        for b in img.rgb.iter_mut() {
            *b = rng.random_range(0..=255);
        }
        let params = FhParams {
            k: 50.0,
            min_size: 15,
            sigma: 0.5,
        };
        let sp = felzenszwalb_segment(&img, &params).unwrap();
        let mut sizes = vec![0usize; sp.count];
        for &id in &sp.ids {
            assert!((id as usize) < sp.count, "ids form a partition");
            sizes[id as usize] += 1;
        }
        assert!(sizes.iter().all(|&s| s >= 15), "{sizes:?}");
    }

    #[test]
    fn segmentation_is_deterministic_up_to_relabeling() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut img = Image::new(32, 24);
        for b in img.rgb.iter_mut() {
            *b = rng.random_range(0..=255);
        }
        let a = felzenszwalb_segment(&img, &FhParams::default()).unwrap();
        let b = felzenszwalb_segment(&img, &FhParams::default()).unwrap();
        // Compact ids are assigned in scan order, so equal partitions
        // produce equal id vectors.
        assert_eq!(a.ids, b.ids);
        assert_eq!(a.count, b.count);
    }

    fn random_maps(k: usize, w: usize, h: usize, rng: &mut ChaCha20Rng) -> Vec<ConfidenceMap> {
        (0..=k)
            .map(|label| {
                let mut m = ConfidenceMap::zero(label, w, h);
                for v in m.values.iter_mut() {
                    *v = rng.random_range(0.0..1.0);
                }
                m
            })
            .collect()
    }

    fn smooth_oracle(maps: &[ConfidenceMap], sp: &SuperPixelMap) -> Vec<u8> {
        // Independent double loop: for every segment, sum every map over
        // its pixels, then argmax with lowest-label ties.
        let mut out = vec![0u8; sp.ids.len()];
        for seg in 0..sp.count {
            let mut best_label = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (l, m) in maps.iter().enumerate() {
                let mut s = 0.0;
                for (pix, &id) in sp.ids.iter().enumerate() {
                    if id as usize == seg {
                        s += m.values[pix];
                    }
                }
                if s > best_score {
                    best_score = s;
                    best_label = l;
                }
            }
            for (pix, &id) in sp.ids.iter().enumerate() {
                if id as usize == seg {
                    out[pix] = best_label as u8;
                }
            }
        }
        out
    }

    #[test]
    fn smoothing_matches_brute_force_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (w, h) = (8, 8);
            let mut img = Image::new(w, h);
            for b in img.rgb.iter_mut() {
                *b = rng.random_range(0..=255);
            }
            let sp = felzenszwalb_segment(
                &img,
                &FhParams {
                    k: 30.0,
                    min_size: 4,
                    sigma: 0.0,
                },
            )
            .unwrap();
            let maps = random_maps(3, w, h, &mut rng);
            let got = superpixel_smooth(&maps, &sp).unwrap();
            assert_eq!(got.values, smooth_oracle(&maps, &sp));
        }
    }

    #[test]
    fn dominant_map_takes_whole_frame() {
        let sp = SuperPixelMap {
            width: 4,
            height: 4,
            ids: vec![0; 16],
            count: 1,
        };
        let mut maps: Vec<ConfidenceMap> = (0..=3).map(|l| ConfidenceMap::zero(l, 4, 4)).collect();
        maps[3].values.iter_mut().for_each(|v| *v = 0.6);
        maps[1].values.iter_mut().for_each(|v| *v = 0.4);
        let out = superpixel_smooth(&maps, &sp).unwrap();
        assert!(out.values.iter().all(|&v| v == 3));
    }

    #[test]
    fn background_wins_when_it_sums_higher() {
        let sp = SuperPixelMap {
            width: 2,
            height: 2,
            ids: vec![0, 0, 1, 1],
            count: 2,
        };
        let mut maps: Vec<ConfidenceMap> = (0..=1).map(|l| ConfidenceMap::zero(l, 2, 2)).collect();
        maps[0].values = vec![0.9, 0.9, 0.1, 0.1];
        maps[1].values = vec![0.2, 0.2, 0.8, 0.8];
        let out = superpixel_smooth(&maps, &sp).unwrap();
        assert_eq!(out.values, vec![0, 0, 1, 1]);
    }

    #[test]
    fn missing_background_map_rejected() {
        let sp = SuperPixelMap {
            width: 2,
            height: 1,
            ids: vec![0, 0],
            count: 1,
        };
        let maps = vec![ConfidenceMap::zero(1, 2, 1)];
        assert!(superpixel_smooth(&maps, &sp).is_err());
    }

    #[test]
    fn constant_shift_leaves_labels_unchanged() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let sp = SuperPixelMap {
            width: 6,
            height: 6,
            ids: (0..36u32).map(|i| i % 4).collect(),
            count: 4,
        };
        let maps = random_maps(2, 6, 6, &mut rng);
        let base = superpixel_smooth(&maps, &sp).unwrap();
        let shifted: Vec<ConfidenceMap> = maps
            .iter()
            .map(|m| {
                let mut s = m.clone();
                s.values.iter_mut().for_each(|v| *v += 0.37);
                s
            })
            .collect();
        let out = superpixel_smooth(&shifted, &sp).unwrap();
        assert_eq!(base.values, out.values);
    }
}
