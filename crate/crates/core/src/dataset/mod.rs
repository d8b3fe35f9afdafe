//! Dataset contracts: the label palette with left/right partner pairs,
//! indexed-PNG sample IO, person-box cropping, and the x24 augmentation
//! scheme (original, eight 20-px context shifts, three scale
//! enlargements, each with its horizontal reflection).

mod synth;

pub use synth::{occurrence_probabilities, synth_generate, SynthConfig};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear_rgb, resize_nearest_labels, Image, LabelMap, Rect};
use std::fs;
use std::io::BufWriter;
use std::path::Path;

/// One annotated person image. The person box, when known, is the
/// detector output the pipeline crops around.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Image,
    pub labels: LabelMap,
    pub person_box: Option<Rect>,
}

impl Sample {
    pub fn validate(&self, k: usize) -> Result<()> {
        if (self.image.width, self.image.height) != (self.labels.width, self.labels.height) {
            return Err(Error::DimMismatch(format!(
                "image {}x{} vs labels {}x{}",
                self.image.width, self.image.height, self.labels.width, self.labels.height
            )));
        }
        self.labels.check_labels(k)
    }
}

/// Ordered label names, background first, with the symmetric left/right
/// partner relation derived from `left-*` / `right-*` name pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelPalette {
    names: Vec<String>,
    partners: Vec<Option<usize>>,
}

/// The 18-category label set: background plus 17 foreground labels.
pub const STANDARD_LABELS: [&str; 18] = [
    "background",
    "face",
    "sunglass",
    "hat",
    "scarf",
    "hair",
    "upper-clothes",
    "left-arm",
    "right-arm",
    "belt",
    "pants",
    "left-leg",
    "right-leg",
    "skirt",
    "left-shoe",
    "right-shoe",
    "bag",
    "dress",
];

impl LabelPalette {
    pub fn standard() -> Self {
        LabelPalette::from_names(STANDARD_LABELS.iter().map(|s| s.to_string()).collect())
            .expect("standard palette is well formed")
    }

    pub fn from_names(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::EmptyInput("palette names"));
        }
        if names[0] != "background" {
            return Err(Error::InvalidConfig(
                "palette must start with 'background'".into(),
            ));
        }
        let mut partners = vec![None; names.len()];
        for (i, name) in names.iter().enumerate() {
            if let Some(suffix) = name.strip_prefix("left-") {
                let want = format!("right-{suffix}");
                if let Some(j) = names.iter().position(|n| *n == want) {
                    partners[i] = Some(j);
                    partners[j] = Some(i);
                }
            }
        }
        Ok(LabelPalette { names, partners })
    }

    /// Foreground label count.
    pub fn k(&self) -> usize {
        self.names.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, label: usize) -> &str {
        &self.names[label]
    }

    pub fn partner(&self, label: usize) -> Option<usize> {
        self.partners.get(label).copied().flatten()
    }

    /// Fixed display color per label: black background, then saturated
    /// hues stepped by the golden ratio so neighbors stay distinct.
    pub fn color(&self, label: usize) -> [u8; 3] {
        if label == 0 {
            return [0, 0, 0];
        }
        hsv_to_rgb((label as f64 * 0.618_033_988_749_895).fract(), 0.75, 0.95)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.names.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::format(path.display(), e.to_string()))?;
        let names: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        LabelPalette::from_names(names)
    }
}

pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.fract() + 1.0).fract() * 6.0;
    let i = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

pub fn load_image(path: &Path) -> Result<Image> {
    let file = fs::File::open(path)?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path.display(), e))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path.display(), e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf[..w * h * 3].to_vec(),
        png::ColorType::Rgba => {
            let mut out = Vec::with_capacity(w * h * 3);
            for px in buf[..w * h * 4].chunks_exact(4) {
                out.extend_from_slice(&px[..3]);
            }
            out
        }
        png::ColorType::Grayscale => {
            let mut out = Vec::with_capacity(w * h * 3);
            for &g in &buf[..w * h] {
                out.extend_from_slice(&[g, g, g]);
            }
            out
        }
        other => {
            return Err(Error::format(
                path.display(),
                format!("unsupported color type {other:?} for an image"),
            ))
        }
    };
    Ok(Image {
        width: w,
        height: h,
        rgb,
    })
}

pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path.display(), e))?;
    writer
        .write_image_data(&img.rgb)
        .map_err(|e| Error::format(path.display(), e))?;
    Ok(())
}

/// Loads an 8-bit single-channel label map; indexed and grayscale PNGs
/// both carry the label index as the raw byte value.
pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    let file = fs::File::open(path)?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path.display(), e))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path.display(), e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path.display(),
            format!("labels must be 8-bit, got {:?}", info.bit_depth),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let values = match info.color_type {
        png::ColorType::Indexed | png::ColorType::Grayscale => buf[..w * h].to_vec(),
        other => {
            return Err(Error::format(
                path.display(),
                format!("labels must be indexed or grayscale, got {other:?}"),
            ))
        }
    };
    Ok(LabelMap {
        width: w,
        height: h,
        values,
    })
}

/// Writes a label map as an indexed PNG whose palette carries the
/// display colors, so the file doubles as a readable visualization.
pub fn save_label_map(path: &Path, map: &LabelMap, palette: &LabelPalette) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), map.width as u32, map.height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let mut plte = Vec::with_capacity((palette.k() + 1) * 3);
    for label in 0..=palette.k() {
        plte.extend_from_slice(&palette.color(label));
    }
    enc.set_palette(plte);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path.display(), e))?;
    writer
        .write_image_data(&map.values)
        .map_err(|e| Error::format(path.display(), e))?;
    Ok(())
}

/// Loads one image/labels pair and checks the sample invariants.
pub fn load_sample(image_path: &Path, labels_path: &Path, k: usize) -> Result<Sample> {
    let image = load_image(image_path)?;
    let labels = load_label_map(labels_path)?;
    let sample = Sample {
        image,
        labels,
        person_box: None,
    };
    sample.validate(k)?;
    Ok(sample)
}

/// Geometry of one person crop, enough to map the crop-frame result back
/// onto the original image.
#[derive(Clone, Copy, Debug)]
pub struct CropTransform {
    /// Clipped, pixel-aligned source rectangle in original coordinates.
    pub src_x: usize,
    pub src_y: usize,
    pub src_w: usize,
    pub src_h: usize,
    pub dst_w: usize,
    pub dst_h: usize,
}

impl CropTransform {
    /// Paints a crop-frame label map back into an original-sized map;
    /// pixels outside the crop are background.
    pub fn map_back(&self, cropped: &LabelMap, orig_w: usize, orig_h: usize) -> LabelMap {
        let mut out = LabelMap::new(orig_w, orig_h);
        for y in 0..self.src_h {
            let sy = ((y as f64 + 0.5) * self.dst_h as f64 / self.src_h as f64 - 0.5)
                .round()
                .clamp(0.0, self.dst_h as f64 - 1.0) as usize;
            for x in 0..self.src_w {
                let sx = ((x as f64 + 0.5) * self.dst_w as f64 / self.src_w as f64 - 0.5)
                    .round()
                    .clamp(0.0, self.dst_w as f64 - 1.0) as usize;
                out.set(self.src_x + x, self.src_y + y, cropped.get(sx, sy));
            }
        }
        out
    }
}

/// Crops the enlarged person box (clipped to the frame) and resizes to
/// the square net input: bilinear for the image, nearest-neighbor for
/// the labels.
pub fn crop_person(
    sample: &Sample,
    bbox: &Rect,
    enlarge: f64,
    out_size: usize,
) -> Result<(Sample, CropTransform)> {
    let enlarged = bbox.enlarge(enlarge);
    let (x, y, w, h) = enlarged
        .clip_to_frame(sample.image.width, sample.image.height)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "person box {bbox:?} (enlarged x{enlarge}) does not intersect the frame"
            ))
        })?;
    let mut img = Image::new(w, h);
    let mut labels = LabelMap::new(w, h);
    for row in 0..h {
        for col in 0..w {
            img.set_pixel(col, row, sample.image.pixel(x + col, y + row));
            labels.set(col, row, sample.labels.get(x + col, y + row));
        }
    }
    let out = Sample {
        image: resize_bilinear_rgb(&img, out_size, out_size),
        labels: resize_nearest_labels(&labels, out_size, out_size),
        person_box: None,
    };
    Ok((
        out,
        CropTransform {
            src_x: x,
            src_y: y,
            src_w: w,
            src_h: h,
            dst_w: out_size,
            dst_h: out_size,
        },
    ))
}

/// The default crop enlargement applied around detector boxes.
pub const CROP_ENLARGE: f64 = 1.2;
/// Context shift stride of the augmentation scheme, in pixels.
pub const SHIFT_STRIDE: f64 = 20.0;
/// Scale enlargements of the augmentation scheme, applied to the person
/// box before the standard crop enlargement.
pub const AUGMENT_SCALES: [f64; 3] = [1.2, 1.5, 1.8];

/// Mirrors a sample horizontally: image and labels flip, left/right
/// partner labels swap, and the person box reflects.
pub fn reflect_sample(sample: &Sample, palette: &LabelPalette) -> Sample {
    let (w, h) = (sample.image.width, sample.image.height);
    let mut image = Image::new(w, h);
    let mut labels = LabelMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            image.set_pixel(x, y, sample.image.pixel(w - 1 - x, y));
            let v = sample.labels.get(w - 1 - x, y) as usize;
            let swapped = palette.partner(v).unwrap_or(v);
            labels.set(x, y, swapped as u8);
        }
    }
    let person_box = sample.person_box.map(|b| Rect {
        x: w as f64 - b.x - b.w,
        y: b.y,
        w: b.w,
        h: b.h,
    });
    Sample {
        image,
        labels,
        person_box,
    }
}

/// Produces exactly 24 variants: the original, eight 20-px shifts
/// (clamped into the frame, never dropped) and three scale enlargements,
/// each followed by the horizontal reflections of all twelve. Only the
/// person box changes across the unreflected variants; cropping applies
/// the geometry downstream.
pub fn augment(sample: &Sample, palette: &LabelPalette) -> Result<Vec<Sample>> {
    let bbox = sample
        .person_box
        .ok_or(Error::Missing("person box required for augmentation".into()))?;
    let (w, h) = (sample.image.width, sample.image.height);
    let mut variants = Vec::with_capacity(24);
    let with_box = |b: Rect| Sample {
        image: sample.image.clone(),
        labels: sample.labels.clone(),
        person_box: Some(b),
    };
    variants.push(with_box(bbox));
    for (dx, dy) in [
        (0.0, -1.0),
        (0.0, 1.0),
        (-1.0, 0.0),
        (1.0, 0.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
        (1.0, 1.0),
    ] {
        let shifted = Rect {
            x: bbox.x + dx * SHIFT_STRIDE,
            y: bbox.y + dy * SHIFT_STRIDE,
            ..bbox
        };
        variants.push(with_box(shifted.clamp_into(w, h)));
    }
    for factor in AUGMENT_SCALES {
        variants.push(with_box(bbox.enlarge(factor)));
    }
    let reflected: Vec<Sample> = variants
        .iter()
        .map(|s| reflect_sample(s, palette))
        .collect();
    variants.extend(reflected);
    debug_assert_eq!(variants.len(), 24);
    Ok(variants)
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Writes the dataset layout: `images/NNNNN.png`, `labels/NNNNN.png`,
/// `palette.txt`, and a `boxes/NNNNN.txt` sidecar per known person box.
pub fn save_dataset(dir: &Path, samples: &[Sample], palette: &LabelPalette) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("labels"))?;
    fs::create_dir_all(dir.join("boxes"))?;
    palette.save(&dir.join("palette.txt"))?;
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:05}");
        save_image(&dir.join("images").join(format!("{name}.png")), &s.image)?;
        save_label_map(
            &dir.join("labels").join(format!("{name}.png")),
            &s.labels,
            palette,
        )?;
        if let Some(b) = s.person_box {
            fs::write(
                dir.join("boxes").join(format!("{name}.txt")),
                format!("{},{},{},{}\n", b.x, b.y, b.w, b.h),
            )?;
        }
    }
    Ok(())
}

pub fn parse_box_text(text: &str) -> Result<Rect> {
    let parts: Vec<&str> = text.trim().split(',').collect();
    if parts.len() != 4 {
        return Err(Error::InvalidConfig(format!(
            "box must be 'x,y,w,h', got '{}'",
            text.trim()
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad box number '{p}'")))
        })
        .collect::<Result<_>>()?;
    Ok(Rect::new(nums[0], nums[1], nums[2], nums[3]))
}

/// Loads a dataset directory. Image/label filename mismatches are listed
/// explicitly rather than skipped. Person boxes come from sidecars when
/// present, else from the tight foreground bounding box.
pub fn load_dataset(dir: &Path) -> Result<(Vec<Sample>, LabelPalette)> {
    let palette = LabelPalette::load(&dir.join("palette.txt"))?;
    let image_names = png_names(&dir.join("images"))?;
    let label_names = png_names(&dir.join("labels"))?;
    if image_names != label_names {
        let only_images: Vec<&String> =
            image_names.iter().filter(|n| !label_names.contains(n)).collect();
        let only_labels: Vec<&String> =
            label_names.iter().filter(|n| !image_names.contains(n)).collect();
        return Err(Error::Format {
            path: dir.display().to_string(),
            detail: format!(
                "image/label filename mismatch; images only: {only_images:?}, labels only: {only_labels:?}"
            ),
        });
    }
    if image_names.is_empty() {
        return Err(Error::EmptyInput("dataset has no samples"));
    }
    let mut samples = Vec::with_capacity(image_names.len());
    for name in &image_names {
        let mut sample = load_sample(
            &dir.join("images").join(name),
            &dir.join("labels").join(name),
            palette.k(),
        )?;
        let box_path = dir.join("boxes").join(name.replace(".png", ".txt"));
        sample.person_box = if box_path.exists() {
            Some(parse_box_text(&fs::read_to_string(&box_path)?)?)
        } else {
            foreground_bbox(&sample.labels)
        };
        samples.push(sample);
    }
    Ok((samples, palette))
}

/// Tight bounding box of all foreground pixels, if any.
pub fn foreground_bbox(labels: &LabelMap) -> Option<Rect> {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for y in 0..labels.height {
        for x in 0..labels.width {
            if labels.get(x, y) != 0 {
                let b = bounds.get_or_insert((x, y, x, y));
                b.0 = b.0.min(x);
                b.1 = b.1.min(y);
                b.2 = b.2.max(x);
                b.3 = b.3.max(y);
            }
        }
    }
    bounds.map(|(x0, y0, x1, y1)| {
        Rect::new(
            x0 as f64,
            y0 as f64,
            (x1 - x0 + 1) as f64,
            (y1 - y0 + 1) as f64,
        )
    })
}
