//! Per-label linear bounding-box refinement over net features, with the
//! standard translation/log-scale transform targets.

use crate::error::{Error, Result};
use crate::image::Rect;
use crate::linalg::cholesky_solve;

const RIDGE: f64 = 1e-3;
/// Pairs below this overlap with the ground truth are not trusted for
/// fitting the transform.
pub const MIN_OVERLAP: f64 = 0.5;

/// Linear model from a feature vector to the 4 transform targets; `None`
/// weights mean the identity refiner (no qualifying training pairs).
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRefiner {
    pub label: usize,
    /// Row-major 4 x (feature_dim + 1); last column is the bias.
    pub weights: Option<Vec<f64>>,
}

impl BoxRefiner {
    pub fn identity(label: usize) -> Self {
        BoxRefiner {
            label,
            weights: None,
        }
    }
}

/// One training pair for a label's refiner.
#[derive(Clone, Debug)]
pub struct RefinerSample {
    pub label: usize,
    pub features: Vec<f64>,
    pub predicted: Rect,
    pub truth: Rect,
}

/// `t = ((Gx-Px)/Pw, (Gy-Py)/Ph, ln(Gw/Pw), ln(Gh/Ph))`.
pub fn transform_targets(p: &Rect, g: &Rect) -> [f64; 4] {
    [
        (g.x - p.x) / p.w,
        (g.y - p.y) / p.h,
        (g.w / p.w).ln(),
        (g.h / p.h).ln(),
    ]
}

/// Inverse of `transform_targets`.
pub fn apply_transform(b: &Rect, t: [f64; 4]) -> Rect {
    Rect {
        x: b.x + b.w * t[0],
        y: b.y + b.h * t[1],
        w: b.w * t[2].exp(),
        h: b.h * t[3].exp(),
    }
}

/// Fits one ridge least-squares model per label over the pairs whose
/// predicted box overlaps its ground truth by at least 0.5 IoU. Labels
/// with no qualifying pairs get the identity refiner.
pub fn fit_box_refiners(k: usize, samples: &[RefinerSample]) -> Result<Vec<BoxRefiner>> {
    let mut refiners: Vec<BoxRefiner> = (0..=k).map(BoxRefiner::identity).collect();
    let feature_dim = match samples.first() {
        Some(s) => s.features.len(),
        None => return Ok(refiners),
    };
    for label in 1..=k {
        let rows: Vec<&RefinerSample> = samples
            .iter()
            .filter(|s| {
                s.label == label
                    && s.predicted.w > 0.0
                    && s.predicted.h > 0.0
                    && s.predicted.iou(&s.truth) >= MIN_OVERLAP
            })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let d = feature_dim + 1;
        let mut xtx = vec![0.0f64; d * d];
        let mut xtt = vec![0.0f64; d * 4];
        for s in &rows {
            if s.features.len() != feature_dim {
                return Err(Error::LengthMismatch {
                    expected: feature_dim,
                    got: s.features.len(),
                });
            }
            let mut phi = s.features.clone();
            phi.push(1.0);
            let t = transform_targets(&s.predicted, &s.truth);
            for i in 0..d {
                for j in i..d {
                    xtx[i * d + j] += phi[i] * phi[j];
                }
                for c in 0..4 {
                    xtt[c * d + i] += phi[i] * t[c];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                xtx[i * d + j] = xtx[j * d + i];
            }
            xtx[i * d + i] += RIDGE;
        }
        cholesky_solve(&xtx, d, &mut xtt)?;
        refiners[label] = BoxRefiner {
            label,
            weights: Some(xtt),
        };
    }
    Ok(refiners)
}

/// Applies a fitted refiner (or the identity) and clamps the result to
/// the image rectangle.
pub fn refine_box(
    refiner: &BoxRefiner,
    features: &[f64],
    bbox: Rect,
    frame_w: usize,
    frame_h: usize,
) -> Rect {
    let refined = match &refiner.weights {
        None => bbox,
        Some(w) => {
            let d = w.len() / 4;
            debug_assert_eq!(features.len() + 1, d);
            let mut t = [0.0f64; 4];
            for (c, tc) in t.iter_mut().enumerate() {
                let row = &w[c * d..(c + 1) * d];
                let mut acc = row[d - 1];
                for (f, wi) in features.iter().zip(row) {
                    acc += f * wi;
                }
                *tc = acc;
            }
            apply_transform(&bbox, t)
        }
    };
    let (fw, fh) = (frame_w as f64, frame_h as f64);
    let x = refined.x.clamp(0.0, fw - 1.0);
    let y = refined.y.clamp(0.0, fh - 1.0);
    Rect {
        x,
        y,
        w: refined.w.clamp(0.0, fw - x),
        h: refined.h.clamp(0.0, fh - y),
    }
}

/// Serializes refiners as named checkpoint blocks (`refiner.<label>`,
/// empty for identity).
pub fn refiners_to_extras(refiners: &[BoxRefiner]) -> Vec<(String, Vec<f32>)> {
    refiners
        .iter()
        .filter(|r| r.label > 0)
        .map(|r| {
            let block = match &r.weights {
                Some(w) => w.iter().map(|&v| v as f32).collect(),
                None => Vec::new(),
            };
            (format!("refiner.{}", r.label), block)
        })
        .collect()
}

pub fn refiners_from_extras(k: usize, extras: &[(String, Vec<f32>)]) -> Result<Vec<BoxRefiner>> {
    let mut out: Vec<BoxRefiner> = (0..=k).map(BoxRefiner::identity).collect();
    for label in 1..=k {
        let name = format!("refiner.{label}");
        let block = extras
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, b)| b.as_slice())
            .ok_or_else(|| Error::Missing(format!("checkpoint block {name}")))?;
        if block.is_empty() {
            continue;
        }
        if block.len() % 4 != 0 {
            return Err(Error::LengthMismatch {
                expected: block.len().div_ceil(4) * 4,
                got: block.len(),
            });
        }
        out[label] = BoxRefiner {
            label,
            weights: Some(block.iter().map(|&v| v as f64).collect()),
        };
    }
    Ok(out)
}
