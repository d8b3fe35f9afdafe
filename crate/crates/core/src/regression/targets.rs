//! Training targets: per-label normalized template coefficients and
//! normalized shape parameters, with absent labels carrying all-zero
//! targets and a zero visibility.

use super::{ShapeParams, ShapeSpace};
use crate::dict::{extract_label_masks, resize_mask, Coefficients, DictionarySet};
use crate::error::{Error, Result};
use crate::image::LabelMap;
use crate::normalize::Normalizer;

/// Per-label whitening statistics of the raw box vectors (x, y, w, h).
/// Labels that never appear, or appear without spread, carry `None` and
/// are treated as absent everywhere downstream.
#[derive(Clone, Debug)]
pub struct ShapeStats {
    pub k: usize,
    pub normalizers: Vec<Option<Normalizer>>,
}

/// Fits per-label box statistics over raw shape observations.
pub fn fit_shape_stats(k: usize, observations: &[ShapeParams]) -> Result<ShapeStats> {
    let mut grouped: Vec<Vec<[f64; 4]>> = vec![Vec::new(); k + 1];
    for s in observations {
        if s.space != ShapeSpace::Raw {
            return Err(Error::WrongSpace { expected: "raw" });
        }
        if s.label == 0 || s.label > k {
            return Err(Error::LabelOutOfRange { label: s.label, k });
        }
        grouped[s.label].push(s.box_vec());
    }
    let mut normalizers = vec![None; k + 1];
    for label in 1..=k {
        let rows = &grouped[label];
        if rows.len() < 2 {
            continue;
        }
        let views: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        match Normalizer::fit(&views) {
            Ok(n) => normalizers[label] = Some(n),
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(ShapeStats { k, normalizers })
}

/// Serializes shape statistics as named checkpoint blocks
/// (`shapestat.<label>` holding mu and sigma), so they travel inside the
/// shape net's container.
pub fn shape_stats_to_extras(stats: &ShapeStats) -> Vec<(String, Vec<f32>)> {
    (1..=stats.k)
        .map(|label| {
            let block = match &stats.normalizers[label] {
                Some(n) => {
                    let mut v: Vec<f32> = n.mu.iter().map(|&x| x as f32).collect();
                    v.push(n.sigma as f32);
                    v
                }
                None => Vec::new(),
            };
            (format!("shapestat.{label}"), block)
        })
        .collect()
}

pub fn shape_stats_from_extras(k: usize, extras: &[(String, Vec<f32>)]) -> Result<ShapeStats> {
    let mut normalizers = vec![None; k + 1];
    for label in 1..=k {
        let name = format!("shapestat.{label}");
        let block = extras
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, b)| b.as_slice())
            .ok_or_else(|| Error::Missing(format!("checkpoint block {name}")))?;
        if block.is_empty() {
            continue;
        }
        if block.len() != 5 {
            return Err(Error::LengthMismatch {
                expected: 5,
                got: block.len(),
            });
        }
        let sigma = block[4] as f64;
        if sigma <= 0.0 {
            return Err(Error::Degenerate(format!(
                "shapestat.{label}: non-positive sigma"
            )));
        }
        normalizers[label] = Some(Normalizer {
            mu: block[..4].iter().map(|&x| x as f64).collect(),
            sigma,
        });
    }
    Ok(ShapeStats { k, normalizers })
}

/// Regression targets of one net-frame sample.
#[derive(Clone, Debug)]
pub struct TrainingTarget {
    pub k: usize,
    pub m: usize,
    /// Normalized coefficients per label; `None` rows are absent labels.
    pub coeff: Vec<Option<Coefficients>>,
    /// Normalized shape params per label; `None` rows are absent labels.
    pub shape: Vec<Option<ShapeParams>>,
    pub present: Vec<bool>,
}

impl TrainingTarget {
    /// Flat head target of the template net: label k occupies
    /// `[(k-1)*M, k*M)`; absent labels contribute zeros.
    pub fn template_vector(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.k * self.m];
        for label in 1..=self.k {
            if let Some(c) = &self.coeff[label] {
                out[(label - 1) * self.m..label * self.m].copy_from_slice(&c.values);
            }
        }
        out
    }

    /// Flat head target of the shape net: label k occupies
    /// `[(k-1)*5, k*5)` as (x, y, w, h, v); absent labels are zeros.
    pub fn shape_vector(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.k * 5];
        for label in 1..=self.k {
            if let Some(s) = &self.shape[label] {
                let base = (label - 1) * 5;
                out[base] = s.x;
                out[base + 1] = s.y;
                out[base + 2] = s.w;
                out[base + 3] = s.h;
                out[base + 4] = s.v;
            }
        }
        out
    }
}

/// Builds the targets of one net-frame label map: present labels encode
/// against the learned dictionary and whiten both outputs; everything
/// else is a zero target with zero visibility.
pub fn make_training_targets(
    labels: &LabelMap,
    dicts: &DictionarySet,
    shape_stats: &ShapeStats,
) -> Result<TrainingTarget> {
    let k = dicts.k;
    if shape_stats.k != k {
        return Err(Error::InvalidConfig(format!(
            "shape stats for K={} but dictionaries for K={k}",
            shape_stats.k
        )));
    }
    let masks = extract_label_masks(labels, k)?;
    let mut coeff = vec![None; k + 1];
    let mut shape = vec![None; k + 1];
    let mut present = vec![false; k + 1];
    for label in 1..=k {
        let Some(mask) = &masks[label] else { continue };
        let Some(dict) = dicts.get(label) else { continue };
        let Some(cnorm) = dict.normalizer.as_ref() else {
            return Err(Error::Missing(format!(
                "label {label}: dictionary normalizer not fitted"
            )));
        };
        let Some(snorm) = shape_stats.normalizers[label].as_ref() else {
            continue;
        };
        let grid = resize_mask(mask, dict.atom_w, dict.atom_h);
        let raw = dict.encode(&grid, dicts.lambda)?;
        coeff[label] = Some(raw.normalize(cnorm)?);
        let b = mask.source_box;
        let sp = ShapeParams::raw(label, b.x, b.y, b.w, b.h, 1.0);
        shape[label] = Some(sp.normalize(snorm)?);
        present[label] = true;
    }
    Ok(TrainingTarget {
        k,
        m: dicts.atoms,
        coeff,
        shape,
        present,
    })
}
