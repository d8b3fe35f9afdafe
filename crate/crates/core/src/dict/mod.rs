//! Per-label mask template dictionaries.
//!
//! Each semantic label gets a non-negative basis over a fixed-size mask
//! grid, learned from the label's training masks. A mask is encoded as
//! the non-negative ridge solution `argmin_{a>=0} 0.5||b - Da||^2 + l*||a||^2`
//! and reconstructed as `clamp(D a, 0, 1)`. Coefficients are whitened per
//! label by a mean vector and a single scalar spread before regression.

mod file;
mod learn;

pub use file::{load_dictionaries, save_dictionaries};
pub use learn::{learn_dictionary, LearnOutcome};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, LabelMap, Rect};
use crate::normalize::Normalizer;

/// Tight-cropped binary mask of one label plus its minimum bounding
/// rectangle in the coordinates of the map it was extracted from.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
    pub source_box: Rect,
}

/// A mask resampled to the dictionary grid; values in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct NormMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DictVariant {
    NmfL2,
    NmfL1,
    Pca,
}

impl DictVariant {
    pub fn name(&self) -> &'static str {
        match self {
            DictVariant::NmfL2 => "nmf_l2",
            DictVariant::NmfL1 => "nmf_l1",
            DictVariant::Pca => "pca",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "nmf_l2" => Ok(DictVariant::NmfL2),
            "nmf_l1" => Ok(DictVariant::NmfL1),
            "pca" => Ok(DictVariant::Pca),
            _ => Err(Error::InvalidConfig(format!("unknown variant '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffSpace {
    Raw,
    Normalized,
}

/// Template coefficients for one label. The space tag only changes
/// through `normalize` / `denormalize`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub label: usize,
    pub values: Vec<f64>,
    pub space: CoeffSpace,
}

impl Coefficients {
    pub fn raw(label: usize, values: Vec<f64>) -> Self {
        Coefficients {
            label,
            values,
            space: CoeffSpace::Raw,
        }
    }

    pub fn normalized(label: usize, values: Vec<f64>) -> Self {
        Coefficients {
            label,
            values,
            space: CoeffSpace::Normalized,
        }
    }

    pub fn normalize(&self, norm: &Normalizer) -> Result<Coefficients> {
        if self.space != CoeffSpace::Raw {
            return Err(Error::WrongSpace { expected: "raw" });
        }
        Ok(Coefficients {
            label: self.label,
            values: norm.normalize(&self.values)?,
            space: CoeffSpace::Normalized,
        })
    }

    pub fn denormalize(&self, norm: &Normalizer) -> Result<Coefficients> {
        if self.space != CoeffSpace::Normalized {
            return Err(Error::WrongSpace {
                expected: "normalized",
            });
        }
        Ok(Coefficients {
            label: self.label,
            values: norm.denormalize(&self.values)?,
            space: CoeffSpace::Raw,
        })
    }
}

/// Learned template basis for one label: `atom_w * atom_h` rows by
/// `atoms` columns, stored column-major so each atom is contiguous.
#[derive(Clone, Debug)]
pub struct TemplateDictionary {
    pub label: usize,
    pub atoms: usize,
    pub atom_w: usize,
    pub atom_h: usize,
    pub variant: DictVariant,
    pub lambda: f64,
    basis: Vec<f64>,
    gram: Vec<f64>,
    pub normalizer: Option<Normalizer>,
}

impl TemplateDictionary {
    pub(crate) fn from_basis(
        label: usize,
        atoms: usize,
        atom_w: usize,
        atom_h: usize,
        variant: DictVariant,
        lambda: f64,
        basis: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(basis.len(), atoms * atom_w * atom_h);
        let gram = compute_gram(&basis, atom_w * atom_h, atoms);
        TemplateDictionary {
            label,
            atoms,
            atom_w,
            atom_h,
            variant,
            lambda,
            basis,
            gram,
            normalizer: None,
        }
    }

    pub fn atom_len(&self) -> usize {
        self.atom_w * self.atom_h
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        let z = self.atom_len();
        &self.basis[j * z..(j + 1) * z]
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Encodes a grid-sized mask into raw coefficients with the solver
    /// matching this dictionary's variant. Deterministic: fixed sweep
    /// order, stops when the largest coordinate update falls below 1e-8
    /// or after 10_000 sweeps.
    pub fn encode(&self, mask: &NormMask, lambda: f64) -> Result<Coefficients> {
        let z = self.atom_len();
        if mask.values.len() != z {
            return Err(Error::LengthMismatch {
                expected: z,
                got: mask.values.len(),
            });
        }
        match self.variant {
            DictVariant::NmfL2 | DictVariant::NmfL1 => {
                let corr = self.correlate(&mask.values);
                let mut alpha = vec![0.0f64; self.atoms];
                let l1 = self.variant == DictVariant::NmfL1;
                coordinate_descent(&self.gram, &corr, lambda, l1, &mut alpha);
                Ok(Coefficients::raw(self.label, alpha))
            }
            DictVariant::Pca => {
                // Atom 0 is the mean with a fixed unit coefficient; the
                // remaining orthonormal directions take the ridge-scaled
                // projection of the centered mask and may be signed.
                let mean = self.atom(0);
                let centered: Vec<f64> = mask
                    .values
                    .iter()
                    .zip(mean)
                    .map(|(v, m)| v - m)
                    .collect();
                let mut alpha = vec![0.0f64; self.atoms];
                alpha[0] = 1.0;
                for j in 1..self.atoms {
                    let dot: f64 = self.atom(j).iter().zip(&centered).map(|(a, b)| a * b).sum();
                    alpha[j] = dot / (1.0 + 2.0 * lambda);
                }
                Ok(Coefficients::raw(self.label, alpha))
            }
        }
    }

    /// `clamp(D a, 0, 1)` over the mask grid; raw-space coefficients only.
    pub fn reconstruct(&self, coeff: &Coefficients) -> Result<NormMask> {
        if coeff.space != CoeffSpace::Raw {
            return Err(Error::WrongSpace { expected: "raw" });
        }
        if coeff.values.len() != self.atoms {
            return Err(Error::LengthMismatch {
                expected: self.atoms,
                got: coeff.values.len(),
            });
        }
        let z = self.atom_len();
        let mut out = vec![0.0f64; z];
        for j in 0..self.atoms {
            let a = if self.variant == DictVariant::Pca && j == 0 {
                1.0
            } else {
                coeff.values[j]
            };
            if a == 0.0 {
                continue;
            }
            for (o, d) in out.iter_mut().zip(self.atom(j)) {
                *o += a * d;
            }
        }
        for v in out.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(NormMask {
            width: self.atom_w,
            height: self.atom_h,
            values: out,
        })
    }

    /// `D^T b` for the coefficient subproblem.
    fn correlate(&self, b: &[f64]) -> Vec<f64> {
        (0..self.atoms)
            .map(|j| self.atom(j).iter().zip(b).map(|(d, v)| d * v).sum())
            .collect()
    }

    /// Residual objective of one mask under raw coefficients:
    /// `0.5 ||b - D a||^2 + lambda * pen(a)`.
    pub(crate) fn sample_objective(&self, mask: &NormMask, coeff: &Coefficients) -> f64 {
        let z = self.atom_len();
        let mut recon = vec![0.0f64; z];
        for j in 0..self.atoms {
            let a = coeff.values[j];
            if a == 0.0 {
                continue;
            }
            for (o, d) in recon.iter_mut().zip(self.atom(j)) {
                *o += a * d;
            }
        }
        let mut res = 0.0f64;
        for (r, b) in recon.iter().zip(&mask.values) {
            res += (b - r) * (b - r);
        }
        let pen: f64 = match self.variant {
            DictVariant::NmfL1 => coeff.values.iter().map(|a| a.abs()).sum(),
            _ => coeff.values.iter().map(|a| a * a).sum(),
        };
        0.5 * res + self.lambda * pen
    }

    pub(crate) fn basis_mut(&mut self) -> &mut Vec<f64> {
        &mut self.basis
    }

    pub(crate) fn refresh_gram(&mut self) {
        self.gram = compute_gram(&self.basis, self.atom_len(), self.atoms);
    }

    pub(crate) fn gram(&self) -> &[f64] {
        &self.gram
    }
}

pub(crate) fn compute_gram(basis: &[f64], z: usize, m: usize) -> Vec<f64> {
    let mut g = vec![0.0f64; m * m];
    for i in 0..m {
        for j in i..m {
            let dot: f64 = basis[i * z..(i + 1) * z]
                .iter()
                .zip(&basis[j * z..(j + 1) * z])
                .map(|(a, b)| a * b)
                .sum();
            g[i * m + j] = dot;
            g[j * m + i] = dot;
        }
    }
    g
}

/// Projected coordinate descent for
/// `argmin_{a>=0} 0.5||b - Da||^2 + lambda*pen(a)` given `gram = D^T D`
/// and `corr = D^T b`. `l1` switches the penalty to a one-sided soft
/// threshold; otherwise it is the ridge term `lambda*||a||^2`.
pub(crate) fn coordinate_descent(
    gram: &[f64],
    corr: &[f64],
    lambda: f64,
    l1: bool,
    alpha: &mut [f64],
) {
    let m = alpha.len();
    // q = G a, maintained incrementally.
    let mut q = vec![0.0f64; m];
    for j in 0..m {
        if alpha[j] != 0.0 {
            for i in 0..m {
                q[i] += gram[i * m + j] * alpha[j];
            }
        }
    }
    for _sweep in 0..10_000 {
        let mut max_update = 0.0f64;
        for j in 0..m {
            let gjj = gram[j * m + j];
            let rest = q[j] - gjj * alpha[j];
            let new = if l1 {
                if gjj <= 0.0 {
                    0.0
                } else {
                    ((corr[j] - rest - lambda) / gjj).max(0.0)
                }
            } else {
                let denom = gjj + 2.0 * lambda;
                if denom <= 0.0 {
                    0.0
                } else {
                    ((corr[j] - rest) / denom).max(0.0)
                }
            };
            let delta = new - alpha[j];
            if delta != 0.0 {
                alpha[j] = new;
                for i in 0..m {
                    q[i] += gram[i * m + j] * delta;
                }
                max_update = max_update.max(delta.abs());
            }
        }
        if max_update < 1e-8 {
            break;
        }
    }
}

/// Tight-cropped binary masks of every label present in the map; absent
/// labels yield `None`. Disconnected regions of one label share a single
/// minimum bounding rectangle.
pub fn extract_label_masks(map: &LabelMap, k: usize) -> Result<Vec<Option<BinaryMask>>> {
    map.check_labels(k)?;
    let mut bounds: Vec<Option<(usize, usize, usize, usize)>> = vec![None; k + 1];
    for y in 0..map.height {
        for x in 0..map.width {
            let v = map.get(x, y) as usize;
            if v == 0 {
                continue;
            }
            let b = bounds[v].get_or_insert((x, y, x, y));
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
    }
    let mut out: Vec<Option<BinaryMask>> = vec![None; k + 1];
    for label in 1..=k {
        if let Some((x0, y0, x1, y1)) = bounds[label] {
            let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
            let mut values = vec![0u8; w * h];
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if map.get(x, y) as usize == label {
                        values[(y - y0) * w + (x - x0)] = 1;
                    }
                }
            }
            out[label] = Some(BinaryMask {
                width: w,
                height: h,
                values,
                source_box: Rect::new(x0 as f64, y0 as f64, w as f64, h as f64),
            });
        }
    }
    Ok(out)
}

/// Bilinear resample of a binary mask onto the `rw x rh` dictionary grid.
pub fn resize_mask(mask: &BinaryMask, rw: usize, rh: usize) -> NormMask {
    assert!(rw >= 1 && rh >= 1);
    let src: Vec<f64> = mask.values.iter().map(|&v| v as f64).collect();
    let values = resize_bilinear(&src, mask.width, mask.height, rw, rh);
    NormMask {
        width: rw,
        height: rh,
        values,
    }
}

/// Fits the per-label whitening statistics over raw coefficient vectors.
pub fn fit_coeff_normalizer(coeffs: &[Coefficients]) -> Result<Normalizer> {
    if coeffs.iter().any(|c| c.space != CoeffSpace::Raw) {
        return Err(Error::WrongSpace { expected: "raw" });
    }
    let views: Vec<&[f64]> = coeffs.iter().map(|c| c.values.as_slice()).collect();
    Normalizer::fit(&views)
}

/// The per-label dictionaries of one model plus the grid configuration
/// they share. Index 0 (background) is always `None`.
#[derive(Clone, Debug)]
pub struct DictionarySet {
    pub k: usize,
    pub atoms: usize,
    pub atom_w: usize,
    pub atom_h: usize,
    pub variant: DictVariant,
    pub lambda: f64,
    pub dicts: Vec<Option<TemplateDictionary>>,
}

impl DictionarySet {
    pub fn new(
        k: usize,
        atoms: usize,
        atom_w: usize,
        atom_h: usize,
        variant: DictVariant,
        lambda: f64,
    ) -> Self {
        DictionarySet {
            k,
            atoms,
            atom_w,
            atom_h,
            variant,
            lambda,
            dicts: vec![None; k + 1],
        }
    }

    pub fn get(&self, label: usize) -> Option<&TemplateDictionary> {
        self.dicts.get(label).and_then(|d| d.as_ref())
    }
}

#[cfg(test)]
mod tests;
