//! Dictionary learning over a label's resized training masks.
//!
//! The NMF variants alternate between encoding every mask (warm-started
//! projected coordinate descent) and block-coordinate updates of the
//! basis columns against the accumulated statistics `A = sum a a^T`,
//! `B = sum b a^T`. Each column update is the exact Euclidean projection
//! of its unconstrained minimizer onto the non-negative unit ball, so the
//! recorded objective never increases across epochs.
//!
//! The PCA variant stores the mean mask as atom 0 and the top principal
//! directions (computed through the sample-space Gram matrix) as the
//! remaining atoms; its coefficients are signed.

use super::{
    compute_gram, coordinate_descent, Coefficients, DictVariant, NormMask, TemplateDictionary,
};
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

pub struct LearnOutcome {
    pub dictionary: TemplateDictionary,
    /// Objective recorded once per epoch, after the encode pass and
    /// before the basis update; non-increasing by construction.
    pub objective: Vec<f64>,
}

/// Learns one label's template dictionary from its resized masks.
/// `batch` only controls how encode work is chunked for parallelism and
/// has no effect on the result; `seed` fixes the basis initialization.
#[allow(clippy::too_many_arguments)]
pub fn learn_dictionary(
    label: usize,
    masks: &[NormMask],
    atoms: usize,
    lambda: f64,
    variant: DictVariant,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<LearnOutcome> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("dictionary learning needs masks"));
    }
    if atoms == 0 {
        return Err(Error::InvalidConfig("atom count must be >= 1".into()));
    }
    let (rw, rh) = (masks[0].width, masks[0].height);
    for m in masks {
        if (m.width, m.height) != (rw, rh) {
            return Err(Error::DimMismatch(format!(
                "mask grid {}x{} does not match {}x{}",
                m.width, m.height, rw, rh
            )));
        }
    }
    match variant {
        DictVariant::Pca => learn_pca(label, masks, atoms, lambda, rw, rh),
        _ => {
            if lambda <= 0.0 {
                return Err(Error::InvalidConfig(
                    "lambda must be > 0 for the nmf variants".into(),
                ));
            }
            learn_nmf(label, masks, atoms, lambda, variant, epochs, batch, seed, rw, rh)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn learn_nmf(
    label: usize,
    masks: &[NormMask],
    atoms: usize,
    lambda: f64,
    variant: DictVariant,
    epochs: usize,
    batch: usize,
    seed: u64,
    rw: usize,
    rh: usize,
) -> Result<LearnOutcome> {
    let z = rw * rh;
    let n = masks.len();
    let chunk = batch.max(1);
    let l1 = variant == DictVariant::NmfL1;

    // Seed the basis with randomly drawn training masks plus a little
    // positive noise, projected onto the feasible set.
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut basis = vec![0.0f64; atoms * z];
    for j in 0..atoms {
        let pick = rng.random_range(0..n);
        let col = &mut basis[j * z..(j + 1) * z];
        for (c, v) in col.iter_mut().zip(&masks[pick].values) {
            *c = v + 0.01 * rng.random_range(0.0..1.0);
        }
        project_column(col);
    }

    let mut dict =
        TemplateDictionary::from_basis(label, atoms, rw, rh, variant, lambda, basis);
    let mut codes: Vec<Vec<f64>> = vec![vec![0.0f64; atoms]; n];
    let mut objective = Vec::with_capacity(epochs);

    for _epoch in 0..epochs {
        // Encode pass: warm-started, embarrassingly parallel, results
        // land in per-sample slots so the outcome is order-independent.
        let gram = dict.gram().to_vec();
        codes
            .par_chunks_mut(chunk)
            .zip(masks.par_chunks(chunk))
            .for_each(|(code_chunk, mask_chunk)| {
                for (code, mask) in code_chunk.iter_mut().zip(mask_chunk) {
                    let corr = correlate(&dict, &mask.values);
                    coordinate_descent(&gram, &corr, lambda, l1, code);
                }
            });

        // Objective with the fresh codes and the current basis. Recording
        // it here (before the basis update) keeps the sequence monotone.
        let j_total: f64 = masks
            .par_iter()
            .zip(&codes)
            .map(|(mask, code)| {
                let c = Coefficients::raw(label, code.clone());
                dict.sample_objective(mask, &c)
            })
            .sum();
        objective.push(j_total / n as f64);

        // Statistics for the basis update.
        let mut a = vec![0.0f64; atoms * atoms];
        let mut b = vec![0.0f64; atoms * z];
        for (mask, code) in masks.iter().zip(&codes) {
            for i in 0..atoms {
                let ci = code[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..atoms {
                    a[i * atoms + j] += ci * code[j];
                }
                let brow = &mut b[i * z..(i + 1) * z];
                for (acc, v) in brow.iter_mut().zip(&mask.values) {
                    *acc += ci * v;
                }
            }
        }
        for i in 0..atoms {
            for j in 0..i {
                a[i * atoms + j] = a[j * atoms + i];
            }
        }

        // Two block-coordinate passes over the columns.
        for _pass in 0..2 {
            for j in 0..atoms {
                let ajj = a[j * atoms + j];
                if ajj <= 1e-12 {
                    continue; // dead atom, leave as is
                }
                // u = d_j + (B_j - D A_:,j) / A_jj
                let mut u = vec![0.0f64; z];
                for i in 0..atoms {
                    let aij = a[i * atoms + j];
                    if aij == 0.0 {
                        continue;
                    }
                    let col = &dict.basis()[i * z..(i + 1) * z];
                    for (uu, d) in u.iter_mut().zip(col) {
                        *uu -= aij * d;
                    }
                }
                {
                    let dj = &dict.basis()[j * z..(j + 1) * z];
                    let bj = &b[j * z..(j + 1) * z];
                    for (idx, uu) in u.iter_mut().enumerate() {
                        *uu = dj[idx] + (bj[idx] + *uu) / ajj;
                    }
                }
                project_column(&mut u);
                dict.basis_mut()[j * z..(j + 1) * z].copy_from_slice(&u);
            }
        }
        dict.refresh_gram();
    }
    Ok(LearnOutcome {
        dictionary: dict,
        objective,
    })
}

/// Exact projection onto `{d : d >= 0, ||d||_2 <= 1}`: clamp, then scale.
fn project_column(col: &mut [f64]) {
    for v in col.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 {
        for v in col.iter_mut() {
            *v /= norm;
        }
    }
}

fn correlate(dict: &TemplateDictionary, b: &[f64]) -> Vec<f64> {
    (0..dict.atoms)
        .map(|j| dict.atom(j).iter().zip(b).map(|(d, v)| d * v).sum())
        .collect()
}

fn learn_pca(
    label: usize,
    masks: &[NormMask],
    atoms: usize,
    lambda: f64,
    rw: usize,
    rh: usize,
) -> Result<LearnOutcome> {
    let n = masks.len();
    if atoms > n {
        return Err(Error::InvalidConfig(format!(
            "pca needs atoms <= sample count ({atoms} > {n})"
        )));
    }
    let z = rw * rh;
    let mut mean = vec![0.0f64; z];
    for m in masks {
        for (acc, v) in mean.iter_mut().zip(&m.values) {
            *acc += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= n as f64;
    }

    // Sample-space Gram trick: eigenvectors of X X^T lift to input space
    // as u = X^T w / sqrt(eigenvalue).
    let centered: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| m.values.iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();
    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            gram[i * n + j] = dot;
            gram[j * n + i] = dot;
        }
    }
    let (vals, vecs) = jacobi_eigh(&gram, n);

    let mut basis = vec![0.0f64; atoms * z];
    basis[..z].copy_from_slice(&mean);
    for j in 0..atoms.saturating_sub(1) {
        if vals[j] <= 1e-10 {
            continue; // flat direction; leave the atom zero
        }
        let w = &vecs[j * n..(j + 1) * n];
        let scale = 1.0 / vals[j].sqrt();
        let col = &mut basis[(j + 1) * z..(j + 2) * z];
        for (i, wi) in w.iter().enumerate() {
            if *wi == 0.0 {
                continue;
            }
            for (c, x) in col.iter_mut().zip(&centered[i]) {
                *c += wi * x * scale;
            }
        }
    }

    let dict = TemplateDictionary::from_basis(label, atoms, rw, rh, DictVariant::Pca, lambda, basis);
    let j_total: f64 = masks
        .iter()
        .map(|m| {
            let c = dict.encode(m, lambda).expect("grid matches");
            dict.sample_objective(m, &c)
        })
        .sum();
    Ok(LearnOutcome {
        dictionary: dict,
        objective: vec![j_total / n as f64],
    })
}
