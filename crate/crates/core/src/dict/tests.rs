use super::*;
use crate::linalg::cholesky_solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn map_from(rows: &[&[u8]]) -> LabelMap {
    let h = rows.len();
    let w = rows[0].len();
    let mut m = LabelMap::new(w, h);
    for (y, row) in rows.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            m.set(x, y, v);
        }
    }
    m
}

fn flat_mask(width: usize, height: usize, values: Vec<f64>) -> NormMask {
    NormMask {
        width,
        height,
        values,
    }
}

#[test]
fn extract_rectangle_block() {
    let map = map_from(&[
        &[0, 0, 0, 0, 0, 0],
        &[0, 5, 5, 5, 0, 0],
        &[0, 5, 5, 5, 0, 0],
        &[0, 5, 5, 5, 0, 0],
        &[0, 5, 5, 5, 0, 0],
        &[0, 0, 0, 0, 0, 0],
    ]);
    let masks = extract_label_masks(&map, 17).unwrap();
    let m = masks[5].as_ref().unwrap();
    assert_eq!((m.width, m.height), (3, 4));
    assert!(m.values.iter().all(|&v| v == 1));
    assert_eq!(m.source_box, Rect::new(1.0, 1.0, 3.0, 4.0));
    assert!(masks[1].is_none(), "absent label gives none");
}

#[test]
fn disconnected_regions_share_one_bounding_rectangle() {
    // Two separated runs of label 4, like a scarf split by a face.
    let map = map_from(&[
        &[4, 4, 0, 0, 4, 4],
        &[0, 0, 0, 0, 0, 0],
    ]);
    let masks = extract_label_masks(&map, 4).unwrap();
    let m = masks[4].as_ref().unwrap();
    assert_eq!((m.width, m.height), (6, 1));
    assert_eq!(m.values, vec![1, 1, 0, 0, 1, 1]);
}

#[test]
fn extract_rejects_out_of_range_labels() {
    let map = map_from(&[&[0, 200]]);
    assert!(extract_label_masks(&map, 17).is_err());
}

#[test]
fn resize_all_ones_stays_all_ones() {
    let m = BinaryMask {
        width: 3,
        height: 2,
        values: vec![1; 6],
        source_box: Rect::new(0.0, 0.0, 3.0, 2.0),
    };
    for (rw, rh) in [(1, 1), (7, 5), (100, 100)] {
        let r = resize_mask(&m, rw, rh);
        assert_eq!(r.values.len(), rw * rh);
        assert!(r.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
    // The operating grid: 100x100 gives atom length 10000.
    assert_eq!(resize_mask(&m, 100, 100).values.len(), 10_000);
}

fn unit_atom_dict(atom: Vec<f64>, w: usize, h: usize) -> TemplateDictionary {
    let norm: f64 = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit: Vec<f64> = atom.iter().map(|v| v / norm).collect();
    TemplateDictionary::from_basis(1, 1, w, h, DictVariant::NmfL2, 0.001, unit)
}

#[test]
fn encode_single_atom_matches_closed_form() {
    // b = d with ||d|| = 1: alpha = 1 / (1 + 2*lambda).
    let atom = vec![0.5, 0.5, 0.5, 0.5];
    let dict = unit_atom_dict(atom.clone(), 2, 2);
    let b = flat_mask(2, 2, dict.atom(0).to_vec());
    let c = dict.encode(&b, 0.001).unwrap();
    let want = 1.0 / 1.002;
    assert!((c.values[0] - want).abs() < 1e-6, "{} vs {want}", c.values[0]);
    assert!((want - 0.998004).abs() < 1e-6);

    // b = 2d scales linearly: alpha = 2 / (1 + 2*lambda).
    let b2 = flat_mask(2, 2, dict.atom(0).iter().map(|v| 2.0 * v).collect());
    let c2 = dict.encode(&b2, 0.001).unwrap();
    assert!((c2.values[0] - 2.0 / 1.002).abs() < 1e-6);
}

#[test]
fn encode_orthogonal_mask_gives_zero() {
    let dict = unit_atom_dict(vec![1.0, 0.0, 0.0, 0.0], 2, 2);
    let b = flat_mask(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
    let c = dict.encode(&b, 0.001).unwrap();
    assert_eq!(c.values[0], 0.0);
}

#[test]
fn encode_matches_ridge_closed_form_when_interior() {
    // Random non-negative dictionaries and strictly positive targets:
    // whenever the unconstrained ridge solution is already non-negative
    // it must coincide with the projected solver.
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let (z, m) = (12usize, 4usize);
    let lambda = 0.001;
    let mut tested = 0;
    for _ in 0..200 {
        let mut basis = vec![0.0f64; z * m];
        for v in basis.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        for j in 0..m {
            let col = &mut basis[j * z..(j + 1) * z];
            let n: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.iter_mut().for_each(|v| *v /= n.max(1.0));
        }
        let dict = TemplateDictionary::from_basis(1, m, z, 1, DictVariant::NmfL2, lambda, basis);
        let alpha_true: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let mut b = vec![0.0f64; z];
        for j in 0..m {
            for (bb, d) in b.iter_mut().zip(dict.atom(j)) {
                *bb += alpha_true[j] * d;
            }
        }
        // Closed form: (D^T D + 2 lambda I) a = D^T b.
        let mut a_mat = dict.gram().to_vec();
        for j in 0..m {
            a_mat[j * m + j] += 2.0 * lambda;
        }
        let mut rhs: Vec<f64> = (0..m)
            .map(|j| dict.atom(j).iter().zip(&b).map(|(d, v)| d * v).sum())
            .collect();
        cholesky_solve(&a_mat, m, &mut rhs).unwrap();
        if rhs.iter().any(|&v| v < 0.0) {
            continue; // constrained solution differs; not this oracle's case
        }
        let c = dict
            .encode(&flat_mask(z, 1, b), lambda)
            .unwrap();
        for (got, want) in c.values.iter().zip(&rhs) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
        tested += 1;
    }
    assert!(tested > 50, "oracle hit too few interior cases: {tested}");
}

#[test]
fn identical_masks_one_atom_reconstructs() {
    let mask = flat_mask(4, 4, {
        let mut v = vec![0.0; 16];
        for i in [5, 6, 9, 10] {
            v[i] = 1.0;
        }
        v
    });
    let masks = vec![mask.clone(); 8];
    let out = learn_dictionary(3, &masks, 1, 0.001, DictVariant::NmfL2, 30, 4, 0).unwrap();
    let c = out.dictionary.encode(&mask, 0.001).unwrap();
    let recon = out.dictionary.reconstruct(&c).unwrap();
    let err: f64 = recon
        .values
        .iter()
        .zip(&mask.values)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 16.0;
    assert!(err < 1e-3, "reconstruction error {err}");
    // The single atom is proportional to the mask.
    let atom = out.dictionary.atom(0);
    let on: Vec<f64> = [5, 6, 9, 10].iter().map(|&i| atom[i]).collect();
    assert!(on.iter().all(|&v| (v - on[0]).abs() < 1e-9));
    for (i, v) in atom.iter().enumerate() {
        if ![5usize, 6, 9, 10].contains(&i) {
            assert!(v.abs() < 1e-9);
        }
    }
}

#[test]
fn orthogonal_masks_two_atoms_factorize() {
    // Left-half and right-half masks have disjoint support, so an exact
    // two-atom factorization exists; ridge shrinkage costs only
    // ~2*lambda relative error.
    let (w, h) = (10, 10);
    let mut left = vec![0.0f64; w * h];
    let mut right = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            if x < 5 {
                left[y * w + x] = 1.0;
            } else {
                right[y * w + x] = 1.0;
            }
        }
    }
    let masks = vec![
        flat_mask(w, h, left),
        flat_mask(w, h, right),
    ];
    let out = learn_dictionary(2, &masks, 2, 0.001, DictVariant::NmfL2, 100, 8, 1).unwrap();
    for mask in &masks {
        let c = out.dictionary.encode(mask, 0.001).unwrap();
        let recon = out.dictionary.reconstruct(&c).unwrap();
        let err: f64 = recon
            .values
            .iter()
            .zip(&mask.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / (w * h) as f64;
        assert!(err < 1e-2, "per-mask reconstruction error {err}");
    }
}

fn random_blob_masks(n: usize, w: usize, h: usize, seed: u64) -> Vec<NormMask> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let cx = rng.random_range(0.2..0.8) * w as f64;
            let cy = rng.random_range(0.2..0.8) * h as f64;
            let rx = rng.random_range(0.15..0.45) * w as f64;
            let ry = rng.random_range(0.15..0.45) * h as f64;
            let mut v = vec![0.0f64; w * h];
            for y in 0..h {
                for x in 0..w {
                    let dx = (x as f64 - cx) / rx;
                    let dy = (y as f64 - cy) / ry;
                    if dx * dx + dy * dy <= 1.0 {
                        v[y * w + x] = 1.0;
                    }
                }
            }
            flat_mask(w, h, v)
        })
        .collect()
}

#[test]
fn nmf_objective_never_increases() {
    let masks = random_blob_masks(40, 16, 16, 5);
    for variant in [DictVariant::NmfL2, DictVariant::NmfL1] {
        let out = learn_dictionary(1, &masks, 6, 0.001, variant, 25, 8, 2).unwrap();
        assert_eq!(out.objective.len(), 25);
        for w in out.objective.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6,
                "{variant:?} objective rose: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn nmf_invariants_hold_after_any_epoch_count() {
    let masks = random_blob_masks(30, 12, 12, 9);
    for epochs in [1, 2, 5, 12] {
        let out = learn_dictionary(1, &masks, 5, 0.001, DictVariant::NmfL2, epochs, 8, 3).unwrap();
        let d = &out.dictionary;
        assert!(d.basis().iter().all(|&v| v >= 0.0), "negativity after {epochs}");
        for j in 0..d.atoms {
            let norm: f64 = d.atom(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= 1.0 + 1e-9, "column {j} norm {norm} after {epochs}");
        }
    }
}

#[test]
fn fresh_encodes_no_worse_than_recorded_objective() {
    let masks = random_blob_masks(25, 12, 12, 11);
    let out = learn_dictionary(1, &masks, 5, 0.001, DictVariant::NmfL2, 15, 8, 4).unwrap();
    let recorded = *out.objective.last().unwrap();
    let fresh: f64 = masks
        .iter()
        .map(|m| {
            let c = out.dictionary.encode(m, 0.001).unwrap();
            out.dictionary.sample_objective(m, &c)
        })
        .sum::<f64>()
        / masks.len() as f64;
    assert!(
        fresh <= recorded + 1e-9,
        "fresh {fresh} vs recorded {recorded}"
    );
}

#[test]
fn reconstruct_zero_coefficients_gives_zero_mask() {
    let dict = unit_atom_dict(vec![0.5; 4], 2, 2);
    let c = Coefficients::raw(1, vec![0.0]);
    let recon = dict.reconstruct(&c).unwrap();
    assert!(recon.values.iter().all(|&v| v == 0.0));
}

#[test]
fn reconstruct_rejects_normalized_space() {
    let dict = unit_atom_dict(vec![0.5; 4], 2, 2);
    let c = Coefficients::normalized(1, vec![0.3]);
    assert!(dict.reconstruct(&c).is_err());
}

#[test]
fn coefficient_normalize_round_trip() {
    let a = Coefficients::raw(2, vec![0.0, 1.0]);
    let b = Coefficients::raw(2, vec![2.0, 3.0]);
    let norm = fit_coeff_normalizer(&[a.clone(), b.clone()]).unwrap();
    for c in [&a, &b] {
        let rt = c.normalize(&norm).unwrap().denormalize(&norm).unwrap();
        for (x, y) in rt.values.iter().zip(&c.values) {
            assert!((x - y).abs() < 1e-6);
        }
        assert_eq!(rt.space, CoeffSpace::Raw);
    }
    // Double-normalize is a space violation, not silent corruption.
    assert!(a.normalize(&norm).unwrap().normalize(&norm).is_err());
    assert!(a.denormalize(&norm).is_err());
}

#[test]
fn degenerate_label_rejected_by_normalizer() {
    let a = Coefficients::raw(1, vec![0.5, 0.5]);
    assert!(fit_coeff_normalizer(&[a.clone(), a]).is_err());
}

#[test]
fn pca_rejects_more_atoms_than_samples() {
    let masks = random_blob_masks(4, 8, 8, 1);
    assert!(learn_dictionary(1, &masks, 5, 0.001, DictVariant::Pca, 1, 4, 0).is_err());
    assert!(learn_dictionary(1, &[], 2, 0.001, DictVariant::NmfL2, 1, 4, 0).is_err());
}

#[test]
fn pca_mean_plus_directions_reconstructs_better_than_mean_alone() {
    let masks = random_blob_masks(20, 10, 10, 17);
    let out = learn_dictionary(1, &masks, 6, 0.001, DictVariant::Pca, 1, 4, 0).unwrap();
    let d = &out.dictionary;
    // Signed coefficients are expected for pca.
    let mut saw_negative = false;
    let mut err_full = 0.0;
    let mut err_mean = 0.0;
    for m in &masks {
        let c = d.encode(m, 0.001).unwrap();
        assert_eq!(c.values[0], 1.0, "mean atom carries fixed coefficient 1");
        saw_negative |= c.values.iter().any(|&v| v < 0.0);
        let recon = d.reconstruct(&c).unwrap();
        for ((r, b), mu) in recon.values.iter().zip(&m.values).zip(d.atom(0)) {
            err_full += (r - b) * (r - b);
            err_mean += (mu.clamp(0.0, 1.0) - b) * (mu.clamp(0.0, 1.0) - b);
        }
    }
    assert!(saw_negative, "pca coefficients should be signed");
    assert!(err_full < err_mean, "{err_full} vs {err_mean}");
}

#[test]
fn dictionary_file_round_trip() {
    let masks = random_blob_masks(10, 8, 8, 3);
    let out = learn_dictionary(2, &masks, 3, 0.001, DictVariant::NmfL2, 10, 4, 7).unwrap();
    let mut dict = out.dictionary;
    let coeffs: Vec<Coefficients> = masks
        .iter()
        .map(|m| dict.encode(m, 0.001).unwrap())
        .collect();
    dict.normalizer = Some(fit_coeff_normalizer(&coeffs).unwrap());

    let mut set = DictionarySet::new(4, 3, 8, 8, DictVariant::NmfL2, 0.001);
    set.dicts[2] = Some(dict);

    let dir = std::env::temp_dir().join("atrd-roundtrip-test");
    std::fs::create_dir_all(&dir).unwrap();
    let p1 = dir.join("a.atrd");
    let p2 = dir.join("b.atrd");
    save_dictionaries(&p1, &set).unwrap();
    let loaded = load_dictionaries(&p1).unwrap();
    assert_eq!(loaded.k, 4);
    assert!(loaded.get(2).is_some());
    assert!(loaded.get(1).is_none());
    save_dictionaries(&p2, &loaded).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    std::fs::remove_dir_all(&dir).ok();
}
