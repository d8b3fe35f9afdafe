//! "ATRD" dictionary files: a text header carrying the grid configuration
//! and per-label presence, then for each present label its coefficient
//! mean (M reals), scalar spread (1 real) and basis matrix column-major,
//! all little-endian 32-bit reals. Loading then saving reproduces the
//! file byte-exactly.

use super::{DictVariant, DictionarySet, TemplateDictionary};
use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn save_dictionaries(path: &Path, set: &DictionarySet) -> Result<()> {
    let mut header = String::new();
    header.push_str("ATRD v1\n");
    header.push_str(&format!("k {}\n", set.k));
    header.push_str(&format!("atoms {}\n", set.atoms));
    header.push_str(&format!("atom_size {} {}\n", set.atom_w, set.atom_h));
    header.push_str(&format!("variant {}\n", set.variant.name()));
    header.push_str(&format!("lambda {}\n", set.lambda));
    for label in 1..=set.k {
        let state = if set.get(label).is_some() {
            "present"
        } else {
            "absent"
        };
        header.push_str(&format!("label {label} {state}\n"));
    }
    header.push_str("data\n");

    let mut buf: Vec<u8> = header.into_bytes();
    for label in 1..=set.k {
        if let Some(dict) = set.get(label) {
            let norm = dict.normalizer.as_ref().ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "label {label}: dictionary has no fitted normalizer"
                ))
            })?;
            if norm.dim() != set.atoms {
                return Err(Error::LengthMismatch {
                    expected: set.atoms,
                    got: norm.dim(),
                });
            }
            for &v in &norm.mu {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            buf.extend_from_slice(&(norm.sigma as f32).to_le_bytes());
            for &v in dict.basis() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_dictionaries(path: &Path) -> Result<DictionarySet> {
    let bytes = fs::read(path)?;
    let fail = |detail: &str| Error::format(path.display(), detail);

    let data_tag = b"\ndata\n";
    let data_pos = bytes
        .windows(data_tag.len())
        .position(|w| w == data_tag)
        .ok_or_else(|| fail("missing data marker"))?;
    let header =
        std::str::from_utf8(&bytes[..data_pos + 1]).map_err(|_| fail("header is not utf-8"))?;
    let body = &bytes[data_pos + data_tag.len()..];

    let mut lines = header.lines();
    if lines.next() != Some("ATRD v1") {
        return Err(fail("bad magic"));
    }
    let mut kv = |key: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(path.display(), format!("missing '{key}'")))?;
        let mut parts = line.split(' ');
        if parts.next() != Some(key) {
            return Err(Error::format(
                path.display(),
                format!("expected '{key}' in '{line}'"),
            ));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let k: usize = one(&kv("k")?, path)?;
    let atoms: usize = one(&kv("atoms")?, path)?;
    let size = kv("atom_size")?;
    if size.len() != 2 {
        return Err(fail("atom_size needs two values"));
    }
    let atom_w: usize = num(&size[0], path)?;
    let atom_h: usize = num(&size[1], path)?;
    let variant = DictVariant::from_name(&one::<String>(&kv("variant")?, path)?)?;
    let lambda: f64 = one(&kv("lambda")?, path)?;
    let mut present = vec![false; k + 1];
    for label in 1..=k {
        let v = kv("label")?;
        if v.len() != 2 || num::<usize>(&v[0], path)? != label {
            return Err(fail(&format!("bad label line for label {label}")));
        }
        present[label] = match v[1].as_str() {
            "present" => true,
            "absent" => false,
            other => return Err(fail(&format!("bad presence '{other}'"))),
        };
    }

    let z = atom_w * atom_h;
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let need = n * 4;
        if cursor + need > body.len() {
            return Err(Error::format(path.display(), "data section too short"));
        }
        let out = body[cursor..cursor + need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        cursor += need;
        Ok(out)
    };
    let mut set = DictionarySet::new(k, atoms, atom_w, atom_h, variant, lambda);
    for label in 1..=k {
        if !present[label] {
            continue;
        }
        let mu = take(atoms)?;
        let sigma = take(1)?[0];
        if sigma <= 0.0 {
            return Err(fail(&format!("label {label}: sigma must be positive")));
        }
        let basis = take(z * atoms)?;
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(fail(&format!("label {label}: non-finite basis entry")));
        }
        let mut dict =
            TemplateDictionary::from_basis(label, atoms, atom_w, atom_h, variant, lambda, basis);
        dict.normalizer = Some(Normalizer { mu, sigma });
        set.dicts[label] = Some(dict);
    }
    if cursor != body.len() {
        return Err(fail("trailing bytes after declared data"));
    }
    Ok(set)
}

fn num<T: std::str::FromStr>(s: &str, path: &Path) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(path.display(), format!("bad value '{s}'")))
}

fn one<T: std::str::FromStr>(v: &[String], path: &Path) -> Result<T> {
    if v.len() != 1 {
        return Err(Error::format(path.display(), "expected one value"));
    }
    num(&v[0], path)
}
