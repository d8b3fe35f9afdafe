//! "ATRN" checkpoint files: a text header describing the layer chain,
//! seed and step count, followed by flat little-endian 32-bit reals per
//! layer (weights then biases) in declaration order. Named extra blocks
//! carry auxiliary per-label weights such as box refiners.
//!
//! Round-tripping a file through load/save reproduces it byte-exactly.

use crate::error::{Error, Result};
use crate::net::{LayerParams, LayerSpec, NetConfig, RegressionNet};
use std::fs;
use std::io::Write;
use std::path::Path;

pub struct Checkpoint {
    pub net: RegressionNet,
    pub extras: Vec<(String, Vec<f32>)>,
}

pub fn save_checkpoint(
    path: &Path,
    net: &RegressionNet,
    extras: &[(String, Vec<f32>)],
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    let header = render_header(net, extras)?;
    buf.extend_from_slice(header.as_bytes());
    for p in net.params() {
        for &w in &p.weights {
            buf.extend_from_slice(&(w as f32).to_le_bytes());
        }
        for &b in &p.biases {
            buf.extend_from_slice(&(b as f32).to_le_bytes());
        }
    }
    for (_, block) in extras {
        for &v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn render_header(net: &RegressionNet, extras: &[(String, Vec<f32>)]) -> Result<String> {
    let mut h = String::new();
    h.push_str("ATRN v1\n");
    h.push_str(&format!("seed {}\n", net.seed()));
    h.push_str(&format!("steps {}\n", net.steps()));
    let (c, hh, w) = net.config().input;
    h.push_str(&format!("input {c} {hh} {w}\n"));
    h.push_str(&format!("layers {}\n", net.config().layers.len()));
    for spec in &net.config().layers {
        match *spec {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                pad,
            } => h.push_str(&format!("conv {filters} {kernel} {stride} {pad}\n")),
            LayerSpec::Relu => h.push_str("relu\n"),
            LayerSpec::MaxPool { window, stride } => {
                h.push_str(&format!("maxpool {window} {stride}\n"))
            }
            LayerSpec::ContrastNorm { span, alpha, beta } => {
                h.push_str(&format!("norm {span} {alpha} {beta}\n"))
            }
            LayerSpec::FullyConnected { units } => h.push_str(&format!("fc {units}\n")),
        }
    }
    h.push_str(&format!("extras {}\n", extras.len()));
    for (name, block) in extras {
        if name.contains(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!(
                "extra block name '{name}' contains whitespace"
            )));
        }
        h.push_str(&format!("extra {name} {}\n", block.len()));
    }
    h.push_str("data\n");
    Ok(h)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let fail = |detail: &str| Error::format(path.display(), detail);

    // The header is newline-terminated ASCII ending with a "data" line.
    let data_tag = b"\ndata\n";
    let data_pos = bytes
        .windows(data_tag.len())
        .position(|w| w == data_tag)
        .ok_or_else(|| fail("missing data marker"))?;
    let header = std::str::from_utf8(&bytes[..data_pos + 1])
        .map_err(|_| fail("header is not utf-8"))?;
    let body = &bytes[data_pos + data_tag.len()..];

    let mut lines = header.lines();
    let magic = lines.next().ok_or_else(|| fail("empty header"))?;
    if magic != "ATRN v1" {
        return Err(fail(&format!("bad magic '{magic}'")));
    }
    fn next_kv(lines: &mut std::str::Lines, key: &str, path: &Path) -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(path.display(), format!("missing '{key}' line")))?;
        let mut parts = line.split(' ');
        let k = parts.next().unwrap_or("");
        if k != key {
            return Err(Error::format(
                path.display(),
                format!("expected '{key}', found '{k}'"),
            ));
        }
        Ok(parts.map(str::to_string).collect())
    }
    let seed: u64 = parse_one(&next_kv(&mut lines, "seed", path)?, path)?;
    let steps: u64 = parse_one(&next_kv(&mut lines, "steps", path)?, path)?;
    let input_v = next_kv(&mut lines, "input", path)?;
    if input_v.len() != 3 {
        return Err(fail("input line needs 3 dims"));
    }
    let input = (
        parse(&input_v[0], path)?,
        parse(&input_v[1], path)?,
        parse(&input_v[2], path)?,
    );
    let n_layers: usize = parse_one(&next_kv(&mut lines, "layers", path)?, path)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let line = lines.next().ok_or_else(|| fail("truncated layer list"))?;
        let parts: Vec<&str> = line.split(' ').collect();
        let spec = match parts.as_slice() {
            ["conv", f, k, s, p] => LayerSpec::Conv {
                filters: parse(f, path)?,
                kernel: parse(k, path)?,
                stride: parse(s, path)?,
                pad: parse(p, path)?,
            },
            ["relu"] => LayerSpec::Relu,
            ["maxpool", w, s] => LayerSpec::MaxPool {
                window: parse(w, path)?,
                stride: parse(s, path)?,
            },
            ["norm", n, a, b] => LayerSpec::ContrastNorm {
                span: parse(n, path)?,
                alpha: parse(a, path)?,
                beta: parse(b, path)?,
            },
            ["fc", u] => LayerSpec::FullyConnected { units: parse(u, path)? },
            _ => return Err(fail(&format!("unknown layer line '{line}'"))),
        };
        layers.push(spec);
    }
    let n_extras: usize = parse_one(&next_kv(&mut lines, "extras", path)?, path)?;
    let mut extra_decls = Vec::with_capacity(n_extras);
    for _ in 0..n_extras {
        let v = next_kv(&mut lines, "extra", path)?;
        if v.len() != 2 {
            return Err(fail("extra line needs a name and a length"));
        }
        let len: usize = parse(&v[1], path)?;
        extra_decls.push((v[0].clone(), len));
    }

    let config = NetConfig::new(input, layers);
    let mut net = RegressionNet::init(config, seed)?;
    net.set_steps(steps);

    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<Vec<f32>> {
        let need = n * 4;
        if cursor + need > body.len() {
            return Err(fail("data section too short"));
        }
        let out = body[cursor..cursor + need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        cursor += need;
        Ok(out)
    };
    let shapes: Vec<(usize, usize)> = net
        .params()
        .iter()
        .map(|p| (p.weights.len(), p.biases.len()))
        .collect();
    for (i, (nw, nb)) in shapes.into_iter().enumerate() {
        let w = take(nw)?;
        let b = take(nb)?;
        let p: &mut LayerParams = &mut net.params_mut()[i];
        for (dst, src) in p.weights.iter_mut().zip(&w) {
            *dst = *src as f64;
        }
        for (dst, src) in p.biases.iter_mut().zip(&b) {
            *dst = *src as f64;
        }
    }
    let mut extras = Vec::with_capacity(n_extras);
    for (name, len) in extra_decls {
        extras.push((name, take(len)?));
    }
    if cursor != body.len() {
        return Err(fail("trailing bytes after declared data"));
    }
    Ok(Checkpoint { net, extras })
}

fn parse<T: std::str::FromStr>(s: &str, path: &Path) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(path.display(), format!("bad number '{s}'")))
}

fn parse_one<T: std::str::FromStr>(v: &[String], path: &Path) -> Result<T> {
    if v.len() != 1 {
        return Err(Error::format(path.display(), "expected one value"));
    }
    parse(&v[0], path)
}
