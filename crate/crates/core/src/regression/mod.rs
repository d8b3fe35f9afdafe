//! The two structure-output regressors and their surroundings: net
//! architectures (template coefficients with pooling, shape parameters
//! without), training-target preparation, the SGD training loop, and
//! per-label bounding-box refinement.

mod refine;
mod targets;
mod train;

pub use refine::{
    apply_transform, fit_box_refiners, refine_box, refiners_from_extras, refiners_to_extras,
    transform_targets, BoxRefiner, RefinerSample,
};
pub use targets::{
    fit_shape_stats, make_training_targets, shape_stats_from_extras, shape_stats_to_extras,
    ShapeStats, TrainingTarget,
};
pub use train::{train, EpochStats, TrainOptions, TrainRecord, TrainSet};

use crate::error::{Error, Result};
use crate::image::{Image, Rect};
use crate::net::{LayerSpec, NetConfig, RegressionNet};
use crate::normalize::Normalizer;
use crate::tensor::Tensor;

/// Position, scale and visibility of one label's mask. Raw-space boxes
/// live in image pixels with non-negative extents; the visibility flag is
/// never normalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeParams {
    pub label: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub v: f64,
    pub space: ShapeSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeSpace {
    Raw,
    Normalized,
}

impl ShapeParams {
    pub fn raw(label: usize, x: f64, y: f64, w: f64, h: f64, v: f64) -> Self {
        ShapeParams {
            label,
            x,
            y,
            w,
            h,
            v,
            space: ShapeSpace::Raw,
        }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }

    pub fn box_vec(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Whitens the box against per-label statistics; `v` passes through.
    pub fn normalize(&self, norm: &Normalizer) -> Result<ShapeParams> {
        if self.space != ShapeSpace::Raw {
            return Err(Error::WrongSpace { expected: "raw" });
        }
        let n = norm.normalize(&self.box_vec())?;
        Ok(ShapeParams {
            label: self.label,
            x: n[0],
            y: n[1],
            w: n[2],
            h: n[3],
            v: self.v,
            space: ShapeSpace::Normalized,
        })
    }

    /// Inverse whitening. Extents clamp at zero and the visibility at
    /// [0,1] so the result satisfies the raw-space invariants even for
    /// unconstrained regressor outputs.
    pub fn denormalize(&self, norm: &Normalizer) -> Result<ShapeParams> {
        if self.space != ShapeSpace::Normalized {
            return Err(Error::WrongSpace {
                expected: "normalized",
            });
        }
        let r = norm.denormalize(&[self.x, self.y, self.w, self.h])?;
        Ok(ShapeParams {
            label: self.label,
            x: r[0],
            y: r[1],
            w: r[2].max(0.0),
            h: r[3].max(0.0),
            v: self.v.clamp(0.0, 1.0),
            space: ShapeSpace::Raw,
        })
    }
}

/// Input resolution and architecture preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalePreset {
    Paper,
    Desk,
}

impl ScalePreset {
    pub fn input_size(&self) -> usize {
        match self {
            ScalePreset::Paper => 227,
            ScalePreset::Desk => 64,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalePreset::Paper => "paper",
            ScalePreset::Desk => "desk",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ScalePreset::Paper),
            "desk" => Ok(ScalePreset::Desk),
            _ => Err(Error::InvalidConfig(format!("unknown scale '{s}'"))),
        }
    }

    /// Default dictionary grid per preset.
    pub fn atom_grid(&self) -> (usize, usize) {
        match self {
            ScalePreset::Paper => (100, 100),
            ScalePreset::Desk => (32, 32),
        }
    }

    /// Default template count per preset.
    pub fn default_atoms(&self) -> usize {
        match self {
            ScalePreset::Paper => 50,
            ScalePreset::Desk => 8,
        }
    }
}

fn conv(filters: usize, kernel: usize, stride: usize, pad: usize) -> LayerSpec {
    LayerSpec::Conv {
        filters,
        kernel,
        stride,
        pad,
    }
}

/// Template-coefficient regressor: convolution/pooling trunk ending in a
/// `K*M`-unit head.
pub fn template_net_config(scale: ScalePreset, k: usize, m: usize) -> NetConfig {
    let head = LayerSpec::FullyConnected { units: k * m };
    match scale {
        ScalePreset::Paper => NetConfig::new(
            (3, 227, 227),
            vec![
                conv(96, 7, 2, 0),
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 3, stride: 2 },
                LayerSpec::contrast_norm_default(),
                conv(256, 5, 2, 2),
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 3, stride: 2 },
                LayerSpec::contrast_norm_default(),
                conv(384, 3, 1, 1),
                LayerSpec::Relu,
                conv(384, 3, 1, 1),
                LayerSpec::Relu,
                conv(256, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 3, stride: 2 },
                LayerSpec::FullyConnected { units: 4096 },
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: 4096 },
                LayerSpec::Relu,
                head,
            ],
        ),
        ScalePreset::Desk => NetConfig::new(
            (3, 64, 64),
            vec![
                conv(16, 5, 2, 0),
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 3, stride: 2 },
                conv(32, 3, 2, 0),
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: 256 },
                head,
            ],
        ),
    }
}

/// Shape-parameter regressor: strided convolutions only, no pooling at
/// any scale, ending in a `5*K`-unit head.
pub fn shape_net_config(scale: ScalePreset, k: usize) -> NetConfig {
    let head = LayerSpec::FullyConnected { units: 5 * k };
    match scale {
        ScalePreset::Paper => NetConfig::new(
            (3, 227, 227),
            vec![
                conv(48, 7, 2, 0),
                LayerSpec::Relu,
                conv(128, 5, 2, 2),
                LayerSpec::Relu,
                conv(192, 3, 2, 1),
                LayerSpec::Relu,
                conv(192, 3, 2, 1),
                LayerSpec::Relu,
                conv(128, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: 2048 },
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: 1024 },
                LayerSpec::Relu,
                head,
            ],
        ),
        ScalePreset::Desk => NetConfig::new(
            (3, 64, 64),
            vec![
                conv(16, 5, 2, 0),
                LayerSpec::Relu,
                conv(32, 3, 2, 0),
                LayerSpec::Relu,
                conv(32, 3, 2, 0),
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: 128 },
                head,
            ],
        ),
    }
}

pub fn build_template_net(scale: ScalePreset, k: usize, m: usize, seed: u64) -> Result<RegressionNet> {
    RegressionNet::init(template_net_config(scale, k, m), seed)
}

pub fn build_shape_net(scale: ScalePreset, k: usize, seed: u64) -> Result<RegressionNet> {
    RegressionNet::init(shape_net_config(scale, k), seed)
}

/// Planar RGB tensor in [0,1] from an 8-bit crop.
pub fn image_to_tensor(img: &Image) -> Tensor {
    let n = img.width * img.height;
    let mut data = vec![0.0f64; 3 * n];
    for i in 0..n {
        data[i] = img.rgb[i * 3] as f64 / 255.0;
        data[n + i] = img.rgb[i * 3 + 1] as f64 / 255.0;
        data[2 * n + i] = img.rgb[i * 3 + 2] as f64 / 255.0;
    }
    Tensor::from_vec(3, img.height, img.width, data).expect("sized by construction")
}

/// Decoded structure outputs for one image: raw coefficients and raw
/// shape parameters per foreground label. Labels that never acquired a
/// dictionary or shape statistics decode to invisible zeros.
pub fn predict_structure(
    template_net: &RegressionNet,
    shape_net: &RegressionNet,
    crop: &Image,
    dicts: &crate::dict::DictionarySet,
    shape_stats: &ShapeStats,
) -> Result<Vec<(crate::dict::Coefficients, ShapeParams)>> {
    let k = dicts.k;
    let m = dicts.atoms;
    let input = image_to_tensor(crop);
    let t_out = template_net.forward(&input)?.output().data().to_vec();
    let s_out = shape_net.forward(&input)?.output().data().to_vec();
    if t_out.len() != k * m {
        return Err(Error::LengthMismatch {
            expected: k * m,
            got: t_out.len(),
        });
    }
    if s_out.len() != 5 * k {
        return Err(Error::LengthMismatch {
            expected: 5 * k,
            got: s_out.len(),
        });
    }
    let mut out = Vec::with_capacity(k);
    for label in 1..=k {
        let coeff_slice = &t_out[(label - 1) * m..label * m];
        let shape_slice = &s_out[(label - 1) * 5..label * 5];
        let dict = dicts.get(label);
        let snorm = shape_stats.normalizers[label].as_ref();
        match (dict.and_then(|d| d.normalizer.as_ref()), snorm) {
            (Some(cnorm), Some(snorm)) => {
                let normalized =
                    crate::dict::Coefficients::normalized(label, coeff_slice.to_vec());
                let mut raw = normalized.denormalize(cnorm)?;
                // Raw template coefficients are non-negative by
                // construction; clamp the regressor output accordingly.
                for v in raw.values.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let sp = ShapeParams {
                    label,
                    x: shape_slice[0],
                    y: shape_slice[1],
                    w: shape_slice[2],
                    h: shape_slice[3],
                    v: shape_slice[4],
                    space: ShapeSpace::Normalized,
                };
                out.push((raw, sp.denormalize(snorm)?));
            }
            _ => {
                out.push((
                    crate::dict::Coefficients::raw(label, vec![0.0; m]),
                    ShapeParams::raw(label, 0.0, 0.0, 0.0, 0.0, 0.0),
                ));
            }
        }
    }
    Ok(out)
}
