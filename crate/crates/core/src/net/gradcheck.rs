//! Central-difference verification of the analytic gradients.
//!
//! Perturbing a parameter across a max-pool argmax flip or a relu sign
//! flip makes the central difference meaningless, so any parameter whose
//! two perturbed forward passes disagree on those kinks is excluded.

use crate::error::Result;
use crate::net::{l2_loss, RegressionNet};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct LayerCheck {
    pub layer: usize,
    pub kind: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub per_layer: Vec<LayerCheck>,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max over all parameters of the relative error between the analytic
/// gradient and the central difference of the l2 loss against `target`.
pub fn gradcheck(
    net: &RegressionNet,
    image: &Tensor,
    target: &Tensor,
    eps: f64,
) -> Result<GradCheckReport> {
    let pass = net.forward(image)?;
    let (_, lgrad) = l2_loss(pass.output(), target)?;
    let analytic = net.backward(&pass, &lgrad)?;

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        per_layer: Vec::new(),
    };
    for li in 0..net.params().len() {
        let mut check = LayerCheck {
            layer: li,
            kind: net.config().layers[li].kind_name(),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        let nw = net.params()[li].weights.len();
        let nb = net.params()[li].biases.len();
        for pi in 0..nw + nb {
            let read = |p: &RegressionNet| {
                if pi < nw {
                    p.params()[li].weights[pi]
                } else {
                    p.params()[li].biases[pi - nw]
                }
            };
            let write = |p: &mut RegressionNet, v: f64| {
                if pi < nw {
                    p.params_mut()[li].weights[pi] = v;
                } else {
                    p.params_mut()[li].biases[pi - nw] = v;
                }
            };
            let orig = read(&probe);
            write(&mut probe, orig + eps);
            let pass_hi = probe.forward(image)?;
            let (loss_hi, _) = l2_loss(pass_hi.output(), target)?;
            write(&mut probe, orig - eps);
            let pass_lo = probe.forward(image)?;
            let (loss_lo, _) = l2_loss(pass_lo.output(), target)?;
            write(&mut probe, orig);

            if !pass_hi.same_kinks(&pass_lo) {
                check.skipped += 1;
                continue;
            }
            let numeric = (loss_hi - loss_lo) / (2.0 * eps);
            let a = if pi < nw {
                analytic.layers[li].weights[pi]
            } else {
                analytic.layers[li].biases[pi - nw]
            };
            let e = rel_error(a, numeric);
            check.max_rel_error = check.max_rel_error.max(e);
            check.checked += 1;
        }
        report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
        report.checked += check.checked;
        report.skipped += check.skipped;
        report.per_layer.push(check);
    }
    Ok(report)
}
