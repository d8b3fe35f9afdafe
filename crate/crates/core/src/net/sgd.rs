use crate::error::{Error, Result};
use crate::net::{NetGradients, RegressionNet};

/// SGD hyperparameters. The update rule is
/// `v <- momentum * v - lr * (g + weight_decay * w); w <- w + v`.
#[derive(Clone, Copy, Debug)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.0005,
            momentum: 0.9,
            weight_decay: 0.0005,
        }
    }
}

/// One momentum step over every layer. Rejects non-finite gradients,
/// naming the offending layer.
pub fn sgd_step(net: &mut RegressionNet, grads: &NetGradients, cfg: &SgdConfig) -> Result<()> {
    if grads.layers.len() != net.params().len() {
        return Err(Error::LengthMismatch {
            expected: net.params().len(),
            got: grads.layers.len(),
        });
    }
    for (i, (p, g)) in net.params().iter().zip(&grads.layers).enumerate() {
        if p.weights.len() != g.weights.len() || p.biases.len() != g.biases.len() {
            return Err(Error::LayerMismatch {
                layer: i,
                kind: "sgd",
                detail: "gradient shape does not match parameters".into(),
            });
        }
        if !g.weights.iter().chain(&g.biases).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "gradient",
                layer: Some(i),
            });
        }
    }
    let (params, velocity) = net.params_and_velocity_mut();
    for ((p, v), g) in params.iter_mut().zip(velocity).zip(&grads.layers) {
        for j in 0..p.weights.len() {
            v.weights[j] =
                cfg.momentum * v.weights[j] - cfg.lr * (g.weights[j] + cfg.weight_decay * p.weights[j]);
            p.weights[j] += v.weights[j];
        }
        for j in 0..p.biases.len() {
            v.biases[j] =
                cfg.momentum * v.biases[j] - cfg.lr * (g.biases[j] + cfg.weight_decay * p.biases[j]);
            p.biases[j] += v.biases[j];
        }
    }
    net.bump_step();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{LayerSpec, NetConfig};

    fn tiny_net() -> RegressionNet {
        let cfg = NetConfig::new((2, 1, 1), vec![LayerSpec::FullyConnected { units: 2 }]);
        RegressionNet::init(cfg, 3).unwrap()
    }

    fn grad_of(net: &RegressionNet, w: &[f64], b: &[f64]) -> NetGradients {
        let mut g = NetGradients::zeros_like(net);
        g.layers[0].weights.copy_from_slice(w);
        g.layers[0].biases.copy_from_slice(b);
        g
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_weights() {
        let mut net = tiny_net();
        let before = net.params()[0].clone();
        let g = grad_of(&net, &[0.0; 4], &[0.0; 2]);
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        sgd_step(&mut net, &g, &cfg).unwrap();
        assert_eq!(net.params()[0], before);
    }

    #[test]
    fn single_step_matches_update_formula() {
        let mut net = tiny_net();
        let w0 = net.params()[0].weights.clone();
        let g = grad_of(&net, &[0.5, -0.25, 1.0, 0.0], &[0.0, 0.0]);
        let cfg = SgdConfig::default();
        sgd_step(&mut net, &g, &cfg).unwrap();
        for j in 0..4 {
            let want = w0[j] - cfg.lr * (g.layers[0].weights[j] + 0.0005 * w0[j]);
            assert!((net.params()[0].weights[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn two_steps_match_hand_unrolled_recurrence() {
        let mut net = tiny_net();
        let w0 = net.params()[0].weights.clone();
        let g1 = [0.5, -0.25, 1.0, 0.0];
        let g2 = [-0.1, 0.3, 0.2, -0.6];
        let cfg = SgdConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
        };
        let step1 = grad_of(&net, &g1, &[0.0, 0.0]);
        sgd_step(&mut net, &step1, &cfg).unwrap();
        let step2 = grad_of(&net, &g2, &[0.0, 0.0]);
        sgd_step(&mut net, &step2, &cfg).unwrap();
        // Scalar recurrence oracle, unrolled by hand per weight.
        for j in 0..4 {
            let v1 = -cfg.lr * (g1[j] + cfg.weight_decay * w0[j]);
            let w1 = w0[j] + v1;
            let v2 = cfg.momentum * v1 - cfg.lr * (g2[j] + cfg.weight_decay * w1);
            let w2 = w1 + v2;
            assert!(
                (net.params()[0].weights[j] - w2).abs() < 1e-7,
                "weight {j}: {} vs {}",
                net.params()[0].weights[j],
                w2
            );
        }
        assert_eq!(net.steps(), 2);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut net = tiny_net();
        let g = grad_of(&net, &[f64::NAN, 0.0, 0.0, 0.0], &[0.0, 0.0]);
        let err = sgd_step(&mut net, &g, &SgdConfig::default()).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }
}
