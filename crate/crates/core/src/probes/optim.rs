use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::ProbeParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(params: &ProbeParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamWState {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// Where a step happened, for diagnostics.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepContext {
    pub epoch: usize,
    pub batch: usize,
}

/// One AdamW update with decoupled weight decay and bias correction.
///
/// `lr` overrides `config.lr` so a schedule can drive it.
pub fn adamw_step(
    params: &mut ProbeParams,
    grads: &ProbeParams,
    state: &mut AdamWState,
    config: &AdamWConfig,
    lr: f64,
    ctx: StepContext,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient {
            epoch: ctx.epoch,
            batch: ctx.batch,
        });
    }
    let grad_tensors = grads.tensors();
    let mut param_tensors = params.tensors_mut();
    if grad_tensors.len() != param_tensors.len()
        || state.first.len() != param_tensors.len()
        || param_tensors
            .iter()
            .zip(&grad_tensors)
            .zip(&state.first)
            .any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
    {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    let decay = 1.0 - lr * config.weight_decay;

    for (k, p) in param_tensors.iter_mut().enumerate() {
        let g = grad_tensors[k];
        let m = &mut state.first[k];
        let v = &mut state.second[k];
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::Family;
    use nalgebra::DMatrix;

    fn scalar(x: f64) -> ProbeParams {
        ProbeParams::new(Family::Structural, DMatrix::from_element(1, 1, x), None, None).unwrap()
    }

    #[test]
    fn decay_only_step() {
        let mut p = scalar(2.0);
        let g = scalar(0.0);
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &g, &mut s, &cfg, cfg.lr, StepContext::default()).unwrap();
        assert_eq!(p.proj[(0, 0)], 2.0 * (1.0 - 0.1 * 0.5));
    }

    #[test]
    fn no_decay_no_gradient_is_noop() {
        let mut p = scalar(-1.25);
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &scalar(0.0), &mut s, &cfg, cfg.lr, StepContext::default()).unwrap();
        assert_eq!(p.proj[(0, 0)], -1.25);
    }

    #[test]
    fn single_step_by_hand() {
        // m = 0.1, v = 0.001; bias-corrected both 1:
        // p ← 0.5·(1 − 1e-3·0.01) − 1e-3 · 1/(1 + 1e-8)
        let mut p = scalar(0.5);
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig {
            lr: 1e-3,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &scalar(1.0), &mut s, &cfg, cfg.lr, StepContext::default()).unwrap();
        let expected = 0.5 * (1.0 - 1e-5) - 1e-3 / (1.0 + 1e-8);
        assert!((p.proj[(0, 0)] - expected).abs() < 1e-15);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn non_finite_gradient_aborts_with_context() {
        let mut p = scalar(1.0);
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig::default();
        let ctx = StepContext { epoch: 4, batch: 7 };
        match adamw_step(&mut p, &scalar(f64::NAN), &mut s, &cfg, cfg.lr, ctx) {
            Err(Error::NonFiniteGradient { epoch, batch }) => assert_eq!((epoch, batch), (4, 7)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
