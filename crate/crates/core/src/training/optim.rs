use pivot_nn::{Gradients, ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            batch_size: 64,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.clip_norm > 0.0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Scales every gradient by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// First and second moments for every parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update at learning rate `lr`. A non-finite
/// gradient aborts the step before anything is modified. Parameters with no
/// gradient are left alone (their moments do not decay).
pub fn adam_step(
    params: &mut ParamSet,
    grads: &Gradients,
    state: &mut AdamState,
    config: &OptimizerConfig,
    lr: f64,
    batch: usize,
) -> Result<()> {
    if !grads.all_finite() {
        log::error!("non-finite gradient in batch {batch}");
        return Err(Error::NonFiniteGradient { batch });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (id, g) in grads.iter() {
        let i = id.index();
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        let p = params.get_mut(id).data_mut();
        for (k, &gk) in g.data().iter().enumerate() {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            p[k] -= lr * mh / (vh.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_param(value: f64) -> (ParamSet, pivot_nn::ParamId) {
        let mut p = ParamSet::new();
        let id = p.add("w", Tensor::scalar(value));
        (p, id)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut p, id) = one_param(0.5);
        let mut g = Gradients::zeros_like(&p);
        *g.get_mut(id).unwrap() = Tensor::scalar(1.0);
        let mut s = AdamState::new(&p);
        let cfg = OptimizerConfig::default();
        adam_step(&mut p, &g, &mut s, &cfg, cfg.lr, 0).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((p.get(id).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_params_and_counts_step() {
        let (mut p, id) = one_param(0.5);
        let g = Gradients::zeros_like(&p);
        let mut s = AdamState::new(&p);
        let cfg = OptimizerConfig::default();
        adam_step(&mut p, &g, &mut s, &cfg, cfg.lr, 0).unwrap();
        assert_eq!(p.get(id).item(), 0.5);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let (mut p, id) = one_param(0.5);
        let mut g = Gradients::zeros_like(&p);
        *g.get_mut(id).unwrap() = Tensor::scalar(f64::NAN);
        let mut s = AdamState::new(&p);
        let cfg = OptimizerConfig::default();
        let e = adam_step(&mut p, &g, &mut s, &cfg, cfg.lr, 17).unwrap_err();
        assert!(matches!(e, Error::NonFiniteGradient { batch: 17 }));
        assert_eq!(s.step, 0);
        assert_eq!(p.get(id).item(), 0.5);
    }

    #[test]
    fn clipping_cases() {
        let mut p = ParamSet::new();
        let id = p.add("w", Tensor::zeros(1, 2));
        let mut g = Gradients::zeros_like(&p);
        *g.get_mut(id).unwrap() = Tensor::from_vec(1, 2, vec![1.2, 1.6]);
        assert!((clip_gradients(&mut g, 5.0) - 2.0).abs() < 1e-12);
        assert_eq!(g.get(id).unwrap().data(), &[1.2, 1.6]);
        *g.get_mut(id).unwrap() = Tensor::from_vec(1, 2, vec![6.0, 8.0]);
        assert!((clip_gradients(&mut g, 5.0) - 10.0).abs() < 1e-12);
        assert!((g.global_norm() - 5.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_bounded(values in prop::collection::vec(-100.0f64..100.0, 1..12)) {
            let mut p = ParamSet::new();
            let id = p.add("w", Tensor::zeros(1, values.len()));
            let mut g = Gradients::zeros_like(&p);
            *g.get_mut(id).unwrap() = Tensor::from_vec(1, values.len(), values);
            clip_gradients(&mut g, 5.0);
            prop_assert!(g.global_norm() <= 5.0 + 1e-9);
        }
    }
}
