use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps.is_finite()
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// First and second moments, shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Parameters<f32>,
    pub v: Parameters<f32>,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &Parameters<f32>, hyper: AdamHyper) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            hyper,
        }
    }
}

/// One bias-corrected Adam update, in place.
///
/// Gradients are checked before anything is mutated; parameters are checked
/// after the update.
pub fn adam_step(params: &mut Parameters<f32>, grads: &Parameters<f32>, state: &mut AdamState) -> Result<()> {
    if grads.config != params.config || state.m.config != params.config {
        return Err(Error::Shape("gradient or optimizer state does not match parameters".into()));
    }
    grads.check_finite()?;

    let h = state.hyper;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);

    let ps = params.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, m), v), g) in ps.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
        for i in 0..p.len() {
            let gi = f64::from(g[i]);
            let mi = h.beta1 * f64::from(m[i]) + (1.0 - h.beta1) * gi;
            let vi = h.beta2 * f64::from(v[i]) + (1.0 - h.beta2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = h.lr * (mi / c1) / ((vi / c2).sqrt() + h.eps);
            p[i] = (f64::from(p[i]) - update) as f32;
        }
    }
    params.check_finite()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use crate::rng;
    use rand::Rng as _;

    fn tiny() -> Parameters<f32> {
        init_model(ModelConfig {
            n_layers: 1,
            n_heads: 1,
            d_embed: 4,
            vocab_k: 3,
            seq_len: 4,
            init_seed: 2,
        })
        .unwrap()
    }

    #[test]
    fn first_step_hand_value() {
        let mut p = tiny();
        p.head_bias[0] = 1.0;
        let mut g = p.zeros_like();
        g.head_bias[0] = 0.5;
        let mut s = AdamState::new(&p, AdamHyper::default());
        adam_step(&mut p, &g, &mut s).unwrap();
        // m_hat = 0.5, v_hat = 0.25, so the step is lr * 0.5 / (0.5 + 1e-8)
        assert!((f64::from(p.head_bias[0]) - 0.9995).abs() < 1e-6);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let p0 = tiny();
        let mut p = p0.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new(&p, AdamHyper::default());
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut s).unwrap();
        }
        assert_eq!(p, p0);
    }

    #[test]
    fn non_finite_gradient_is_named() {
        let mut p = tiny();
        let mut g = p.zeros_like();
        g.layers[0].fc_bias[5] = f32::NAN;
        let mut s = AdamState::new(&p, AdamHyper::default());
        let before = p.clone();
        match adam_step(&mut p, &g, &mut s) {
            Err(Error::NonFinite { tensor, index }) => {
                assert_eq!(tensor, "layers.0.mlp.fc.bias");
                assert_eq!(index, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 0);
    }

    /// Slow scalar reference, coded from the textbook recurrence.
    fn reference(p0: f64, grads: &[f64], h: AdamHyper) -> f64 {
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as f64;
            m = h.beta1 * m + (1.0 - h.beta1) * g;
            v = h.beta2 * v + (1.0 - h.beta2) * g * g;
            let mh = m / (1.0 - h.beta1.powf(t));
            let vh = v / (1.0 - h.beta2.powf(t));
            p -= h.lr * mh / (vh.sqrt() + h.eps);
        }
        p
    }

    #[test]
    fn matches_scalar_reference_on_random_tensors() {
        let mut r = rng::seeded(9);
        let hyper = AdamHyper {
            lr: 1e-2,
            ..AdamHyper::default()
        };
        let mut p = tiny();
        let p0 = p.clone();
        let mut s = AdamState::new(&p, hyper);
        let n = p.num_params();
        let mut history = vec![Vec::new(); n];
        for _ in 0..5 {
            let mut g = p.zeros_like();
            for (i, h) in history.iter_mut().enumerate() {
                let v: f32 = r.random_range(-2.0..2.0);
                g.set_flat(i, v);
                h.push(f64::from(v));
            }
            adam_step(&mut p, &g, &mut s).unwrap();
        }
        for (i, h) in history.iter().enumerate() {
            let want = reference(f64::from(p0.get_flat(i)), h, hyper);
            assert!((f64::from(p.get_flat(i)) - want).abs() < 1e-6, "coordinate {i}");
        }
    }
}
