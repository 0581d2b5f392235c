//! AdamW with decoupled weight decay, plus global-norm gradient clipping.

use super::gpt::Gpt;

const ADAM_EPS: f64 = 1e-8;

/// AdamW state: first/second moment buffers aligned with the model's
/// parameter visit order.
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(model: &mut Gpt, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        let mut m = Vec::new();
        model.visit_params_mut(|w, _, _| m.push(vec![0.0; w.len()]));
        let v = m.clone();
        Self {
            beta1,
            beta2,
            weight_decay,
            m,
            v,
            t: 0,
        }
    }

    /// One update with learning rate `lr`. Weight decay is decoupled and
    /// applied only to matrix weights (LayerNorm parameters are exempt).
    pub fn step(&mut self, model: &mut Gpt, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, wd) = (self.beta1, self.beta2, self.weight_decay);
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params_mut(|w, g, decay| {
            let m = &mut ms[idx];
            let v = &mut vs[idx];
            for i in 0..w.len() {
                if decay && wd > 0.0 {
                    w[i] -= lr * wd * w[i];
                }
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            idx += 1;
        });
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(model: &mut Gpt, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    model.visit_params_mut(|_, g, _| {
        for v in g.iter() {
            sq += v * v;
        }
    });
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        model.visit_params_mut(|_, g, _| {
            for v in g.iter_mut() {
                *v *= scale;
            }
        });
    }
    norm
}
