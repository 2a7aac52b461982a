//! Adam with bias correction; deterministic elementwise updates.

use ndarray::{Array, Dimension, Zip};

use super::model::{ModelParams, Scalar};

pub struct Adam<F: Scalar> {
    m: ModelParams<F>,
    v: ModelParams<F>,
    step_count: usize,
    beta1: F,
    beta2: F,
    eps: F,
}

impl<F: Scalar> Adam<F> {
    pub fn new(model: &ModelParams<F>) -> Adam<F> {
        Adam {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step_count: 0,
            beta1: F::from_f64(0.9).unwrap(),
            beta2: F::from_f64(0.999).unwrap(),
            eps: F::from_f64(1e-8).unwrap(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, lr: F) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = F::one() - self.beta1.powi(t);
        let bc2 = F::one() - self.beta2.powi(t);
        for (l, layer) in params.layers.iter_mut().enumerate() {
            update_tensor(
                &mut layer.w_neigh,
                &grads.layers[l].w_neigh,
                &mut self.m.layers[l].w_neigh,
                &mut self.v.layers[l].w_neigh,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            if let Some(w_self) = layer.w_self.as_mut() {
                update_tensor(
                    w_self,
                    grads.layers[l].w_self.as_ref().expect("matching shapes"),
                    self.m.layers[l].w_self.as_mut().unwrap(),
                    self.v.layers[l].w_self.as_mut().unwrap(),
                    lr,
                    self.beta1,
                    self.beta2,
                    self.eps,
                    bc1,
                    bc2,
                );
            }
            update_tensor(
                &mut layer.bias,
                &grads.layers[l].bias,
                &mut self.m.layers[l].bias,
                &mut self.v.layers[l].bias,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor<F: Scalar, D: Dimension>(
    p: &mut Array<F, D>,
    g: &Array<F, D>,
    m: &mut Array<F, D>,
    v: &mut Array<F, D>,
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    bc1: F,
    bc2: F,
) {
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = beta1 * *m + (F::one() - beta1) * g;
        *v = beta2 * *v + (F::one() - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    });
}
