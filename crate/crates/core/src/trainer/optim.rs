use crate::model::ModelParams;
use crate::scalar::Scalar;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(like: &ModelParams<T>, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let lr = T::of(lr);
        let decay = lr * T::of(self.weight_decay);
        let eps = T::of(self.eps);
        let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
        for ((p, g), (m, v)) in tensors.zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut())) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p = *p - decay * *p - lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

/// Linear warmup to `peak` over `warmup` steps, then linear decay to zero at
/// `total` steps.
pub fn scheduled_lr(step: u64, total: u64, warmup: u64, peak: f64) -> f64 {
    if total == 0 {
        return peak;
    }
    if step < warmup {
        return peak * (step + 1) as f64 / warmup as f64;
    }
    let remaining = total.saturating_sub(step) as f64;
    let span = total.saturating_sub(warmup).max(1) as f64;
    peak * (remaining / span).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hyper, QstrModel, Vocab};

    #[test]
    fn schedule_shape() {
        assert_eq!(scheduled_lr(0, 100, 10, 1.0), 0.1);
        assert_eq!(scheduled_lr(9, 100, 10, 1.0), 1.0);
        assert_eq!(scheduled_lr(10, 100, 10, 1.0), 1.0);
        assert_eq!(scheduled_lr(55, 100, 10, 1.0), 0.5);
        assert_eq!(scheduled_lr(100, 100, 10, 1.0), 0.0);
        assert_eq!(scheduled_lr(3, 100, 0, 2.0), 2.0 * 97.0 / 100.0);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut h = Hyper::new(Vocab::build(["a"]), Vocab::build(["("]));
        h.d_model = 4;
        h.n_heads = 1;
        h.ffn_hidden = 4;
        h.n_layers = 1;
        let model = QstrModel::<f64>::new(h, 0).unwrap();
        let mut p = model.params().clone();
        let mut g = p.zeros_like();
        g.head_weight.fill(-3.0);
        g.head_weight[[0, 0]] = 0.5;
        let before = p.head_weight.clone();
        let mut opt = AdamW::new(&p, 0.0);
        opt.step(&mut p, &g, 0.01);
        let delta = &p.head_weight - &before;
        assert!((delta[[0, 0]] + 0.01).abs() < 1e-9);
        assert!((delta[[0, 1]] - 0.01).abs() < 1e-9);
        // zero-gradient tensors do not move without decay
        assert_eq!(p.sentence.embedding, model.params().sentence.embedding);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut h = Hyper::new(Vocab::build(["a"]), Vocab::build(["("]));
        h.d_model = 4;
        h.n_heads = 1;
        h.ffn_hidden = 4;
        let model = QstrModel::<f64>::new(h, 0).unwrap();
        let mut p = model.params().clone();
        let g = p.zeros_like();
        let mut opt = AdamW::new(&p, 0.5);
        opt.step(&mut p, &g, 0.1);
        let expected = &model.params().sentence.embedding * 0.95;
        assert!((&p.sentence.embedding - &expected).iter().all(|d| d.abs() < 1e-15));
    }
}
