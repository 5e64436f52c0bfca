use crate::error::{Error, Result};
use crate::rng::PrngStream;

use super::{cross_entropy_grad, dropout_mask, Params, Scalar, Tensor};

/// Two-layer perceptron: `W2 * dropout(relu(W1 x + b1)) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub x: Vec<T>,
    pub pre: Vec<T>,
    pub mask: Option<Vec<T>>,
    pub hidden: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn init(
        d_in: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        rng: &mut PrngStream,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Shape(format!("dropout {dropout} outside [0, 1)")));
        }
        Ok(Self {
            w1: Tensor::uniform_init(hidden, d_in, d_in, rng)?,
            b1: Tensor::zeros(hidden, 1),
            w2: Tensor::uniform_init(classes, hidden, hidden, rng)?,
            b2: Tensor::zeros(classes, 1),
            dropout,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w1.cols
    }

    pub fn classes(&self) -> usize {
        self.w2.rows
    }

    pub fn forward(
        &self,
        x: &[T],
        train: bool,
        rng: &mut PrngStream,
    ) -> Result<(Vec<T>, MlpCache<T>)> {
        if x.len() != self.d_in() {
            return Err(Error::Shape(format!(
                "input of length {} for d_in {}",
                x.len(),
                self.d_in()
            )));
        }
        let pre = self.w1.matvec(x, Some(&self.b1.data));
        let mut hidden: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
        let mask =
            (train && self.dropout > 0.0).then(|| dropout_mask(hidden.len(), self.dropout, rng));
        if let Some(m) = &mask {
            hidden.iter_mut().zip(m).for_each(|(h, &k)| *h *= k);
        }
        let logits = self.w2.matvec(&hidden, Some(&self.b2.data));
        let cache = MlpCache {
            x: x.to_vec(),
            pre,
            mask,
            hidden,
            logits: logits.clone(),
        };
        Ok((logits, cache))
    }

    /// Accumulates parameter gradients into `grads`; returns dL/dx.
    pub fn backward(&self, cache: &MlpCache<T>, label: usize, grads: &mut Self) -> Vec<T> {
        let dlogits = cross_entropy_grad(&cache.logits, label);
        self.backward_from_logits(cache, &dlogits, grads)
    }

    pub fn backward_from_logits(
        &self,
        cache: &MlpCache<T>,
        dlogits: &[T],
        grads: &mut Self,
    ) -> Vec<T> {
        grads.w2.outer_acc(dlogits, &cache.hidden);
        grads.b2.add_assign_slice(dlogits);
        let mut dh = vec![T::zero(); cache.hidden.len()];
        self.w2.matvec_t_acc(dlogits, &mut dh);
        if let Some(m) = &cache.mask {
            dh.iter_mut().zip(m).for_each(|(d, &k)| *d *= k);
        }
        for (d, &z) in dh.iter_mut().zip(&cache.pre) {
            if z <= T::zero() {
                *d = T::zero();
            }
        }
        grads.w1.outer_acc(&dh, &cache.x);
        grads.b1.add_assign_slice(&dh);
        let mut dx = vec![T::zero(); cache.x.len()];
        self.w1.matvec_t_acc(&dh, &mut dx);
        dx
    }
}

impl<T: Scalar> Params<T> for MlpParams<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{cross_entropy, AdamConfig, AdamState};

    fn identity_mlp() -> MlpParams<f64> {
        MlpParams {
            w1: Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            b1: Tensor::zeros(2, 1),
            w2: Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            b2: Tensor::zeros(2, 1),
            dropout: 0.3,
        }
    }

    #[test]
    fn relu_clamps_negative_input() {
        let mut rng = PrngStream::new(0, "d");
        let (logits, _) = identity_mlp()
            .forward(&[1.0, -1.0], false, &mut rng)
            .unwrap();
        assert_eq!(logits, [1.0, 0.0]);
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let mut rng = PrngStream::new(0, "d");
        let p = identity_mlp().zeros_like();
        let (logits, _) = p.forward(&[3.0, 4.0], true, &mut rng).unwrap();
        assert_eq!(logits, [0.0, 0.0]);
    }

    #[test]
    fn zero_rate_dropout_matches_eval() {
        let mut rng = PrngStream::new(1, "init");
        let mut p = MlpParams::<f64>::init(5, 7, 3, 0.0, &mut rng).unwrap();
        let x = [0.1, -0.4, 0.9, 0.0, 2.0];
        let a = p.forward(&x, true, &mut rng).unwrap().0;
        let b = p.forward(&x, false, &mut rng).unwrap().0;
        assert_eq!(a, b);
        p.dropout = 0.5;
        let c = p.forward(&x, false, &mut rng).unwrap().0;
        assert_eq!(a, c, "eval mode ignores the dropout rate");
    }

    #[test]
    fn init_bounds_and_determinism() {
        let a = MlpParams::<f64>::init(4, 6, 3, 0.3, &mut PrngStream::new(9, "init")).unwrap();
        let b = MlpParams::<f64>::init(4, 6, 3, 0.3, &mut PrngStream::new(9, "init")).unwrap();
        assert_eq!(a, b);
        assert!(a.w1.data.iter().all(|v| v.abs() <= 0.5));
        assert!(a.b1.data.iter().chain(&a.b2.data).all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_input_width() {
        let mut rng = PrngStream::new(0, "d");
        assert!(matches!(
            identity_mlp().forward(&[1.0], false, &mut rng),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn duplicate_sample_doubles_gradient() {
        let mut rng = PrngStream::new(3, "init");
        let p = MlpParams::<f64>::init(4, 8, 3, 0.0, &mut rng).unwrap();
        let x = [0.3, -0.2, 0.5, 1.0];
        let (_, cache) = p.forward(&x, false, &mut rng).unwrap();
        let mut once = p.zeros_like();
        p.backward(&cache, 2, &mut once);
        let mut twice = p.zeros_like();
        p.backward(&cache, 2, &mut twice);
        p.backward(&cache, 2, &mut twice);
        for (a, b) in once.tensors().iter().zip(twice.tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_constructed_optimum() {
        // Drive a single sample to saturation; Adam keeps the step size up
        // while the cross-entropy gradient decays exponentially.
        let mut rng = PrngStream::new(5, "init");
        let mut p = MlpParams::<f64>::init(3, 6, 2, 0.0, &mut rng).unwrap();
        let mut adam = AdamState::new(
            &p,
            AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
        );
        let x = [1.0, -0.5, 0.25];
        let mut norm = f64::INFINITY;
        for _ in 0..20_000 {
            let (_, cache) = p.forward(&x, false, &mut rng).unwrap();
            let mut g = p.zeros_like();
            p.backward(&cache, 0, &mut g);
            norm = g.l2_norm();
            if norm < 1e-6 {
                break;
            }
            adam.step(&mut p, &g).unwrap();
        }
        assert!(norm < 1e-6, "gradient norm {norm}");
        let (logits, _) = p.forward(&x, false, &mut rng).unwrap();
        assert!(cross_entropy(&logits, 0).unwrap() < 1e-6);
    }
}
