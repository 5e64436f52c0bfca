use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Params, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<P: Params<T>>(params: &P, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|t| vec![T::zero(); t.len()])
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step<P: Params<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let gs = grads.tensors();
        let ps = params.tensors_mut();
        if ps.len() != self.m.len() || gs.len() != ps.len() {
            return Err(Error::Shape(format!(
                "adam holds {} tensors, params {}, grads {}",
                self.m.len(),
                ps.len(),
                gs.len()
            )));
        }
        for ((p, g), m) in ps.iter().zip(&gs).zip(&self.m) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape(format!(
                    "tensor sizes {} / {} / {}",
                    p.len(),
                    g.len(),
                    m.len()
                )));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.t as i32;
        let bc1 = T::c(1.0 - beta1.powi(t));
        let bc2 = T::c(1.0 - beta2.powi(t));
        let (b1, b2) = (T::c(beta1), T::c(beta2));
        let (lr, eps) = (T::c(lr), T::c(eps));
        let one = T::one();
        for ((p, g), (m, v)) in ps
            .into_iter()
            .zip(gs)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m[k] = b1 * m[k] + (one - b1) * gk;
                v[k] = b2 * v[k] + (one - b2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p.data[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{MlpParams, Tensor};
    use crate::rng::PrngStream;

    #[derive(Clone)]
    struct One(Tensor<f64>);

    impl Params<f64> for One {
        fn tensors(&self) -> Vec<&Tensor<f64>> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = One(Tensor::vector(vec![2.0]));
        let g = One(Tensor::vector(vec![1.0]));
        let mut s = AdamState::new(&p, AdamConfig::default());
        s.step(&mut p, &g).unwrap();
        assert!((p.0.data[0] - (2.0 - 1e-3)).abs() < 1e-10);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut rng = PrngStream::new(1, "init");
        let mut p = MlpParams::<f64>::init(3, 4, 2, 0.0, &mut rng).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            s.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn pure_given_cloned_state() {
        let mut rng = PrngStream::new(1, "init");
        let p = MlpParams::<f64>::init(3, 4, 2, 0.0, &mut rng).unwrap();
        let mut g = p.zeros_like();
        g.w1.data
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f64).cos());
        let s = AdamState::new(&p, AdamConfig::default());
        let (mut p1, mut s1) = (p.clone(), s.clone());
        let (mut p2, mut s2) = (p.clone(), s);
        s1.step(&mut p1, &g).unwrap();
        s2.step(&mut p2, &g).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = One(Tensor::vector(vec![1.0, 2.0]));
        let g = One(Tensor::vector(vec![1.0]));
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(s.step(&mut p, &g), Err(Error::Shape(_))));
    }
}
