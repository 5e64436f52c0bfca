use crate::error::{Error, Result};
use crate::rng::PrngStream;

use super::{cross_entropy_grad, dropout_mask, sigmoid, Params, Scalar, Tensor};

/// Single-layer unidirectional LSTM with a linear head on the final hidden
/// state.
///
/// Gate blocks are stacked row-wise in the order input, forget, cell,
/// output: rows `0..h` of `w_x`, `w_h` and `b` belong to the input gate,
/// rows `h..2h` to the forget gate, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub w_x: Tensor<T>,
    pub w_h: Tensor<T>,
    pub b: Tensor<T>,
    pub w_o: Tensor<T>,
    pub b_o: Tensor<T>,
    /// Applied to each input vector in training mode.
    pub dropout: f64,
}

#[derive(Debug, Clone)]
struct Step<T> {
    x: Vec<T>,
    mask: Option<Vec<T>>,
    i: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
    o: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    steps: Vec<Step<T>>,
    pub logits: Vec<T>,
}

impl<T> LstmCache<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl<T: Scalar> LstmCache<T> {
    pub fn final_hidden(&self) -> &[T] {
        &self.steps.last().expect("non-empty").h
    }
}

impl<T: Scalar> LstmParams<T> {
    /// Weights uniform in +-1/sqrt(fan_in), biases zero except the forget
    /// gate, which starts at one.
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
        let mut b = Tensor::zeros(4 * hidden, 1);
        b.data[hidden..2 * hidden]
            .iter_mut()
            .for_each(|v| *v = T::one());
        Ok(Self {
            w_x: Tensor::uniform_init(4 * hidden, d_in, d_in, rng)?,
            w_h: Tensor::uniform_init(4 * hidden, hidden, hidden, rng)?,
            b,
            w_o: Tensor::uniform_init(classes, hidden, hidden, rng)?,
            b_o: Tensor::zeros(classes, 1),
            dropout,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols
    }

    pub fn d_in(&self) -> usize {
        self.w_x.cols
    }

    pub fn classes(&self) -> usize {
        self.w_o.rows
    }

    pub fn forward<S: AsRef<[T]>>(
        &self,
        seq: &[S],
        train: bool,
        rng: &mut PrngStream,
    ) -> Result<(Vec<T>, LstmCache<T>)> {
        if seq.is_empty() {
            return Err(Error::EmptySequence);
        }
        let h = self.hidden();
        let mut h_prev = vec![T::zero(); h];
        let mut c_prev = vec![T::zero(); h];
        let mut steps = Vec::with_capacity(seq.len());
        for input in seq {
            let input = input.as_ref();
            if input.len() != self.d_in() {
                return Err(Error::Shape(format!(
                    "input of length {} for d_in {}",
                    input.len(),
                    self.d_in()
                )));
            }
            let mask =
                (train && self.dropout > 0.0).then(|| dropout_mask(input.len(), self.dropout, rng));
            let x: Vec<T> = match &mask {
                Some(m) => input.iter().zip(m).map(|(&v, &k)| v * k).collect(),
                None => input.to_vec(),
            };
            let mut z = self.w_x.matvec(&x, Some(&self.b.data));
            self.w_h.matvec_acc(&h_prev, &mut z);
            let i: Vec<T> = z[..h].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<T> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<T> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
            let o: Vec<T> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
            let c: Vec<T> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<T> = c.iter().map(|v| v.tanh()).collect();
            let hv: Vec<T> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
            h_prev.clone_from(&hv);
            c_prev.clone_from(&c);
            steps.push(Step {
                x,
                mask,
                i,
                f,
                g,
                o,
                c,
                tanh_c,
                h: hv,
            });
        }
        let logits = self.w_o.matvec(&h_prev, Some(&self.b_o.data));
        Ok((logits.clone(), LstmCache { steps, logits }))
    }

    /// Back-propagation through time. Accumulates into `grads` and returns
    /// dL/dx for every step (w.r.t. the pre-dropout inputs).
    pub fn backward(&self, cache: &LstmCache<T>, label: usize, grads: &mut Self) -> Vec<Vec<T>> {
        let dlogits = cross_entropy_grad(&cache.logits, label);
        self.backward_from_logits(cache, &dlogits, grads)
    }

    pub fn backward_from_logits(
        &self,
        cache: &LstmCache<T>,
        dlogits: &[T],
        grads: &mut Self,
    ) -> Vec<Vec<T>> {
        let h = self.hidden();
        let zero = vec![T::zero(); h];
        grads.w_o.outer_acc(dlogits, cache.final_hidden());
        grads.b_o.add_assign_slice(dlogits);
        let mut dh = vec![T::zero(); h];
        self.w_o.matvec_t_acc(dlogits, &mut dh);
        let mut dc = vec![T::zero(); h];
        let mut dz = vec![T::zero(); 4 * h];
        let mut dxs = vec![Vec::new(); cache.steps.len()];
        for t in (0..cache.steps.len()).rev() {
            let s = &cache.steps[t];
            let (h_prev, c_prev) = if t == 0 {
                (&zero, &zero)
            } else {
                (&cache.steps[t - 1].h, &cache.steps[t - 1].c)
            };
            for k in 0..h {
                let one = T::one();
                let d_o = dh[k] * s.tanh_c[k];
                let dct = dc[k] + dh[k] * s.o[k] * (one - s.tanh_c[k] * s.tanh_c[k]);
                let d_i = dct * s.g[k];
                let d_g = dct * s.i[k];
                let d_f = dct * c_prev[k];
                dc[k] = dct * s.f[k];
                dz[k] = d_i * s.i[k] * (one - s.i[k]);
                dz[h + k] = d_f * s.f[k] * (one - s.f[k]);
                dz[2 * h + k] = d_g * (one - s.g[k] * s.g[k]);
                dz[3 * h + k] = d_o * s.o[k] * (one - s.o[k]);
            }
            grads.w_x.outer_acc(&dz, &s.x);
            grads.w_h.outer_acc(&dz, h_prev);
            grads.b.add_assign_slice(&dz);
            let mut dh_prev = vec![T::zero(); h];
            self.w_h.matvec_t_acc(&dz, &mut dh_prev);
            dh = dh_prev;
            let mut dx = vec![T::zero(); s.x.len()];
            self.w_x.matvec_t_acc(&dz, &mut dx);
            if let Some(m) = &s.mask {
                dx.iter_mut().zip(m).for_each(|(d, &k)| *d *= k);
            }
            dxs[t] = dx;
        }
        dxs
    }
}

impl<T: Scalar> Params<T> for LstmParams<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.w_x, &self.w_h, &self.b, &self.w_o, &self.b_o]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.w_x,
            &mut self.w_h,
            &mut self.b,
            &mut self.w_o,
            &mut self.b_o,
        ]
    }
}
