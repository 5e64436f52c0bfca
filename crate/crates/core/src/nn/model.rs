use crate::error::{Error, Result};
use crate::lexicon::{FusionSpec, AFFECT_DIM};
use crate::rng::PrngStream;

use super::{LstmCache, LstmParams, MlpCache, MlpParams, Params, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Net<T> {
    Mlp(MlpParams<T>),
    Lstm(LstmParams<T>),
}

/// One element of an input sequence: the pooled utterance vector and its
/// affect features (empty when fusion is off).
#[derive(Debug, Clone, Copy)]
pub struct InputStep<'a, T> {
    pub ctx: &'a [T],
    pub affect: &'a [T],
}

/// Classifier plus the input fusion stage. For blend fusion the `d x 4`
/// projection is trained jointly with the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub fusion: FusionSpec,
    pub projection: Option<Tensor<T>>,
    pub net: Net<T>,
}

#[derive(Debug, Clone)]
enum NetCache<T> {
    Mlp(MlpCache<T>),
    Lstm(LstmCache<T>),
}

#[derive(Debug, Clone)]
pub struct ModelCache<T> {
    affects: Vec<Vec<T>>,
    net: NetCache<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> Model<T> {
    /// `sequential = false` builds the utterance-only MLP, otherwise the LSTM.
    pub fn init(
        sequential: bool,
        ctx_dim: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        fusion: FusionSpec,
        rng: &mut PrngStream,
    ) -> Result<Self> {
        fusion.validate()?;
        let projection = match fusion {
            FusionSpec::Blend { .. } => {
                Some(Tensor::uniform_init(ctx_dim, AFFECT_DIM, AFFECT_DIM, rng)?)
            }
            _ => None,
        };
        let d_in = fusion.output_dim(ctx_dim);
        let net = if sequential {
            Net::Lstm(LstmParams::init(d_in, hidden, classes, dropout, rng)?)
        } else {
            Net::Mlp(MlpParams::init(d_in, hidden, classes, dropout, rng)?)
        };
        Ok(Self {
            fusion,
            projection,
            net,
        })
    }

    pub fn classes(&self) -> usize {
        match &self.net {
            Net::Mlp(p) => p.classes(),
            Net::Lstm(p) => p.classes(),
        }
    }

    pub fn is_sequential(&self) -> bool {
        matches!(self.net, Net::Lstm(_))
    }

    fn fused(&self, step: &InputStep<'_, T>) -> Result<Vec<T>> {
        let needs_affect = self.fusion.uses_lexicon();
        if needs_affect && step.affect.len() != AFFECT_DIM {
            return Err(Error::Shape(format!(
                "fusion {} needs a {AFFECT_DIM}-d affect vector, got {}",
                self.fusion,
                step.affect.len()
            )));
        }
        Ok(match self.fusion {
            FusionSpec::None => step.ctx.to_vec(),
            FusionSpec::Concat => step.ctx.iter().chain(step.affect).copied().collect(),
            FusionSpec::Blend { alpha } => {
                let p = self
                    .projection
                    .as_ref()
                    .ok_or_else(|| Error::Shape("missing projection".into()))?;
                if p.rows != step.ctx.len() {
                    return Err(Error::Shape(format!(
                        "projection has {} rows for d={}",
                        p.rows,
                        step.ctx.len()
                    )));
                }
                let a = T::c(alpha);
                let keep = T::one() - a;
                let projected = p.matvec(step.affect, None);
                step.ctx
                    .iter()
                    .zip(projected)
                    .map(|(&e, q)| keep * e + a * q)
                    .collect()
            }
        })
    }

    pub fn forward(
        &self,
        steps: &[InputStep<'_, T>],
        train: bool,
        rng: &mut PrngStream,
    ) -> Result<(Vec<T>, ModelCache<T>)> {
        if steps.is_empty() {
            return Err(Error::EmptySequence);
        }
        let inputs = steps
            .iter()
            .map(|s| self.fused(s))
            .collect::<Result<Vec<_>>>()?;
        let affects = if matches!(self.fusion, FusionSpec::Blend { .. }) {
            steps.iter().map(|s| s.affect.to_vec()).collect()
        } else {
            Vec::new()
        };
        let (logits, net) = match &self.net {
            Net::Mlp(p) => {
                if inputs.len() != 1 {
                    return Err(Error::Shape(format!(
                        "MLP takes one input, got a sequence of {}",
                        inputs.len()
                    )));
                }
                let (l, c) = p.forward(&inputs[0], train, rng)?;
                (l, NetCache::Mlp(c))
            }
            Net::Lstm(p) => {
                let (l, c) = p.forward(&inputs, train, rng)?;
                (l, NetCache::Lstm(c))
            }
        };
        Ok((
            logits.clone(),
            ModelCache {
                affects,
                net,
                logits,
            },
        ))
    }

    /// Accumulates cross-entropy gradients for `label` into `grads`.
    pub fn backward(&self, cache: &ModelCache<T>, label: usize, grads: &mut Self) {
        let dxs = match (&self.net, &cache.net, &mut grads.net) {
            (Net::Mlp(p), NetCache::Mlp(c), Net::Mlp(g)) => vec![p.backward(c, label, g)],
            (Net::Lstm(p), NetCache::Lstm(c), Net::Lstm(g)) => p.backward(c, label, g),
            _ => panic!("model, cache and gradient kinds disagree"),
        };
        if let (FusionSpec::Blend { alpha }, Some(gp)) = (self.fusion, grads.projection.as_mut()) {
            let a = T::c(alpha);
            for (dx, affect) in dxs.iter().zip(&cache.affects) {
                let scaled: Vec<T> = dx.iter().map(|&v| v * a).collect();
                gp.outer_acc(&scaled, affect);
            }
        }
    }

    pub fn dropout(&self) -> f64 {
        match &self.net {
            Net::Mlp(p) => p.dropout,
            Net::Lstm(p) => p.dropout,
        }
    }

    pub fn to_precision<U: Scalar>(&self) -> Model<U> {
        let conv = |t: &Tensor<T>| Tensor {
            rows: t.rows,
            cols: t.cols,
            data: t.data.iter().map(|v| U::c(v.f64())).collect(),
        };
        Model {
            fusion: self.fusion,
            projection: self.projection.as_ref().map(conv),
            net: match &self.net {
                Net::Mlp(p) => Net::Mlp(MlpParams {
                    w1: conv(&p.w1),
                    b1: conv(&p.b1),
                    w2: conv(&p.w2),
                    b2: conv(&p.b2),
                    dropout: p.dropout,
                }),
                Net::Lstm(p) => Net::Lstm(LstmParams {
                    w_x: conv(&p.w_x),
                    w_h: conv(&p.w_h),
                    b: conv(&p.b),
                    w_o: conv(&p.w_o),
                    b_o: conv(&p.b_o),
                    dropout: p.dropout,
                }),
            },
        }
    }
}

impl<T: Scalar> Params<T> for Model<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.projection.iter().collect();
        match &self.net {
            Net::Mlp(p) => out.extend(p.tensors()),
            Net::Lstm(p) => out.extend(p.tensors()),
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.projection.iter_mut().collect();
        match &mut self.net {
            Net::Mlp(p) => out.extend(p.tensors_mut()),
            Net::Lstm(p) => out.extend(p.tensors_mut()),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_at_zero_alpha_ignores_affect() {
        let mut rng = PrngStream::new(4, "init");
        let m = Model::<f64>::init(
            false,
            3,
            5,
            2,
            0.0,
            FusionSpec::Blend { alpha: 0.0 },
            &mut rng,
        )
        .unwrap();
        let ctx = [0.5, -0.5, 1.0];
        let a = m
            .forward(
                &[InputStep {
                    ctx: &ctx,
                    affect: &[0.0; 4],
                }],
                false,
                &mut rng,
            )
            .unwrap()
            .0;
        let b = m
            .forward(
                &[InputStep {
                    ctx: &ctx,
                    affect: &[1.0, -1.0, 0.5, 0.2],
                }],
                false,
                &mut rng,
            )
            .unwrap()
            .0;
        assert_eq!(a, b);
    }

    #[test]
    fn mlp_rejects_sequences() {
        let mut rng = PrngStream::new(4, "init");
        let m = Model::<f64>::init(false, 2, 3, 2, 0.0, FusionSpec::None, &mut rng).unwrap();
        let s = InputStep {
            ctx: &[1.0, 2.0],
            affect: &[],
        };
        assert!(matches!(
            m.forward(&[s, s], false, &mut rng),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn concat_needs_affect() {
        let mut rng = PrngStream::new(4, "init");
        let m = Model::<f64>::init(true, 2, 3, 2, 0.0, FusionSpec::Concat, &mut rng).unwrap();
        let s = InputStep {
            ctx: &[1.0, 2.0],
            affect: &[],
        };
        assert!(matches!(
            m.forward(&[s], false, &mut rng),
            Err(Error::Shape(_))
        ));
    }
}
