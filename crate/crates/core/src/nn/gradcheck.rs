use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::PrngStream;

use super::{cross_entropy, InputStep, Model, Params};
use crate::lexicon::FusionSpec;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

pub const MIN_SAMPLED_COORDS: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub total: usize,
}

/// Central differences `(f(p + h) - f(p - h)) / 2h` on a random subset of at
/// least [`MIN_SAMPLED_COORDS`] coordinates (or all of them, if fewer),
/// compared against `analytic`. Relative error is
/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn finite_difference_check<P, F>(
    loss: F,
    params: &P,
    analytic: &P,
    h: f64,
    samples: usize,
    rng: &mut PrngStream,
) -> Result<GradCheckReport>
where
    P: Params<f64>,
    F: Fn(&P) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Domain(format!("step h must be positive, got {h}")));
    }
    let total = params.param_count();
    if analytic.param_count() != total {
        return Err(Error::Shape(
            "analytic gradient has a different size".into(),
        ));
    }
    let mut coords: Vec<usize> = (0..total).collect();
    let want = samples.max(MIN_SAMPLED_COORDS);
    if want < total {
        rng.shuffle(&mut coords);
        coords.truncate(want);
        coords.sort_unstable();
    }
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: coords.len(),
        total,
    };
    for &i in &coords {
        let orig = params.get_flat(i);
        probe.set_flat(i, orig + h);
        let up = loss(&probe);
        probe.set_flat(i, orig - h);
        let down = loss(&probe);
        probe.set_flat(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.get_flat(i);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub report: GradCheckReport,
}

/// Gradient checks on the reference shapes: MLP 8 -> 16 -> 4, and an LSTM
/// with d = 8, h = 16, c = 4 over 5 steps. Two extra cases exercise the
/// dropout masks and the blend projection. All in `f64` with h = 1e-5.
pub fn reference_checks(seed: u64) -> Result<Vec<NamedCheck>> {
    let cases = [
        ("mlp 8-16-4", false, 1, 0.0, FusionSpec::None),
        ("lstm 8-16-4 seq5", true, 5, 0.0, FusionSpec::None),
        ("mlp dropout 0.3", false, 1, 0.3, FusionSpec::None),
        (
            "lstm dropout 0.3 + blend 0.2",
            true,
            5,
            0.3,
            FusionSpec::Blend { alpha: 0.2 },
        ),
    ];
    let mut out = Vec::new();
    for (name, sequential, len, dropout, fusion) in cases {
        let mut rng = PrngStream::new(seed, name);
        let model = Model::<f64>::init(sequential, 8, 16, 4, dropout, fusion, &mut rng)?;
        let ctx: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..8).map(|_| rng.normal()).collect())
            .collect();
        let affect: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let steps: Vec<InputStep<'_, f64>> = ctx
            .iter()
            .zip(&affect)
            .map(|(c, a)| InputStep { ctx: c, affect: a })
            .collect();
        let label = rng.below(4);
        // Same dropout masks on every evaluation.
        let mask_rng = PrngStream::new(seed, &format!("{name}/masks"));
        let train = dropout > 0.0;
        let loss = |m: &Model<f64>| {
            let (logits, _) = m
                .forward(&steps, train, &mut mask_rng.clone())
                .expect("forward");
            cross_entropy(&logits, label).expect("label in range")
        };
        let (_, cache) = model.forward(&steps, train, &mut mask_rng.clone())?;
        let mut grads = model.zeros_like();
        model.backward(&cache, label, &mut grads);
        let report = finite_difference_check(loss, &model, &grads, 1e-5, 400, &mut rng)?;
        out.push(NamedCheck {
            name: name.to_owned(),
            report,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[derive(Clone)]
    struct Scalar1(Tensor<f64>);

    impl Params<f64> for Scalar1 {
        fn tensors(&self) -> Vec<&Tensor<f64>> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn square_derivative() {
        let p = Scalar1(Tensor::vector(vec![3.0]));
        let f = |q: &Scalar1| q.0.data[0] * q.0.data[0];
        let numeric = (f(&Scalar1(Tensor::vector(vec![3.0 + 1e-5])))
            - f(&Scalar1(Tensor::vector(vec![3.0 - 1e-5]))))
            / 2e-5;
        assert!((numeric - 6.0).abs() < 1e-8);
        let g = Scalar1(Tensor::vector(vec![6.0]));
        let r =
            finite_difference_check(f, &p, &g, 1e-5, 200, &mut PrngStream::new(0, "fd")).unwrap();
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn wrong_gradient_detected() {
        let p = Scalar1(Tensor::vector(vec![3.0]));
        let g = Scalar1(Tensor::vector(vec![5.0]));
        let r = finite_difference_check(
            |q| q.0.data[0].powi(2),
            &p,
            &g,
            1e-5,
            1,
            &mut PrngStream::new(0, "fd"),
        )
        .unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn reference_shapes_pass() {
        for check in reference_checks(42).unwrap() {
            assert!(check.report.checked >= 200, "{}", check.name);
            assert!(
                check.report.max_rel_error < 1e-4,
                "{}: {:?}",
                check.name,
                check.report
            );
        }
    }

    #[test]
    fn nonpositive_step_rejected() {
        let p = Scalar1(Tensor::vector(vec![3.0]));
        assert!(
            finite_difference_check(|_| 0.0, &p, &p, 0.0, 1, &mut PrngStream::new(0, "fd"))
                .is_err()
        );
    }
}
