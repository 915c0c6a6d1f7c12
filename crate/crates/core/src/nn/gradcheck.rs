//! Central-difference gradient estimates, used to check backpropagation.

use super::dae::{batch_loss, DaeParams, DropoutMasks, Example};
use super::tensor::Parameters;
use crate::error::Result;

/// `(f(x+ε) − f(x−ε)) / 2ε`
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Perturbs every scalar of `params` in turn and returns the central
/// difference of `loss` as a parameter set of the same shape.
pub fn finite_diff<P, F>(params: &P, loss: F, eps: f64) -> P
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let mut grads = params.clone();
    let mut probe = params.clone();
    let counts: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in counts.iter().enumerate() {
        for i in 0..len {
            let orig = params.tensors()[ti].as_slice()[i];
            probe.tensors_mut()[ti].as_mut_slice()[i] = orig + eps;
            let up = loss(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[i] = orig - eps;
            let down = loss(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[i] = orig;
            grads.tensors_mut()[ti].as_mut_slice()[i] = (up - down) / (2.0 * eps);
        }
    }
    grads
}

/// Finite-difference gradient of the mean batch loss under fixed masks.
pub fn finite_diff_gradient(
    params: &DaeParams,
    batch: &[Example],
    masks: &[DropoutMasks],
    eps: f64,
) -> Result<DaeParams> {
    // Shapes are validated here; perturbed copies share them.
    batch_loss(params, batch, masks)?;
    Ok(finite_diff(
        params,
        |p| batch_loss(p, batch, masks).expect("shapes checked"),
        eps,
    ))
}

/// `|a − b| / max(|a| + |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Largest [`relative_error`] over all corresponding scalars.
pub fn max_relative_error<P: Parameters>(a: &P, b: &P) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|(x, y)| {
            x.as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(p, q)| relative_error(*p, *q))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dae::dae_gradient;
    use crate::nn::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_probe() {
        let d = central_difference(|x| x * x, 3.0, 1e-5);
        assert!((d - 6.0).abs() < 1e-8);
    }

    #[test]
    fn ignored_parameter_has_zero_derivative() {
        let p = Tensor::from_vec(&[2], vec![1.5, -4.0]).unwrap();
        let g = finite_diff(&p, |t| t.as_slice()[0].powi(2), 1e-5);
        assert_eq!(g.as_slice()[1], 0.0);
        assert!((g.as_slice()[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn bptt_agrees_with_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let p = DaeParams::init(8, &mut rng);
        let batch: Vec<Example> = (0..2)
            .map(|k| {
                let clean: Vec<f64> = (0..8).map(|i| ((i + 3 * k) as f64 * 0.9).cos()).collect();
                let target = Tensor::column(&clean);
                let input = crate::nn::dae::corrupt(&target, 0.05, &mut rng);
                Example { input, target }
            })
            .collect();
        let masks: Vec<_> = (0..2).map(|_| DropoutMasks::sample(8, 0.5, &mut rng)).collect();
        let (_, analytic) = dae_gradient(&p, &batch, &masks).unwrap();
        let numeric = finite_diff_gradient(&p, &batch, &masks, 1e-5).unwrap();
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-3, "max relative error {err}");
    }
}
